import numpy as np
import pytest
from scipy.special import ndtr

from volopt import DpConfig, SortedSample, solve_dp
from volopt.distributions import (
    DEFAULT_RELU_COEFFS,
    PAPER_MIXTURE,
    CensoredGaussian,
    GaussianMixture,
    IzbickiBimodal,
    ReluGaussian,
    RomanoSynthetic,
    StandardGaussian,
    conditional_sample,
    mc_opt_estimate,
    opt_oracle,
    parse_spec,
    sample,
    spec_to_string,
)


def test_mixture_spec_validation():
    with pytest.raises(ValueError):
        GaussianMixture(((0.5, 0.0, 1.0), (0.4, 1.0, 1.0)))
    with pytest.raises(ValueError):
        GaussianMixture(((0.5, 0.0, 1.0), (0.5, 1.0, -1.0)))


def test_opt_oracle_gaussian():
    assert opt_oracle(StandardGaussian(), 0.3) == pytest.approx(0.7706, abs=1e-3)


def test_opt_oracle_three_component_mixture():
    assert opt_oracle(PAPER_MIXTURE, 0.8) == pytest.approx(3.0178, abs=1e-2)


def test_opt_oracle_censored_atoms():
    assert opt_oracle(CensoredGaussian(), 0.3) == 0.0
    # Just above the atom mass the continuous part starts paying volume.
    atom_mass = 2 * ndtr(-1)
    assert opt_oracle(CensoredGaussian(), atom_mass + 0.05) > 0.0


def test_opt_oracle_gaussian_matches_two_sided_quantile():
    from scipy.special import ndtri

    for c in (0.1, 0.3, 0.5, 0.8, 0.95):
        assert opt_oracle(StandardGaussian(), c) == pytest.approx(
            2 * ndtri((1 + c) / 2), abs=1e-4
        )


def test_opt_oracle_monotone_in_coverage():
    vols = [opt_oracle(PAPER_MIXTURE, c) for c in (0.2, 0.4, 0.6, 0.8, 0.9)]
    assert all(a <= b + 1e-9 for a, b in zip(vols, vols[1:]))


def test_opt_oracle_rejects_specs_without_oracle():
    with pytest.raises(ValueError):
        opt_oracle(RomanoSynthetic(), 0.5)
    with pytest.raises(ValueError):
        opt_oracle(IzbickiBimodal(20), 0.5)
    with pytest.raises(ValueError):
        opt_oracle(ReluGaussian(DEFAULT_RELU_COEFFS), 0.5)


def test_mc_opt_close_to_analytic_on_mixture():
    est = mc_opt_estimate(PAPER_MIXTURE, 0.8, n_samples=300_000, seed=3)
    assert est == pytest.approx(opt_oracle(PAPER_MIXTURE, 0.8), abs=0.2)


def test_mc_opt_available_for_relu():
    est = mc_opt_estimate(ReluGaussian(DEFAULT_RELU_COEFFS), 0.8, n_samples=100_000, seed=1)
    assert est > 0.0


def test_censored_atom_probability():
    y = sample(CensoredGaussian(), 10**6, seed=7)
    assert np.mean(y == 0.0) == pytest.approx(ndtr(-1), abs=2e-3)
    assert np.mean(y == 2.0) == pytest.approx(ndtr(-1), abs=2e-3)
    inside = y[(y > 0) & (y < 2)]
    assert inside.size + np.sum(y == 0) + np.sum(y == 2) == y.size


def test_single_component_mixture_mean():
    y = sample(GaussianMixture(((1.0, 0.0, 1.0),)), 40_000, seed=5)
    assert abs(np.mean(y)) < 4 / np.sqrt(40_000) * 1.5 + 0.02


def test_izbicki_unimodal_branch():
    spec = IzbickiBimodal(4)
    x = np.full(4, -1.0)
    ys = conditional_sample(spec, x, 20_000, seed=9)
    # g = 0 for x1 < -0.5: unimodal law centered at f(x).
    f = (x[0] - 1) ** 2 * (x[0] + 1)
    assert np.mean(ys) == pytest.approx(f, abs=0.05)


def test_supervised_shapes_and_determinism():
    x, y = sample(RomanoSynthetic(), 500, seed=1)
    assert x.shape == (500, 1) and y.shape == (500,)
    assert np.all((x >= 0) & (x <= 5))
    x2, y2 = sample(RomanoSynthetic(), 500, seed=1)
    assert np.array_equal(x, x2) and np.array_equal(y, y2)
    x3, _ = sample(RomanoSynthetic(), 500, seed=2)
    assert not np.array_equal(x, x3)

    x, y = sample(IzbickiBimodal(20), 100, seed=1)
    assert x.shape == (100, 20)
    assert np.all((x >= -1.5) & (x <= 1.5))


def test_streams_are_independent():
    a = sample(StandardGaussian(), 100, seed=1, stream=(0,))
    b = sample(StandardGaussian(), 100, seed=1, stream=(1,))
    assert not np.array_equal(a, b)


def test_sample_rejects_bad_n():
    with pytest.raises(ValueError):
        sample(StandardGaussian(), 0, seed=1)


def test_spec_string_roundtrip():
    specs = [
        StandardGaussian(),
        CensoredGaussian(),
        PAPER_MIXTURE,
        GaussianMixture(((0.25, -1.0, 2.0), (0.75, 3.0, 0.5))),
        ReluGaussian(DEFAULT_RELU_COEFFS),
        RomanoSynthetic(),
        IzbickiBimodal(7),
    ]
    for spec in specs:
        assert parse_spec(spec_to_string(spec)) == spec
    with pytest.raises(ValueError):
        parse_spec("no_such_distribution")


def test_dp_volume_sandwiched_by_population_oracle():
    """On mixture samples the solver volume lands between the population
    optimum at deflated and inflated coverage for nearly every seed."""
    c = 0.5
    k = 3
    n = 800
    buckets = 20
    gamma = 1.0 / buckets
    delta = np.sqrt((k + np.log(n)) / n)
    eps = 4 * delta + gamma + 1.0 / n
    low = opt_oracle(PAPER_MIXTURE, max(c - eps, 0.01))
    high = opt_oracle(PAPER_MIXTURE, min(c + eps, 0.999))
    hits = 0
    seeds = 100
    for seed in range(seeds):
        s = SortedSample.from_values(sample(PAPER_MIXTURE, n, seed=seed, stream=(4,)))
        r = solve_dp(s, DpConfig(alpha=1 - c, gamma=gamma, k=k))
        if low - 1e-9 <= r.volume <= high + 1e-9:
            hits += 1
    assert hits >= 95
