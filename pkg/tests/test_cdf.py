import numpy as np
import pytest
from scipy.special import ndtr

from volopt.cdf import (
    KnnCdfConfig,
    conditional_opt_oracle,
    data_fingerprint,
    empirical_cdf,
    knn_cdf,
    oracle_cdf,
)
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
    sample,
)


def test_empirical_cdf_examples():
    e = empirical_cdf(np.array([1.0, 2.0, 3.0]))
    assert e.cdf(None, np.array([2.0]))[0] == pytest.approx(2 / 3)
    assert e.cdf(None, np.array([0.5]))[0] == 0.0
    assert e.cdf(None, np.array([3.0]))[0] == 1.0
    assert e.cdf(None, np.array([99.0]))[0] == 1.0


def test_knn_point_mass_and_tie_break():
    kf = knn_cdf(np.array([[0.0], [1.0]]), np.array([10.0, 20.0]), KnnCdfConfig(1))
    assert kf.cdf(np.array([0.1]), np.array([10.0]))[0] == 1.0
    assert kf.cdf(np.array([0.1]), np.array([9.9]))[0] == 0.0
    # Equidistant query: tie breaks toward the lower training index.
    assert kf.cdf(np.array([0.5]), np.array([10.0]))[0] == 1.0


def test_knn_full_neighborhood_equals_empirical():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    kf = knn_cdf(x, y, KnnCdfConfig(40))
    e = empirical_cdf(y)
    grid = np.linspace(y.min() - 1, y.max() + 1, 101)
    assert np.allclose(kf.cdf(x[3], grid), e.cdf(None, grid))


def test_knn_clustered_support():
    x = np.array([[0.0], [0.1], [5.0], [5.1]])
    y = np.array([1.0, 1.1, 9.0, 9.1])
    kf = knn_cdf(x, y, KnnCdfConfig(2))
    lo, hi = kf.support(np.array([0.05]))
    assert (lo, hi) == (1.0, 1.1)


def test_knn_validation():
    with pytest.raises(ValueError):
        knn_cdf(np.zeros((3, 1)), np.zeros(3), KnnCdfConfig(4))
    with pytest.raises(ValueError):
        KnnCdfConfig(0)


def test_oracle_monotone_and_limits():
    specs = [
        StandardGaussian(),
        CensoredGaussian(),
        PAPER_MIXTURE,
        ReluGaussian(DEFAULT_RELU_COEFFS),
        RomanoSynthetic(),
        IzbickiBimodal(20),
    ]
    rng = np.random.default_rng(1)
    for spec in specs:
        oc = oracle_cdf(spec)
        if isinstance(spec, RomanoSynthetic):
            x = np.array([2.2])
        elif isinstance(spec, IzbickiBimodal):
            x = rng.uniform(-1.5, 1.5, size=20)
        else:
            x = None
        lo, hi = oc.support(x)
        grid = np.linspace(lo, hi, 301)
        vals = oc.cdf(x, grid)
        assert np.all(np.diff(vals) >= -1e-12)
        span = max(hi - lo, 1.0)
        assert oc.cdf(x, np.array([lo - 1e-9 * span]))[0] <= 0.02
        assert vals[-1] >= 0.98


def test_censored_oracle_jump_at_zero():
    oc = oracle_cdf(CensoredGaussian())
    assert oc.cdf(None, np.array([0.0]))[0] == pytest.approx(ndtr(-1))
    assert oc.cdf(None, np.array([-1e-12]))[0] == 0.0
    assert oc.cdf_left(None, np.array([0.0]))[0] == 0.0
    assert oc.cdf(None, np.array([2.0]))[0] == 1.0
    assert oc.cdf_left(None, np.array([2.0]))[0] == pytest.approx(ndtr(1))


def test_izbicki_oracle_branch():
    # For x1 = -1 the separation g vanishes: unimodal normal around f(x).
    oc = oracle_cdf(IzbickiBimodal(20))
    x = np.full(20, -1.0)
    f = (x[0] - 1) ** 2 * (x[0] + 1)
    sd = np.sqrt(0.25 + abs(x[0]))
    grid = np.linspace(f - 4 * sd, f + 4 * sd, 41)
    expect = ndtr((grid - f) / sd)
    assert np.allclose(oc.cdf(x, grid), expect, atol=1e-12)


@pytest.mark.parametrize(
    "spec,x",
    [
        (StandardGaussian(), None),
        (CensoredGaussian(), None),
        (PAPER_MIXTURE, None),
        (RomanoSynthetic(), np.array([3.3])),
        (IzbickiBimodal(6), np.array([0.7, 0, 0, 0, 0, 0])),
    ],
)
def test_oracle_matches_monte_carlo_dkw(spec, x):
    # Dvoretzky-Kiefer-Wolfowitz band at confidence 0.999 for 10^6 draws.
    n = 10**6
    eps = np.sqrt(np.log(2 / 0.001) / (2 * n))
    if x is None:
        draws = np.sort(sample(spec, n, seed=13))
    else:
        draws = np.sort(conditional_sample(spec, x, n, seed=13))
    oc = oracle_cdf(spec)
    probe = draws[:: max(1, n // 20000)]
    f = oc.cdf(x, probe)
    f_left = oc.cdf_left(x, probe)
    if f_left is None:
        f_left = f
    lo_rank = np.searchsorted(draws, probe, side="left") / n
    hi_rank = np.searchsorted(draws, probe, side="right") / n
    # sup |F_n - F|: the step function's upper value pairs with F and its
    # left limit with F(y-), so atoms are compared on matching sides.
    gap = np.maximum(np.abs(f - hi_rank), np.abs(f_left - lo_rank))
    assert float(gap.max()) <= eps + 1e-9


def test_fingerprints_distinguish_data():
    a = data_fingerprint(np.array([1.0, 2.0]))
    b = data_fingerprint(np.array([1.0, 2.000001]))
    assert a != b
    assert a == data_fingerprint(np.array([1.0, 2.0]))
    assert oracle_cdf(StandardGaussian()).fingerprint is None
    e = empirical_cdf(np.array([1.0, 2.0]))
    assert e.fingerprint == data_fingerprint(np.array([1.0, 2.0]))


def test_conditional_opt_oracle_izbicki():
    x = np.zeros(20)
    x[0] = 1.0
    v = conditional_opt_oracle(IzbickiBimodal(20), x, 0.7)
    # Two well-separated modes at f -/+ g with sd sqrt(1.25): the optimal set
    # is two intervals; sanity-bound it by the single-mode width and the
    # full-range width.
    assert 0.0 < v < 10.0
    x1 = np.zeros(20)
    x1[0] = -1.0  # unimodal branch: matches the Gaussian two-sided width
    from scipy.special import ndtri

    sd = np.sqrt(0.25 + 1.0)
    expect = 2 * sd * ndtri((1 + 0.7) / 2)
    assert conditional_opt_oracle(IzbickiBimodal(20), x1, 0.7) == pytest.approx(expect, abs=1e-3)
    with pytest.raises(ValueError):
        conditional_opt_oracle(GaussianMixture(((1.0, 0, 1.0),)), 0.0, 0.5)
