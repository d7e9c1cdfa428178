import numpy as np
import pytest

from volopt.baselines import (
    KdeConfig,
    kde_score,
    run_cp_kde,
    run_cqr,
    run_dcp_qr,
    run_dcp_qr_star,
)
from volopt.cdf import (
    ConditionalCdf,
    KnnCdfConfig,
    empirical_cdf,
    knn_cdf,
    oracle_cdf,
)
from volopt.distributions import (
    PAPER_MIXTURE,
    RomanoSynthetic,
    StandardGaussian,
    sample,
)
from volopt.intervals import SortedSample, WholeLine
from volopt.supervised import conditional_quantiles, conditional_quantiles_upper


def test_kde_kernel_peak():
    s = SortedSample.from_values([0.0])
    rho = 0.5
    assert kde_score(s, rho, 0.0) == pytest.approx(1 / (rho * np.sqrt(2 * np.pi)))


def test_kde_far_from_data():
    s = SortedSample.from_values([0.0])
    assert kde_score(s, 0.5, 50.0) == pytest.approx(0.0, abs=1e-300)


def test_kde_symmetric_pair():
    a, rho = 1.3, 0.7
    s = SortedSample.from_values([-a, a])
    direct = np.exp(-0.5 * (a / rho) ** 2) / (rho * np.sqrt(2 * np.pi))
    assert kde_score(s, rho, 0.0) == pytest.approx(direct)


def test_kde_config_validation():
    with pytest.raises(ValueError):
        KdeConfig(rho=0.0)
    with pytest.raises(ValueError):
        kde_score(SortedSample.from_values([0.0]), -1.0, 0.0)


def test_kde_superlevel_matches_pointwise_threshold():
    data = sample(PAPER_MIXTURE, 300, seed=4)
    ps = run_cp_kde(data, alpha=0.2, cfg=KdeConfig(rho=0.5, grid_resolution=4000), seed=4)
    train, _ = __import__("volopt.conformal", fromlist=["split"]).split(data, 4)
    lo = train.values[0] - 3 * 0.5
    hi = train.values[-1] + 3 * 0.5
    grid = np.linspace(lo, hi, 4000)
    direct = kde_score(train, 0.5, grid) >= ps.threshold
    assert np.array_equal(ps.set.contains_many(grid), direct)


def test_cp_kde_whole_line_on_degenerate_alpha():
    data = sample(StandardGaussian(), 20, seed=1)
    ps = run_cp_kde(data, alpha=0.05, cfg=KdeConfig(rho=0.3), seed=1)  # floor(11*.05)=0
    assert isinstance(ps.set, WholeLine)
    assert ps.volume == float("inf")
    assert "warning" in ps.metadata


def test_cp_kde_tiny_bandwidth_blows_up():
    data = sample(StandardGaussian(), 200, seed=6)
    wide = run_cp_kde(data, alpha=0.3, cfg=KdeConfig(rho=0.5), seed=6)
    spiky = run_cp_kde(data, alpha=0.3, cfg=KdeConfig(rho=0.001), seed=6)
    assert spiky.volume > 2.0 * wide.volume


class _OracleQuantile(ConditionalCdf):
    """Exact N(mu(x), 1) conditional law with mu(x) = first covariate."""

    def cdf(self, x, ys):
        from scipy.special import ndtr

        mu = float(np.atleast_1d(x)[0])
        return ndtr(np.asarray(ys, dtype=float) - mu)

    def support(self, x):
        mu = float(np.atleast_1d(x)[0])
        return mu - 8.0, mu + 8.0


def test_cqr_oracle_model_small_buffer():
    rng = np.random.default_rng(2)
    n = 400
    x_c = rng.uniform(-2, 2, size=(n, 1))
    y_c = x_c[:, 0] + rng.standard_normal(n)
    x_t = np.array([[0.0], [1.0]])
    preds = run_cqr(None, (x_c, y_c), x_t, _OracleQuantile(), alpha=0.3)
    b = preds[0].threshold
    assert abs(b) < 0.25
    from scipy.special import ndtri

    width = preds[0].volume
    assert width == pytest.approx(2 * ndtri(0.85) + 2 * b, abs=1e-6)


class _ConstantZero(ConditionalCdf):
    def cdf(self, x, ys):
        return (np.asarray(ys, dtype=float) >= 0.0).astype(float)

    def support(self, x):
        return (0.0, 0.0)


def test_cqr_constant_model_buffer_is_median_abs():
    y_c = np.array([-1.0, -0.5, 0.25, 0.75, 1.0])
    x_c = np.zeros((5, 1))
    preds = run_cqr(None, (x_c, y_c), np.zeros((1, 1)), _ConstantZero(), alpha=0.5)
    # residuals are |y|; ceil(0.5 * 6) = 3rd smallest of {0.25,0.5,0.75,1,1}
    assert preds[0].threshold == pytest.approx(0.75)


def test_cqr_alpha_near_one_smallest_residual():
    y_c = np.array([-1.0, -0.5, 0.25, 0.75, 1.0])
    x_c = np.zeros((5, 1))
    preds = run_cqr(None, (x_c, y_c), np.zeros((1, 1)), _ConstantZero(), alpha=0.99)
    assert preds[0].threshold == pytest.approx(0.25)  # ceil(0.01*6) = 1st smallest
    assert preds[0].volume <= 0.5 + 1e-9


def test_dcp_qr_oracle_buffer_near_zero():
    rng = np.random.default_rng(3)
    n = 500
    x_c = rng.uniform(-2, 2, size=(n, 1))
    y_c = x_c[:, 0] + rng.standard_normal(n)
    preds = run_dcp_qr(None, (x_c, y_c), np.array([[0.5]]), _OracleQuantile(), alpha=0.3)
    assert abs(preds[0].threshold) <= 3.0 / (n + 1) + 1e-9


def test_dcp_qr_covariate_free_reduction():
    labels = np.sort(np.random.default_rng(4).standard_normal(80))
    e = empirical_cdf(labels)
    x_c = np.zeros((40, 1))
    y_c = labels[:40]
    preds = run_dcp_qr(None, (x_c, y_c), np.zeros((2, 1)), e, alpha=0.4)
    t_hat = preds[0].meta["rank_threshold"]
    lo = conditional_quantiles(e, np.zeros((1, 1)), np.array([0.5 - t_hat]))[0, 0]
    hi = conditional_quantiles_upper(e, np.zeros((1, 1)), np.array([0.5 + t_hat]))[0, 0]
    assert preds[0].set.pairs() == [[lo, hi]]
    assert preds[0].set == preds[1].set


def test_dcp_qr_star_symmetric_coincides_with_dcp_qr():
    rng = np.random.default_rng(5)
    n = 300
    x_c = rng.uniform(-2, 2, size=(n, 1))
    y_c = x_c[:, 0] + rng.standard_normal(n)
    x_t = np.array([[0.0], [-1.5]])
    alpha = 0.2  # (1 - alpha) * L = 40: symmetric window is grid-aligned
    qr = run_dcp_qr(None, (x_c, y_c), x_t, _OracleQuantile(), alpha=alpha)
    star = run_dcp_qr_star(None, (x_c, y_c), x_t, _OracleQuantile(), alpha=alpha, L=50)
    for a, b in zip(qr, star):
        assert a.set.pairs() == pytest.approx(b.set.pairs(), abs=1e-6)


def test_star_window_dominates_symmetric_window():
    # Pre-calibration widths on the shared grid: the minimizer beats the
    # symmetric choice for every covariate, exactly.
    spec = RomanoSynthetic()
    cdf = oracle_cdf(spec)
    x_t, _ = sample(spec, 20, seed=9, stream=(3,))
    L, alpha = 50, 0.2
    span = int((1 - alpha) * L)
    ts = np.arange(L + 1) / L
    grids = np.maximum.accumulate(conditional_quantiles(cdf, x_t, ts), axis=1)
    sym_a = (L - span) // 2
    for row in grids:
        widths = row[span:] - row[: L + 1 - span]
        assert widths.min() <= row[sym_a + span] - row[sym_a] + 1e-12


def test_all_baselines_marginal_coverage_statistical():
    spec = RomanoSynthetic()
    alpha = 0.3
    reps = 200
    hits = {"cqr": 0, "dcp_qr": 0, "dcp_qr_star": 0, "cp_kde": 0}
    for r in range(reps):
        x_tr, y_tr = sample(spec, 120, seed=7000 + r, stream=(1,))
        x_c, y_c = sample(spec, 60, seed=7000 + r, stream=(2,))
        x_t, y_t = sample(spec, 1, seed=7000 + r, stream=(3,))
        cdf = knn_cdf(x_tr, y_tr, KnnCdfConfig(25))
        hits["cqr"] += run_cqr(None, (x_c, y_c), x_t, cdf, alpha)[0].contains(float(y_t[0]))
        hits["dcp_qr"] += run_dcp_qr(None, (x_c, y_c), x_t, cdf, alpha)[0].contains(float(y_t[0]))
        hits["dcp_qr_star"] += run_dcp_qr_star(None, (x_c, y_c), x_t, cdf, alpha, L=20)[0].contains(float(y_t[0]))
        data = sample(PAPER_MIXTURE, 100, seed=7000 + r, stream=(4,))
        y_new = sample(PAPER_MIXTURE, 1, seed=7000 + r, stream=(5,))[0]
        hits["cp_kde"] += run_cp_kde(data, alpha, KdeConfig(rho=0.5), seed=r).contains(float(y_new))
    bound = (1 - alpha) - 3 * np.sqrt(alpha * (1 - alpha) / reps)
    for method, h in hits.items():
        assert h / reps >= bound, f"{method}: {h / reps:.3f} < {bound:.3f}"


def test_baselines_reject_empty_calibration():
    e = empirical_cdf(np.array([1.0]))
    empty = (np.zeros((0, 1)), np.array([]))
    for fn in (run_cqr, run_dcp_qr, run_dcp_qr_star):
        with pytest.raises(ValueError):
            fn(None, empty, np.zeros((1, 1)), e, 0.3)
