"""Comparison methods: conformalized KDE, CQR, and the two quantile-space
distributional baselines.

All four run in the same split-conformal frame as the main pipelines: fit on
one half, rank a conformity score on the other, pick the floor/ceil order
statistic, and emit per-point prediction sets.  The KDE prediction set is a
superlevel set of the kernel estimate extracted by grid scan with bisection
refinement, and is not clipped to any interval budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._util import ceil_int, floor_int
from .cdf import ConditionalCdf
from .conformal import PredictionSet, split
from .intervals import WHOLE_LINE, Interval, IntervalUnion, SortedSample, normalize
from .supervised import (
    SupervisedPrediction,
    cdf_left_values,
    cdf_values,
    conditional_quantiles,
    conditional_quantiles_upper,
)

__all__ = [
    "KdeConfig",
    "kde_score",
    "run_cp_kde",
    "run_cqr",
    "run_dcp_qr",
    "run_dcp_qr_star",
]


@dataclass(frozen=True)
class KdeConfig:
    """Gaussian-kernel density settings for the conformalized KDE baseline."""

    rho: float
    grid_resolution: int = 10_000

    def __post_init__(self) -> None:
        if self.rho <= 0.0:
            raise ValueError("bandwidth rho must be positive")
        if self.grid_resolution < 16:
            raise ValueError("grid_resolution too small")


_SQRT2PI = np.sqrt(2.0 * np.pi)


def kde_score(train: SortedSample, rho: float, ys: np.ndarray | float) -> np.ndarray | float:
    """Gaussian kernel density estimate at candidate labels.

    q(y) = (1/(n*rho)) * sum_i K((y - Y_i)/rho) with the standard Gaussian
    kernel.
    """
    if rho <= 0.0:
        raise ValueError("bandwidth rho must be positive")
    scalar = np.isscalar(ys)
    ys_arr = np.atleast_1d(np.asarray(ys, dtype=float))
    z = (ys_arr[:, None] - train.values[None, :]) / rho
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (train.n * rho * _SQRT2PI)
    return float(dens[0]) if scalar else dens


def _kde_superlevel(train: SortedSample, rho: float, t: float, resolution: int) -> IntervalUnion:
    """Extract {y : kde(y) >= t} by grid scan plus bisection of the crossings."""
    lo = float(train.values[0]) - 3.0 * rho
    hi = float(train.values[-1]) + 3.0 * rho
    grid = np.linspace(lo, hi, resolution)
    above = kde_score(train, rho, grid) >= t

    def refine(a: float, b: float) -> float:
        fa = kde_score(train, rho, a) >= t
        while b - a > 1e-9:
            mid = 0.5 * (a + b)
            if (kde_score(train, rho, mid) >= t) == fa:
                a = mid
            else:
                b = mid
        return 0.5 * (a + b)

    intervals = []
    i = 0
    n = resolution
    while i < n:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and above[j + 1]:
            j += 1
        start = grid[i] if i == 0 else refine(grid[i - 1], grid[i])
        end = grid[j] if j == n - 1 else refine(grid[j], grid[j + 1])
        intervals.append(Interval(float(start), float(end)))
        i = j + 1
    return normalize(intervals)


def run_cp_kde(
    data: Sequence[float] | np.ndarray, alpha: float, cfg: KdeConfig, seed: int = 0
) -> PredictionSet:
    """Split-conformal prediction set from a kernel-density conformity score."""
    train, calib = split(data, seed)
    scores = np.sort(kde_score(train, cfg.rho, calib.values))
    n = scores.size
    r = floor_int((n + 1) * alpha)
    meta = {"alpha": alpha, "rho": cfg.rho, "seed": seed, "n_train": train.n, "n_calib": n}
    if r < 1:
        meta["warning"] = "floor((n+1)*alpha) < 1: whole-line prediction set"
        return PredictionSet(set=WHOLE_LINE, threshold=0.0, metadata=meta)
    if r > n:
        return PredictionSet(set=IntervalUnion(()), threshold=float("inf"), metadata=meta)
    t_hat = float(scores[r - 1])
    return PredictionSet(
        set=_kde_superlevel(train, cfg.rho, t_hat, cfg.grid_resolution),
        threshold=t_hat,
        metadata=meta,
    )


def _buffer_index(n: int, alpha: float) -> int:
    return ceil_int((1.0 - alpha) * (n + 1))


def _interval_or_degenerate(lo: float, hi: float) -> IntervalUnion:
    if lo > hi:
        return IntervalUnion(())
    return IntervalUnion((Interval(lo, hi),))


def run_cqr(
    train: tuple[np.ndarray, np.ndarray] | None,
    calib: tuple[np.ndarray, np.ndarray],
    test_xs: np.ndarray,
    cdf: ConditionalCdf,
    alpha: float,
) -> list[SupervisedPrediction]:
    """Conformalized quantile regression: label-space buffer around the
    central quantile pair (alpha/2, 1 - alpha/2)."""
    x_calib, y_calib = calib
    x_calib = np.atleast_2d(np.asarray(x_calib, dtype=float))
    y_calib = np.asarray(y_calib, dtype=float)
    if y_calib.size == 0:
        raise ValueError("calibration set must be nonempty")
    if x_calib.shape[0] != y_calib.size:
        x_calib = x_calib.T
    test_xs = np.atleast_2d(np.asarray(test_xs, dtype=float))
    qs = np.array([alpha / 2.0, 1.0 - alpha / 2.0])
    qc = conditional_quantiles(cdf, x_calib, qs)
    residuals = np.maximum(qc[:, 0] - y_calib, y_calib - qc[:, 1])
    n = y_calib.size
    idx = _buffer_index(n, alpha)
    if idx > n:
        b = float("inf")
    else:
        b = float(np.sort(residuals)[idx - 1])
    qt = conditional_quantiles(cdf, test_xs, qs)
    meta = {"alpha": alpha, "buffer": b, "n_calib": n}
    preds = []
    for i in range(test_xs.shape[0]):
        if not np.isfinite(b):
            s: IntervalUnion | type(WHOLE_LINE) = WHOLE_LINE
        else:
            s = _interval_or_degenerate(float(qt[i, 0] - b), float(qt[i, 1] + b))
        preds.append(SupervisedPrediction(x=test_xs[i], set=s, threshold=b, meta=meta))
    return preds


def run_dcp_qr(
    train: tuple[np.ndarray, np.ndarray] | None,
    calib: tuple[np.ndarray, np.ndarray],
    test_xs: np.ndarray,
    cdf: ConditionalCdf,
    alpha: float,
) -> list[SupervisedPrediction]:
    """Distributional baseline: buffer added in quantile space around the
    median, calibrated on the rank scores |F(Y|X) - 1/2|."""
    x_calib, y_calib = calib
    x_calib = np.atleast_2d(np.asarray(x_calib, dtype=float))
    y_calib = np.asarray(y_calib, dtype=float)
    if y_calib.size == 0:
        raise ValueError("calibration set must be nonempty")
    if x_calib.shape[0] != y_calib.size:
        x_calib = x_calib.T
    test_xs = np.atleast_2d(np.asarray(test_xs, dtype=float))
    ranks = np.abs(cdf_values(cdf, x_calib, y_calib) - 0.5)
    n = y_calib.size
    idx = _buffer_index(n, alpha)
    if idx > n:
        t_hat = float("inf")
    else:
        t_hat = float(np.sort(ranks)[idx - 1])
    b = t_hat - (1.0 - alpha) / 2.0
    meta = {"alpha": alpha, "buffer": b, "rank_threshold": t_hat, "n_calib": n}
    preds = []
    whole = not np.isfinite(t_hat) or t_hat >= 0.5
    if not whole:
        # {y : |F(y|x) - 1/2| <= t} = [Q(1/2 - t), Q+(1/2 + t)]: closed on the
        # left by right-continuity, and the upper quantile keeps the flats of
        # step CDFs inside.
        lo = conditional_quantiles(cdf, test_xs, np.array([0.5 - t_hat]))[:, 0]
        hi = conditional_quantiles_upper(cdf, test_xs, np.array([0.5 + t_hat]))[:, 0]
    for i in range(test_xs.shape[0]):
        if whole:
            s: IntervalUnion | type(WHOLE_LINE) = WHOLE_LINE
        else:
            s = _interval_or_degenerate(float(lo[i]), float(hi[i]))
        preds.append(SupervisedPrediction(x=test_xs[i], set=s, threshold=b, meta=meta))
    return preds


def _star_window(levels: np.ndarray, span: int) -> int:
    widths = levels[span:] - levels[: levels.size - span]
    return int(np.argmin(widths))


def run_dcp_qr_star(
    train: tuple[np.ndarray, np.ndarray] | None,
    calib: tuple[np.ndarray, np.ndarray],
    test_xs: np.ndarray,
    cdf: ConditionalCdf,
    alpha: float,
    L: int = 50,
) -> list[SupervisedPrediction]:
    """Volume-aware variant: per covariate, the quantile pair with span
    1 - alpha minimizing the interval width on the L-level grid; the buffer
    is the signed symmetric quantile-space expansion under which the label
    enters the interval, and the buffered bounds are read off the quantile
    function directly."""
    x_calib, y_calib = calib
    x_calib = np.atleast_2d(np.asarray(x_calib, dtype=float))
    y_calib = np.asarray(y_calib, dtype=float)
    if y_calib.size == 0:
        raise ValueError("calibration set must be nonempty")
    if x_calib.shape[0] != y_calib.size:
        x_calib = x_calib.T
    test_xs = np.atleast_2d(np.asarray(test_xs, dtype=float))
    ts = np.arange(L + 1) / L
    span = ceil_int((1.0 - alpha) * L)
    gc = np.maximum.accumulate(conditional_quantiles(cdf, x_calib, ts), axis=1)
    n = y_calib.size
    # Smallest b with Q(q_lo - b) <= y <= Q+(q_hi + b), by Galois duality
    # max(q_lo - F(y), F(y-) - q_hi); negative scores allow contraction.
    f_right = cdf_values(cdf, x_calib, y_calib)
    f_left = cdf_left_values(cdf, x_calib, y_calib)
    a_cal = np.array([_star_window(gc[i], span) for i in range(n)])
    scores = np.maximum(a_cal / L - f_right, f_left - (a_cal + span) / L)
    idx = _buffer_index(n, alpha)
    b = float("inf") if idx > n else float(np.sort(scores)[idx - 1])
    meta = {"alpha": alpha, "buffer": b, "L": L, "n_calib": n}
    preds: list[SupervisedPrediction] = []
    if not np.isfinite(b):
        return [
            SupervisedPrediction(x=test_xs[i], set=WHOLE_LINE, threshold=b, meta=meta)
            for i in range(test_xs.shape[0])
        ]
    gt = np.maximum.accumulate(conditional_quantiles(cdf, test_xs, ts), axis=1)
    a_test = np.array([_star_window(gt[i], span) for i in range(test_xs.shape[0])])
    t_lo = np.clip(a_test / L - b, 0.0, 1.0)
    t_hi = np.clip((a_test + span) / L + b, 0.0, 1.0)
    lo = conditional_quantiles(cdf, test_xs, t_lo[:, None])[:, 0]
    hi = conditional_quantiles_upper(cdf, test_xs, t_hi[:, None])[:, 0]
    for i in range(test_xs.shape[0]):
        preds.append(
            SupervisedPrediction(
                x=test_xs[i],
                set=_interval_or_degenerate(float(lo[i]), float(hi[i])),
                threshold=b,
                meta=meta,
            )
        )
    return preds
