"""Supervised prediction sets from an estimated conditional CDF.

For each covariate of interest, the estimated conditional CDF is inverted on
an (L+1)-level quantile ladder; the L upper grid values act as a surrogate
sample fed to the nested-system builder, and split-conformal calibration
over labeled pairs picks the level served at prediction time.  Building the
per-covariate systems is embarrassingly parallel and batched internally.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import floor_int
from .cdf import ConditionalCdf, data_fingerprint
from .conformal import PredictionSet
from .intervals import WHOLE_LINE, IntervalUnion, WholeLine
from .nested import NestedConfig, NestedSystem, build_nested_many, level_for_threshold
from .nested import score as nested_score

__all__ = [
    "QuantileGrid",
    "SupervisedPrediction",
    "NonMonotoneCdfError",
    "GridTableCdf",
    "quantile_grid",
    "conditional_quantiles",
    "conditional_quantiles_upper",
    "cdf_values",
    "build_conditional_nested",
    "score_supervised",
    "run_dcp_dp",
    "run_dcp_dp_from_grids",
    "load_quantile_grid_csv",
    "load_labeled_csv",
]

_BISECT_ITERS = 100
_MONOTONE_PROBES = 33


class NonMonotoneCdfError(ValueError):
    """The provider violated monotonicity of F(y|x) in y."""


@dataclass(frozen=True)
class QuantileGrid:
    """L+1 ascending values realizing the conditional quantiles at l/L."""

    levels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.levels, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("a quantile grid needs at least two levels")
        if np.any(np.diff(arr) < 0):
            raise ValueError("quantile grid values must be non-decreasing")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "levels", arr)

    @property
    def L(self) -> int:
        return int(self.levels.size - 1)

    @property
    def sample_values(self) -> np.ndarray:
        """The L upper grid values used as the surrogate sample."""
        return self.levels[1:]


@dataclass(frozen=True)
class SupervisedPrediction:
    """Per-test-point output: covariate, prediction set, and its provenance."""

    x: np.ndarray
    set: IntervalUnion | WholeLine
    threshold: int | float
    system_id: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def volume(self) -> float:
        return self.set.volume

    def contains(self, y: float) -> bool:
        return self.set.contains(y)


def _check_monotone(cdf: ConditionalCdf, xs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> None:
    probes = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, _MONOTONE_PROBES)
    vals = _cdf_many(cdf, xs, probes)
    if np.any(np.diff(vals, axis=1) < -1e-9):
        raise NonMonotoneCdfError("conditional CDF is not monotone in y")


def _cdf_many(cdf: ConditionalCdf, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    out = cdf.cdf_many(xs, ys)
    if out is not None:
        return np.asarray(out, dtype=float)
    return np.stack([np.asarray(cdf.cdf(x, row), dtype=float) for x, row in zip(xs, ys)])


def _invert_cdf(cdf: ConditionalCdf, xs: np.ndarray, ts: np.ndarray, strict: bool) -> np.ndarray:
    """Bisect inf{y : F(y|x) >= t} (strict=False) or inf{y : F(y|x) > t}."""
    sup = np.array([cdf.support(x) for x in xs], dtype=float)
    lo0, hi0 = sup[:, 0], sup[:, 1]
    _check_monotone(cdf, xs, lo0, hi0)
    nt = ts.shape[-1]
    lo = np.repeat(lo0[:, None], nt, axis=1)
    hi = np.repeat(hi0[:, None], nt, axis=1)
    f_lo = _cdf_many(cdf, xs, lo)
    f_hi = _cdf_many(cdf, xs, hi)
    t = np.broadcast_to(ts if ts.ndim == 2 else ts[None, :], lo.shape)
    hit = (lambda f: f > t) if strict else (lambda f: f >= t)
    # Clip: already satisfied at the floor, or unreachable within the bracket.
    done_lo = hit(f_lo)
    done_hi = ~hit(f_hi)
    out = np.where(done_lo, lo, hi)
    active = ~(done_lo | done_hi)
    if np.any(active):
        a, b = lo.copy(), hi.copy()
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (a + b)
            take_hi = hit(_cdf_many(cdf, xs, mid))
            b = np.where(take_hi, mid, b)
            a = np.where(take_hi, a, mid)
        out = np.where(active, b, out)
    return out


def conditional_quantiles(cdf: ConditionalCdf, xs: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Lower quantiles inf{y : F(y|x) >= t} for each covariate row and level.

    ``ts`` is a shared level vector or an (n_rows, T) matrix of per-row
    levels.  Uses the provider's exact inversion when it has one; otherwise
    bisects the (validated monotone) CDF over the declared support bracket,
    clipping t = 0 to the bracket floor and unreachable t to the ceiling.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ts = np.asarray(ts, dtype=float)
    row_ts = ts.ndim == 2
    probe = cdf.quantile(xs[0], ts[0] if row_ts else ts)
    if probe is not None:
        rows = [np.asarray(probe, dtype=float)]
        rows += [
            np.asarray(cdf.quantile(x, ts[i + 1] if row_ts else ts), dtype=float)
            for i, x in enumerate(xs[1:])
        ]
        return np.stack(rows)
    return _invert_cdf(cdf, xs, ts, strict=False)


def conditional_quantiles_upper(cdf: ConditionalCdf, xs: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Upper quantiles inf{y : F(y|x) > t}; the flat-top inverse for step CDFs."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ts = np.asarray(ts, dtype=float)
    row_ts = ts.ndim == 2
    probe = cdf.quantile_upper(xs[0], ts[0] if row_ts else ts)
    if probe is not None:
        rows = [np.asarray(probe, dtype=float)]
        rows += [
            np.asarray(cdf.quantile_upper(x, ts[i + 1] if row_ts else ts), dtype=float)
            for i, x in enumerate(xs[1:])
        ]
        return np.stack(rows)
    return _invert_cdf(cdf, xs, ts, strict=True)


def cdf_left_values(cdf: ConditionalCdf, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Left limits F(y- | x) for aligned covariate rows and labels."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.asarray(ys, dtype=float)
    left = cdf.cdf_left(xs[0], np.asarray([ys[0]]))
    if left is not None:
        vals = [float(np.asarray(left, dtype=float)[0])]
        vals += [
            float(np.asarray(cdf.cdf_left(x, np.asarray([y])), dtype=float)[0])
            for x, y in zip(xs[1:], ys[1:])
        ]
        return np.asarray(vals)
    return cdf_values(cdf, xs, ys)


def cdf_values(cdf: ConditionalCdf, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """F(y_i | x_i) for aligned covariate rows and labels."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.asarray(ys, dtype=float)
    return _cdf_many(cdf, xs, ys[:, None])[:, 0]


def quantile_grid(cdf: ConditionalCdf, x: np.ndarray | float, L: int) -> QuantileGrid:
    """Invert the conditional CDF at levels 0, 1/L, ..., 1 for one covariate."""
    if L < 2:
        raise ValueError("L must be >= 2")
    xs = np.atleast_2d(np.asarray(x, dtype=float))
    ts = np.arange(L + 1) / L
    vals = conditional_quantiles(cdf, xs, ts)[0]
    return QuantileGrid(np.maximum.accumulate(vals))


def build_conditional_nested(grid: QuantileGrid, cfg: NestedConfig) -> NestedSystem:
    """Nested system over a quantile grid (surrogate-sample delegation).

    Under the implied step CDF, level j carries mass j/m of the grid, so the
    grid size must match the number of levels.
    """
    if grid.L != cfg.m:
        raise ValueError(f"grid size L={grid.L} must equal the level count m={cfg.m}")
    return build_nested_many(grid.sample_values[None, :], cfg)[0]


def score_supervised(ns_for_x: NestedSystem, y: float) -> int:
    """Depth score of a candidate label under the per-covariate system."""
    return nested_score(ns_for_x, y)


def _calibration_threshold(scores: np.ndarray, alpha: float, m: int) -> tuple[int, int, str | None]:
    n = scores.size
    r = floor_int((n + 1) * alpha)
    if r < 1:
        return r, 0, (
            f"floor((n+1)*alpha) = {r} < 1: prediction sets degenerate to the whole line"
        )
    if r > n:
        return r, m + 1, None
    return r, int(np.sort(scores)[r - 1]), None


def run_dcp_dp_from_grids(
    grids_calib: np.ndarray,
    y_calib: np.ndarray,
    grids_test: np.ndarray,
    test_xs: np.ndarray,
    alpha: float,
    k: int,
    m: int = 50,
    gamma: float | None = None,
    delta: float | str = "auto",
) -> list[SupervisedPrediction]:
    """Core supervised pipeline on precomputed quantile ladders.

    ``grids_calib``/``grids_test`` are (n, L+1) arrays of grid levels with
    L = m.  Builds one nested system per row, calibrates the depth-score
    threshold on the labeled calibration rows, and serves the matching level
    per test row.
    """
    grids_calib = np.asarray(grids_calib, dtype=float)
    grids_test = np.asarray(grids_test, dtype=float)
    y_calib = np.asarray(y_calib, dtype=float)
    if grids_calib.shape[0] != y_calib.size or y_calib.size == 0:
        raise ValueError("calibration grids and labels must be nonempty and aligned")
    if grids_calib.shape[1] != m + 1 or grids_test.shape[1] != m + 1:
        raise ValueError(f"grids must have L+1 = {m + 1} columns")
    cfg = NestedConfig(alpha=alpha, k=k, m=m, delta=delta, gamma=gamma)

    all_rows = np.vstack([grids_calib[:, 1:], grids_test[:, 1:]])
    systems = build_nested_many(all_rows, cfg)
    n_cal = y_calib.size
    calib_scores = np.array(
        [nested_score(systems[i], float(y_calib[i])) for i in range(n_cal)]
    )
    r, t_hat, warning = _calibration_threshold(calib_scores, alpha, m)
    shared = {
        "alpha": alpha,
        "k": k,
        "m": m,
        "delta_effective": systems[0].meta["delta"],
        "gamma_effective": systems[0].meta["gamma_effective"],
        "threshold_index": r,
        "threshold": t_hat,
        "n_calib": n_cal,
    }
    if warning:
        shared["warning"] = warning
    test_xs = np.atleast_2d(np.asarray(test_xs, dtype=float))
    preds = []
    for i in range(grids_test.shape[0]):
        ns = systems[n_cal + i]
        preds.append(
            SupervisedPrediction(
                x=test_xs[i],
                set=level_for_threshold(ns, t_hat),
                threshold=t_hat,
                system_id=n_cal + i,
                meta=shared,
            )
        )
    return preds


def run_dcp_dp(
    train: tuple[np.ndarray, np.ndarray] | None,
    calib: tuple[np.ndarray, np.ndarray],
    test_xs: np.ndarray,
    cdf: ConditionalCdf,
    alpha: float,
    k: int,
    m: int = 50,
    gamma: float | None = None,
    delta: float | str = "auto",
) -> list[SupervisedPrediction]:
    """Supervised pipeline from a conditional-CDF provider.

    The provider must have been fitted on the training half only; a provider
    fingerprinted on the calibration data is refused.  Nested systems are
    built only for the calibration and test covariates.
    """
    x_calib, y_calib = calib
    x_calib = np.atleast_2d(np.asarray(x_calib, dtype=float))
    y_calib = np.asarray(y_calib, dtype=float)
    if y_calib.size == 0:
        raise ValueError("calibration set must be nonempty")
    if x_calib.shape[0] != y_calib.size:
        x_calib = x_calib.T
    if cdf.fingerprint is not None and cdf.fingerprint == data_fingerprint(
        x_calib, y_calib
    ):
        raise ValueError(
            "conditional CDF was fitted on the calibration data; "
            "fit it on the disjoint training half"
        )
    test_xs = np.atleast_2d(np.asarray(test_xs, dtype=float))
    ts = np.arange(m + 1) / m
    grids_calib = np.maximum.accumulate(conditional_quantiles(cdf, x_calib, ts), axis=1)
    grids_test = np.maximum.accumulate(conditional_quantiles(cdf, test_xs, ts), axis=1)
    return run_dcp_dp_from_grids(
        grids_calib, y_calib, grids_test, test_xs, alpha, k, m, gamma, delta
    )


# ---------------------------------------------------------------------------
# File ingestion


class GridTableCdf(ConditionalCdf):
    """Adapter exposing ingested quantile ladders as a conditional CDF.

    The covariate is the row index into the ladder table (float or 1-vector);
    each row's L upper grid values act as the implied sample of the step CDF.
    Lets the quantile-space baselines consume externally produced grids.
    """

    def __init__(self, grids: np.ndarray):
        grids = np.asarray(grids, dtype=float)
        if grids.ndim != 2 or grids.shape[1] < 3:
            raise ValueError("need an (n_points, L+1) ladder table")
        if np.any(np.diff(grids, axis=1) < 0):
            raise ValueError("ladders must be non-decreasing")
        self._grids = grids

    def _row(self, x) -> np.ndarray:
        idx = int(np.atleast_1d(np.asarray(x, dtype=float))[0])
        return self._grids[idx]

    def cdf(self, x, ys):
        row = self._row(x)[1:]
        return np.searchsorted(row, np.asarray(ys, dtype=float), side="right") / row.size

    def cdf_left(self, x, ys):
        row = self._row(x)[1:]
        return np.searchsorted(row, np.asarray(ys, dtype=float), side="left") / row.size

    def support(self, x):
        row = self._row(x)
        return float(row[0]), float(row[-1])

    def quantile(self, x, ts):
        row = self._row(x)[1:]
        ts = np.asarray(ts, dtype=float)
        idx = np.ceil(ts * row.size - 1e-9).astype(int) - 1
        return row[np.clip(idx, 0, row.size - 1)]

    def quantile_upper(self, x, ts):
        row = self._row(x)[1:]
        ts = np.asarray(ts, dtype=float)
        idx = np.floor(ts * row.size + 1e-9).astype(int)
        return row[np.clip(idx, 0, row.size - 1)]


def load_quantile_grid_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read externally produced quantile ladders.

    Format: CSV with header ``point_id,level,value``; every point must carry
    the full 0..L ladder with non-decreasing values.  Returns the point ids
    in first-appearance order and an (n_points, L+1) array.
    """
    by_point: dict[str, dict[int, float]] = {}
    order: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"point_id", "level", "value"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {sorted(required)}")
        for row in reader:
            pid = row["point_id"]
            if pid not in by_point:
                by_point[pid] = {}
                order.append(pid)
            by_point[pid][int(row["level"])] = float(row["value"])
    if not order:
        raise ValueError(f"{path}: no quantile rows")
    sizes = {max(levels) for levels in by_point.values()}
    if len(sizes) != 1:
        raise ValueError(f"{path}: inconsistent ladder sizes {sorted(sizes)}")
    L = sizes.pop()
    grids = np.empty((len(order), L + 1))
    for i, pid in enumerate(order):
        levels = by_point[pid]
        missing = set(range(L + 1)) - set(levels)
        if missing:
            raise ValueError(f"{path}: point {pid} missing levels {sorted(missing)}")
        vals = np.array([levels[l] for l in range(L + 1)])
        if np.any(np.diff(vals) < 0):
            raise ValueError(f"{path}: point {pid} has non-monotone quantiles")
        grids[i] = vals
    return order, grids


def load_labeled_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read labeled data with header x_0,...,x_{d-1},y."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "y" or not all(h.startswith("x_") for h in header[:-1]):
            raise ValueError(f"{path}: header must be x_0,...,x_(d-1),y")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    return arr[:, :-1], arr[:, -1]
