"""Unsupervised split-conformal pipeline over the nested depth score.

Split the data in half, build the nested system on the first half, score the
second half, and threshold at the floor((n+1)*alpha)-th smallest score.  The
returned prediction set is always one level of the nested system, the whole
line (degenerate low threshold index) or the empty set (degenerate high
index).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._util import floor_int, rng_stream
from .intervals import WHOLE_LINE, IntervalUnion, SortedSample, WholeLine
from .nested import NestedConfig, NestedSystem, build_nested, level_for_threshold, score_many

__all__ = [
    "CalibrationResult",
    "PredictionSet",
    "split",
    "calibrate",
    "predict_unsupervised",
    "read_labels",
]


@dataclass(frozen=True)
class CalibrationResult:
    """Ordered calibration scores and the selected threshold.

    ``threshold_index`` is floor((n+1)*alpha), 1-based into the ascending
    scores.  An index below 1 cannot reject anything: the threshold is 0 and
    the prediction set degenerates to the whole line (flagged by
    ``warning``).  An index above n yields the empty set (threshold m+1).
    """

    scores: np.ndarray
    threshold_index: int
    threshold: int
    warning: str | None = None


@dataclass(frozen=True)
class PredictionSet:
    """A calibrated prediction set plus reproducibility metadata."""

    set: IntervalUnion | WholeLine
    threshold: int | float
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def volume(self) -> float:
        return self.set.volume

    def contains(self, y: float) -> bool:
        return self.set.contains(y)

    def contains_many(self, ys: np.ndarray) -> np.ndarray:
        return self.set.contains_many(ys)


def split(data: Sequence[float] | np.ndarray, seed: int) -> tuple[SortedSample, SortedSample]:
    """Seeded uniform random partition into a training and a calibration half.

    Odd sizes give the extra point to the training half.  Rejects fewer than
    4 observations.
    """
    arr = np.asarray(data, dtype=float).ravel()
    if arr.size < 4:
        raise ValueError("need at least 4 observations to split")
    perm = rng_stream(seed, 0).permutation(arr.size)
    half = (arr.size + 1) // 2
    return (
        SortedSample.from_values(arr[perm[:half]]),
        SortedSample.from_values(arr[perm[half:]]),
    )


def calibrate(ns: NestedSystem, calib: SortedSample, alpha: float) -> CalibrationResult:
    """Score the calibration half and pick the floor((n+1)*alpha)-th smallest."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    scores = np.sort(score_many(ns, calib.values))
    n = scores.size
    r = floor_int((n + 1) * alpha)
    if r < 1:
        return CalibrationResult(
            scores=scores,
            threshold_index=r,
            threshold=0,
            warning=(
                f"floor((n+1)*alpha) = {r} < 1: no score can be rejected, "
                "prediction set degenerates to the whole line"
            ),
        )
    if r > n:
        return CalibrationResult(scores=scores, threshold_index=r, threshold=ns.m + 1)
    return CalibrationResult(scores=scores, threshold_index=r, threshold=int(scores[r - 1]))


def predict_unsupervised(
    data: Sequence[float] | np.ndarray,
    alpha: float,
    k: int,
    m: int = 50,
    gamma: float | None = None,
    delta: float | str = "auto",
    seed: int = 0,
) -> PredictionSet:
    """End-to-end pipeline: split, build the nested score, calibrate, predict.

    Fixed seed and parameters give a bit-identical result.  The returned set
    is one nested level of the training-half system or a degenerate
    sentinel; its metadata records the split, the effective slack
    parameters, and the achieved calibration coverage.
    """
    train, calib = split(data, seed)
    cfg = NestedConfig(alpha=alpha, k=k, m=m, delta=delta, gamma=gamma)
    ns = build_nested(train, cfg)
    cal = calibrate(ns, calib, alpha)
    pred = level_for_threshold(ns, cal.threshold)
    achieved = float(np.mean(cal.scores >= cal.threshold)) if cal.threshold <= ns.m else 0.0
    meta = {
        "alpha": alpha,
        "k": k,
        "m": m,
        "gamma_effective": ns.meta["gamma_effective"],
        "delta_effective": ns.meta["delta"],
        "j_star": ns.j_star,
        "seed": seed,
        "n_train": train.n,
        "n_calib": calib.n,
        "threshold_index": cal.threshold_index,
        "achieved_calibration_coverage": achieved,
    }
    if cal.warning:
        meta["warning"] = cal.warning
    return PredictionSet(set=pred, threshold=cal.threshold, metadata=meta)


def read_labels(path: str | Path) -> np.ndarray:
    """Load a single-column numeric text file (one value per line)."""
    values = np.loadtxt(path, dtype=float, ndmin=1)
    if values.ndim != 1:
        raise ValueError(f"{path}: expected a single numeric column")
    return values
