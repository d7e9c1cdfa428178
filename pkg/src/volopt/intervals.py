"""Interval-union algebra on the real line.

Everything downstream (the dynamic program, nested systems, conformal
calibration, baselines) represents prediction sets as a normalized union of
closed intervals.  Conventions:

* intervals are closed on both ends; a data point equal to an endpoint counts
  as covered,
* zero-length intervals are first-class (point masses),
* touching intervals merge during normalization (measure-equivalent, keeps
  the interval count minimal),
* sample values are multiset semantics: duplicates each count.

All types are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Interval",
    "IntervalUnion",
    "SortedSample",
    "WholeLine",
    "WHOLE_LINE",
    "normalize",
    "volume",
    "contains",
    "count_covered",
    "is_subset",
]


@dataclass(frozen=True)
class Interval:
    """A closed interval [lo, hi] in label-space units; lo == hi is a point."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (self.lo <= self.hi):
            raise ValueError(f"interval needs lo <= hi, got [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class IntervalUnion:
    """A normalized union of disjoint closed intervals, sorted by lo.

    ``k`` is an optional capacity bound; when set, construction rejects
    unions with more than ``k`` intervals.  Use :func:`normalize` to build
    one from an arbitrary interval list.
    """

    intervals: tuple[Interval, ...]
    k: int | None = None
    # Interleaved bounds cached for vectorized membership tests.
    _los: np.ndarray = field(init=False, repr=False, compare=False)
    _his: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        prev_hi = None
        for iv in self.intervals:
            if prev_hi is not None and not (prev_hi < iv.lo):
                raise ValueError("intervals must be sorted and strictly disjoint")
            prev_hi = iv.hi
        if self.k is not None:
            if self.k < 1:
                raise ValueError("capacity bound k must be positive")
            if len(self.intervals) > self.k:
                raise ValueError(
                    f"{len(self.intervals)} intervals exceed capacity k={self.k}"
                )
        object.__setattr__(
            self, "_los", np.array([iv.lo for iv in self.intervals], dtype=float)
        )
        object.__setattr__(
            self, "_his", np.array([iv.hi for iv in self.intervals], dtype=float)
        )

    def __len__(self) -> int:
        return len(self.intervals)

    @property
    def volume(self) -> float:
        return float(np.sum(self._his - self._los)) if self.intervals else 0.0

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def contains(self, y: float) -> bool:
        return bool(self.contains_many(np.asarray([y]))[0])

    def contains_many(self, ys: np.ndarray) -> np.ndarray:
        """Vectorized closed-interval membership for an array of points."""
        ys = np.asarray(ys, dtype=float)
        if not self.intervals:
            return np.zeros(ys.shape, dtype=bool)
        idx = np.searchsorted(self._los, ys, side="right") - 1
        safe = np.clip(idx, 0, len(self._his) - 1)
        return (idx >= 0) & (ys <= self._his[safe])

    def pairs(self) -> list[list[float]]:
        return [[iv.lo, iv.hi] for iv in self.intervals]

    def to_json(self) -> str:
        """Serialize as an array of [lo, hi] pairs at full float precision."""
        return json.dumps(self.pairs())

    @classmethod
    def from_json(cls, text: str, k: int | None = None) -> "IntervalUnion":
        pairs = json.loads(text)
        return normalize([Interval(float(lo), float(hi)) for lo, hi in pairs], k=k)


class WholeLine:
    """Distinguished sentinel for the trivial prediction set (all of R).

    Never represented as a huge finite interval: its volume reports +inf and
    benchmark code counts it separately instead of averaging it.
    """

    _instance: "WholeLine | None" = None

    def __new__(cls) -> "WholeLine":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    volume = float("inf")
    is_empty = False

    def contains(self, y: float) -> bool:  # noqa: ARG002 - everything is covered
        return True

    def contains_many(self, ys: np.ndarray) -> np.ndarray:
        return np.ones(np.asarray(ys).shape, dtype=bool)

    def __repr__(self) -> str:
        return "WHOLE_LINE"


WHOLE_LINE = WholeLine()


@dataclass(frozen=True)
class SortedSample:
    """An ascending array of real observations (duplicates kept)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1:
            raise ValueError("sample must be one-dimensional")
        if np.any(np.diff(arr) < 0):
            raise ValueError("sample values must be non-decreasing")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "SortedSample":
        return cls(np.sort(np.asarray(list(values), dtype=float)))

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n


def normalize(intervals: Sequence[Interval | tuple[float, float]], k: int | None = None) -> IntervalUnion:
    """Merge overlapping or touching intervals into a sorted disjoint union.

    Total measure is preserved; touching intervals (hi_i == lo_{i+1}) merge.
    Rejects any input pair with lo > hi.
    """
    ivs = [iv if isinstance(iv, Interval) else Interval(float(iv[0]), float(iv[1])) for iv in intervals]
    if not ivs:
        return IntervalUnion((), k=k)
    ivs.sort(key=lambda iv: (iv.lo, iv.hi))
    merged: list[list[float]] = [[ivs[0].lo, ivs[0].hi]]
    for iv in ivs[1:]:
        if iv.lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], iv.hi)
        else:
            merged.append([iv.lo, iv.hi])
    return IntervalUnion(tuple(Interval(lo, hi) for lo, hi in merged), k=k)


def volume(u: IntervalUnion | WholeLine) -> float:
    """Total Lebesgue measure of the union (sum of interval lengths)."""
    return u.volume


def contains(u: IntervalUnion | WholeLine, y: float) -> bool:
    """Closed-endpoint membership test."""
    return u.contains(y)


def count_covered(s: SortedSample, u: IntervalUnion | WholeLine) -> int:
    """Number of sample points inside the union (n * empirical mass).

    Binary search per interval; duplicates each count.
    """
    if isinstance(u, WholeLine):
        return s.n
    if u.is_empty:
        return 0
    lo_idx = np.searchsorted(s.values, u._los, side="left")
    hi_idx = np.searchsorted(s.values, u._his, side="right")
    return int(np.sum(hi_idx - lo_idx))


def is_subset(a: IntervalUnion | WholeLine, b: IntervalUnion | WholeLine) -> bool:
    """Exact set containment a <= b by interval algebra (no sampling)."""
    if isinstance(b, WholeLine):
        return True
    if isinstance(a, WholeLine):
        return False
    if a.is_empty:
        return True
    if b.is_empty:
        return False
    idx = np.searchsorted(b._los, a._los, side="right") - 1
    if np.any(idx < 0):
        return False
    return bool(np.all(a._his <= b._his[idx]))
