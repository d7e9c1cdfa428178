"""Nested families of interval unions and the depth conformity score.

A nested system is an increasing family S_1 <= ... <= S_m of interval unions
over a sample, each with at most k intervals, where level j targets a covered
count of ceil(j*n/m).  One anchor level j* is produced by the minimum-volume
solver; levels above grow by greedy expansion (always absorb the uncovered
point closest to the current boundary), levels below shrink by greedy
contraction (always delete the boundary point with the largest volume
reduction).  The conformity score of a point is the number of levels
containing it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import ceil_int
from .dp import _solve_batch_ranges
from .intervals import (
    WHOLE_LINE,
    Interval,
    IntervalUnion,
    SortedSample,
    WholeLine,
    count_covered,
    normalize,
)

__all__ = [
    "NestedConfig",
    "NestedSystem",
    "InfeasibleNestedConfig",
    "build_nested",
    "build_nested_many",
    "greedy_expand",
    "greedy_contract",
    "score",
    "score_many",
    "level_for_threshold",
]


class InfeasibleNestedConfig(ValueError):
    """Raised when the slack budget cannot fit under the miscoverage level."""


@dataclass(frozen=True)
class NestedConfig:
    """Construction parameters for a nested system.

    ``delta="auto"`` resolves to min(sqrt((k + ln n)/n), (alpha - gamma -
    1/n)/3): the first term is the usual uniform-convergence rate, the second
    caps it so the feasibility requirement 3*delta + gamma + 1/n <= alpha
    stays satisfiable.  An explicit delta that violates the requirement is
    rejected with a diagnostic naming the inequality.
    """

    alpha: float
    k: int
    m: int = 50
    delta: float | str = "auto"
    gamma: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.m < 2:
            raise ValueError("m must be >= 2")

    def resolve(self, n: int) -> "ResolvedNested":
        if n < 1:
            raise ValueError("need a nonempty sample")
        gamma = self.gamma if self.gamma is not None else 1.0 / self.m
        if not (0.0 < gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        budget = self.alpha - gamma - 1.0 / n
        if self.delta == "auto":
            if budget <= 0.0:
                raise InfeasibleNestedConfig(
                    f"3*delta + gamma + 1/n <= alpha is violated for every delta >= 0: "
                    f"gamma + 1/n = {gamma + 1.0 / n:.6g} > alpha = {self.alpha:.6g}"
                )
            delta = min(math.sqrt((self.k + math.log(n)) / n), budget / 3.0)
        else:
            delta = float(self.delta)
            if delta < 0.0:
                raise ValueError("delta must be >= 0")
        if 3.0 * delta + gamma + 1.0 / n > self.alpha + 1e-12:
            raise InfeasibleNestedConfig(
                "3*delta + gamma + 1/n <= alpha is violated: "
                f"3*{delta:.6g} + {gamma:.6g} + {1.0 / n:.6g} = "
                f"{3.0 * delta + gamma + 1.0 / n:.6g} > {self.alpha:.6g}"
            )
        j_star = ceil_int((1.0 - self.alpha + 1.0 / n + 3.0 * delta) * self.m)
        j_star = min(max(j_star, 1), self.m)
        return ResolvedNested(
            alpha=self.alpha,
            k=self.k,
            m=self.m,
            delta=delta,
            gamma=gamma,
            j_star=j_star,
            buckets=ceil_int(1.0 / gamma),
        )


@dataclass(frozen=True)
class ResolvedNested:
    alpha: float
    k: int
    m: int
    delta: float
    gamma: float
    j_star: int
    buckets: int


@dataclass(frozen=True)
class NestedSystem:
    """The levels S_1 <= ... <= S_m plus construction bookkeeping."""

    levels: tuple[IntervalUnion, ...]
    m: int
    j_star: int
    target_counts: tuple[int, ...]
    achieved_counts: tuple[int, ...]
    meta: dict = field(compare=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "m": self.m,
                "j_star": self.j_star,
                "levels": [lvl.pairs() for lvl in self.levels],
            }
        )


# ---------------------------------------------------------------------------
# Greedy machinery over sorted positions
#
# Steps move one sorted position at a time, so each expansion/contraction
# changes the covered-point ledger by exactly 1 and level targets are hit
# exactly.  Duplicate copies of a boundary value peel at zero volume
# reduction, which keeps point masses in the union until nothing cheaper is
# left: the geometric set can only over-cover its ledger, never under-cover.


def _union_to_positions(u: IntervalUnion, y: np.ndarray) -> list[list[int]]:
    ranges = []
    for iv in u.intervals:
        a = int(np.searchsorted(y, iv.lo, side="left"))
        b = int(np.searchsorted(y, iv.hi, side="right")) - 1
        if a > b:
            raise ValueError("interval endpoints must be sample values")
        ranges.append([a, b])
    return ranges


def _expand_once(ranges: list[list[int]], y: np.ndarray) -> None:
    """Absorb the uncovered position closest to a boundary (ties: smaller y)."""
    best = None  # (distance, value, range index, side)
    n = y.size
    for ri, (a, b) in enumerate(ranges):
        if a > 0 and (ri == 0 or ranges[ri - 1][1] < a - 1):
            cand = (float(y[a] - y[a - 1]), float(y[a - 1]), ri, "L")
            if best is None or cand[:2] < best[:2]:
                best = cand
        if b < n - 1 and (ri == len(ranges) - 1 or ranges[ri + 1][0] > b + 1):
            cand = (float(y[b + 1] - y[b]), float(y[b + 1]), ri, "R")
            if best is None or cand[:2] < best[:2]:
                best = cand
    if best is None:
        raise RuntimeError("no uncovered point left to absorb")
    _, _, ri, side = best
    if side == "L":
        ranges[ri][0] -= 1
    else:
        ranges[ri][1] += 1


def _contract_once(ranges: list[list[int]], y: np.ndarray) -> None:
    """Remove the boundary position with maximum volume reduction.

    Ties prefer right-endpoint removals, then the larger boundary value,
    then the rightmost interval.
    """
    best = None  # (reduction, side rank (R=1, L=0), boundary value, ri, side)
    for ri, (a, b) in enumerate(ranges):
        if a == b:
            cand = (0.0, 1, float(y[b]), ri, "D")
        else:
            cand = (float(y[b] - y[b - 1]), 1, float(y[b]), ri, "R")
            left = (float(y[a + 1] - y[a]), 0, float(y[a]), ri, "L")
            if left[:3] > cand[:3]:
                cand = left
        if best is None or cand[:3] > best[:3] or (cand[:3] == best[:3] and ri > best[3]):
            best = cand
    if best is None:
        raise RuntimeError("cannot contract an empty union")
    _, _, _, ri, side = best
    if side == "D":
        del ranges[ri]
    elif side == "R":
        ranges[ri][1] -= 1
    else:
        ranges[ri][0] += 1


def _positions_union(ranges, y: np.ndarray, k) -> IntervalUnion:
    return normalize([Interval(float(y[a]), float(y[b])) for a, b in ranges], k=k)


def greedy_expand(
    current: IntervalUnion, s: SortedSample, target_count: int
) -> IntervalUnion:
    """Expand the union until its ledger covers at least target_count points.

    Repeatedly extends the interval nearest (by boundary distance) to the
    closest uncovered point; the interval count never increases.
    """
    if target_count > s.n:
        raise ValueError("target_count exceeds the sample size")
    y = s.values
    ranges = _union_to_positions(current, y)
    cnt = sum(b - a + 1 for a, b in ranges)
    while cnt < target_count:
        _expand_once(ranges, y)
        cnt += 1
    return _positions_union(ranges, y, current.k)


def greedy_contract(
    current: IntervalUnion, s: SortedSample, target_count: int
) -> IntervalUnion:
    """Shrink the union until its ledger covers at most target_count points."""
    if target_count < 0:
        raise ValueError("target_count must be >= 0")
    y = s.values
    ranges = _union_to_positions(current, y)
    cnt = sum(b - a + 1 for a, b in ranges)
    while cnt > target_count:
        _contract_once(ranges, y)
        cnt -= 1
    return _positions_union(ranges, y, current.k)


def build_nested_many(
    rows: np.ndarray, cfg: NestedConfig, max_table_cells: int | None = None
) -> list[NestedSystem]:
    """Build one nested system per sorted row, sharing a batched anchor solve."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise ValueError("rows must be (batch, n)")
    nb, n = rows.shape
    r = cfg.resolve(n)
    targets = [ceil_int(j * n / r.m) for j in range(1, r.m + 1)]
    kwargs = {} if max_table_cells is None else {"max_table_cells": max_table_cells}
    anchor_ranges = _solve_batch_ranges(
        rows, r.k, max(1, targets[r.j_star - 1]), r.buckets, **kwargs
    )

    systems = []
    for b in range(nb):
        y = rows[b]
        sample = SortedSample(y)
        ranges = [list(rg) for rg in anchor_ranges[b]]
        anchor = _positions_union(ranges, y, r.k)
        levels: list[IntervalUnion | None] = [None] * r.m
        achieved = [0] * r.m

        cnt = sum(hi - lo + 1 for lo, hi in ranges)
        levels[r.j_star - 1] = anchor
        achieved[r.j_star - 1] = count_covered(sample, anchor)

        cur = [list(rg) for rg in ranges]
        ccur = cnt
        for j in range(r.j_star + 1, r.m + 1):
            while ccur < targets[j - 1]:
                _expand_once(cur, y)
                ccur += 1
            lvl = _positions_union(cur, y, r.k)
            levels[j - 1] = lvl
            achieved[j - 1] = count_covered(sample, lvl)

        cur = [list(rg) for rg in ranges]
        ccur = cnt
        for j in range(r.j_star - 1, 0, -1):
            while ccur > targets[j - 1]:
                _contract_once(cur, y)
                ccur -= 1
            lvl = _positions_union(cur, y, r.k)
            levels[j - 1] = lvl
            achieved[j - 1] = count_covered(sample, lvl)

        deviations = [
            (j + 1, targets[j], achieved[j])
            for j in range(r.m)
            if achieved[j] != targets[j]
        ]
        systems.append(
            NestedSystem(
                levels=tuple(levels),  # type: ignore[arg-type]
                m=r.m,
                j_star=r.j_star,
                target_counts=tuple(targets),
                achieved_counts=tuple(achieved),
                meta={
                    "alpha": r.alpha,
                    "k": r.k,
                    "delta": r.delta,
                    "gamma": r.gamma,
                    "gamma_effective": 1.0 / min(r.buckets, n),
                    "n": n,
                    "count_deviations": deviations,
                },
            )
        )
    return systems


def build_nested(s: SortedSample, cfg: NestedConfig) -> NestedSystem:
    """Nested system over a sample: anchor level by the minimum-volume solver,
    upper levels by greedy expansion, lower levels by greedy contraction."""
    return build_nested_many(s.values[None, :], cfg)[0]


def score(ns: NestedSystem, y: float) -> int:
    """Depth conformity score: the number of levels containing y (0..m)."""
    return int(sum(lvl.contains(y) for lvl in ns.levels))


def score_many(ns: NestedSystem, ys: np.ndarray) -> np.ndarray:
    ys = np.asarray(ys, dtype=float)
    out = np.zeros(ys.shape, dtype=int)
    for lvl in ns.levels:
        out += lvl.contains_many(ys)
    return out


def level_for_threshold(ns: NestedSystem, t: int) -> IntervalUnion | WholeLine:
    """The superlevel set {y : score(y) >= t}.

    By nesting this is level m - t + 1; t = 0 yields the whole line
    (unbounded sentinel) and t > m the empty union.
    """
    if t <= 0:
        return WHOLE_LINE
    if t > ns.m:
        return IntervalUnion((), k=ns.levels[0].k)
    return ns.levels[ns.m - t]
