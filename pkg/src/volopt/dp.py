"""Minimum-volume unions of k intervals covering a required sample fraction.

The solver is a dynamic program over sorted order statistics.  A table entry
``(i, j, l)`` holds the minimum total length of ``i`` disjoint index ranges
whose rightmost range ends at the j-th order statistic and whose certified
covered count is at least ``R(l) = ceil(l * gamma * n)``.  The coverage ledger
is bucketed at resolution ``gamma`` to keep the table small; requirements are
rounded conservatively, so the returned union always covers at least
``ceil((1 - alpha) * n)`` points.  With ``gamma <= 1/n`` the buckets are
single points and the program is an exact minimizer.

A brute-force enumerator over all small unions with endpoints at sample
values is provided as an independent verification oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import ceil_int
from .intervals import Interval, IntervalUnion, SortedSample, count_covered, normalize

__all__ = [
    "DpConfig",
    "DpResult",
    "OptResult",
    "solve_dp",
    "solve_dp_batch",
    "brute_force_opt_k",
    "opt_k_empirical",
]

DEFAULT_MAX_TABLE_CELLS = 200_000_000


@dataclass(frozen=True)
class DpConfig:
    """Inputs of the solver: miscoverage alpha, slack gamma, interval budget k."""

    alpha: float
    gamma: float
    k: int

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma < self.alpha < 1.0):
            raise ValueError(
                f"need 0 < gamma < alpha < 1, got gamma={self.gamma}, alpha={self.alpha}"
            )
        if self.k < 1:
            raise ValueError("interval budget k must be >= 1")


@dataclass(frozen=True)
class DpResult:
    """Solution plus the accounting needed to audit its guarantees."""

    union: IntervalUnion
    volume: float
    covered_count: int
    target_count: int
    gamma_effective: float
    query_level: int
    requirement: int


@dataclass(frozen=True)
class OptResult:
    """Empirical restricted-optimal volume together with the slack used."""

    volume: float
    gamma_effective: float
    union: IntervalUnion
    covered_count: int


def _requirements(n: int, bled: int, target: int) -> tuple[np.ndarray, int]:
    """Requirement grid R(l) = ceil(l*n/bled) and the query level for target."""
    lq = (target - 1) * bled // n + 1
    levels = np.arange(lq + 1, dtype=np.int64)
    req = (levels * n + bled - 1) // bled
    return req, lq


def _solve_batch_ranges(
    y: np.ndarray,
    k: int,
    target: int,
    buckets: int,
    max_table_cells: int = DEFAULT_MAX_TABLE_CELLS,
) -> list[list[tuple[int, int]]]:
    """Core vectorized solver over a batch of same-size sorted rows.

    Returns, per batch row, the chosen index ranges [(a, b), ...] with
    ``a <= b`` (inclusive, 0-based positions into the sorted row).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ValueError("batch input must be 2-dimensional")
    nb, n = y.shape
    if n < 1:
        raise ValueError("cannot solve on an empty sample")
    if not (1 <= target <= n):
        raise ValueError(f"target count {target} out of range [1, {n}]")
    # A bucket finer than one sample point buys nothing; clamping keeps the
    # table bounded and makes the program exact.
    bled = min(int(buckets), n)
    if bled < 1:
        raise ValueError("bucket count must be >= 1")
    req, lq = _requirements(n, bled, target)
    cells = (2 * k + 3) * (lq + 1) * nb * n
    if cells > max_table_cells:
        raise MemoryError(
            f"DP table would need ~{cells} cells (> {max_table_cells}); "
            "raise gamma to coarsen the coverage ledger"
        )

    inf = np.inf
    jidx = np.arange(n)
    ydiff = y[:, :, None] - y[:, None, :]  # y_j - y_j' per (row, j, j')
    invalid = jidx[:, None] < jidx[None, :]
    cmat = np.clip(jidx[:, None] - jidx[None, :] + 1, 1, n)

    # lp[l][j, j'] = smallest previous level whose requirement covers
    # R(l) - (j - j' + 1); 0 means no constraint remains.
    def _prev_level(l: int) -> np.ndarray:
        x = req[l] - cmat
        return np.where(x <= 0, 0, ((np.maximum(x, 1) - 1) * bled) // n + 1)

    batch_ix = np.arange(nb)[:, None, None]
    col_ix = jidx[None, None, :]

    # Prefix-min state of the previous table, padded so column j' means
    # "best end index <= j'-1"; the base (zero intervals) is 0 at level 0.
    mval = np.full((lq + 1, nb, n + 1), inf)
    marg = np.full((lq + 1, nb, n + 1), -1, dtype=np.int32)
    mval[0] = 0.0

    arg = np.full((k, lq + 1, nb, n), -1, dtype=np.int32)
    prev = np.full((k, lq + 1, nb, n), -1, dtype=np.int32)
    vq = np.full((k, nb, n), inf)
    lpms = [_prev_level(l) for l in range(lq + 1)]

    for i in range(1, k + 1):
        vi = np.full((lq + 1, nb, n), inf)
        for l in range(lq + 1):
            lpm = lpms[l]
            g = mval[lpm[None, :, :], batch_ix, col_ix]
            a = ydiff + g
            a[:, invalid] = inf
            vi[l] = a.min(axis=2)
            arg_l = a.argmin(axis=2).astype(np.int32)
            arg[i - 1, l] = arg_l
            garg = marg[lpm[None, :, :], batch_ix, col_ix]
            prev[i - 1, l] = np.take_along_axis(garg, arg_l[:, :, None], axis=2)[:, :, 0]
        vq[i - 1] = vi[lq]
        if i == k:
            break
        run = np.minimum.accumulate(vi, axis=2)
        improved = vi < np.concatenate(
            [np.full((lq + 1, nb, 1), inf), run[:, :, :-1]], axis=2
        )
        first_idx = np.maximum.accumulate(
            np.where(improved, jidx[None, None, :], -1), axis=2
        )
        mval = np.full((lq + 1, nb, n + 1), inf)
        marg = np.full((lq + 1, nb, n + 1), -1, dtype=np.int32)
        mval[:, :, 1:] = run
        marg[:, :, 1:] = first_idx

    # Fewest intervals first, then the smallest rightmost endpoint index.
    best_per_i = vq.min(axis=2)
    argj_per_i = vq.argmin(axis=2)
    i_sel = best_per_i.argmin(axis=0)
    j_sel = argj_per_i[i_sel, np.arange(nb)]

    solutions: list[list[tuple[int, int]]] = []
    for b in range(nb):
        i = int(i_sel[b]) + 1
        j = int(j_sel[b])
        l = lq
        ranges: list[tuple[int, int]] = []
        while i >= 1:
            jp = int(arg[i - 1, l, b, j])
            if jp < 0:
                raise RuntimeError("DP backtrack hit an infeasible state")
            ranges.append((jp, j))
            pe = int(prev[i - 1, l, b, j])
            x = int(req[l]) - (j - jp + 1)
            l = 0 if x <= 0 else ((x - 1) * bled) // n + 1
            i -= 1
            if pe < 0:
                break
            j = pe
        ranges.reverse()
        solutions.append(ranges)
    return solutions


def _ranges_to_union(row: np.ndarray, ranges: list[tuple[int, int]], k: int) -> IntervalUnion:
    return normalize([Interval(float(row[a]), float(row[b])) for a, b in ranges], k=k)


def solve_dp_batch(
    y: np.ndarray,
    k: int,
    target: int,
    buckets: int,
    max_table_cells: int = DEFAULT_MAX_TABLE_CELLS,
) -> list[IntervalUnion]:
    """Solve many same-size instances in one vectorized pass.

    ``y`` is (batch, n) with ascending rows; ``target`` is the required
    covered count and ``buckets`` the coverage-ledger resolution (the
    number of probability buckets, i.e. round(1/gamma)).
    """
    ranges = _solve_batch_ranges(y, k, target, buckets, max_table_cells)
    return [_ranges_to_union(row, rs, k) for row, rs in zip(np.asarray(y, dtype=float), ranges)]


def solve_dp(
    s: SortedSample,
    cfg: DpConfig,
    max_table_cells: int = DEFAULT_MAX_TABLE_CELLS,
) -> DpResult:
    """Minimum-volume union of <= k intervals covering ceil((1-alpha)n) points.

    Guarantees: the returned union covers at least ``ceil((1-alpha)*n)``
    sample points, has at most ``k`` intervals with all endpoints at sample
    values, and its volume is no larger than the optimum achievable when the
    required count is relaxed by the slack ``gamma``.

    Raises on an empty sample, and raises ``MemoryError`` when the requested
    gamma would make the coverage ledger exceed ``max_table_cells`` (raise
    gamma to coarsen it).
    """
    n = s.n
    if n == 0:
        raise ValueError("cannot solve on an empty sample")
    target = max(1, ceil_int((1.0 - cfg.alpha) * n))
    buckets = ceil_int(1.0 / cfg.gamma)
    ranges = _solve_batch_ranges(
        s.values[None, :], cfg.k, target, buckets, max_table_cells
    )[0]
    union = _ranges_to_union(s.values, ranges, cfg.k)
    req, lq = _requirements(n, min(buckets, n), target)
    return DpResult(
        union=union,
        volume=union.volume,
        covered_count=count_covered(s, union),
        target_count=target,
        gamma_effective=1.0 / min(buckets, n),
        query_level=lq,
        requirement=int(req[lq]),
    )


def opt_k_empirical(s: SortedSample, coverage: float, k: int, gamma: float) -> OptResult:
    """Empirical restricted-optimal volume at a covered fraction.

    Runs the solver at required count ``ceil(coverage * n)`` and reports the
    volume alongside the effective slack actually used.
    """
    if not (0.0 < coverage <= 1.0):
        raise ValueError("coverage must lie in (0, 1]")
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0, 1)")
    n = s.n
    if n == 0:
        raise ValueError("cannot solve on an empty sample")
    target = max(1, ceil_int(coverage * n))
    buckets = ceil_int(1.0 / gamma)
    ranges = _solve_batch_ranges(s.values[None, :], k, target, buckets)[0]
    union = _ranges_to_union(s.values, ranges, k)
    return OptResult(
        volume=union.volume,
        gamma_effective=1.0 / min(buckets, n),
        union=union,
        covered_count=count_covered(s, union),
    )


def brute_force_opt_k(
    s: SortedSample,
    cover_count: int,
    k: int,
    max_n: int = 20,
    max_k: int = 3,
) -> IntervalUnion:
    """Exact minimizer by exhaustive enumeration (verification oracle).

    Enumerates every union of at most ``k`` intervals with endpoints at
    sample values and returns one of minimum volume covering at least
    ``cover_count`` points.  Intentionally shares no machinery with the
    dynamic program.  Rejects instances beyond the size bounds.
    """
    n = s.n
    if n > max_n:
        raise ValueError(f"brute force limited to n <= {max_n}, got {n}")
    if k > max_k or k < 1:
        raise ValueError(f"brute force limited to 1 <= k <= {max_k}, got {k}")
    if not (1 <= cover_count <= n):
        raise ValueError(f"cover_count must lie in [1, {n}]")

    vals, first, counts = np.unique(s.values, return_index=True, return_counts=True)
    last = first + counts - 1
    d = len(vals)
    # Candidate intervals = maximal ranges over distinct values.  Restricting
    # to maximal ranges loses no optimum: extending an endpoint across
    # duplicates adds zero length and never removes covered points.
    pp, qq = np.triu_indices(d)
    rvol = vals[qq] - vals[pp]
    rcnt = last[qq] - first[pp] + 1

    best_vol = np.inf
    best: list[tuple[int, int]] | None = None

    def consider(vol: np.ndarray, cnt: np.ndarray, combos: list[np.ndarray]) -> None:
        nonlocal best_vol, best
        ok = cnt >= cover_count
        if not np.any(ok):
            return
        vols = np.where(ok, vol, np.inf)
        ix = int(np.argmin(vols))
        if vols[ix] < best_vol:
            best_vol = float(vols[ix])
            best = [(int(pp[c[ix]]), int(qq[c[ix]])) for c in combos]

    r = np.arange(len(pp))
    consider(rvol, rcnt, [r])

    if k >= 2:
        i1, i2 = np.meshgrid(r, r, indexing="ij")
        ok = qq[i1] < pp[i2]
        i1, i2 = i1[ok], i2[ok]
        consider(rvol[i1] + rvol[i2], rcnt[i1] + rcnt[i2], [i1, i2])
        if k >= 3 and len(i1):
            j1 = np.repeat(i1, len(r))
            j2 = np.repeat(i2, len(r))
            j3 = np.tile(r, len(i1))
            ok = qq[j2] < pp[j3]
            j1, j2, j3 = j1[ok], j2[ok], j3[ok]
            if len(j1):
                consider(
                    rvol[j1] + rvol[j2] + rvol[j3],
                    rcnt[j1] + rcnt[j2] + rcnt[j3],
                    [j1, j2, j3],
                )

    assert best is not None  # the full range always covers everything
    return normalize(
        [Interval(float(vals[p]), float(vals[q])) for p, q in best], k=k
    )
