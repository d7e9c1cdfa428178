"""Conformal prediction sets with near-optimal volume, as unions of k intervals.

The package builds minimum-volume unions of intervals over a sample by
dynamic programming, wraps them in nested systems to obtain a conformity
score, and calibrates split-conformal prediction sets in both the
unsupervised (label-only) and supervised (conditional-CDF) settings, with
baselines and a benchmark harness.
"""

from .intervals import (
    WHOLE_LINE,
    Interval,
    IntervalUnion,
    SortedSample,
    WholeLine,
    contains,
    count_covered,
    is_subset,
    normalize,
    volume,
)
from .dp import (
    DpConfig,
    DpResult,
    OptResult,
    brute_force_opt_k,
    opt_k_empirical,
    solve_dp,
    solve_dp_batch,
)

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
    "DpConfig",
    "DpResult",
    "OptResult",
    "solve_dp",
    "solve_dp_batch",
    "brute_force_opt_k",
    "opt_k_empirical",
]

__version__ = "0.1.0"
