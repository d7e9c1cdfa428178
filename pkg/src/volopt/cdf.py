"""Conditional-CDF providers: oracles, empirical, and k-nearest-neighbor.

A provider maps a covariate to a one-dimensional CDF over labels.  The
contract: ``cdf(x, ys)`` is monotone non-decreasing in ``ys`` with limits 0
and 1, ``support(x)`` returns a finite bracket containing essentially all
conditional mass, and evaluation is pure and reentrant.  Providers fitted on
data carry a fingerprint of that data, so downstream calibration can refuse
a model fitted on the calibration half.

Optional fast paths: ``quantile(x, ts)`` for exact inversion (order
statistics, closed forms) and ``cdf_many(xs, ys)`` for batched evaluation;
generic bisection covers providers without them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import poisson

from .distributions import (
    CensoredGaussian,
    DistributionSpec,
    GaussianMixture,
    IzbickiBimodal,
    ReluGaussian,
    RomanoSynthetic,
    StandardGaussian,
    _mixture_opt,
    izbicki_parts,
)
from .intervals import SortedSample

__all__ = [
    "ConditionalCdf",
    "EmpiricalCdf",
    "KnnCdf",
    "KnnCdfConfig",
    "empirical_cdf",
    "knn_cdf",
    "oracle_cdf",
    "data_fingerprint",
    "conditional_opt_oracle",
]


def data_fingerprint(*arrays: np.ndarray) -> str:
    """Stable hash of the data a provider was fitted on."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(np.asarray(a, dtype=float))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


class ConditionalCdf:
    """Base class: an evaluable map (x, y) -> estimated P(Y <= y | X = x)."""

    #: hash of the fitting data; None for analytic oracles
    fingerprint: str | None = None

    def cdf(self, x: np.ndarray | float, ys: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def support(self, x: np.ndarray | float) -> tuple[float, float]:
        """Finite bracket [lo, hi] with F(lo|x) ~ 0 and F(hi|x) ~ 1."""
        raise NotImplementedError

    def quantile(self, x: np.ndarray | float, ts: np.ndarray) -> np.ndarray | None:
        """Exact lower quantiles inf{y : F(y|x) >= t}, or None if unavailable."""
        return None

    def quantile_upper(self, x: np.ndarray | float, ts: np.ndarray) -> np.ndarray | None:
        """Exact upper quantiles inf{y : F(y|x) > t}, or None if unavailable.

        Coincides with the lower quantile for continuous strictly increasing
        F; differs on the flats of step CDFs, where closed prediction
        intervals need the right edge of the flat.
        """
        return None

    def cdf_many(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray | None:
        """Batched evaluation: xs (B, d), ys (B, T) -> (B, T); None if unavailable."""
        return None

    def cdf_left(self, x: np.ndarray | float, ys: np.ndarray) -> np.ndarray | None:
        """Left limits F(y- | x); None means F is continuous (use cdf)."""
        return None


def _step_quantile(sorted_labels: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Lower quantiles of the empirical CDF of sorted labels."""
    n = sorted_labels.size
    ts = np.asarray(ts, dtype=float)
    idx = np.ceil(ts * n - 1e-9).astype(int) - 1
    return sorted_labels[np.clip(idx, 0, n - 1)]


def _step_quantile_upper(sorted_labels: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Upper quantiles inf{y : F(y) > t} of the empirical CDF."""
    n = sorted_labels.size
    ts = np.asarray(ts, dtype=float)
    idx = np.floor(ts * n + 1e-9).astype(int)
    return sorted_labels[np.clip(idx, 0, n - 1)]


class EmpiricalCdf(ConditionalCdf):
    """Covariate-independent step CDF of the training labels."""

    def __init__(self, train_labels: SortedSample | np.ndarray):
        labels = (
            train_labels.values
            if isinstance(train_labels, SortedSample)
            else np.sort(np.asarray(train_labels, dtype=float))
        )
        if labels.size == 0:
            raise ValueError("empirical CDF needs at least one label")
        self._labels = labels
        self.fingerprint = data_fingerprint(labels)

    def cdf(self, x, ys):
        ys = np.asarray(ys, dtype=float)
        return np.searchsorted(self._labels, ys, side="right") / self._labels.size

    def support(self, x):
        return float(self._labels[0]), float(self._labels[-1])

    def quantile(self, x, ts):
        return _step_quantile(self._labels, ts)

    def quantile_upper(self, x, ts):
        return _step_quantile_upper(self._labels, ts)

    def cdf_left(self, x, ys):
        ys = np.asarray(ys, dtype=float)
        return np.searchsorted(self._labels, ys, side="left") / self._labels.size

    def cdf_many(self, xs, ys):
        return np.searchsorted(self._labels, np.asarray(ys, dtype=float), side="right") / self._labels.size


@dataclass(frozen=True)
class KnnCdfConfig:
    """k-nearest-neighbor estimator settings (Euclidean covariate distance)."""

    num_neighbors: int

    def __post_init__(self) -> None:
        if self.num_neighbors < 1:
            raise ValueError("num_neighbors must be >= 1")


class KnnCdf(ConditionalCdf):
    """Empirical CDF of the labels of the nearest training covariates.

    Neighbor search is an exact vectorized scan; distance ties break by
    training index so results are deterministic.  The training matrix is
    read-only and shared across queries.
    """

    def __init__(self, train_x: np.ndarray, train_y: np.ndarray, cfg: KnnCdfConfig):
        x = np.atleast_2d(np.asarray(train_x, dtype=float))
        if x.shape[0] == 1 and np.asarray(train_y).size != 1:
            x = x.T
        y = np.asarray(train_y, dtype=float)
        if x.shape[0] != y.size or y.size == 0:
            raise ValueError("train_x and train_y must be nonempty and aligned")
        if cfg.num_neighbors > y.size:
            raise ValueError("num_neighbors exceeds the training size")
        self._x = x
        self._y = y
        self._cfg = cfg
        self.fingerprint = data_fingerprint(x, y)

    def _neighbor_labels(self, x) -> np.ndarray:
        q = np.asarray(x, dtype=float).reshape(1, -1)
        d2 = np.sum((self._x - q) ** 2, axis=1)
        order = np.lexsort((np.arange(d2.size), d2))
        return np.sort(self._y[order[: self._cfg.num_neighbors]])

    def cdf(self, x, ys):
        labels = self._neighbor_labels(x)
        return np.searchsorted(labels, np.asarray(ys, dtype=float), side="right") / labels.size

    def support(self, x):
        labels = self._neighbor_labels(x)
        return float(labels[0]), float(labels[-1])

    def quantile(self, x, ts):
        return _step_quantile(self._neighbor_labels(x), ts)

    def quantile_upper(self, x, ts):
        return _step_quantile_upper(self._neighbor_labels(x), ts)

    def cdf_left(self, x, ys):
        labels = self._neighbor_labels(x)
        return np.searchsorted(labels, np.asarray(ys, dtype=float), side="left") / labels.size


class _GaussianOracle(ConditionalCdf):
    """Covariate-independent mixture-of-Gaussians CDF (exact)."""

    def __init__(self, components: tuple[tuple[float, float, float], ...]):
        self._w = np.array([c[0] for c in components])
        self._mu = np.array([c[1] for c in components])
        self._sd = np.sqrt([c[2] for c in components])

    def cdf(self, x, ys):
        ys = np.asarray(ys, dtype=float)
        z = (ys[..., None] - self._mu) / self._sd
        return ndtr(z) @ self._w

    def support(self, x):
        lo = float(np.min(self._mu - 8.0 * self._sd))
        hi = float(np.max(self._mu + 8.0 * self._sd))
        return lo, hi

    def cdf_many(self, xs, ys):
        return self.cdf(None, ys)


class _CensoredGaussianOracle(ConditionalCdf):
    """Exact CDF with atoms of mass Phi(-1) at 0 and 2 (jump list, unsmoothed)."""

    def cdf(self, x, ys):
        ys = np.asarray(ys, dtype=float)
        return np.where(ys < 0.0, 0.0, np.where(ys >= 2.0, 1.0, ndtr(ys - 1.0)))

    def support(self, x):
        return 0.0, 2.0

    def quantile(self, x, ts):
        ts = np.asarray(ts, dtype=float)
        p_lo = float(ndtr(-1.0))
        p_hi = float(ndtr(1.0))
        mid = 1.0 + ndtri(np.clip(ts, p_lo + 1e-15, p_hi))
        return np.where(ts <= p_lo, 0.0, np.where(ts > p_hi, 2.0, mid))

    def cdf_left(self, x, ys):
        ys = np.asarray(ys, dtype=float)
        return np.where(ys <= 0.0, 0.0, np.where(ys > 2.0, 1.0, ndtr(ys - 1.0)))

    def cdf_many(self, xs, ys):
        return self.cdf(None, ys)


class _ReluGaussianOracle(ConditionalCdf):
    """CDF of a piecewise-linear transform of a standard Gaussian (exact).

    On each linearity segment of the transform h(z), {h(z) <= y} is a z
    half-line or segment, so the CDF is a finite sum of Gaussian masses.
    """

    def __init__(self, coeffs):
        self._coeffs = coeffs
        breaks = sorted(-b / w for _, w, b in coeffs if w != 0.0)
        self._breaks = np.array([-np.inf] + breaks + [np.inf])
        # slope/intercept of h on each segment
        self._seg: list[tuple[float, float]] = []
        for i in range(len(self._breaks) - 1):
            zmid = np.clip(
                0.5 * (self._breaks[i] + self._breaks[i + 1]),
                self._breaks[i] if np.isfinite(self._breaks[i]) else self._breaks[i + 1] - 1.0,
                self._breaks[i + 1] if np.isfinite(self._breaks[i + 1]) else self._breaks[i] + 1.0,
            )
            slope = sum(a * w for a, w, b in coeffs if w * zmid + b > 0.0)
            inter = sum(a * b for a, w, b in coeffs if w * zmid + b > 0.0)
            self._seg.append((float(slope), float(inter)))

    def cdf(self, x, ys):
        ys = np.asarray(ys, dtype=float)
        out = np.zeros_like(ys)
        for i, (s, c) in enumerate(self._seg):
            zlo, zhi = self._breaks[i], self._breaks[i + 1]
            plo, phi = ndtr(zlo), ndtr(zhi)
            if s == 0.0:
                out += (phi - plo) * (ys >= c)
            elif s > 0.0:
                zstar = np.clip((ys - c) / s, zlo, zhi)
                out += ndtr(zstar) - plo
            else:
                zstar = np.clip((ys - c) / s, zlo, zhi)
                out += phi - ndtr(zstar)
        return out

    def support(self, x):
        z = np.linspace(-9.0, 9.0, 4001)
        h = np.zeros_like(z)
        for a, w, b in self._coeffs:
            h += a * np.maximum(w * z + b, 0.0)
        return float(h.min()), float(h.max())

    def cdf_many(self, xs, ys):
        return self.cdf(None, ys)


def _romano_params(x1: np.ndarray, tail: float = 1e-12):
    lam = np.sin(x1) ** 2 + 0.1
    kmax = int(poisson.ppf(1.0 - tail, 1.1))
    ks = np.arange(kmax + 1)
    pmf = poisson.pmf(ks[None, :], lam[:, None])
    s = np.maximum(0.03 * x1, 1e-9)
    s_out = np.sqrt(s**2 + 625.0)
    return lam, ks, pmf, s, s_out


class _RomanoOracle(ConditionalCdf):
    """Exact conditional CDF of the Poisson-cluster regression generator.

    The Poisson support is truncated at tail mass 1e-12 and each atom is
    convolved with its Gaussian noise analytically.
    """

    def cdf(self, x, ys):
        x1 = np.atleast_1d(np.asarray(x, dtype=float))[:1]
        out = self.cdf_many(x1.reshape(1, -1), np.asarray(ys, dtype=float).reshape(1, -1))
        return out[0].reshape(np.shape(ys))

    def cdf_many(self, xs, ys):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        x1 = xs[:, 0]
        ys = np.asarray(ys, dtype=float)
        _, ks, pmf, s, s_out = _romano_params(x1)
        z_in = (ys[:, :, None] - ks[None, None, :]) / s[:, None, None]
        z_out = (ys[:, :, None] - ks[None, None, :]) / s_out[:, None, None]
        mix = 0.99 * ndtr(z_in) + 0.01 * ndtr(z_out)
        return np.einsum("bk,btk->bt", pmf, mix)

    def support(self, x):
        x1 = float(np.atleast_1d(np.asarray(x, dtype=float))[0])
        lam = np.sin(x1) ** 2 + 0.1
        var = lam + (0.03 * x1) ** 2 + 0.01 * 625.0
        sd = np.sqrt(var)
        return lam - 6.0 * sd, lam + 6.0 * sd


class _IzbickiOracle(ConditionalCdf):
    """Exact conditional CDF of the bimodal heteroscedastic generator."""

    def cdf(self, x, ys):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        f, g, sd = izbicki_parts(np.array([x[0]]))
        ys = np.asarray(ys, dtype=float)
        return 0.5 * ndtr((ys - (f[0] - g[0])) / sd[0]) + 0.5 * ndtr(
            (ys - (f[0] + g[0])) / sd[0]
        )

    def cdf_many(self, xs, ys):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        f, g, sd = izbicki_parts(xs[:, 0])
        ys = np.asarray(ys, dtype=float)
        lo = (ys - (f - g)[:, None]) / sd[:, None]
        hi = (ys - (f + g)[:, None]) / sd[:, None]
        return 0.5 * ndtr(lo) + 0.5 * ndtr(hi)

    def support(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        f, g, sd = izbicki_parts(np.array([x[0]]))
        lo = float(f[0] - g[0] - 6.0 * sd[0])
        hi = float(f[0] + g[0] + 6.0 * sd[0])
        return lo, hi


def empirical_cdf(train_labels: SortedSample | np.ndarray) -> EmpiricalCdf:
    """Covariate-independent empirical step CDF of the training labels."""
    return EmpiricalCdf(train_labels)


def knn_cdf(train_x: np.ndarray, train_y: np.ndarray, cfg: KnnCdfConfig) -> KnnCdf:
    """k-nearest-neighbor conditional empirical CDF."""
    return KnnCdf(train_x, train_y, cfg)


def oracle_cdf(spec: DistributionSpec) -> ConditionalCdf:
    """Exact analytic conditional CDF for a synthetic generator spec."""
    if isinstance(spec, StandardGaussian):
        return _GaussianOracle(((1.0, 0.0, 1.0),))
    if isinstance(spec, GaussianMixture):
        return _GaussianOracle(spec.components)
    if isinstance(spec, CensoredGaussian):
        return _CensoredGaussianOracle()
    if isinstance(spec, ReluGaussian):
        return _ReluGaussianOracle(spec.coeffs)
    if isinstance(spec, RomanoSynthetic):
        return _RomanoOracle()
    if isinstance(spec, IzbickiBimodal):
        return _IzbickiOracle()
    raise ValueError(f"unknown distribution spec: {spec!r}")


def conditional_opt_oracle(
    spec: DistributionSpec, x: np.ndarray | float, coverage: float
) -> float:
    """Per-covariate optimal volume OPT(F(.|x), coverage) for supervised specs."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(spec, IzbickiBimodal):
        f, g, sd = izbicki_parts(np.array([x[0]]))
        var = float(sd[0] ** 2)
        comps = ((0.5, float(f[0] - g[0]), var), (0.5, float(f[0] + g[0]), var))
        return _mixture_opt(comps, coverage)
    if isinstance(spec, RomanoSynthetic):
        _, ks, pmf, s, s_out = _romano_params(np.array([float(x[0])]))
        comps = []
        total = pmf[0].sum()
        for j, p in zip(ks, pmf[0]):
            comps.append((0.99 * p / total, float(j), float(s[0] ** 2)))
            comps.append((0.01 * p / total, float(j), float(s_out[0] ** 2)))
        return _mixture_opt(tuple(comps), coverage)
    raise ValueError("per-x optimal volume is defined for supervised specs only")
