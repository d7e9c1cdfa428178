"""Seeded synthetic generators and analytic optimal-volume oracles.

Each distribution used by the benchmark suite is a small frozen spec object;
``sample`` draws from it deterministically given a seed (all randomness flows
through counter-based Philox streams, so parallel replications reproduce
regardless of scheduling).  ``opt_oracle`` returns the population
minimum-volume at a coverage level for the specs where that value is
analytic: Gaussians, Gaussian mixtures (level sets of a k-component mixture
are unions of at most k intervals), and the censored Gaussian (atoms handled
exactly).  ``mc_opt_estimate`` is a Monte Carlo fallback for the rest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from ._util import rng_stream

__all__ = [
    "StandardGaussian",
    "CensoredGaussian",
    "GaussianMixture",
    "ReluGaussian",
    "RomanoSynthetic",
    "IzbickiBimodal",
    "DistributionSpec",
    "PAPER_MIXTURE",
    "DEFAULT_RELU_COEFFS",
    "sample",
    "conditional_sample",
    "opt_oracle",
    "mc_opt_estimate",
    "parse_spec",
    "spec_to_string",
]


@dataclass(frozen=True)
class StandardGaussian:
    """Labels drawn from N(0, 1)."""


@dataclass(frozen=True)
class CensoredGaussian:
    """Y = relu(Z + 1) - relu(Z - 1) for Z ~ N(0, 1).

    Equivalently a Gaussian truncated to (0, 2) plus point masses of
    probability Phi(-1) at 0 and at 2.
    """


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of 1-d Gaussians; components are (weight, mean, variance)."""

    components: tuple[tuple[float, float, float], ...]

    def __post_init__(self) -> None:
        w = np.array([c[0] for c in self.components])
        v = np.array([c[2] for c in self.components])
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be positive and sum to 1")
        if np.any(v <= 0):
            raise ValueError("mixture variances must be positive")


@dataclass(frozen=True)
class ReluGaussian:
    """Y = sum_j a_j * relu(w_j * Z + b_j) for Z ~ N(0, 1).

    Coefficients are (a_j, w_j, b_j) triples; flat pieces of the transform
    become point masses, so densities need not exist.
    """

    coeffs: tuple[tuple[float, float, float], ...]


@dataclass(frozen=True)
class RomanoSynthetic:
    """Heteroscedastic Poisson-cluster regression data.

    X ~ U[0, 5]; Y = Pois(sin^2(X) + 0.1) + 0.03*X*eps1 + 25*1{U < 0.01}*eps2
    with eps1, eps2 standard Gaussian and U uniform on [0, 1].
    """

    d: int = 1


@dataclass(frozen=True)
class IzbickiBimodal:
    """Bimodal regression data with d-dimensional uniform covariates.

    X ~ U[-1.5, 1.5]^d;  Y | X ~ 0.5 N(f - g, s^2) + 0.5 N(f + g, s^2) with
    f = (X1 - 1)^2 (X1 + 1), g = 2*1{X1 >= -0.5}*sqrt(X1 + 0.5),
    s^2 = 1/4 + |X1|.
    """

    d: int = 20


DistributionSpec = Union[
    StandardGaussian,
    CensoredGaussian,
    GaussianMixture,
    ReluGaussian,
    RomanoSynthetic,
    IzbickiBimodal,
]

PAPER_MIXTURE = GaussianMixture(
    ((1.0 / 3.0, -6.0, 0.0001), (1.0 / 3.0, 0.0, 1.0), (1.0 / 3.0, 8.0, 0.25))
)

# A fixed, documented coefficient set for the 7-unit ReLU transform (the
# reference experiments used an unrecorded random draw, so this family is
# pinned here for reproducibility; its optimal volume is estimated by Monte
# Carlo, not by the analytic oracle).
DEFAULT_RELU_COEFFS: tuple[tuple[float, float, float], ...] = (
    (1.2, 1.0, 1.5),
    (-0.8, 1.3, -0.4),
    (0.9, -1.1, 0.7),
    (1.5, 0.6, -1.2),
    (-1.1, -0.9, -0.3),
    (0.7, 1.8, 0.9),
    (-0.6, 0.8, 2.1),
)


def _relu(t: np.ndarray) -> np.ndarray:
    return np.maximum(t, 0.0)


def _is_supervised(spec: DistributionSpec) -> bool:
    return isinstance(spec, (RomanoSynthetic, IzbickiBimodal))


def izbicki_parts(x1: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean shift f, mode separation g and conditional sd for first covariate."""
    x1 = np.asarray(x1, dtype=float)
    f = (x1 - 1.0) ** 2 * (x1 + 1.0)
    g = 2.0 * (x1 >= -0.5) * np.sqrt(np.maximum(x1 + 0.5, 0.0))
    sd = np.sqrt(0.25 + np.abs(x1))
    return f, g, sd


def sample(
    spec: DistributionSpec, n: int, seed: int, stream: tuple[int, ...] = ()
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Draw n observations; labels only, or (X, y) for supervised specs."""
    if n < 1:
        raise ValueError("need n >= 1")
    rng = rng_stream(seed, *stream)
    if isinstance(spec, StandardGaussian):
        return rng.standard_normal(n)
    if isinstance(spec, CensoredGaussian):
        z = rng.standard_normal(n)
        # Piecewise form of relu(z+1) - relu(z-1); keeps the atoms at exactly
        # 0.0 and 2.0 instead of scattering them over a few ulps.
        return np.where(z <= -1.0, 0.0, np.where(z >= 1.0, 2.0, z + 1.0))
    if isinstance(spec, GaussianMixture):
        w = np.array([c[0] for c in spec.components])
        mu = np.array([c[1] for c in spec.components])
        sd = np.sqrt([c[2] for c in spec.components])
        comp = rng.choice(len(w), size=n, p=w)
        return mu[comp] + sd[comp] * rng.standard_normal(n)
    if isinstance(spec, ReluGaussian):
        z = rng.standard_normal(n)
        y = np.zeros(n)
        for a, w, b in spec.coeffs:
            y += a * _relu(w * z + b)
        return y
    if isinstance(spec, RomanoSynthetic):
        x = rng.uniform(0.0, 5.0, size=n)
        lam = np.sin(x) ** 2 + 0.1
        pois = rng.poisson(lam)
        e1 = rng.standard_normal(n)
        u = rng.uniform(0.0, 1.0, size=n)
        e2 = rng.standard_normal(n)
        y = pois + 0.03 * x * e1 + 25.0 * (u < 0.01) * e2
        return x[:, None], y
    if isinstance(spec, IzbickiBimodal):
        x = rng.uniform(-1.5, 1.5, size=(n, spec.d))
        f, g, sd = izbicki_parts(x[:, 0])
        sign = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
        y = f + sign * g + sd * rng.standard_normal(n)
        return x, y
    raise ValueError(f"unknown distribution spec: {spec!r}")


def conditional_sample(
    spec: DistributionSpec, x: np.ndarray, n: int, seed: int, stream: tuple[int, ...] = ()
) -> np.ndarray:
    """Draw n labels from Y | X = x for a supervised spec."""
    rng = rng_stream(seed, *stream)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(spec, RomanoSynthetic):
        xv = float(x[0])
        lam = np.sin(xv) ** 2 + 0.1
        pois = rng.poisson(lam, size=n)
        e1 = rng.standard_normal(n)
        u = rng.uniform(0.0, 1.0, size=n)
        e2 = rng.standard_normal(n)
        return pois + 0.03 * xv * e1 + 25.0 * (u < 0.01) * e2
    if isinstance(spec, IzbickiBimodal):
        f, g, sd = izbicki_parts(np.array([x[0]]))
        sign = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
        return float(f[0]) + sign * float(g[0]) + float(sd[0]) * rng.standard_normal(n)
    raise ValueError("conditional sampling requires a supervised spec")


# ---------------------------------------------------------------------------
# Optimal-volume oracles


def _mixture_pdf(components, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    for w, mu, var in components:
        sd = np.sqrt(var)
        out += w * np.exp(-0.5 * ((y - mu) / sd) ** 2) / (sd * np.sqrt(2.0 * np.pi))
    return out


def _mixture_cdf(components, y: float) -> float:
    return float(sum(w * ndtr((y - mu) / np.sqrt(var)) for w, mu, var in components))


def _mixture_superlevel(components, t: float) -> list[tuple[float, float]]:
    """Intervals {p > t} of a Gaussian-mixture density, by root bracketing."""
    grids = []
    for _, mu, var in components:
        sd = np.sqrt(var)
        grids.append(np.linspace(mu - 12.0 * sd, mu + 12.0 * sd, 4001))
    grid = np.unique(np.concatenate(grids))
    above = _mixture_pdf(components, grid) > t
    if not above.any():
        return []
    f = lambda y: _mixture_pdf(components, np.array([y]))[0] - t
    sign_change = np.nonzero(above[:-1] != above[1:])[0]
    roots = [brentq(f, grid[i], grid[i + 1], xtol=1e-12) for i in sign_change]
    # The density vanishes at both extremes (t > 0), so roots pair up.
    assert len(roots) % 2 == 0
    return [(roots[i], roots[i + 1]) for i in range(0, len(roots), 2)]


def _mixture_opt(components, coverage: float, tol: float = 1e-4) -> float:
    peaks = _mixture_pdf(components, np.array([mu for _, mu, _ in components]))
    t_lo, t_hi = 0.0, float(peaks.max()) * 1.01
    vol_lo = np.inf
    for _ in range(200):
        t = 0.5 * (t_lo + t_hi)
        segs = _mixture_superlevel(components, t)
        mass = sum(_mixture_cdf(components, b) - _mixture_cdf(components, a) for a, b in segs)
        if mass >= coverage:
            t_lo = t
            vol_lo = sum(b - a for a, b in segs)
        else:
            t_hi = t
        if t_hi - t_lo < 1e-15 * max(1.0, t_hi):
            break
    if not np.isfinite(vol_lo):
        raise RuntimeError("level-set bisection failed to find a covering set")
    return float(vol_lo)


def opt_oracle(spec: DistributionSpec, coverage: float, tol: float = 1e-4) -> float:
    """Population optimal volume at a coverage level (analytic specs only).

    Computed by bisecting the density threshold t until the superlevel set
    {p > t} carries exactly the requested mass; atoms (censored Gaussian)
    are handled in closed form.  Rejects specs without an analytic oracle.
    """
    if not (0.0 < coverage < 1.0):
        raise ValueError("coverage must lie in (0, 1)")
    if isinstance(spec, StandardGaussian):
        return float(2.0 * ndtri((1.0 + coverage) / 2.0))
    if isinstance(spec, GaussianMixture):
        return _mixture_opt(spec.components, coverage, tol)
    if isinstance(spec, CensoredGaussian):
        atom_mass = 2.0 * float(ndtr(-1.0))
        if coverage <= atom_mass:
            return 0.0
        # Remaining mass comes from the central N(1,1) part on (0, 2).
        half = (coverage - atom_mass) / 2.0
        w = float(ndtri(0.5 + half))
        return 2.0 * w
    raise ValueError(
        f"no analytic optimal-volume oracle for {type(spec).__name__}; "
        "use mc_opt_estimate"
    )


def mc_opt_estimate(
    spec: DistributionSpec,
    coverage: float,
    n_samples: int = 400_000,
    bins: int = 20_000,
    seed: int = 0,
) -> float:
    """Monte Carlo level-set estimate of the optimal volume.

    Bins a large sample, fills bins by decreasing empirical density until the
    requested mass is reached, and reports the total width taken.  Intended
    for specs without an analytic oracle (e.g. the ReLU-transformed
    Gaussian); accuracy is limited by the bin width.
    """
    if _is_supervised(spec):
        raise ValueError("marginal optimal volume is undefined for supervised specs")
    y = np.asarray(sample(spec, n_samples, seed))
    lo, hi = float(y.min()), float(y.max())
    span = max(hi - lo, 1e-12)
    edges = np.linspace(lo - 1e-9 * span, hi + 1e-9 * span, bins + 1)
    counts, _ = np.histogram(y, bins=edges)
    order = np.argsort(counts)[::-1]
    csum = np.cumsum(counts[order])
    need = int(np.ceil(coverage * n_samples))
    take = int(np.searchsorted(csum, need) + 1)
    width = edges[1] - edges[0]
    return float(take * width)


# ---------------------------------------------------------------------------
# Text round-trip for CLI configs and dataset manifests


def spec_to_string(spec: DistributionSpec) -> str:
    if isinstance(spec, StandardGaussian):
        return "gaussian"
    if isinstance(spec, CensoredGaussian):
        return "censored_gaussian"
    if spec == PAPER_MIXTURE:
        return "mixture3"
    if isinstance(spec, GaussianMixture):
        parts = ";".join(f"{w},{mu},{var}" for w, mu, var in spec.components)
        return f"mixture:{parts}"
    if isinstance(spec, ReluGaussian):
        if spec.coeffs == DEFAULT_RELU_COEFFS:
            return "relu_gaussian"
        parts = ";".join(f"{a},{w},{b}" for a, w, b in spec.coeffs)
        return f"relu_gaussian:{parts}"
    if isinstance(spec, RomanoSynthetic):
        return "romano"
    if isinstance(spec, IzbickiBimodal):
        return f"izbicki:{spec.d}"
    raise ValueError(f"unknown spec {spec!r}")


def parse_spec(text: str) -> DistributionSpec:
    """Parse the textual distribution names used in config files."""
    text = text.strip()
    if text == "gaussian":
        return StandardGaussian()
    if text == "censored_gaussian":
        return CensoredGaussian()
    if text == "mixture3":
        return PAPER_MIXTURE
    if text.startswith("mixture:"):
        comps = tuple(
            tuple(float(v) for v in part.split(","))
            for part in text[len("mixture:"):].split(";")
        )
        return GaussianMixture(comps)  # type: ignore[arg-type]
    if text == "relu_gaussian":
        return ReluGaussian(DEFAULT_RELU_COEFFS)
    if text.startswith("relu_gaussian:"):
        coeffs = tuple(
            tuple(float(v) for v in part.split(","))
            for part in text[len("relu_gaussian:"):].split(";")
        )
        return ReluGaussian(coeffs)  # type: ignore[arg-type]
    if text == "romano":
        return RomanoSynthetic()
    if text.startswith("izbicki"):
        d = int(text.split(":", 1)[1]) if ":" in text else 20
        return IzbickiBimodal(d)
    raise ValueError(f"unknown distribution spec string: {text!r}")
