"""Small shared helpers: guarded integer rounding and seeded RNG streams."""

from __future__ import annotations

import numpy as np

# Relative guard against float noise in expressions like ceil((1-alpha)*n),
# where (1-alpha)*n may land a few ulps above/below an exact integer.
_EPS = 1e-9


def ceil_int(x: float) -> int:
    """Ceiling with a tiny tolerance for float noise just above an integer."""
    import math

    return math.ceil(x - _EPS * max(1.0, abs(x)))


def floor_int(x: float) -> int:
    """Floor with a tiny tolerance for float noise just below an integer."""
    import math

    return math.floor(x + _EPS * max(1.0, abs(x)))


def rng_stream(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based splittable generator stream.

    Every random draw in the package flows from a single 64-bit ``seed``
    through Philox streams addressed by ``stream`` indices, so parallel
    replications are reproducible regardless of scheduling.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(stream))
    return np.random.Generator(np.random.Philox(ss))
