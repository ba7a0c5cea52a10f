"""Numerical tolerances shared by every module.

All thresholds live in one frozen record so the CLI can rescale them
coherently with a single ``--tol`` factor.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

ParallelMap = Callable[[Callable[[T], R], Iterable[T]], list]


def serial_map(func, items):
    return [func(item) for item in items]


@dataclass(frozen=True)
class Tolerances:
    herm: float = 1e-10          # per-dimension Frobenius slack for M - M^dagger
    psd: float = 1e-9            # most negative eigenvalue tolerated (then clamped)
    trace: float = 1e-9          # density operator normalization
    povm: float = 1e-8           # completeness of POVMs
    projective: float = 1e-8     # idempotence / orthogonality of projectors
    isometry: float = 1e-9       # i^dagger i = I
    correlation: float = 1e-9    # normalization and no-signaling
    q_sum: float = 1e-12         # sum of the input distribution
    support: float = 1e-9        # relative eigenvalue cut for support projections
    dist_gap: float = 1e-7       # duality gap accepted as converged
    guessing: float = 1e-9       # perfect-guessing overlap (relative to cell trace)
    rank: float = 1e-10          # relative singular value cut in algebra closure
    cluster_gap: float = 1e-7    # eigenvalue gap separating central blocks
    pullback: float = 1e-8       # pullback identities after decomposition
    commutation: float = 1e-7    # commutator residuals declared zero
    inequality: float = 1e-8     # slack allowed when checking certified inequalities

    def scaled(self, factor: float) -> "Tolerances":
        """Return a copy with every tolerance multiplied by ``factor``."""
        if factor <= 0:
            raise ValueError("tolerance scale factor must be positive")
        return replace(self, **{f.name: getattr(self, f.name) * factor for f in fields(self)})


DEFAULT_TOLERANCES = Tolerances()
DIST_MAX_ITERS = 5000
ENUMERATION_CAP = 10**8
COPY_OUT_DIM_CAP = 2**20
