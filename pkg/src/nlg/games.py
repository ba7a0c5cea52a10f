"""Two-player games, correlations, classical values and the rate curve."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import DEFAULT_TOLERANCES, ENUMERATION_CAP, serial_map
from .errors import InputError

_TIE_TOL = 1e-12


def _labels(seq, name: str) -> tuple[str, ...]:
    labels = tuple(str(s) for s in seq)
    if not labels:
        raise InputError(f"alphabet {name} must be non-empty")
    if len(set(labels)) != len(labels):
        raise InputError(f"alphabet {name} has repeated labels")
    return labels


@dataclass(frozen=True, eq=False)
class Game:
    """A game ``(q, H)`` over ordered alphabets A, B (inputs) and X, Y (outputs).

    ``q`` has shape ``(|A|, |B|)`` and ``H`` has shape ``(|A|, |B|, |X|, |Y|)``.
    """

    A: tuple[str, ...]
    B: tuple[str, ...]
    X: tuple[str, ...]
    Y: tuple[str, ...]
    q: np.ndarray
    H: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        for key in "ABXY":
            object.__setattr__(self, key, _labels(getattr(self, key), key))
        q = np.array(self.q, dtype=float)
        H = np.array(self.H, dtype=float)
        if q.shape != (len(self.A), len(self.B)):
            raise InputError(f"q has shape {q.shape}, expected {(len(self.A), len(self.B))}")
        if H.shape != self.shape:
            raise InputError(f"H has shape {H.shape}, expected {self.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(H))):
            raise InputError("q and H must be finite")
        if np.any(q < 0) or np.any(q > 1):
            raise InputError("q entries must lie in [0, 1]")
        if abs(q.sum() - 1.0) > DEFAULT_TOLERANCES.q_sum:
            raise InputError(f"q must sum to 1 (sums to {q.sum():.15g})")
        if np.any(H < 0) or np.any(H > 1):
            bad = tuple(int(i) for i in np.argwhere((H < 0) | (H > 1))[0])
            raise InputError(f"H entries must lie in [0, 1]; H{list(bad)} = {H[bad]}")
        q.setflags(write=False)
        H.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "H", H)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (len(self.A), len(self.B), len(self.X), len(self.Y))

    @property
    def complete_support(self) -> bool:
        return bool(self.q.min() > 0)

    def require_complete_support(self) -> None:
        if not self.complete_support:
            a, b = (int(i) for i in np.argwhere(self.q <= 0)[0])
            raise InputError(f"complete support required: q({self.A[a]},{self.B[b]}) = 0")


@dataclass(frozen=True, eq=False)
class Correlation:
    """Conditional distribution ``p[a, b, x, y]`` with normalization and no-signaling."""

    A: tuple[str, ...]
    B: tuple[str, ...]
    X: tuple[str, ...]
    Y: tuple[str, ...]
    p: np.ndarray
    tol: float = field(default=DEFAULT_TOLERANCES.correlation, compare=False)

    def __post_init__(self):
        for key in "ABXY":
            object.__setattr__(self, key, _labels(getattr(self, key), key))
        p = np.array(self.p, dtype=float)
        shape = (len(self.A), len(self.B), len(self.X), len(self.Y))
        if p.shape != shape:
            raise InputError(f"p has shape {p.shape}, expected {shape}")
        tol = self.tol
        if p.min() < -tol:
            raise InputError(f"correlation has negative entry {p.min():.3e}")
        norm = p.sum(axis=(2, 3))
        if np.abs(norm - 1).max() > tol:
            a, b = np.unravel_index(np.abs(norm - 1).argmax(), norm.shape)
            raise InputError(f"correlation not normalized at (a,b)=({self.A[a]},{self.B[b]}): sum {norm[a, b]:.12g}")
        res = no_signaling_residual(p)
        if res > tol:
            raise InputError(f"correlation violates no-signaling (residual {res:.3e})")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.p.shape

    def alice_marginal(self) -> np.ndarray:
        """``p_a^x`` (taken at the first b)."""
        return self.p[:, 0].sum(axis=2)

    def bob_marginal(self) -> np.ndarray:
        """``p_b^y`` (taken at the first a)."""
        return self.p[0].sum(axis=1)


def no_signaling_residual(p: np.ndarray) -> float:
    pa = p.sum(axis=3)  # (a, b, x): must not depend on b
    pb = p.sum(axis=2)  # (a, b, y): must not depend on a
    r1 = np.abs(pa - pa[:, :1]).max()
    r2 = np.abs(pb - pb[:1]).max()
    return float(max(r1, r2))


@dataclass(frozen=True)
class DeterministicStrategy:
    """Output tables as indices: Alice answers ``f[a]``, Bob answers ``g[b]``."""

    f: tuple[int, ...]
    g: tuple[int, ...]

    def correlation_table(self, shape) -> np.ndarray:
        nA, nB, nX, nY = shape
        if len(self.f) != nA or len(self.g) != nB:
            raise InputError("deterministic strategy tables do not match the alphabets")
        if any(not 0 <= x < nX for x in self.f) or any(not 0 <= y < nY for y in self.g):
            raise InputError("deterministic strategy outputs out of range")
        p = np.zeros(shape)
        for a, x in enumerate(self.f):
            for b, y in enumerate(self.g):
                p[a, b, x, y] = 1.0
        return p


def correlation_like(game: Game, p: np.ndarray) -> Correlation:
    return Correlation(game.A, game.B, game.X, game.Y, p)


def _check_match(game: Game, corr: Correlation) -> None:
    for key in "ABXY":
        if getattr(game, key) != getattr(corr, key):
            raise InputError(f"alphabet {key} of game and correlation differ")


def score(game: Game, corr: Correlation) -> float:
    """Expected score ``sum q(a,b) H(a,b,x,y) p[a,b,x,y]``."""
    _check_match(game, corr)
    return score_table(game, corr.p)


def score_table(game: Game, p: np.ndarray) -> float:
    if p.shape != game.shape:
        raise InputError(f"correlation shape {p.shape} does not match game {game.shape}")
    return float(np.einsum("ab,abxy,abxy->", game.q, game.H, p))


@dataclass(frozen=True)
class ClassicalValue:
    value: float
    witness: DeterministicStrategy
    count: int


def _alice_tables(start: int, stop: int, nA: int, nX: int) -> np.ndarray:
    """Mixed-radix digits of table indices in ``[start, stop)``; ``f[0]`` most significant."""
    idx = np.arange(start, stop, dtype=np.int64)
    out = np.empty((idx.size, nA), dtype=np.int64)
    for a in range(nA - 1, -1, -1):
        out[:, a] = idx % nX
        idx //= nX
    return out


def _best_in_shard(weights: np.ndarray, start: int, stop: int, chunk: int = 1 << 14):
    nA, nB, nX, nY = weights.shape
    best_val, best_idx = -np.inf, -1
    rows = np.arange(nA)[None, :]
    for lo in range(start, stop, chunk):
        hi = min(stop, lo + chunk)
        F = _alice_tables(lo, hi, nA, nX)
        # per table f: T[f, b, y] = sum_a q H(a, b, f(a), y); Bob then answers each b separately
        T = weights[rows, :, F, :].sum(axis=1)
        vals = T.max(axis=2).sum(axis=1)
        cmax = vals.max()
        if cmax > best_val + _TIE_TOL:
            best_idx = lo + int(np.argmax(vals >= cmax - _TIE_TOL))
        best_val = max(best_val, cmax)
    return float(best_val), best_idx


def classical_value(game: Game, cap: int = ENUMERATION_CAP, pmap=serial_map,
                    shards: int = 1) -> ClassicalValue:
    """Exact classical value by enumeration of deterministic strategies.

    Alice's tables are enumerated in mixed-radix order; for each of them the
    best response of Bob decouples across his inputs and is taken exactly.
    Ties are broken towards the lexicographically smallest ``(f, g)``.
    """
    nA, nB, nX, nY = game.shape
    nf = nX**nA
    count = nf * nY**nB
    if count > cap:
        raise InputError(f"enumeration cap exceeded: {count} deterministic strategies > cap {cap}")
    weights = game.q[:, :, None, None] * game.H
    shards = max(1, min(int(shards), nf))
    bounds = np.linspace(0, nf, shards + 1).astype(np.int64)
    results = pmap(lambda k: _best_in_shard(weights, int(bounds[k]), int(bounds[k + 1])), range(shards))
    top = max(v for v, _ in results)
    # first shard (index order, not arrival order) reaching the maximum
    _, f_idx = next(r for r in results if r[0] >= top - _TIE_TOL)
    f = _alice_tables(f_idx, f_idx + 1, nA, nX)[0]
    T = weights[np.arange(nA), :, f, :].sum(axis=0)
    g = tuple(int(np.argmax(T[b] >= T[b].max() - _TIE_TOL)) for b in range(nB))
    witness = DeterministicStrategy(tuple(int(x) for x in f), g)
    return ClassicalValue(value=top, witness=witness, count=count)


def c_g_constant(game: Game) -> float:
    """``(3/2) sqrt(sum_ab q(b) / q(a|b))`` for a complete-support game."""
    game.require_complete_support()
    qb = game.q.sum(axis=0)
    cond = game.q / qb[None, :]
    return 1.5 * math.sqrt(float((qb[None, :] / cond).sum()))


RATE_VARIANTS = ("theorem", "display")


def rate_curve(game: Game, w: float, variant: str = "theorem", omega_c: float | None = None,
               c_g: float | None = None) -> float:
    """Upper bound on Bob's guessing probability at score ``w``.

    ``variant='theorem'`` divides the squared excess by ``C_G**2`` (what the
    robustness inequality implies); ``variant='display'`` divides by ``C_G``.
    """
    if variant not in RATE_VARIANTS:
        raise InputError(f"unknown rate-curve variant {variant!r}")
    if not 0.0 <= w <= 1.0:
        raise InputError(f"score w = {w} outside [0, 1]")
    game.require_complete_support()
    c = c_g_constant(game) if c_g is None else c_g
    wc = classical_value(game).value if omega_c is None else omega_c
    if w <= wc:
        return 1.0
    excess = w - wc
    val = 1.0 - (excess / c) ** 2 if variant == "theorem" else 1.0 - excess**2 / c
    return float(min(1.0, max(0.0, val)))


# --- built-in games and fixtures --------------------------------------------

MAGIC_SQUARE_BITS = tuple("".join(bits) for bits in itertools.product("01", repeat=3))


def _chsh() -> Game:
    bits = ("0", "1")
    H = np.zeros((2, 2, 2, 2))
    for a, b, x, y in itertools.product(range(2), repeat=4):
        H[a, b, x, y] = float((x ^ y) == (a & b))
    return Game(bits, bits, bits, bits, np.full((2, 2), 0.25), H, name="chsh")


def magic_square_win(a: int, b: int, x: str, y: str) -> bool:
    """Win predicate with rows/columns ``a, b`` counted from 1 and 3-bit answers."""
    xs = [int(c) for c in x]
    ys = [int(c) for c in y]
    return sum(xs) % 2 == 0 and sum(ys) % 2 == 1 and xs[b - 1] == ys[a - 1]


def _magic_square() -> Game:
    idx = ("1", "2", "3")
    H = np.zeros((3, 3, 8, 8))
    for a, b in itertools.product(range(3), repeat=2):
        for i, x in enumerate(MAGIC_SQUARE_BITS):
            for j, y in enumerate(MAGIC_SQUARE_BITS):
                H[a, b, i, j] = float(magic_square_win(a + 1, b + 1, x, y))
    return Game(idx, idx, MAGIC_SQUARE_BITS, MAGIC_SQUARE_BITS, np.full((3, 3), 1 / 9), H, name="magic_square")


BUILTIN_GAMES = {"chsh": _chsh, "magic_square": _magic_square}


def builtin_game(name: str) -> Game:
    try:
        return BUILTIN_GAMES[name]()
    except KeyError:
        raise InputError(f"unknown game {name!r}; known: {', '.join(BUILTIN_GAMES)}") from None


def pr_box() -> Correlation:
    """The PR box: uniform over outputs with ``x xor y = a and b``."""
    g = _chsh()
    return correlation_like(g, g.H / 2.0)


def deterministic_correlation(game: Game, strat: DeterministicStrategy) -> Correlation:
    return correlation_like(game, strat.correlation_table(game.shape))


def all_deterministic(shape: Sequence[int]):
    nA, nB, nX, nY = shape
    for f in itertools.product(range(nX), repeat=nA):
        for g in itertools.product(range(nY), repeat=nB):
            yield DeterministicStrategy(f, g)


def random_classical_correlation(game: Game, rng: np.random.Generator, components: int = 4) -> Correlation:
    """Random mixture of deterministic strategies."""
    nA, nB, nX, nY = game.shape
    w = rng.dirichlet(np.ones(components))
    p = np.zeros(game.shape)
    for wk in w:
        strat = DeterministicStrategy(tuple(int(v) for v in rng.integers(nX, size=nA)),
                                      tuple(int(v) for v in rng.integers(nY, size=nB)))
        p += wk * strat.correlation_table(game.shape)
    return correlation_like(game, p)
