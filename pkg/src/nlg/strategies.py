"""Quantum strategies, their correlations and second-player states."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import operators as ops
from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import InputError
from .games import MAGIC_SQUARE_BITS, Correlation, DeterministicStrategy, Game, score_table


def _index_labels(n: int) -> tuple[str, ...]:
    return tuple(str(i) for i in range(n))


@dataclass(frozen=True, eq=False)
class Strategy:
    """``(D, E, R, S, gamma)`` with ``R[a, x]`` on D, ``S[b, y]`` on E and gamma on D (x) E.

    ``R`` has shape ``(|A|, |X|, dimD, dimD)`` and ``S`` has shape
    ``(|B|, |Y|, dimE, dimE)``.  Alphabet labels are optional and default
    to ``"0", "1", ...``.
    """

    R: np.ndarray
    S: np.ndarray
    gamma: np.ndarray
    labels: tuple[tuple[str, ...], ...] | None = None
    tol: Tolerances = field(default=DEFAULT_TOLERANCES, compare=False, repr=False)

    def __post_init__(self):
        R = np.array(self.R, dtype=complex)
        S = np.array(self.S, dtype=complex)
        gamma = np.array(self.gamma, dtype=complex)
        if R.ndim != 4 or R.shape[2] != R.shape[3]:
            raise InputError(f"R must have shape (|A|, |X|, d, d), got {R.shape}")
        if S.ndim != 4 or S.shape[2] != S.shape[3]:
            raise InputError(f"S must have shape (|B|, |Y|, e, e), got {S.shape}")
        d, e = R.shape[2], S.shape[2]
        if gamma.shape != (d * e, d * e):
            raise InputError(f"gamma has shape {gamma.shape}, expected {(d * e, d * e)} for dimD={d}, dimE={e}")
        for a in range(R.shape[0]):
            ops.check_povm(R[a], name=f"R[a={a}]", tol=self.tol)
        for b in range(S.shape[0]):
            ops.check_povm(S[b], name=f"S[b={b}]", tol=self.tol)
        ops.check_density(gamma, name="gamma", tol=self.tol)
        labels = self.labels
        if labels is None:
            labels = tuple(_index_labels(n) for n in (R.shape[0], S.shape[0], R.shape[1], S.shape[1]))
        labels = tuple(tuple(str(x) for x in lab) for lab in labels)
        if tuple(len(lab) for lab in labels) != (R.shape[0], S.shape[0], R.shape[1], S.shape[1]):
            raise InputError("strategy labels do not match operator families")
        for arr in (R, S, gamma):
            arr.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "labels", labels)

    @property
    def dimD(self) -> int:
        return self.R.shape[2]

    @property
    def dimE(self) -> int:
        return self.S.shape[2]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.R.shape[0], self.S.shape[0], self.R.shape[1], self.S.shape[1])

    def gamma_tensor(self) -> np.ndarray:
        """gamma reshaped to indices ``[iD, iE, jD, jE]``."""
        d, e = self.dimD, self.dimE
        return self.gamma.reshape(d, e, d, e)

    def replace(self, **changes) -> "Strategy":
        kw = dict(R=self.R, S=self.S, gamma=self.gamma, labels=self.labels, tol=self.tol)
        kw.update(changes)
        return Strategy(**kw)

    def check_game(self, game: Game) -> None:
        if self.shape != game.shape:
            raise InputError(f"strategy alphabet sizes {self.shape} do not match game {game.shape}")


@dataclass(frozen=True)
class SecondPlayerStates:
    post: np.ndarray  # [a, b, x, y, e, e]
    pre: np.ndarray   # [a, x, e, e]
    rho: np.ndarray   # [e, e]


def _sqrt_family(fam: np.ndarray, tol: Tolerances) -> np.ndarray:
    return np.array([[ops.psd_sqrt(m, tol.psd) for m in row] for row in fam])


def second_player_states(s: Strategy) -> SecondPlayerStates:
    # Tr_D[(sqrt R (x) I) gamma (sqrt R (x) I)] equals Tr_D[(R (x) I) gamma] by cyclicity on D
    G = s.gamma_tensor()
    pre = np.einsum("axji,ikjl->axkl", s.R, G)
    rootS = _sqrt_family(s.S, s.tol)
    post = np.einsum("byij,axjk,bykl->abxyil", rootS, pre, rootS)
    rho = ops.ptrace(s.gamma, [s.dimD, s.dimE], [1])
    return SecondPlayerStates(post=post, pre=pre, rho=rho)


def correlation_table(s: Strategy) -> np.ndarray:
    """``p[a, b, x, y] = Tr[gamma (R_a^x (x) S_b^y)]``."""
    p = np.einsum("ikjl,axji,bylk->abxy", s.gamma_tensor(), s.R, s.S)
    return np.real(p)


def achieved_correlation(s: Strategy) -> Correlation:
    A, B, X, Y = s.labels
    return Correlation(A, B, X, Y, correlation_table(s), tol=s.tol.correlation)


def strategy_score(game: Game, s: Strategy) -> float:
    s.check_game(game)
    return score_table(game, achieved_correlation(s).p)


def noisy_interpolation(s: Strategy, lam: float) -> Strategy:
    """Replace gamma by ``(1 - lam) gamma + lam I/dim``."""
    if not 0.0 <= lam <= 1.0:
        raise InputError("lambda must lie in [0, 1]")
    n = s.gamma.shape[0]
    return s.replace(gamma=(1 - lam) * s.gamma + lam * np.eye(n) / n)


# --- built-in strategies ----------------------------------------------------

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def max_entangled(d: int) -> np.ndarray:
    """Density matrix of ``sum_i |ii> / sqrt(d)``."""
    v = np.eye(d).reshape(d * d) / np.sqrt(d)
    return np.outer(v, v.conj()).astype(complex)


def _real_basis_measurement(theta: float) -> np.ndarray:
    u0 = np.array([np.cos(theta), np.sin(theta)])
    u1 = np.array([-np.sin(theta), np.cos(theta)])
    return np.array([np.outer(u0, u0), np.outer(u1, u1)], dtype=complex)


def chsh_optimal() -> Strategy:
    R = np.array([_real_basis_measurement(t) for t in (0.0, np.pi / 4)])
    S = np.array([_real_basis_measurement(t) for t in (np.pi / 8, -np.pi / 8)])
    bits = ("0", "1")
    return Strategy(R, S, max_entangled(2), labels=(bits, bits, bits, bits))


# rows multiply to +I, columns to -I
MAGIC_SQUARE_GRID = (
    (("X", "I", 1), ("I", "X", 1), ("X", "X", 1)),
    (("I", "Z", 1), ("Z", "I", 1), ("Z", "Z", 1)),
    (("X", "Z", -1), ("Z", "X", -1), ("Y", "Y", 1)),
)


def magic_square_observable(r: int, c: int) -> np.ndarray:
    p, q, sign = MAGIC_SQUARE_GRID[r][c]
    return sign * np.kron(PAULI[p], PAULI[q])


def _joint_projectors(observables: Sequence[np.ndarray]) -> np.ndarray:
    """Projectors onto joint eigenspaces labelled by 3-bit strings (bit k <-> sign of observable k)."""
    out = []
    for bits in MAGIC_SQUARE_BITS:
        proj = np.eye(4, dtype=complex)
        for k, bit in enumerate(bits):
            proj = proj @ (np.eye(4) + (-1) ** int(bit) * observables[k]) / 2
        out.append(proj)
    return np.array(out)


def magic_square_optimal() -> Strategy:
    """Two maximally entangled qubit pairs with the Mermin-Peres observable grid.

    Alice measures row ``a``; Bob measures the transposed operators of
    column ``b``, so that on ``sum_i |ii>/2`` the shared entry agrees.
    """
    R = np.array([_joint_projectors([magic_square_observable(r, c) for c in range(3)]) for r in range(3)])
    S = np.array([_joint_projectors([magic_square_observable(r, c).T for r in range(3)]) for c in range(3)])
    idx = ("1", "2", "3")
    return Strategy(R, S, max_entangled(4), labels=(idx, idx, MAGIC_SQUARE_BITS, MAGIC_SQUARE_BITS))


def _point_povm(n: int, k: int, dim: int = 1) -> np.ndarray:
    out = np.zeros((n, dim, dim), dtype=complex)
    out[k] = np.eye(dim)
    return out


def deterministic(strat: DeterministicStrategy, shape, labels=None) -> Strategy:
    nA, nB, nX, nY = shape
    DeterministicStrategy.correlation_table(strat, shape)  # validates ranges
    R = np.array([_point_povm(nX, x) for x in strat.f])
    S = np.array([_point_povm(nY, y) for y in strat.g])
    return Strategy(R, S, np.eye(1, dtype=complex), labels=labels)


def classical_mixture(components: Sequence[tuple[float, DeterministicStrategy]], shape, labels=None,
                      label_holder: str = "both") -> Strategy:
    """Direct-sum realization of a convex combination of deterministic strategies.

    With ``label_holder='both'`` the component label is stored on both sides
    (``gamma = sum_k w_k |k><k| (x) |k><k|``).  With ``'alice'`` only Alice
    holds it, which requires every component to share Bob's table; Alice's
    choice is then local randomness that Bob cannot resolve.
    """
    nA, nB, nX, nY = shape
    w = np.array([c[0] for c in components], dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise InputError("mixture weights must be a probability vector")
    k = len(components)
    R = np.zeros((nA, nX, k, k), dtype=complex)
    for i, (_, st) in enumerate(components):
        st.correlation_table(shape)
        for a, x in enumerate(st.f):
            R[a, x, i, i] = 1.0
    if label_holder == "both":
        S = np.zeros((nB, nY, k, k), dtype=complex)
        for i, (_, st) in enumerate(components):
            for b, y in enumerate(st.g):
                S[b, y, i, i] = 1.0
        gamma = np.zeros((k * k, k * k), dtype=complex)
        for i in range(k):
            v = np.zeros(k * k)
            v[i * k + i] = 1.0
            gamma += w[i] * np.outer(v, v)
    elif label_holder == "alice":
        gs = {st.g for _, st in components}
        if len(gs) != 1:
            raise InputError("label_holder='alice' requires all components to share Bob's table")
        g = gs.pop()
        S = np.array([_point_povm(nY, y) for y in g])
        gamma = np.diag(w).astype(complex)
    else:
        raise InputError("label_holder must be 'both' or 'alice'")
    return Strategy(R, S, gamma, labels=labels)


def builtin_strategy(name: str, **kwargs) -> Strategy:
    if name == "chsh_optimal":
        return chsh_optimal()
    if name == "magic_square_optimal":
        return magic_square_optimal()
    if name == "deterministic":
        return deterministic(**kwargs)
    if name == "classical_mixture":
        return classical_mixture(**kwargs)
    raise InputError(f"unknown strategy {name!r}")


# --- random fixtures ---------------------------------------------------------


def random_strategy(rng: np.random.Generator, shape, dimD: int, dimE: int, rank: int | None = None) -> Strategy:
    nA, nB, nX, nY = shape
    R = np.array([ops.random_povm(rng, dimD, nX) for _ in range(nA)])
    S = np.array([ops.random_povm(rng, dimE, nY) for _ in range(nB)])
    gamma = ops.random_density(rng, dimD * dimE, rank)
    return Strategy(R, S, gamma)


def classical_fixture(rng: np.random.Generator, shape, hidden: int = 3, ancilla: int = 1,
                      conjugate: bool = True, labels=None) -> Strategy:
    """A perfectly guessable strategy built from a shared hidden variable.

    The hidden value ``k`` (weights from a Dirichlet draw) sits on both
    sides.  Alice answers deterministically from ``k``; Bob additionally
    holds an ancilla state ``sigma_k`` of dimension ``ancilla`` on which his
    POVMs act in a ``k``-dependent way.  With ``conjugate=True`` both local
    spaces are rotated by random unitaries.
    """
    nA, nB, nX, nY = shape
    w = rng.dirichlet(np.ones(hidden))
    f = rng.integers(nX, size=(hidden, nA))
    D, E = hidden, hidden * ancilla
    R = np.zeros((nA, nX, D, D), dtype=complex)
    for k in range(hidden):
        for a in range(nA):
            R[a, f[k, a], k, k] = 1.0
    S = np.zeros((nB, nY, E, E), dtype=complex)
    for b in range(nB):
        for k in range(hidden):
            anc = ops.random_povm(rng, ancilla, nY) if ancilla > 1 else _point_povm(nY, int(rng.integers(nY)))
            ek = np.zeros((hidden, hidden))
            ek[k, k] = 1.0
            for y in range(nY):
                S[b, y] += np.kron(ek, anc[y])
    gamma = np.zeros((D * E, D * E), dtype=complex)
    for k in range(hidden):
        ek = np.zeros((hidden, hidden))
        ek[k, k] = 1.0
        sigma = ops.random_density(rng, ancilla)
        gamma += w[k] * np.kron(ek, np.kron(ek, sigma))
    if conjugate:
        U = ops.random_unitary(rng, D)
        V = ops.random_unitary(rng, E)
        R = np.einsum("ij,axjk,lk->axil", U, R, U.conj())
        S = np.einsum("ij,byjk,lk->byil", V, S, V.conj())
        W = np.kron(U, V)
        gamma = W @ gamma @ W.conj().T
    R = 0.5 * (R + ops.dagger(R))
    S = 0.5 * (S + ops.dagger(S))
    return Strategy(R, S, 0.5 * (gamma + gamma.conj().T), labels=labels)
