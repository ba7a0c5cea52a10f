"""Copy-out channels and numerical checks of the approximate-guessing bounds.

Alice's measurement ``a`` is turned into a nondestructive one that writes
its outcome into a classical register ``V_a``; applying all of them in
sequence yields a state that is classical on Alice's side, hence a
classical correlation ``p_bar``.  The disturbance this causes is what the
robustness inequalities control.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .config import COPY_OUT_DIM_CAP, DEFAULT_TOLERANCES, Tolerances, serial_map
from .discrimination import CellTable, GuessingReport, cell_table, dist, guessing_report, uniform_delta
from .errors import InputError
from .games import Correlation, Game
from .strategies import Strategy, correlation_table


@dataclass(frozen=True)
class CopyOutState:
    """A state on ``V_1 (x) ... (x) V_k (x) D (x) E`` that is classical on every ``V``.

    Stored block-wise: ``blocks[x_1, ..., x_k]`` is the (subnormalized)
    operator on ``D (x) E`` paired with ``|x_1...x_k><x_1...x_k|``.
    ``registers`` names the Alice inputs in the order they were copied out.
    """

    blocks: np.ndarray
    registers: tuple[int, ...]
    dimD: int
    dimE: int

    @property
    def n_outcomes(self) -> int:
        return self.blocks.shape[0] if self.registers else 1

    def trace(self) -> float:
        return float(np.real(np.trace(self.blocks, axis1=-2, axis2=-1).sum()))

    def register_marginal(self, a: int) -> np.ndarray:
        """Distribution of the register holding the outcome for input ``a``."""
        pos = self.registers.index(a)
        probs = np.real(np.einsum("...ii->...", self.blocks))
        other = tuple(i for i in range(len(self.registers)) if i != pos)
        return probs.sum(axis=other) if other else probs

    def de_marginal(self) -> np.ndarray:
        k = len(self.registers)
        return self.blocks.sum(axis=tuple(range(k))) if k else self.blocks

    def bob_blocks(self) -> np.ndarray:
        """``Tr_D`` of every block: Bob's operators indexed by the register values."""
        d, e = self.dimD, self.dimE
        t = self.blocks.reshape(self.blocks.shape[:-2] + (d, e, d, e))
        return np.einsum("...iaib->...ab", t)

    def to_dense(self) -> np.ndarray:
        """Full density matrix on ``V_1 ... V_k D E`` (small instances only)."""
        k = len(self.registers)
        n = self.n_outcomes
        de = self.dimD * self.dimE
        out = np.zeros((n**k * de, n**k * de), dtype=complex)
        for idx in itertools.product(range(n), repeat=k):
            flat = int(np.ravel_multi_index(idx, (n,) * k)) if k else 0
            out[flat * de:(flat + 1) * de, flat * de:(flat + 1) * de] = self.blocks[idx]
        return out


def dephasing_residual(state: CopyOutState, register_pos: int) -> float:
    """Frobenius change when the given register is dephased in the standard basis."""
    k = len(state.registers)
    n = state.n_outcomes
    de = state.dimD * state.dimE
    dense = state.to_dense()
    t = dense.reshape((n,) * k + (de,) + (n,) * k + (de,))
    mask = np.zeros((n, n))
    np.fill_diagonal(mask, 1.0)
    shape = [1] * (2 * k + 2)
    shape[register_pos] = n
    shape[k + 1 + register_pos] = n
    dephased = t * mask.reshape(shape)
    return float(np.linalg.norm(dephased - t))


def dilate_alice(s: Strategy) -> Strategy:
    """Naimark-dilate Alice's family onto a common space when any POVM is not projective."""
    tol = s.tol
    if all(ops.is_projective(s.R[a], tol.projective) for a in range(s.shape[0])):
        return s
    nX, d = s.shape[2], s.dimD
    iso = ops.ancilla_embedding(d, nX)
    R = np.array([ops.dilated_projectors(s.R[a], tol) for a in range(s.shape[0])])
    J = np.kron(iso, np.eye(s.dimE))
    return s.replace(R=R, gamma=J @ s.gamma @ ops.dagger(J))


def initial_state(s: Strategy) -> CopyOutState:
    return CopyOutState(blocks=s.gamma.copy(), registers=(), dimD=s.dimD, dimE=s.dimE)


def copy_out_phi(a: int, s: Strategy, state: CopyOutState | None = None) -> CopyOutState:
    """Apply ``T -> sum_x |x><x| (x) R_a^x T R_a^x`` on D, appending register ``V_a``."""
    if not ops.is_projective(s.R[a], s.tol.projective):
        raise InputError(f"Alice's measurement for input {a} is not projective; dilate first (dilate_alice)")
    state = initial_state(s) if state is None else state
    if a in state.registers:
        raise InputError(f"register V_{a} already present")
    nX = s.shape[2]
    k = len(state.registers) + 1
    if nX**k * s.dimD * s.dimE > COPY_OUT_DIM_CAP:
        raise InputError(f"copy-out state dimension {nX**k * s.dimD * s.dimE} exceeds cap {COPY_OUT_DIM_CAP}")
    K = np.array([np.kron(s.R[a, x], np.eye(s.dimE)) for x in range(nX)])
    blocks = np.einsum("xij,...jk,xkl->...xil", K, state.blocks, K)
    return CopyOutState(blocks=blocks, registers=state.registers + (a,), dimD=s.dimD, dimE=s.dimE)


@dataclass(frozen=True)
class RegisterState:
    """Dense state with named tensor factors (Kronecker order)."""

    matrix: np.ndarray
    dims: tuple[int, ...]
    names: tuple[str, ...]

    def marginal(self, keep) -> np.ndarray:
        idx = [self.names.index(k) for k in keep]
        return ops.ptrace(self.matrix, self.dims, idx)


def copy_out_psi(b: int, s: Strategy) -> RegisterState:
    """Apply ``T -> sum_y sqrt(S_b^y) T sqrt(S_b^y) (x) |y><y|`` on E; result on ``D (x) E (x) W_b``."""
    nY = s.shape[3]
    roots = [np.kron(np.eye(s.dimD), ops.psd_sqrt(s.S[b, y], s.tol.psd)) for y in range(nY)]
    basis = np.eye(nY)
    out = sum(np.kron(K @ s.gamma @ K, np.outer(basis[y], basis[y])) for y, K in enumerate(roots))
    return RegisterState(out, (s.dimD, s.dimE, nY), ("D", "E", f"W{b}"))


def classicalized_table(s: Strategy, order=None) -> np.ndarray:
    """``p_bar[a, b, x, y]`` from the fully copied-out state, Alice reading ``V_a``."""
    s = dilate_alice(s)
    nA = s.shape[0]
    order = tuple(range(nA)) if order is None else tuple(int(a) for a in order)
    if sorted(order) != list(range(nA)):
        raise InputError(f"order {order} is not a permutation of Alice's inputs")
    state = initial_state(s)
    for a in order:
        state = copy_out_phi(a, s, state)
    bob = state.bob_blocks()
    k = len(order)
    p = np.empty(s.shape)
    for a in range(nA):
        pos = order.index(a)
        other = tuple(i for i in range(k) if i != pos)
        sigma = bob.sum(axis=other) if other else bob  # [x, e, e]
        p[a] = np.real(np.einsum("byij,xji->bxy", s.S, sigma))
    return p


def classicalized_correlation(s: Strategy, order=None) -> Correlation:
    A, B, X, Y = s.labels
    return Correlation(A, B, X, Y, classicalized_table(s, order), tol=s.tol.correlation)


# --- disturbance bounds ------------------------------------------------------


@dataclass(frozen=True)
class DisturbanceReport:
    delta: float
    disturbance: float
    bound: float
    satisfied: bool
    dist_gap: float = 0.0


def disturbance_bound(delta: float) -> float:
    delta = max(delta, 0.0)
    return 2 * math.sqrt(delta) + delta


def dephase(matrix: np.ndarray, F: np.ndarray, dims, factor: int = 0) -> np.ndarray:
    """Apply ``X -> sum_i F_i X F_i`` with ``F`` acting on tensor factor ``factor``."""
    dims = list(dims)
    out = np.zeros_like(matrix)
    for f in F:
        parts = [np.eye(dd) for dd in dims]
        parts[factor] = f
        K = ops.tensor(*parts)
        out += K @ matrix @ K
    return out


def _check_projective(F, tol: Tolerances, dim: int) -> np.ndarray:
    F = ops.check_povm(F, name="F", tol=tol)
    if F.shape[1] != dim:
        raise InputError(f"measurement acts on dimension {F.shape[1]}, expected {dim}")
    res = ops.projective_residual(F)
    if res > tol.projective:
        raise InputError(f"measurement F is not projective (residual {res:.3e})")
    return F


def _induced_dist(state: np.ndarray, F: np.ndarray, dims, tol: Tolerances):
    dA = dims[0]
    rest = int(np.prod(dims[1:]))
    induced = np.array([ops.ptrace(np.kron(f, np.eye(rest)) @ state, [dA, rest], [1]) for f in F])
    return dist(0.5 * (induced + ops.dagger(induced)), tol)


def verify_disturbance(state, F, dims, tol: Tolerances = DEFAULT_TOLERANCES) -> DisturbanceReport:
    """Compare ``||sum F alpha F - alpha||_1`` with ``2 sqrt(delta) + delta`` on ``A (x) B``."""
    dA, dB = dims
    state = ops.check_density(ops.as_matrix(state), tol=tol)
    if state.shape[0] != dA * dB:
        raise InputError("state dimension does not match dims")
    F = _check_projective(F, tol, dA)
    res = _induced_dist(state, F, dims, tol)
    delta = 1.0 - res.value
    alpha = ops.ptrace(state, dims, [0])
    disturbance = ops.trace_norm(dephase(alpha, F, [dA]) - alpha)
    bound = disturbance_bound(delta)
    return DisturbanceReport(delta, disturbance, bound, disturbance <= bound + tol.psd, res.gap)


def verify_classical_info(state, F, dims, tol: Tolerances = DEFAULT_TOLERANCES) -> DisturbanceReport:
    """As :func:`verify_disturbance` on ``A (x) B (x) C`` with C classical; disturbance on ``AC``."""
    dA, dB, dC = dims
    state = ops.check_density(ops.as_matrix(state), tol=tol)
    if state.shape[0] != dA * dB * dC:
        raise InputError("state dimension does not match dims")
    F = _check_projective(F, tol, dA)
    basis = np.eye(dC)
    dephased_c = dephase(state, np.array([np.outer(c, c) for c in basis]), dims, factor=2)
    res_c = float(np.linalg.norm(dephased_c - state))
    if res_c > tol.psd:
        raise InputError(f"register C is not classical (dephasing residual {res_c:.3e})")
    res = _induced_dist(state, F, dims, tol)
    delta = 1.0 - res.value
    ac = ops.ptrace(state, dims, [0, 2])
    disturbance = ops.trace_norm(dephase(ac, F, [dA, dC]) - ac)
    bound = disturbance_bound(delta)
    return DisturbanceReport(delta, disturbance, bound, disturbance <= bound + tol.psd, res.gap)


# --- the two robustness inequalities ------------------------------------------


@dataclass(frozen=True)
class Prop13Report:
    delta: float
    lhs: float
    rhs: float
    order: tuple[int, ...]
    classicalized: np.ndarray = field(repr=False)
    cells: CellTable = field(repr=False)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def satisfied(self, tol: float = DEFAULT_TOLERANCES.inequality) -> bool:
        return self.lhs <= self.rhs + tol


def verify_prop13(s: Strategy, order=None, all_orders: bool = False, pmap=serial_map,
                  table: CellTable | None = None) -> Prop13Report:
    """Mean ``sum |p - p_bar|`` over input pairs versus ``sqrt(3 delta) |A|``.

    With ``all_orders`` every copy-out order of Alice's inputs is tried
    (``|A| <= 4``) and the smallest left-hand side is kept.
    """
    table = cell_table(s, pmap) if table is None else table
    delta = uniform_delta(table)
    nA, nB = s.shape[:2]
    p = correlation_table(s)
    if all_orders:
        if nA > 4:
            raise InputError("exhaustive order search is limited to |A| <= 4")
        orders = list(itertools.permutations(range(nA)))
    else:
        orders = [tuple(range(nA)) if order is None else tuple(order)]
    best = None
    for o in orders:
        pbar = classicalized_table(s, o)
        lhs = float(np.abs(p - pbar).sum() / (nA * nB))
        if best is None or lhs < best[0]:
            best = (lhs, o, pbar)
    lhs, o, pbar = best
    rhs = math.sqrt(3 * max(delta, 0.0)) * nA
    return Prop13Report(delta, lhs, rhs, tuple(o), pbar, table)


@dataclass(frozen=True)
class Theorem14Report:
    score: float
    omega_c: float
    epsilon: float
    c_g: float
    lhs: float
    rhs: float
    satisfied: bool
    guessing: GuessingReport = field(repr=False)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def verify_theorem14(game: Game, s: Strategy, pmap=serial_map, omega_c: float | None = None,
                     report: GuessingReport | None = None) -> Theorem14Report:
    """Check ``score - omega_c <= C_G sqrt(epsilon)``."""
    rep = guessing_report(game, s, pmap, omega_c) if report is None else report
    lhs = rep.score - rep.omega_c
    return Theorem14Report(
        score=rep.score, omega_c=rep.omega_c, epsilon=rep.epsilon, c_g=rep.c_g,
        lhs=lhs, rhs=rep.bound, satisfied=lhs <= rep.bound + s.tol.inequality, guessing=rep,
    )
