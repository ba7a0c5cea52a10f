"""Minimum-error discrimination of subnormalized ensembles and guessing statistics.

``Dist{rho_i}`` is the largest ``sum_i Tr(T_i rho_i)`` over POVMs ``{T_i}``.
Every solver returns a primal witness together with a dual certificate
``Y >= rho_i``; ``Tr(Y) - value`` bounds the distance to the optimum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import operators as ops
from .config import DEFAULT_TOLERANCES, DIST_MAX_ITERS, Tolerances, serial_map
from .errors import InputError
from .games import Game, c_g_constant, classical_value
from .strategies import Strategy, second_player_states, strategy_score


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DistResult:
    value: float
    povm: np.ndarray
    dual_certificate: np.ndarray
    gap: float
    iterations: int = 0
    converged: bool = True


def _check_ensemble(states, tol: Tolerances) -> np.ndarray:
    st = np.asarray(states, dtype=complex)
    if st.ndim != 3 or st.shape[1] != st.shape[2]:
        raise InputError("ensemble must be a list of square matrices of a common size")
    for k, s in enumerate(st):
        ops.check_hermitian(s, tol.herm, f"state[{k}]")
        lam = ops.min_eigenvalue(s)
        if lam < -tol.psd:
            raise InputError(f"state[{k}] is not positive semidefinite (smallest eigenvalue {lam:.3e})")
    total = float(np.real(np.einsum("kii->", st)))
    if total > 1 + tol.trace:
        raise InputError(f"ensemble total trace {total:.12g} exceeds 1")
    return 0.5 * (st + ops.dagger(st))


def primal_value(states: np.ndarray, povm: np.ndarray) -> float:
    return float(np.real(np.einsum("kij,kji->", povm, states)))


def dual_residual(states: np.ndarray, Y: np.ndarray) -> float:
    """Smallest eigenvalue of ``Y - rho_i`` over the ensemble (>= 0 means feasible)."""
    return min(ops.min_eigenvalue(Y - s) for s in states)


def dist_two(states, tol: Tolerances = DEFAULT_TOLERANCES) -> DistResult:
    """Closed form for two states: ``(Tr r1 + Tr r2 + ||r1 - r2||_1) / 2``."""
    st = _check_ensemble(states, tol)
    if len(st) != 2:
        raise InputError(f"dist_two needs exactly 2 states, got {len(st)}")
    r1, r2 = st
    w, v = ops.eigh(r1 - r2)
    pos = v[:, w >= 0]
    P = pos @ ops.dagger(pos)
    d = r1.shape[0]
    value = 0.5 * float(np.real(np.trace(r1 + r2)) + np.abs(w).sum())
    Y = r2 + (v * np.clip(w, 0, None)) @ ops.dagger(v)
    gap = float(np.real(np.trace(Y))) - value
    return DistResult(value, np.array([P, np.eye(d) - P]), Y, gap)


def pretty_good_measurement(states) -> np.ndarray:
    st = np.asarray(states, dtype=complex)
    d = st.shape[1]
    w, v = ops.eigh(st.sum(axis=0))
    keep = w > 1e-14 * max(w[-1], 0.0) if w[-1] > 0 else np.zeros_like(w, dtype=bool)
    inv_root = (v[:, keep] / np.sqrt(w[keep])) @ ops.dagger(v[:, keep])
    povm = np.array([inv_root @ s @ inv_root for s in st])
    povm[0] += np.eye(d) - v[:, keep] @ ops.dagger(v[:, keep])
    return 0.5 * (povm + ops.dagger(povm))


def _certificate(states: np.ndarray, povm: np.ndarray) -> tuple[np.ndarray, float]:
    """Symmetrized Lagrange operator, shifted by a multiple of I until dual feasible."""
    lag = np.einsum("kij,kjl->il", states, povm)
    Y = 0.5 * (lag + ops.dagger(lag))
    shift = max(0.0, -dual_residual(states, Y))
    return Y + shift * np.eye(Y.shape[0]), shift


def dist_iterative(states, max_iters: int = DIST_MAX_ITERS, tol: float | None = None,
                   tolerances: Tolerances = DEFAULT_TOLERANCES) -> DistResult:
    """Fixed-point iteration for minimum-error discrimination.

    Each step sets ``T_i <- L^+ rho_i T_i rho_i L^+`` with
    ``L = (sum_i rho_i T_i rho_i)^{1/2}``, which keeps ``{T_i}`` a POVM on the
    support of ``L`` (the complement is added to the first element).  The
    best primal iterate and the best dual certificate are tracked
    separately, so ``gap`` is an honest bound whatever happens.
    """
    tol = tolerances.dist_gap if tol is None else tol
    st = _check_ensemble(states, tolerances)
    n, d, _ = st.shape
    if n < 2:
        raise InputError("dist_iterative needs at least 2 states")
    total = float(np.real(np.einsum("kii->", st)))
    eye = np.eye(d)
    if total <= 0:
        povm = np.zeros_like(st)
        povm[0] = eye
        return DistResult(0.0, povm, np.zeros((d, d), dtype=complex), 0.0, 0, True)

    best_T = pretty_good_measurement(st)
    best_val = primal_value(st, best_T)
    best_Y, _ = _certificate(st, best_T)
    # always guessing the heaviest state is feasible too
    heavy = int(np.argmax(np.real(np.einsum("kii->k", st))))
    trivial = np.zeros_like(st)
    trivial[heavy] = eye
    if primal_value(st, trivial) > best_val:
        best_val, best_T = primal_value(st, trivial), trivial
    best_dual = float(np.real(np.trace(best_Y)))
    T = np.array([eye / n for _ in range(n)], dtype=complex)
    it = 0
    for it in range(1, max_iters + 1):
        if best_dual - best_val <= tol:
            break
        M = np.einsum("kij,kjl,klm->im", st, T, st)
        w, v = ops.eigh(M)
        keep = w > 1e-14 * w[-1]
        L_pinv = (v[:, keep] / np.sqrt(w[keep])) @ ops.dagger(v[:, keep])
        T = np.einsum("ij,kjl,klm,kmn,np->kip", L_pinv, st, T, st, L_pinv)
        T[0] += eye - v[:, keep] @ ops.dagger(v[:, keep])
        T = 0.5 * (T + ops.dagger(T))
        val = primal_value(st, T)
        if val > best_val:
            best_val, best_T = val, T
        Y, _ = _certificate(st, T)
        dual = float(np.real(np.trace(Y)))
        if dual < best_dual:
            best_dual, best_Y = dual, Y
    gap = best_dual - best_val
    converged = gap <= tol
    if not converged:
        warnings.warn(f"dist_iterative stopped after {it} iterations with gap {gap:.3e}", ConvergenceWarning)
    return DistResult(min(best_val, total), best_T, best_Y, gap, it, converged)


def dist(states, tolerances: Tolerances = DEFAULT_TOLERANCES, max_iters: int = DIST_MAX_ITERS) -> DistResult:
    """Dispatch: one state is trivial, two use the closed form, more iterate."""
    st = np.asarray(states, dtype=complex)
    if len(st) == 1:
        st = _check_ensemble(st, tolerances)
        d = st.shape[1]
        return DistResult(float(np.real(np.trace(st[0]))), np.eye(d)[None].astype(complex), st[0].copy(), 0.0)
    if len(st) == 2:
        return dist_two(st, tolerances)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return dist_iterative(st, max_iters=max_iters, tolerances=tolerances)


# --- guessing statistics ---------------------------------------------------


@dataclass(frozen=True)
class CellTable:
    """Per-cell Dist values over ``(a, b, y)``; ``Dist`` is over Alice's outputs x."""

    dist: np.ndarray
    gap: np.ndarray
    converged: np.ndarray

    @property
    def dist_sums(self) -> np.ndarray:
        """``sum_y Dist{rho_ab^xy}_x`` for each ``(a, b)``."""
        return self.dist.sum(axis=2)


def cell_table(s: Strategy, pmap=serial_map, tolerances: Tolerances | None = None,
               max_iters: int = DIST_MAX_ITERS) -> CellTable:
    tolerances = s.tol if tolerances is None else tolerances
    post = second_player_states(s).post
    nA, nB, nX, nY = s.shape
    cells = [(a, b, y) for a in range(nA) for b in range(nB) for y in range(nY)]

    def solve(cell):
        a, b, y = cell
        r = dist(post[a, b, :, y], tolerances, max_iters)
        return r.value, r.gap, r.converged

    results = pmap(solve, cells)
    shape = (nA, nB, nY)
    return CellTable(
        dist=np.array([r[0] for r in results]).reshape(shape),
        gap=np.array([r[1] for r in results]).reshape(shape),
        converged=np.array([r[2] for r in results], dtype=bool).reshape(shape),
    )


def uniform_delta(table: CellTable) -> float:
    nA, nB, _ = table.dist.shape
    return float(1.0 - table.dist.sum() / (nA * nB))


@dataclass(frozen=True)
class GuessingReport:
    cells: CellTable
    dist_sums: np.ndarray
    epsilon: float
    delta: float
    delta_ab: np.ndarray
    c_g: float
    bound: float
    score: float
    omega_c: float
    score_excess: float

    @property
    def guessing_probability(self) -> float:
        return 1.0 - self.epsilon

    @property
    def all_converged(self) -> bool:
        return bool(self.cells.converged.all())


def guessing_report(game: Game, s: Strategy, pmap=serial_map, omega_c: float | None = None,
                    tolerances: Tolerances | None = None) -> GuessingReport:
    """Bob's post-game guessing statistics and the robustness bound ``C_G sqrt(eps)``.

    Non-converged cells contribute their primal value, a lower bound on
    Dist, so the reported epsilon can only err upwards.
    """
    game.require_complete_support()
    s.check_game(game)
    table = cell_table(s, pmap, tolerances)
    sums = table.dist_sums
    eps = float(1.0 - (game.q * sums).sum())
    c_g = c_g_constant(game)
    wc = classical_value(game).value if omega_c is None else omega_c
    sc = strategy_score(game, s)
    return GuessingReport(
        cells=table,
        dist_sums=sums,
        epsilon=eps,
        delta=uniform_delta(table),
        delta_ab=1.0 - sums,
        c_g=c_g,
        bound=c_g * math.sqrt(max(eps, 0.0)),
        score=sc,
        omega_c=wc,
        score_excess=sc - wc,
    )


def ensemble_from(states: Sequence[np.ndarray]) -> np.ndarray:
    return np.asarray(states, dtype=complex)
