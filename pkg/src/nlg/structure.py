"""Perfect guessing and the essentially-classical normal form.

The pipeline: detect perfect guessing, restrict Bob to the support of his
reduced state, build the projections ``Q_a^x`` that Alice's outcomes
induce on Bob's side, check they commute with Bob's POVMs, split Bob's
space as ``E1 (x) E2`` with :func:`algebra_decompose`, and trace out ``E2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .classicalize import classicalized_table
from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import InputError, NumericalError, StageError
from .games import Game, classical_value, score_table
from .strategies import Strategy, correlation_table, second_player_states

# --- perfect guessing ----------------------------------------------------------


@dataclass(frozen=True)
class GuessingCheck:
    perfect: bool
    worst_overlap: float
    worst_index: tuple[int, ...] | None


def _max_overlap(groups, tol: Tolerances):
    """Worst ``Tr[P_x rho_x'] / Tr(sum rho)`` over groups of states indexed ``[..., x, e, e]``."""
    worst, where = 0.0, None
    for idx in np.ndindex(groups.shape[:-3]):
        states = groups[idx]
        total = float(np.real(np.einsum("xii->", states)))
        if total <= 0:
            continue
        supports = [ops.support_projection(st, tol.support, tol.psd, scale=total) for st in states]
        for x, P in enumerate(supports):
            for x2, st in enumerate(states):
                if x2 == x:
                    continue
                ov = float(np.real(np.trace(P @ st))) / total
                if ov > worst:
                    worst, where = ov, idx + (x, x2)
    return worst, where


def detect_perfect_guessing(s: Strategy, tol: float | None = None) -> GuessingCheck:
    """Are the post-game states ``{rho_ab^xy}_x`` pairwise orthogonal for every ``(a, b, y)``?

    ``worst_index`` is ``(a, b, y, x, x')`` for the largest relative overlap.
    """
    tol = s.tol.guessing if tol is None else tol
    post = second_player_states(s).post  # [a, b, x, y, e, e]
    groups = np.moveaxis(post, 3, 2)     # [a, b, y, x, e, e]
    worst, where = _max_overlap(groups, s.tol)
    return GuessingCheck(worst <= tol, worst, where)


def premeasurement_check(s: Strategy, tol: float | None = None) -> GuessingCheck:
    """Orthogonality of the pre-measurement states ``{rho_a^x}_x``; index is ``(a, x, x')``."""
    tol = s.tol.guessing if tol is None else tol
    worst, where = _max_overlap(second_player_states(s).pre, s.tol)
    return GuessingCheck(worst <= tol, worst, where)


# --- induced projections ----------------------------------------------------------


@dataclass(frozen=True)
class InducedProjections:
    Q: np.ndarray          # [a, x, e', e'] on the support of rho
    support: np.ndarray    # isometry e' -> e
    c_min: float           # smallest eigenvalue of rho kept on its support
    residual: float        # max ||Q rho Q - rho_a^x||_F


def restrict_to_support(s: Strategy) -> tuple[Strategy, np.ndarray, float]:
    """Strategy with Bob's space cut down to ``Supp rho`` (a congruent strategy)."""
    rho = ops.ptrace(s.gamma, [s.dimD, s.dimE], [1])
    J, w = ops.support_basis(rho, s.tol.support, s.tol.psd)
    if J.shape[1] == 0:
        raise NumericalError("Bob's reduced state vanishes")
    S = np.einsum("ji,byjk,kl->byil", J.conj(), s.S, J)
    K = np.kron(np.eye(s.dimD), J)
    gamma = ops.dagger(K) @ s.gamma @ K
    gamma = gamma / np.real(np.trace(gamma))
    return s.replace(S=0.5 * (S + ops.dagger(S)), gamma=0.5 * (gamma + ops.dagger(gamma))), J, float(w.min())


def induced_projections(s: Strategy) -> InducedProjections:
    """Projective measurements ``Q_a^x`` on ``Supp rho`` with ``Q_a^x rho Q_a^x = rho_a^x``.

    Whatever of ``Supp rho`` the supports of ``rho_a^x`` leave uncovered is
    assigned to the first outcome.
    """
    check = premeasurement_check(s)
    if not check.perfect:
        a, x, x2 = check.worst_index
        raise InputError(
            f"pre-measurement states not orthogonal at (a, x, x') = ({a}, {x}, {x2}); overlap {check.worst_overlap:.3e}"
        )
    r, J, c_min = restrict_to_support(s)
    sp = second_player_states(r)
    nA, _, nX, _ = r.shape
    e = r.dimE
    Q = np.empty((nA, nX, e, e), dtype=complex)
    resid = 0.0
    for a in range(nA):
        for x in range(nX):
            Q[a, x] = ops.support_projection(sp.pre[a, x], s.tol.support, s.tol.psd, scale=1.0)
        Q[a, 0] += np.eye(e) - Q[a].sum(axis=0)
        for x in range(nX):
            resid = max(resid, float(np.linalg.norm(Q[a, x] @ sp.rho @ Q[a, x] - sp.pre[a, x])))
    return InducedProjections(Q, J, c_min, resid)


def check_commutation(Q, S) -> tuple[float, float]:
    """``(max ||Q_a^x S_b^y Q_a^x'||_F over x != x', max ||[Q_a^x, S_b^y]||_F)``."""
    Q = np.asarray(Q, dtype=complex)
    S = np.asarray(S, dtype=complex)
    if Q.shape[-1] != S.shape[-1]:
        raise InputError("Q and S act on different dimensions")
    sandwich, comm = 0.0, 0.0
    for Qa in Q:
        for Sb in S:
            for Sy in Sb:
                for x, Qx in enumerate(Qa):
                    comm = max(comm, float(np.linalg.norm(Qx @ Sy - Sy @ Qx)))
                    for x2, Qx2 in enumerate(Qa):
                        if x2 != x:
                            sandwich = max(sandwich, float(np.linalg.norm(Qx @ Sy @ Qx2)))
    return sandwich, comm


# --- commuting families -> tensor product --------------------------------------


@dataclass(frozen=True)
class AlgebraDecomposition:
    """Embedding ``i: V -> V1 (x) V2`` with ``M_j = i^+ (Mbar_j (x) I) i`` and ``N_k = i^+ (I (x) Nbar_k) i``."""

    embedding: np.ndarray
    d1: int
    d2: int
    M_bar: np.ndarray
    N_bar: np.ndarray
    blocks: tuple[tuple[int, int], ...]
    seed: int

    def pullback_residuals(self, M, N) -> tuple[float, float]:
        i = self.embedding
        I1, I2 = np.eye(self.d1), np.eye(self.d2)
        rm = max((float(np.linalg.norm(m - ops.dagger(i) @ np.kron(mb, I2) @ i)) for m, mb in zip(M, self.M_bar)), default=0.0)
        rn = max((float(np.linalg.norm(n - ops.dagger(i) @ np.kron(I1, nb) @ i)) for n, nb in zip(N, self.N_bar)), default=0.0)
        return rm, rn


def _orthonormal_span(mats: np.ndarray, rank_tol: float) -> np.ndarray:
    """Frobenius-orthonormal basis for the span of the given matrices."""
    n = mats.shape[-1]
    flat = mats.reshape(len(mats), n * n)
    _, s, vh = np.linalg.svd(flat, full_matrices=False)
    if not s.size or s[0] == 0:
        return np.zeros((0, n, n), dtype=complex)
    r = int((s > rank_tol * s[0]).sum())
    return vh[:r].reshape(r, n, n)


def algebra_basis(gens: np.ndarray, rank_tol: float = DEFAULT_TOLERANCES.rank) -> np.ndarray:
    """Basis of the unital algebra generated by ``gens``, closed under multiplication."""
    n = gens.shape[-1]
    unit = [g / np.linalg.norm(g) for g in gens if np.linalg.norm(g) > 0]
    basis = _orthonormal_span(np.array([np.eye(n, dtype=complex)] + unit), rank_tol)
    while True:
        products = np.einsum("kij,gjl->kgil", basis, np.array(unit)).reshape(-1, n, n) if unit else basis[:0]
        grown = _orthonormal_span(np.concatenate([basis, products]), rank_tol)
        if len(grown) == len(basis):
            return basis
        basis = grown


def _null_space(mat: np.ndarray, rel_tol: float) -> np.ndarray:
    _, s, vh = np.linalg.svd(mat, full_matrices=True)
    scale = max(s[0] if s.size else 0.0, 1.0)
    rank = int((s > rel_tol * scale).sum())
    return vh[rank:].conj().T


def _hermitian_parts(basis: np.ndarray) -> np.ndarray:
    return np.concatenate([0.5 * (basis + ops.dagger(basis)), 0.5j * (ops.dagger(basis) - basis)])


def _clusters(w: np.ndarray, gap: float) -> list[np.ndarray]:
    scale = max(1.0, float(np.abs(w).max()))
    cuts = np.nonzero(np.diff(w) > gap * scale)[0] + 1
    return np.split(np.arange(len(w)), cuts)


def _smallest_gap(w: np.ndarray) -> float:
    return float(np.diff(w).min()) if len(w) > 1 else float("inf")


def _is_scalar(ops_list, tol: float) -> bool:
    for m in ops_list:
        d = m.shape[0]
        if np.linalg.norm(m - np.trace(m) / d * np.eye(d)) > tol:
            return False
    return True


def _block_units(Ab: np.ndarray, m: int, rng: np.random.Generator, tol: Tolerances):
    """Columns ``F[k]`` (each ``m x r``) realizing ``A_block = M_p (x) I_r`` in the basis ``|k> (x) |s>``."""
    dim = len(Ab)
    p = int(round(np.sqrt(dim)))
    if p * p != dim or m % p:
        raise NumericalError(f"block algebra of dimension {dim} is not a full matrix algebra on a {m}-dim block")
    r = m // p
    if p == 1:
        return [np.eye(m, dtype=complex)], 1, r
    herm = _hermitian_parts(Ab)
    H = np.einsum("k,kij->ij", rng.normal(size=len(herm)), herm)
    w, v = ops.eigh(H)
    groups = _clusters(w, tol.cluster_gap)
    if len(groups) != p or any(len(g) != r for g in groups):
        raise NumericalError(
            f"could not split block into {p} equal eigenspaces (smallest spectral gap {_smallest_gap(w):.3e})"
        )
    F1 = v[:, groups[0]]
    P1 = F1 @ ops.dagger(F1)
    units = [F1]
    for g in groups[1:]:
        Pk = v[:, g] @ ops.dagger(v[:, g])
        for _ in range(20):
            X = np.einsum("k,kij->ij", rng.normal(size=dim) + 1j * rng.normal(size=dim), Ab)
            T = Pk @ X @ P1
            scale = np.real(np.trace(ops.dagger(T) @ T)) / r
            if scale > 1e-6:
                break
        else:
            raise NumericalError("failed to find matrix units connecting block eigenspaces")
        units.append(T @ F1 / np.sqrt(scale))
    return units, p, r


def _intertwiner(Na: np.ndarray, Nb: np.ndarray, tol: float) -> np.ndarray | None:
    """Unitary ``W`` with ``W^+ Na_k W = Nb_k`` for all ``k``, or ``None``."""
    r = Na.shape[-1]
    eye = np.eye(r)
    lin = np.concatenate([np.kron(a, eye) - np.kron(eye, b.T) for a, b in zip(Na, Nb)])
    null = _null_space(lin, 1e-9)
    if null.shape[1] == 0:
        return None
    X = (null @ np.random.default_rng(0).normal(size=null.shape[1])).reshape(r, r)
    u, s, vh = np.linalg.svd(X)
    if s[-1] < 1e-6 * s[0]:
        return None
    W = u @ vh
    if max(float(np.linalg.norm(ops.dagger(W) @ a @ W - b)) for a, b in zip(Na, Nb)) > tol:
        return None
    return W


def _merge_equivalent(parts, tol: float):
    """Fuse central blocks whose ``N`` representations agree up to a unitary.

    Blocks ``(p, r)`` and ``(p', r)`` with equivalent ``N`` collapse to one
    ``(p + p', r)`` block, which keeps inputs that are already in tensor form whole.
    """
    merged = []
    for B, p, r, Mbar, Nbar in parts:
        for g, (B0, p0, r0, M0, N0) in enumerate(merged):
            if r0 != r:
                continue
            W = _intertwiner(Nbar, N0, tol)
            if W is None:
                continue
            B = B @ np.kron(np.eye(p), W)
            Mcat = np.zeros((len(M0), p0 + p, p0 + p), dtype=complex)
            Mcat[:, :p0, :p0] = M0
            Mcat[:, p0:, p0:] = Mbar
            merged[g] = (np.hstack([B0, B]), p0 + p, r, Mcat, N0)
            break
        else:
            merged.append((B, p, r, Mbar, Nbar))
    return merged


def algebra_decompose(M, N, tol: Tolerances = DEFAULT_TOLERANCES, seed: int = 0) -> AlgebraDecomposition:
    """Split ``V`` so commuting families ``M`` and ``N`` act on separate tensor factors.

    The unital *-algebra generated by ``M`` is block-diagonalized by the
    eigenspaces of a random self-adjoint central element.  On each block
    the algebra is ``M_p (x) I_r`` and ``N`` lives in ``I_p (x) M_r``; a block
    on which ``N`` is scalar is kept whole on the ``M`` side (``(m, 1)``),
    and blocks carrying equivalent ``N`` representations are fused.
    """
    M = np.asarray(M, dtype=complex)
    N = np.asarray(N, dtype=complex)
    n = M.shape[-1] if M.size else N.shape[-1]
    M = M.reshape(-1, n, n)
    N = N.reshape(-1, n, n)
    worst = max((float(np.linalg.norm(m @ k - k @ m)) for m in M for k in N), default=0.0)
    if worst > tol.commutation:
        raise InputError(f"families do not commute (max commutator norm {worst:.3e})")
    rng = np.random.default_rng(seed)
    basis = algebra_basis(M, tol.rank)
    gens = [m / np.linalg.norm(m) for m in M if np.linalg.norm(m) > 0]
    if gens:
        comm = np.concatenate([np.einsum("kij,jl->ilk", basis, g) - np.einsum("ij,kjl->ilk", g, basis) for g in gens])
        coeffs = _null_space(comm.reshape(-1, len(basis)), 1e-8)
    else:
        coeffs = np.eye(len(basis))
    center = np.einsum("kc,kij->cij", coeffs, basis)
    L = center.shape[0]
    herm = _hermitian_parts(center)
    Z = np.einsum("k,kij->ij", rng.normal(size=len(herm)), herm)
    w, v = ops.eigh(Z)
    groups = _clusters(w, tol.cluster_gap)
    if len(groups) != L:
        raise NumericalError(
            f"central element splits into {len(groups)} eigenspaces but the center has dimension {L} "
            f"(smallest spectral gap {_smallest_gap(w):.3e})"
        )
    parts = []
    for g in groups:
        W = v[:, g]
        m = W.shape[1]
        Mb = np.einsum("ji,kjl,lm->kim", W.conj(), M, W)
        Nb = np.einsum("ji,kjl,lm->kim", W.conj(), N, W)
        if _is_scalar(Nb, tol.pullback):
            parts.append((W, m, 1, Mb, np.array([[[np.trace(x) / m]] for x in Nb])))
            continue
        Ab = _orthonormal_span(np.einsum("ji,kjl,lm->kim", W.conj(), basis, W), tol.rank)
        units, p, r = _block_units(Ab, m, rng, tol)
        first = np.array([u[:, 0] for u in units]).T  # m x p, columns |k> (x) |s=0>
        Mbar = np.einsum("ik,jil,lm->jkm", first.conj(), Mb, first)
        Nbar = np.einsum("ik,jil,lm->jkm", units[0].conj(), Nb, units[0])
        U = np.hstack(units)  # column k*r + s
        parts.append((W @ U, p, r, Mbar, Nbar))
    parts = _merge_equivalent(parts, tol.pullback)
    d1 = sum(p for _, p, _, _, _ in parts)
    d2 = sum(r for _, _, r, _, _ in parts)
    iso = np.zeros((d1 * d2, n), dtype=complex)
    M_bar = np.zeros((len(M), d1, d1), dtype=complex)
    N_bar = np.zeros((len(N), d2, d2), dtype=complex)
    o1 = o2 = 0
    for B, p, r, Mbar, Nbar in parts:
        for k in range(p):
            for s in range(r):
                iso[(o1 + k) * d2 + (o2 + s)] = B[:, k * r + s].conj()
        M_bar[:, o1:o1 + p, o1:o1 + p] = Mbar
        N_bar[:, o2:o2 + r, o2:o2 + r] = Nbar
        o1 += p
        o2 += r
    M_bar = 0.5 * (M_bar + ops.dagger(M_bar))
    N_bar = 0.5 * (N_bar + ops.dagger(N_bar))
    dec = AlgebraDecomposition(iso, d1, d2, M_bar, N_bar, tuple((p, r) for _, p, r, _, _ in parts), seed)
    rm, rn = dec.pullback_residuals(M, N)
    if max(rm, rn) > tol.pullback:
        raise NumericalError(f"pullback identities fail (residuals {rm:.3e}, {rn:.3e})")
    return dec


def planted_families(rng: np.random.Generator, blocks, n_m: int = 3, n_n: int = 2):
    """Commuting families with a known block structure ``[(p, r), ...]``, hidden by a random unitary.

    ``M_j = U (sum_l M_j^l (x) I_r) U^+`` and ``N_k = U (sum_l I_p (x) N_k^l) U^+``
    with random Hermitian ``M_j^l`` (p x p) and ``N_k^l`` (r x r).
    """
    n = sum(p * r for p, r in blocks)
    U = ops.random_unitary(rng, n)

    def herm(d):
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        return 0.5 * (g + ops.dagger(g))

    def assemble(parts):
        out = np.zeros((n, n), dtype=complex)
        o = 0
        for part in parts:
            m = part.shape[0]
            out[o:o + m, o:o + m] = part
            o += m
        return U @ out @ ops.dagger(U)

    M = np.array([assemble([np.kron(herm(p), np.eye(r)) for p, r in blocks]) for _ in range(n_m)])
    N = np.array([assemble([np.kron(np.eye(p), herm(r)) for p, r in blocks]) for _ in range(n_n)])
    return M, N


# --- the full pipeline -------------------------------------------------------------


@dataclass(frozen=True)
class StructureVerdict:
    perfect_guessing: bool
    worst_overlap: float
    premeasurement_overlap: float | None = None
    support_dim: int | None = None
    c_min: float | None = None
    commutation_residual: float | None = None
    commutator_norm: float | None = None
    blocks: tuple[tuple[int, int], ...] | None = None
    dims: tuple[int, int] | None = None
    pullback_residual: float | None = None
    tau_residual: float | None = None
    final_commutator: float | None = None
    correlation_residual: float | None = None
    essentially_classical: bool = False
    seed: int = 0
    failed_stage: str | None = None
    message: str = ""


@dataclass(frozen=True)
class StructureResult:
    verdict: StructureVerdict
    strategy: Strategy | None = field(default=None, repr=False)


def alice_commutator(s: Strategy) -> float:
    """``max ||[R_a^x (x) I, gamma]||_F``."""
    eye = np.eye(s.dimE)
    worst = 0.0
    for Ra in s.R:
        for Rx in Ra:
            K = np.kron(Rx, eye)
            worst = max(worst, float(np.linalg.norm(K @ s.gamma - s.gamma @ K)))
    return worst


def essentially_classical_form(s: Strategy, seed: int = 0) -> tuple[Strategy, StructureVerdict]:
    """Run the perfect-guessing pipeline; raise :class:`StageError` at the first failing stage."""
    tol = s.tol
    check = detect_perfect_guessing(s)
    if not check.perfect:
        raise StageError("detect", f"strategy does not allow perfect guessing at {check.worst_index}",
                         check.worst_overlap)
    info: dict = dict(perfect_guessing=True, worst_overlap=check.worst_overlap, seed=seed)
    pre = premeasurement_check(s)
    info["premeasurement_overlap"] = pre.worst_overlap
    induced = induced_projections(s)
    r, J, c_min = restrict_to_support(s)
    info.update(support_dim=r.dimE, c_min=c_min)
    if induced.residual > tol.pullback:
        raise StageError("induce", "Q rho Q does not reproduce rho_a^x", induced.residual)
    sandwich, comm = check_commutation(induced.Q, r.S)
    info.update(commutation_residual=sandwich, commutator_norm=comm)
    if max(sandwich, comm) > tol.commutation:
        raise StageError("commute", "induced projections do not commute with Bob's measurements", max(sandwich, comm))
    nA, nB, nX, nY = r.shape
    e = r.dimE
    try:
        dec = algebra_decompose(r.S.reshape(-1, e, e), induced.Q.reshape(-1, e, e), tol, seed)
    except (InputError, NumericalError) as exc:
        raise StageError("decompose", str(exc)) from exc
    info.update(blocks=dec.blocks, dims=(dec.d1, dec.d2),
                pullback_residual=max(dec.pullback_residuals(r.S.reshape(-1, e, e), induced.Q.reshape(-1, e, e))))
    d, d1, d2 = r.dimD, dec.d1, dec.d2
    K = np.kron(np.eye(d), dec.embedding)
    gamma_bar = K @ r.gamma @ ops.dagger(K)
    Q_bar = dec.N_bar.reshape(nA, nX, d2, d2)
    tau_res = 0.0
    for a in range(nA):
        for x in range(nX):
            tau = ops.ptrace(np.kron(np.eye(d * d1), Q_bar[a, x]) @ gamma_bar, [d, d1, d2], [0, 1])
            tr_tau = float(np.real(np.trace(tau)))
            for x2 in range(nX):
                val = float(np.real(np.trace(np.kron(r.R[a, x2], np.eye(d1)) @ tau)))
                tau_res = max(tau_res, abs(val - (tr_tau if x2 == x else 0.0)))
    info["tau_residual"] = tau_res
    if tau_res > tol.pullback:
        raise StageError("tau", "Alice's outcome is not fixed by the E2 register", tau_res)
    gamma_de1 = ops.ptrace(gamma_bar, [d, d1, d2], [0, 1])
    out = Strategy(r.R, dec.M_bar.reshape(nB, nY, d1, d1), 0.5 * (gamma_de1 + ops.dagger(gamma_de1)),
                   labels=s.labels, tol=tol)
    final = alice_commutator(out)
    corr_res = float(np.abs(correlation_table(out) - correlation_table(s)).max())
    info.update(final_commutator=final, correlation_residual=corr_res,
                essentially_classical=final <= tol.commutation)
    verdict = StructureVerdict(**info)
    if not verdict.essentially_classical:
        raise StageError("trace-out", "Alice's measurements do not commute with the reduced state", final)
    return out, verdict


def analyze_structure(s: Strategy, seed: int = 0) -> StructureResult:
    """Like :func:`essentially_classical_form` but reports a failing stage instead of raising."""
    try:
        out, verdict = essentially_classical_form(s, seed)
        return StructureResult(verdict, out)
    except StageError as exc:
        check = detect_perfect_guessing(s)
        return StructureResult(StructureVerdict(
            perfect_guessing=check.perfect, worst_overlap=check.worst_overlap, seed=seed,
            failed_stage=exc.stage, message=str(exc),
        ))


@dataclass(frozen=True)
class Corollary5Report:
    score: float
    omega_c: float
    classicalized_residual: float
    score_ok: bool
    classical_ok: bool

    @property
    def satisfied(self) -> bool:
        return self.score_ok and self.classical_ok


def verify_corollary5(game: Game, s: Strategy, omega_c: float | None = None) -> Corollary5Report:
    """For a perfect-guessing strategy: classical score and ``p_bar == p``."""
    s.check_game(game)
    check = detect_perfect_guessing(s)
    if not check.perfect:
        raise InputError(f"strategy does not allow perfect guessing (overlap {check.worst_overlap:.3e})")
    wc = classical_value(game).value if omega_c is None else omega_c
    p = correlation_table(s)
    sc = score_table(game, p)
    res = float(np.abs(classicalized_table(s) - p).max())
    return Corollary5Report(sc, wc, res, sc <= wc + s.tol.inequality, res <= 1e-7)
