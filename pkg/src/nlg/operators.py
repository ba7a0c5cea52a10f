"""Dense finite-dimensional operator algebra.

Matrices are plain ``numpy`` complex arrays stored row-major.  Every
spectral quantity (PSD checks, square roots, trace norms, supports) goes
through :func:`eigh`, so there is exactly one numerical kernel to trust.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .config import DEFAULT_TOLERANCES
from .errors import InputError

_TOL = DEFAULT_TOLERANCES


def as_matrix(m) -> np.ndarray:
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2:
        raise InputError(f"expected a 2-d matrix, got shape {arr.shape}")
    return arr


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def hermitian_residual(m: np.ndarray) -> float:
    return float(np.linalg.norm(m - dagger(m)))


def check_hermitian(m, tol: float = _TOL.herm, name: str = "operator") -> np.ndarray:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise InputError(f"{name} must be square, got shape {m.shape}")
    res = hermitian_residual(m)
    if res > tol * m.shape[0]:
        raise InputError(f"{name} is not Hermitian (||M - M^dagger||_F = {res:.3e})")
    return m


def eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of the Hermitian part of ``m`` (ascending eigenvalues)."""
    return np.linalg.eigh(0.5 * (m + dagger(m)))


def _clamped_spectrum(m, psd_tol: float, name: str):
    m = check_hermitian(m, name=name)
    w, v = eigh(m)
    if w.size and w[0] < -psd_tol:
        raise InputError(f"{name} is not positive semidefinite (smallest eigenvalue {w[0]:.3e})")
    return np.clip(w, 0.0, None), v


def min_eigenvalue(m: np.ndarray) -> float:
    return float(eigh(m)[0][0])


def tensor(*ops) -> np.ndarray:
    """Kronecker product of one or more matrices (left factor most significant)."""
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def ptrace(m: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every tensor factor of ``m`` whose index is not in ``keep``.

    ``dims`` lists the factor dimensions in Kronecker order; the kept factors
    stay in their original relative order.
    """
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    m = np.asarray(m)
    if m.shape != (total, total):
        raise InputError(f"matrix of shape {m.shape} does not match factor dims {dims}")
    keep = sorted(set(int(k) for k in keep))
    n = len(dims)
    t = m.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * n > len(letters):
        raise InputError("too many tensor factors")
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for k in range(n):
        if k not in keep:
            col[k] = row[k]
    out_idx = "".join(row[k] for k in keep) + "".join(col[k] for k in keep)
    out = np.einsum("".join(row) + "".join(col) + "->" + out_idx, t)
    kd = int(np.prod([dims[k] for k in keep])) if keep else 1
    return out.reshape(kd, kd)


def partial_trace(m, keep: str, d1: int, d2: int) -> np.ndarray:
    """Partial trace on a bipartite space of dims ``(d1, d2)``; ``keep`` is 'first' or 'second'."""
    if keep not in ("first", "second"):
        raise InputError("keep must be 'first' or 'second'")
    return ptrace(as_matrix(m), [d1, d2], [0] if keep == "first" else [1])


def trace_norm(m) -> float:
    """Sum of singular values."""
    m = as_matrix(m)
    if hermitian_residual(m) <= _TOL.herm * max(1, m.shape[0]):
        return float(np.abs(eigh(m)[0]).sum())
    return float(np.linalg.svd(m, compute_uv=False).sum())


def psd_sqrt(m, psd_tol: float = _TOL.psd) -> np.ndarray:
    w, v = _clamped_spectrum(m, psd_tol, "operator")
    return (v * np.sqrt(w)) @ dagger(v)


def support_projection(m, tol: float = _TOL.support, psd_tol: float = _TOL.psd,
                       scale: float | None = None) -> np.ndarray:
    """Projector onto eigenvectors with eigenvalue above ``tol * scale``.

    ``scale`` defaults to the largest eigenvalue; pass a reference size
    (e.g. the trace of a whole ensemble) to treat negligible members as zero.
    """
    cols, _ = support_basis(m, tol, psd_tol, scale)
    return cols @ dagger(cols)


def support_basis(m, tol: float = _TOL.support, psd_tol: float = _TOL.psd,
                  scale: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis (columns) of the support and the retained eigenvalues."""
    w, v = _clamped_spectrum(m, psd_tol, "operator")
    if not w.size or w[-1] <= 0:
        return v[:, :0], w[:0]
    keep = w > tol * (w[-1] if scale is None else scale)
    return v[:, keep], w[keep]


# --- validators ------------------------------------------------------------


def check_density(rho, name: str = "density operator", subnormalized: bool = False,
                  tol=DEFAULT_TOLERANCES) -> np.ndarray:
    rho = check_hermitian(rho, tol.herm, name)
    lam = min_eigenvalue(rho)
    if lam < -tol.psd:
        raise InputError(f"{name} is not positive semidefinite (smallest eigenvalue {lam:.3e})")
    tr = float(np.real(np.trace(rho)))
    if subnormalized:
        if tr > 1 + tol.trace:
            raise InputError(f"{name} has trace {tr:.12g} > 1")
    elif abs(tr - 1) > tol.trace:
        raise InputError(f"{name} has trace {tr:.12g}, expected 1")
    return rho


def check_povm(elements, name: str = "POVM", tol=DEFAULT_TOLERANCES) -> np.ndarray:
    """Validate a POVM given as an array of shape (n, d, d); returns it as complex array."""
    els = np.asarray(elements, dtype=complex)
    if els.ndim != 3 or els.shape[1] != els.shape[2] or els.shape[0] == 0:
        raise InputError(f"{name} must be a non-empty list of square matrices of one size")
    for k, e in enumerate(els):
        check_hermitian(e, tol.herm, f"{name}[{k}]")
        lam = min_eigenvalue(e)
        if lam < -tol.psd:
            raise InputError(f"{name}[{k}] is not positive semidefinite (smallest eigenvalue {lam:.3e})")
    res = float(np.linalg.norm(els.sum(axis=0) - np.eye(els.shape[1])))
    if res > tol.povm:
        raise InputError(f"{name} elements do not sum to identity (residual {res:.3e})")
    return els


def projective_residual(elements) -> float:
    """Largest of ||P^2 - P||_F and ||P_i P_j||_F over the family."""
    els = np.asarray(elements, dtype=complex)
    worst = 0.0
    for i, p in enumerate(els):
        worst = max(worst, float(np.linalg.norm(p @ p - p)))
        for j in range(i + 1, len(els)):
            worst = max(worst, float(np.linalg.norm(p @ els[j])))
    return worst


def is_projective(elements, tol: float = _TOL.projective) -> bool:
    return projective_residual(elements) <= tol


def check_isometry(iso, tol: float = _TOL.isometry) -> np.ndarray:
    iso = as_matrix(iso)
    target, source = iso.shape
    if target < source:
        raise InputError("embedding target dimension smaller than source dimension")
    res = float(np.linalg.norm(dagger(iso) @ iso - np.eye(source)))
    if res > tol:
        raise InputError(f"embedding is not isometric (residual {res:.3e})")
    return iso


# --- constructions ---------------------------------------------------------


def complete_to_unitary(cols: np.ndarray) -> np.ndarray:
    """Extend orthonormal columns to a unitary; the given columns come first."""
    n, k = cols.shape
    if k == n:
        return cols.copy()
    u, s, _ = np.linalg.svd(cols, full_matrices=True)
    complement = u[:, k:]
    return np.hstack([cols, complement])


def naimark_dilate(elements, tol=DEFAULT_TOLERANCES) -> tuple[np.ndarray, np.ndarray]:
    """Realize a POVM as a projective measurement pulled back through an isometry.

    Returns ``(iso, projectors)`` with ``iso`` of shape ``(d*n, d)`` mapping
    ``|psi> -> |psi> (x) |0>`` and ``projectors`` of shape ``(n, d*n, d*n)``
    such that ``iso^dagger P_k iso = E_k``.  Already-projective inputs come
    back unchanged with the identity embedding.

    The embedding does not depend on the POVM, so several POVMs on the same
    space can be dilated into one common ambient space.
    """
    els = check_povm(elements, tol=tol)
    if is_projective(els, tol.projective):
        return np.eye(els.shape[1], dtype=complex), els.copy()
    return ancilla_embedding(els.shape[1], els.shape[0]), dilated_projectors(els, tol)


def ancilla_embedding(d: int, n: int) -> np.ndarray:
    """The isometry ``|psi> -> |psi> (x) |0>`` from dimension d into d*n."""
    return np.kron(np.eye(d), np.eye(n)[:, :1]).astype(complex)


def dilated_projectors(els: np.ndarray, tol=DEFAULT_TOLERANCES) -> np.ndarray:
    """Projectors on ``d*n`` whose pullback through :func:`ancilla_embedding` is ``els``.

    A unitary ``U`` extends ``|psi>|0> -> sum_k sqrt(E_k)|psi> (x) |k>``;
    the projectors are ``U^dagger (I (x) |k><k|) U``.
    """
    n, d, _ = els.shape
    roots = np.array([psd_sqrt(e, tol.psd) for e in els])
    v = np.einsum("kij->ikj", roots).reshape(d * n, d)
    u_src = complete_to_unitary(ancilla_embedding(d, n))
    u_dst = complete_to_unitary(v)
    unitary = u_dst @ dagger(u_src)
    basis = np.eye(n)
    projectors = np.array(
        [dagger(unitary) @ np.kron(np.eye(d), np.outer(basis[k], basis[k])) @ unitary for k in range(n)]
    )
    return 0.5 * (projectors + dagger(projectors))


def purify(rho, tol=DEFAULT_TOLERANCES) -> np.ndarray:
    """Spectral purification: a unit vector on ``d*d`` with ``Tr_2 |v><v| = rho``.

    Eigenvectors are taken in descending eigenvalue order (ties keep their
    order) so a pure input ``|psi><psi|`` yields ``|psi> (x) |0>``.
    """
    rho = check_density(rho, tol=tol)
    w, v = eigh(rho)
    order = np.argsort(-np.round(w, 12), kind="stable")
    w = np.clip(w[order], 0.0, None)
    v = v[:, order]
    d = rho.shape[0]
    # fix the global phase of each eigenvector: first largest-modulus entry real positive
    for k in range(d):
        j = int(np.argmax(np.round(np.abs(v[:, k]), 12)))
        v[:, k] *= np.exp(-1j * np.angle(v[j, k]))
    vec = np.zeros(d * d, dtype=complex)
    for k in range(d):
        vec += np.sqrt(w[k]) * np.kron(v[:, k], np.eye(d)[k])
    return vec


# --- random fixtures -------------------------------------------------------


def random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_psd(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    return g @ dagger(g)


def random_density(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    m = random_psd(rng, d, rank)
    return m / np.real(np.trace(m))


def random_pure(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_povm(rng: np.random.Generator, d: int, n: int) -> np.ndarray:
    """n random PSD operators conjugated by the inverse square root of their sum."""
    parts = np.array([random_psd(rng, d) for _ in range(n)])
    w, v = eigh(parts.sum(axis=0))
    inv_root = (v / np.sqrt(w)) @ dagger(v)
    els = np.array([inv_root @ p @ inv_root for p in parts])
    return 0.5 * (els + dagger(els))


def random_projective(rng: np.random.Generator, d: int, n: int) -> np.ndarray:
    """Projective measurement with n outcomes from a random basis split into n groups."""
    u = random_unitary(rng, d)
    cuts = np.sort(rng.choice(np.arange(1, d), size=min(n - 1, d - 1), replace=False)) if d > 1 else []
    groups = np.split(np.arange(d), cuts)
    groups += [np.array([], dtype=int)] * (n - len(groups))
    return np.array([u[:, g] @ dagger(u[:, g]) for g in groups])
