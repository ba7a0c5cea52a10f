import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from nlg import operators as ops
from nlg.errors import InputError

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)

seeds = st.integers(0, 2**32 - 1)


def proj(v):
    return np.outer(v, v.conj())


def loop_ptrace_second(m, d1, d2):
    out = np.zeros((d1, d1), dtype=complex)
    for i in range(d1):
        for j in range(d1):
            out[i, j] = sum(m[i * d2 + k, j * d2 + k] for k in range(d2))
    return out


def loop_ptrace_first(m, d1, d2):
    out = np.zeros((d2, d2), dtype=complex)
    for i in range(d2):
        for j in range(d2):
            out[i, j] = sum(m[k * d2 + i, k * d2 + j] for k in range(d1))
    return out


class TestTensor:
    def test_identities(self):
        assert_allclose(ops.tensor(np.eye(2), np.eye(2)), np.eye(4))

    def test_basis_bookkeeping(self):
        t = ops.tensor(proj(KET0), proj(KET1))
        expected = np.zeros((4, 4))
        expected[1, 1] = 1
        assert_allclose(t, expected)

    def test_sx_sz(self):
        t = ops.tensor(SX, SZ)
        expected = np.zeros((4, 4))
        expected[0, 2], expected[1, 3], expected[2, 0], expected[3, 1] = 1, -1, 1, -1
        assert_allclose(t, expected)

    def test_three_factors(self, rng):
        a, b, c = (ops.random_psd(rng, d) for d in (2, 3, 2))
        assert_allclose(ops.tensor(a, b, c), np.kron(np.kron(a, b), c))


class TestPartialTrace:
    def test_product_state(self, rng):
        rho, sigma = ops.random_density(rng, 3), ops.random_psd(rng, 2)
        assert_allclose(ops.partial_trace(np.kron(rho, sigma), "first", 3, 2), rho * np.trace(sigma), atol=1e-12)

    def test_max_entangled_marginal(self):
        phi = (np.kron(KET0, KET0) + np.kron(KET1, KET1)) / np.sqrt(2)
        assert_allclose(ops.partial_trace(proj(phi), "second", 2, 2), np.eye(2) / 2, atol=1e-15)

    @given(seeds, st.integers(1, 4), st.integers(1, 4))
    def test_matches_index_loops(self, seed, d1, d2):
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(d1 * d2, d1 * d2)) + 1j * rng.normal(size=(d1 * d2, d1 * d2))
        assert_allclose(ops.partial_trace(m, "first", d1, d2), loop_ptrace_second(m, d1, d2), atol=1e-12)
        assert_allclose(ops.partial_trace(m, "second", d1, d2), loop_ptrace_first(m, d1, d2), atol=1e-12)
        assert abs(np.trace(ops.partial_trace(m, "second", d1, d2)) - np.trace(m)) <= 1e-12 * max(1, abs(np.trace(m)))

    def test_multi_factor_keep(self, rng):
        a, b, c = ops.random_density(rng, 2), ops.random_density(rng, 3), ops.random_density(rng, 2)
        m = ops.tensor(a, b, c)
        assert_allclose(ops.ptrace(m, [2, 3, 2], [0, 2]), np.kron(a, c), atol=1e-12)
        assert_allclose(ops.ptrace(m, [2, 3, 2], [1]), b, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            ops.partial_trace(np.eye(5), "first", 2, 2)


class TestTraceNorm:
    def test_examples(self):
        assert ops.trace_norm(np.eye(3)) == pytest.approx(3)
        assert ops.trace_norm(proj(KET0) - proj(KET1)) == pytest.approx(2)
        assert ops.trace_norm(proj(KET0) - proj(PLUS)) == pytest.approx(np.sqrt(2), abs=1e-12)

    @given(seeds, st.integers(1, 6))
    def test_psd_equals_trace(self, seed, d):
        m = ops.random_psd(np.random.default_rng(seed), d)
        assert ops.trace_norm(m) == pytest.approx(np.trace(m).real, rel=1e-10)

    @given(seeds, st.integers(1, 5))
    def test_matches_singular_values_and_triangle(self, seed, d):
        rng = np.random.default_rng(seed)
        a, b = (ops.random_psd(rng, d) - ops.random_psd(rng, d) for _ in range(2))
        assert ops.trace_norm(a) == pytest.approx(np.linalg.svd(a, compute_uv=False).sum(), rel=1e-10)
        assert ops.trace_norm(a + b) <= ops.trace_norm(a) + ops.trace_norm(b) + 1e-9


class TestPsdSqrt:
    def test_examples(self):
        P = proj(PLUS)
        assert_allclose(ops.psd_sqrt(P), P, atol=1e-12)
        assert_allclose(ops.psd_sqrt(4 * np.eye(3)), 2 * np.eye(3), atol=1e-12)
        assert_allclose(ops.psd_sqrt(np.diag([9.0, 4.0])), np.diag([3.0, 2.0]), atol=1e-12)

    @given(seeds, st.integers(1, 6), st.floats(0, 8))
    def test_square_roundtrip(self, seed, d, logcond):
        rng = np.random.default_rng(seed)
        U = ops.random_unitary(rng, d)
        m = U @ np.diag(np.logspace(-logcond, 0, d)) @ U.conj().T
        r = ops.psd_sqrt(m)
        assert np.linalg.norm(r @ r - m) <= 1e-8

    def test_clamps_roundoff_but_rejects_negative(self):
        assert_allclose(ops.psd_sqrt(np.diag([1.0, -5e-10])), np.diag([1.0, 0.0]))
        with pytest.raises(InputError):
            ops.psd_sqrt(np.diag([1.0, -1e-3]))

    def test_rejects_non_hermitian(self):
        with pytest.raises(InputError):
            ops.psd_sqrt(np.array([[1.0, 1.0], [0.0, 1.0]]))


class TestSupportProjection:
    def test_examples(self):
        assert_allclose(ops.support_projection(proj(KET0) / 2), proj(KET0), atol=1e-12)
        assert_allclose(ops.support_projection(np.eye(4)), np.eye(4), atol=1e-12)
        assert_allclose(ops.support_projection(np.diag([1, 1e-15, 0]), 1e-9), np.diag([1, 0, 0]), atol=1e-12)
        assert_allclose(ops.support_projection(np.zeros((3, 3))), np.zeros((3, 3)))

    @given(seeds, st.integers(1, 6))
    def test_projects_onto_support(self, seed, d):
        rng = np.random.default_rng(seed)
        rank = int(rng.integers(1, d + 1))
        m = ops.random_psd(rng, d, rank)
        P = ops.support_projection(m)
        assert_allclose(P @ P, P, atol=1e-10)
        assert round(np.trace(P).real) == rank
        assert np.linalg.norm(P @ m @ P - m) <= 1e-9


class TestValidators:
    def test_density(self):
        ops.check_density(np.eye(2) / 2)
        with pytest.raises(InputError, match="trace"):
            ops.check_density(np.eye(2))
        ops.check_density(np.eye(2) / 4, subnormalized=True)
        with pytest.raises(InputError):
            ops.check_density(np.diag([1.1, -0.1]))

    def test_povm(self):
        ops.check_povm(np.array([np.eye(2) / 2, np.eye(2) / 2]))
        with pytest.raises(InputError):
            ops.check_povm(np.array([np.eye(2) / 2, np.eye(2) / 3]))

    def test_projective(self):
        assert ops.is_projective(np.array([proj(KET0), proj(KET1)]))
        assert not ops.is_projective(np.array([np.eye(2) / 2, np.eye(2) / 2]))


def trine():
    kets = [np.array([np.cos(2 * np.pi * k / 3), np.sin(2 * np.pi * k / 3)]) for k in range(3)]
    return np.array([2 / 3 * proj(v.astype(complex)) for v in kets])


class TestNaimark:
    def test_projective_short_circuit(self):
        P = np.array([proj(KET0), proj(KET1)])
        iso, Q = ops.naimark_dilate(P)
        assert_allclose(iso, np.eye(2))
        assert_allclose(Q, P)

    @pytest.mark.parametrize("povm", [trine(), np.array([np.eye(2) / 2, np.eye(2) / 2])])
    def test_pullback(self, povm):
        iso, Q = ops.naimark_dilate(povm)
        n = len(povm)
        assert iso.shape == (2 * n, 2)
        assert np.linalg.norm(iso.conj().T @ iso - np.eye(2)) <= 1e-9
        assert ops.is_projective(Q)
        assert_allclose(Q.sum(axis=0), np.eye(2 * n), atol=1e-8)
        for P, E in zip(Q, povm):
            assert np.linalg.norm(iso.conj().T @ P @ iso - E) <= 1e-8

    def test_random_povms(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            d, n = int(rng.integers(2, 7)), int(rng.integers(2, 6))
            povm = ops.random_povm(rng, d, n)
            iso, Q = ops.naimark_dilate(povm)
            assert np.linalg.norm(iso.conj().T @ iso - np.eye(d)) <= 1e-9
            assert ops.projective_residual(Q) <= 1e-8
            for P, E in zip(Q, povm):
                assert np.linalg.norm(iso.conj().T @ P @ iso - E) <= 1e-8

    def test_invalid_povm(self):
        with pytest.raises(InputError):
            ops.naimark_dilate(np.array([np.eye(2), np.eye(2)]))


class TestPurify:
    def test_pure(self):
        v = ops.purify(proj(PLUS))
        assert_allclose(v, np.kron(PLUS, KET0), atol=1e-12)

    def test_maximally_mixed(self):
        v = ops.purify(np.eye(2) / 2)
        assert_allclose(np.abs(v), np.abs(np.array([1, 0, 0, 1]) / np.sqrt(2)), atol=1e-12)
        assert_allclose(ops.partial_trace(proj(v), "first", 2, 2), np.eye(2) / 2, atol=1e-12)

    @given(seeds, st.integers(1, 6))
    def test_roundtrip(self, seed, d):
        rho = ops.random_density(np.random.default_rng(seed), d)
        v = ops.purify(rho)
        assert np.abs(ops.partial_trace(proj(v), "first", d, d) - rho).max() <= 1e-9


class TestRandomFixtures:
    def test_random_projective_is_projective(self, rng):
        for d, n in [(2, 2), (3, 2), (4, 3), (2, 4)]:
            P = ops.random_projective(rng, d, n)
            assert P.shape == (n, d, d)
            assert ops.is_projective(P)
            assert_allclose(P.sum(axis=0), np.eye(d), atol=1e-10)
