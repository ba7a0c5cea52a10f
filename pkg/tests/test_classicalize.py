import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from nlg import operators as ops
from nlg.classicalize import (
    classicalized_correlation, classicalized_table, copy_out_phi, copy_out_psi, dephase, dephasing_residual,
    dilate_alice, disturbance_bound, initial_state, verify_classical_info, verify_disturbance, verify_prop13,
    verify_theorem14,
)
from nlg.errors import InputError
from nlg.games import DeterministicStrategy, builtin_game, classical_value, no_signaling_residual, score_table
from nlg.strategies import (
    Strategy, chsh_optimal, classical_fixture, correlation_table, deterministic, magic_square_optimal,
    noisy_interpolation, random_strategy,
)

seeds = st.integers(0, 2**32 - 1)
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
COMP = np.array([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]).astype(complex)


def pbar_oracle(s, order):
    """Sum over full outcome strings of Kraus products R_{a_k}^{x_k} ... R_{a_1}^{x_1} on D."""
    nA, nB, nX, nY = s.shape
    d, e = s.dimD, s.dimE
    p = np.zeros(s.shape)
    for xs in itertools.product(range(nX), repeat=len(order)):
        K = np.eye(d, dtype=complex)
        for a, x in zip(order, xs):
            K = s.R[a, x] @ K
        KK = np.kron(K, np.eye(e))
        sigma = ops.ptrace(KK @ s.gamma @ KK.conj().T, [d, e], [1])
        for a in range(nA):
            x = xs[order.index(a)]
            for b, y in itertools.product(range(nB), range(nY)):
                p[a, b, x, y] += np.real(np.trace(s.S[b, y] @ sigma))
    return p


def random_projective_strategy(rng, shape, d, e):
    nA, nB, nX, nY = shape
    R = np.array([ops.random_projective(rng, d, nX) for _ in range(nA)])
    S = np.array([ops.random_povm(rng, e, nY) for _ in range(nB)])
    return Strategy(R, S, ops.random_density(rng, d * e))


class TestCopyOutPhi:
    def test_commuting_state_is_unchanged(self, rng):
        s = classical_fixture(rng, (2, 2, 2, 2), hidden=3, conjugate=False)
        state = initial_state(s)
        for a in range(2):
            state = copy_out_phi(a, s, state)
        assert np.abs(state.de_marginal() - s.gamma).max() <= 1e-9

    def test_deterministic_point_mass(self):
        s = deterministic(DeterministicStrategy((1, 0), (0, 0)), (2, 2, 2, 2))
        state = copy_out_phi(1, s, copy_out_phi(0, s))
        assert_allclose(state.register_marginal(0), [0, 1])
        assert_allclose(state.register_marginal(1), [1, 0])

    def test_chsh_uniform_marginal(self):
        state = copy_out_phi(0, chsh_optimal())
        assert_allclose(state.register_marginal(0), [0.5, 0.5], atol=1e-12)

    @given(seeds)
    def test_trace_marginals_and_classicality(self, seed):
        rng = np.random.default_rng(seed)
        s = random_projective_strategy(rng, (3, 2, 2, 2), 2, 2)
        state = initial_state(s)
        p = correlation_table(s)
        for k, a in enumerate((2, 0, 1)):
            state = copy_out_phi(a, s, state)
            assert abs(state.trace() - 1) <= 1e-10
            assert dephasing_residual(state, k) <= 1e-9
        # the first register copied matches Alice's own marginal exactly
        assert_allclose(state.register_marginal(2), p[2, 0].sum(axis=1), atol=1e-9)

    def test_requires_projective(self, rng):
        s = random_strategy(rng, (2, 2, 2, 2), 2, 2)
        with pytest.raises(InputError, match="projective"):
            copy_out_phi(0, s)
        dilated = dilate_alice(s)
        assert dilated.dimD == 4
        assert abs(copy_out_phi(0, dilated).trace() - 1) <= 1e-10
        assert_allclose(correlation_table(dilated), correlation_table(s), atol=1e-10)

    def test_dimension_cap(self):
        # 20 binary inputs on a qubit: the 20th register would make 2^20 * 2 > 2^20
        R = np.array([COMP] * 20)
        S = np.array([[np.eye(1), np.zeros((1, 1))]], dtype=complex)
        s = Strategy(R, S, np.eye(2) / 2)
        state = initial_state(s)
        for a in range(19):
            state = copy_out_phi(a, s, state)
        with pytest.raises(InputError, match="cap"):
            copy_out_phi(19, s, state)


class TestCopyOutPsi:
    def test_deterministic_point_mass(self):
        s = deterministic(DeterministicStrategy((0, 0), (0, 1)), (2, 2, 2, 2))
        out = copy_out_psi(1, s)
        assert_allclose(np.real(np.diag(out.marginal(["W1"]))), [0, 1])

    @pytest.mark.parametrize("b", [0, 1])
    def test_chsh_uniform(self, b):
        out = copy_out_psi(b, chsh_optimal())
        assert_allclose(out.marginal([f"W{b}"]), np.eye(2) / 2, atol=1e-12)
        assert abs(np.trace(out.matrix) - 1) <= 1e-10

    def test_product_state_stays_product(self, rng):
        rD, rE = ops.random_density(rng, 2), ops.random_density(rng, 3)
        s = Strategy(np.array([ops.random_projective(rng, 2, 2)]), np.array([ops.random_povm(rng, 3, 2)]),
                     np.kron(rD, rE))
        out = copy_out_psi(0, s)
        ew = out.marginal(["E", "W0"])
        assert_allclose(out.matrix, np.kron(rD, ew), atol=1e-12)

    @given(seeds)
    def test_marginal_matches_bob(self, seed):
        rng = np.random.default_rng(seed)
        s = random_strategy(rng, (2, 2, 2, 3), 2, 2)
        out = copy_out_psi(1, s)
        p = correlation_table(s)
        assert_allclose(np.real(np.diag(out.marginal(["W1"]))), p[0, 1].sum(axis=0), atol=1e-9)


class TestClassicalized:
    def test_matches_kraus_oracle(self):
        rng = np.random.default_rng(2)
        for shape in [(2, 2, 2, 2), (3, 2, 2, 3), (2, 3, 3, 2)]:
            s = random_projective_strategy(rng, shape, 3, 2)
            for order in itertools.permutations(range(shape[0])):
                assert_allclose(classicalized_table(s, order), pbar_oracle(s, list(order)), atol=1e-12)

    def test_commuting_gamma_gives_same_correlation(self, rng):
        s = classical_fixture(rng, (2, 2, 2, 2), hidden=4, ancilla=2)
        assert np.abs(classicalized_table(s) - correlation_table(s)).max() <= 1e-8

    def test_deterministic_exact(self):
        s = deterministic(DeterministicStrategy((1, 0), (1, 1)), (2, 2, 2, 2))
        assert np.array_equal(classicalized_table(s), correlation_table(s))

    @pytest.mark.parametrize("name,strat", [("chsh", chsh_optimal), ("magic_square", magic_square_optimal)])
    def test_scores_classical(self, name, strat):
        g = builtin_game(name)
        wc = classical_value(g).value
        pbar = classicalized_correlation(strat())
        assert no_signaling_residual(pbar.p) <= 1e-9
        assert score_table(g, pbar.p) <= wc + 1e-8

    @given(seeds)
    @settings(max_examples=20)
    def test_random_strategies_give_classical_no_signaling(self, seed):
        rng = np.random.default_rng(seed)
        s = random_strategy(rng, (2, 2, 2, 2), 2, 2)
        pbar = classicalized_table(s)
        assert no_signaling_residual(pbar) <= 1e-9
        assert score_table(builtin_game("chsh"), pbar) <= 0.75 + 1e-8

    def test_bad_order(self):
        with pytest.raises(InputError):
            classicalized_table(chsh_optimal(), (0, 0))


class TestDisturbance:
    def test_max_entangled(self):
        phi = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
        rep = verify_disturbance(np.outer(phi, phi.conj()), COMP, (2, 2))
        assert rep.delta == pytest.approx(0.0, abs=1e-12)
        assert rep.disturbance == pytest.approx(0.0, abs=1e-12)
        assert rep.satisfied

    def test_plus_product_fixture(self, rng):
        sigma = ops.random_density(rng, 3)
        rep = verify_disturbance(np.kron(np.outer(PLUS, PLUS.conj()), sigma), COMP, (2, 3))
        assert abs(rep.delta - 0.5) <= 1e-9
        assert abs(rep.disturbance - 1.0) <= 1e-9
        assert rep.bound == pytest.approx(2 * math.sqrt(0.5) + 0.5)
        assert rep.satisfied

    def test_random_pure_states(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            dA, dB = int(rng.integers(2, 7)), int(rng.integers(1, 7))
            v = ops.random_pure(rng, dA * dB)
            F = ops.random_projective(rng, dA, int(rng.integers(2, dA + 1)))
            rep = verify_disturbance(np.outer(v, v.conj()), F, (dA, dB))
            assert 0 <= rep.delta <= 1 + 1e-9
            assert rep.disturbance <= rep.bound + 1e-9

    def test_bound_monotone(self):
        ds = np.linspace(0, 1, 101)
        vals = [disturbance_bound(d) for d in ds]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_rejects_povm(self):
        with pytest.raises(InputError, match="projective"):
            verify_disturbance(np.eye(4) / 4, np.array([np.eye(2) / 2, np.eye(2) / 2]), (2, 2))

    def test_classical_info_trivial_register(self, rng):
        v = ops.random_pure(rng, 6)
        state = np.outer(v, v.conj())
        F = ops.random_projective(rng, 2, 2)
        a = verify_disturbance(state, F, (2, 3))
        b = verify_classical_info(state, F, (2, 3, 1))
        assert b.delta == pytest.approx(a.delta, abs=1e-9)
        assert b.disturbance == pytest.approx(a.disturbance, abs=1e-9)

    def test_classical_info_on_copied_out_bob(self):
        s = chsh_optimal()
        out = copy_out_psi(0, s)
        rep = verify_classical_info(out.matrix, s.R[0], out.dims)
        assert rep.satisfied

    def test_fully_classical_state(self, rng):
        p = rng.dirichlet(np.ones(8))
        state = np.diag(p).astype(complex)
        rep = verify_classical_info(state, COMP, (2, 2, 2))
        assert rep.disturbance == pytest.approx(0.0, abs=1e-12)

    def test_non_classical_register(self, rng):
        v = ops.random_pure(rng, 8)
        with pytest.raises(InputError, match="classical"):
            verify_classical_info(np.outer(v, v.conj()), COMP, (2, 2, 2))

    def test_composability(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            d, e = 3, 2
            gamma = ops.random_density(rng, d * e)
            F1, F2 = ops.random_projective(rng, d, 2), ops.random_projective(rng, d, 3)
            eta1 = ops.trace_norm(dephase(gamma, F1, [d, e]) - gamma)
            eta2 = ops.trace_norm(dephase(gamma, F2, [d, e]) - gamma)
            joint = ops.trace_norm(dephase(dephase(gamma, F1, [d, e]), F2, [d, e]) - gamma)
            assert joint <= eta1 + eta2 + 1e-8


class TestClassicalizationBound:
    def test_deterministic_zero(self):
        rep = verify_prop13(deterministic(DeterministicStrategy((0, 1), (1, 0)), (2, 2, 2, 2)))
        assert rep.delta == pytest.approx(0.0, abs=1e-12)
        assert rep.lhs <= 1e-10

    def test_chsh_positive_slack(self):
        rep = verify_prop13(chsh_optimal())
        assert rep.slack > 0 and rep.satisfied()

    def test_noisy_sweep(self):
        for lam in (0, 0.25, 0.5, 0.75, 1):
            assert verify_prop13(noisy_interpolation(chsh_optimal(), lam)).satisfied()

    def test_all_orders_picks_minimum(self, rng):
        s = random_projective_strategy(rng, (3, 2, 2, 2), 2, 2)
        every = verify_prop13(s, all_orders=True)
        for o in itertools.permutations(range(3)):
            single = verify_prop13(s, order=o, table=every.cells)
            assert single.satisfied()
            assert every.lhs <= single.lhs + 1e-15


class TestScoreExcessBound:
    def test_classical_mixture(self, rng):
        g = builtin_game("chsh")
        rep = verify_theorem14(g, classical_fixture(rng, g.shape, hidden=3, ancilla=2))
        assert rep.lhs <= 1e-9 and rep.rhs >= 0 and rep.satisfied

    def test_chsh(self):
        rep = verify_theorem14(builtin_game("chsh"), chsh_optimal())
        assert rep.lhs == pytest.approx(math.cos(math.pi / 8) ** 2 - 0.75, abs=1e-9)
        assert rep.satisfied

    def test_magic_square(self):
        rep = verify_theorem14(builtin_game("magic_square"), magic_square_optimal(), omega_c=8 / 9)
        assert rep.lhs == pytest.approx(1 / 9, abs=1e-9)
        assert rep.rhs == pytest.approx(4.5 * math.sqrt(0.5), abs=1e-5)
        assert rep.satisfied
