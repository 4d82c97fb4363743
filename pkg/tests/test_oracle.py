import numpy as np
import pytest
from hypothesis import given, strategies as st

from emphatic_rl import oracle
from emphatic_rl.environments import DASHED, HUB, SOLID, baird_target, state_action_features, state_features
from emphatic_rl.mdp import (
    FeatureMap,
    FiniteMdp,
    SoftmaxPolicy,
    TabularPolicy,
    reward_vectors,
    state_action_transition_matrix,
    transition_matrix,
)

from .conftest import random_setup

seeds = st.integers(0, 2**32 - 1)


def softmax_for(p_solid):
    """Softmax logits giving pi(solid) = p_solid in every state."""
    logit = np.log(p_solid / (1 - p_solid))
    theta = np.zeros(14)
    theta[SOLID::2] = logit
    return SoftmaxPolicy(theta, 7, 2)


class TestValues:
    def test_q_baird(self, baird):
        q = oracle.action_value_function(baird[0], baird_target(0.05)).reshape(7, 2)
        assert np.allclose(q[:, DASHED], 95.05, atol=1e-9)
        assert np.allclose(q[:, SOLID], 94.05, atol=1e-9)

    def test_myopic(self):
        mdp, _, pi = random_setup(3, discount=0.0)
        r, rt = reward_vectors(mdp, pi)
        assert np.allclose(oracle.value_function(mdp, pi), r)
        assert np.allclose(oracle.action_value_function(mdp, pi), rt)

    @given(seeds)
    def test_bellman_and_tower(self, seed):
        mdp, mu, pi = random_setup(seed)
        v = oracle.value_function(mdp, pi)
        q = oracle.action_value_function(mdp, pi)
        r, rt = reward_vectors(mdp, pi)
        assert np.abs(r + mdp.discount * transition_matrix(mdp, pi) @ v - v).max() < 1e-9
        assert np.abs(rt + mdp.discount * state_action_transition_matrix(mdp, pi) @ q - q).max() < 1e-9
        assert np.abs((pi.probs * q.reshape(v.size, -1)).sum(1) - v).max() < 1e-9


class TestEmphasis:
    def test_all_solid(self, baird):
        m = oracle.emphasis(*baird, baird_target(1.0))
        assert np.allclose(m[:6], 1.0, atol=1e-9) and m[HUB] == pytest.approx(694, abs=1e-9)

    def test_mixed(self, baird):
        m = oracle.emphasis(*baird, baird_target(0.1))
        assert np.allclose(m[:6], 104.95, atol=1e-9)
        assert m[HUB] == pytest.approx(70.3, abs=1e-9)
        assert m.sum() == pytest.approx(700, abs=1e-9)

    def test_myopic(self):
        mdp, mu, pi = random_setup(4, discount=0.0)
        assert np.allclose(oracle.emphasis(mdp, mu, pi), mdp.interest)

    def test_hat_operator(self, baird):
        mdp, mu = baird
        pi = baird_target(0.3)
        m = oracle.emphasis(mdp, mu, pi)
        assert np.abs(oracle.operator_hat_T(mdp, mu, pi, m) - m).max() < 1e-9
        assert np.array_equal(oracle.operator_hat_T(mdp, mu, pi, np.zeros(7)), mdp.interest)
        with pytest.raises(ValueError):
            oracle.operator_hat_T(mdp, mu, pi, np.zeros(3))

    @given(seeds)
    def test_fixed_point_and_lower_bound(self, seed):
        mdp, mu, pi = random_setup(seed)
        m = oracle.emphasis(mdp, mu, pi)
        assert np.abs(oracle.operator_hat_T(mdp, mu, pi, m) - m).max() < 1e-9
        assert np.all(m >= mdp.interest.min() - 1e-12)

    @given(seeds)
    def test_reversed_spectral_radius(self, seed):
        mdp, mu, pi = random_setup(seed)
        rho = oracle.spectral_radius(oracle.reversed_operator(mdp, mu, pi))
        assert abs(rho - mdp.discount) < 1e-10


class TestReversedOperatorNorm:
    def test_baird(self, baird):
        a, b = oracle.operator_norm_pair(*baird, baird_target(0.1))
        assert abs(a - b) < 1e-9

    def test_on_policy(self, baird):
        mdp, mu = baird
        a, b = oracle.operator_norm_pair(mdp, mu, mu)
        d = oracle.stationary_distribution(mdp, mu)
        sq = np.sqrt(d)
        direct = np.linalg.norm(sq[:, None] * transition_matrix(mdp, mu) / sq[None, :], 2)
        assert a == pytest.approx(direct) and b == pytest.approx(direct)

    @given(seeds)
    def test_random(self, seed):
        a, b = oracle.operator_norm_pair(*random_setup(seed))
        assert abs(a - b) < 1e-9


class TestRmsve:
    def test_examples(self):
        d = np.full(7, 1 / 7)
        v = np.full(7, 95.0)
        assert oracle.rmsve(v, v, d) == 0
        assert oracle.rmsve(v + 3, v, d) == pytest.approx(3)
        assert oracle.rmsve(np.zeros(7), v, d) == pytest.approx(95)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            oracle.rmsve(np.zeros(3), np.zeros(4), np.ones(4) / 4)


class TestGemSystem:
    def test_onehot_zero_ridge_recovers_emphasis(self, baird, onehot):
        mdp, mu = baird
        pi = baird_target(0.1)
        sys = oracle.gem_system(mdp, mu, pi, onehot, eta=0.0)
        assert np.allclose(sys.w, oracle.emphasis(mdp, mu, pi), atol=1e-9)

    @pytest.mark.parametrize("variant", ["onehot", "zerohot"])
    def test_projected_fixed_point(self, baird, variant):
        mdp, mu = baird
        pi = baird_target(0.3)
        X = state_features(variant)
        sys = oracle.gem_system(mdp, mu, pi, X, eta=0.0)
        y = X @ sys.w
        P = oracle.projection(X, oracle.stationary_distribution(mdp, mu))
        assert np.abs(P @ oracle.operator_hat_T(mdp, mu, pi, y) - y).max() < 1e-8

    def test_block_solution(self, baird, onehot):
        sys = oracle.gem_system(*baird, baird_target(0.1), onehot, eta=1e-2)
        assert np.allclose(sys.G @ np.r_[sys.kappa, sys.w], sys.h, atol=1e-12)

    def test_quadratic_form(self, baird):
        sys = oracle.gem_system(*baird, baird_target(0.1), state_features("zerohot"), eta=0.5)
        rng = np.random.default_rng(0)
        for _ in range(100):
            d = rng.standard_normal(14)
            k, w = d[:7], d[7:]
            assert d @ sys.G @ d == pytest.approx(k @ sys.C @ k + 0.5 * w @ w, rel=1e-12)

    def test_determinant_bound(self, baird, onehot):
        for eta in (1e-4, 1e-2, 1.0):
            sys = oracle.gem_system(*baird, baird_target(0.1), onehot, eta)
            assert np.linalg.det(sys.G) >= eta ** 7 * np.linalg.det(sys.C) - 1e-9

    def test_original_singular_c_still_solves(self, baird):
        mdp, mu = baird
        sys = oracle.gem_system(mdp, mu, baird_target(0.1), state_features("original"), eta=1e-2)
        assert sys.c_singular
        assert np.allclose(sys.G @ np.r_[sys.kappa, sys.w], sys.h, atol=1e-8)

    def test_zero_ridge_singular_a(self, baird):
        with pytest.raises(oracle.SingularSystemError):
            oracle.gem_system(*baird, baird_target(0.1), state_features("original"), eta=0.0)

    def test_negative_ridge(self, baird, onehot):
        with pytest.raises(ValueError):
            oracle.gem_system(*baird, baird_target(0.1), onehot, eta=-1.0)

    def test_ridge_limit(self, baird):
        X = state_features("zerohot")
        w0 = oracle.gem_system(*baird, baird_target(0.1), X, eta=0.0).w
        errs = [np.abs(oracle.gem_system(*baird, baird_target(0.1), X, eta=10.0 ** -k).w - w0).max()
                for k in range(1, 9)]
        assert all(b <= a for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 1e-4 * np.abs(w0).max()

    @given(seeds)
    def test_ridge_g_positive_definite(self, seed):
        mdp, mu, pi = random_setup(seed)
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((5, 3))
        eta = 0.1
        sys = oracle.gem_system(mdp, mu, pi, X, eta)
        floor = min(np.linalg.eigvalsh(sys.C).min(), eta)
        d = rng.standard_normal((20, 6))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        assert np.einsum("ij,jk,ik->i", d, sys.G, d).min() >= floor - 1e-12


class TestGq2System:
    def test_onehot_recovers_q(self, baird, onehot):
        mdp, mu = baird
        pi = baird_target(0.1)
        sys = oracle.gq2_system(mdp, mu, pi, onehot, eta=0.0)
        assert np.allclose(onehot.state_action_features @ sys.w,
                           oracle.action_value_function(mdp, pi), atol=1e-8)

    def test_myopic_reward(self, onehot):
        from emphatic_rl.environments import build_baird
        mdp, mu = build_baird(0.0)
        sys = oracle.gq2_system(mdp, mu, baird_target(0.2), onehot, eta=0.0)
        assert np.allclose(onehot.state_action_features @ sys.w, reward_vectors(mdp, mu)[1],
                           atol=1e-12)

    def test_quadratic_form(self, baird, onehot):
        sys = oracle.gq2_system(*baird, baird_target(0.1), onehot, eta=0.3)
        d = np.random.default_rng(1).standard_normal(28)
        k, u = d[:14], d[14:]
        assert d @ sys.G @ d == pytest.approx(k @ sys.C @ k + 0.3 * u @ u, rel=1e-12)


class TestPolicyGradient:
    def test_objective_baird(self, baird):
        J = oracle.excursion_objective(*baird, baird_target(0.05))
        assert J == pytest.approx(95, abs=1e-9)
        J_soft, _ = oracle.policy_gradient(*baird, softmax_for(0.05))
        assert J_soft == pytest.approx(95, abs=1e-9)

    def test_uniform_policy(self, baird):
        J, _ = oracle.policy_gradient(*baird, SoftmaxPolicy.uniform(7, 2))
        assert J == pytest.approx(50, abs=1e-9)

    def test_near_optimum_points_to_dashed(self, baird):
        theta = np.zeros(14)
        theta[DASHED::2] = 12.0
        J, grad = oracle.policy_gradient(*baird, SoftmaxPolicy(theta, 7, 2))
        assert J == pytest.approx(100, abs=1e-3)
        assert np.all(grad[DASHED::2] >= grad[SOLID::2])

    def test_zero_interest(self, baird):
        mdp, mu = baird
        mdp0 = FiniteMdp(mdp.transition, mdp.reward, mdp.discount, interest=np.zeros(7))
        J, grad = oracle.policy_gradient(mdp0, mu, SoftmaxPolicy(np.ones(14), 7, 2))
        assert J == 0 and not grad.any()

    @given(seeds)
    def test_finite_differences(self, seed):
        mdp, mu, _ = random_setup(seed, n_states=4, n_actions=3)
        theta = np.random.default_rng(seed).standard_normal(12)
        _, grad = oracle.policy_gradient(mdp, mu, SoftmaxPolicy(theta, 4, 3))
        fd = oracle.finite_difference_gradient(mdp, mu, theta, 4, 3)
        assert np.linalg.norm(grad - fd) < 1e-4 * np.linalg.norm(grad)


class TestBias:
    def test_onehot_zero_ridge(self, baird, onehot):
        theta = np.random.default_rng(0).standard_normal(14)
        _, b, diag = oracle.bias(*baird, SoftmaxPolicy(theta, 7, 2), onehot, eta=0.0)
        assert np.abs(b).max() < 1e-8
        assert diag.residual_m < 1e-9 and diag.residual_q < 1e-9

    def test_decreases_with_ridge(self, baird, onehot):
        pi = SoftmaxPolicy(np.random.default_rng(1).standard_normal(14), 7, 2)
        norms = [np.linalg.norm(oracle.bias(*baird, pi, onehot, eta, diagnostics=False)[1])
                 for eta in (1.0, 1e-1, 1e-2, 1e-3)]
        assert norms[-1] > 0
        assert all(b < a for a, b in zip(norms, norms[1:]))

    def test_behavior_target(self, baird, onehot):
        mdp, mu = baird
        theta = np.log(mu.probs).ravel()
        _, _, diag = oracle.bias(mdp, mu, SoftmaxPolicy(theta, 7, 2), onehot, eta=1e-2)
        assert diag.residual_m < 1e-9 and diag.residual_q < 1e-9
        assert diag.cond_state == pytest.approx(1.0) and diag.cond_state_action == pytest.approx(1.0)

    def test_diagnostics_fields(self, baird):
        fm = state_action_features("aliased")
        _, b, diag = oracle.bias(*baird, SoftmaxPolicy(np.arange(14) / 7, 7, 2), fm, eta=1e-2)
        assert diag.residual_m > 0 and diag.cond_state >= 1 and diag.cond_state_action >= 1
        assert diag.target_ergodic and diag.bias_norm == pytest.approx(np.linalg.norm(b))

    def test_limiting_update_equals_gradient(self, baird, onehot):
        mdp, mu = baird
        pi = SoftmaxPolicy(np.random.default_rng(2).standard_normal(14), 7, 2)
        w = oracle.emphasis(mdp, mu, pi)
        u = np.linalg.solve(onehot.state_action_features, oracle.action_value_function(mdp, pi))
        g_hat = oracle.limiting_actor_update(mdp, mu, pi, onehot, w, u)
        assert np.allclose(g_hat, oracle.policy_gradient(mdp, mu, pi)[1], atol=1e-6)


def test_semi_gradient_stability_onehot(baird):
    eig, stable = oracle.semi_gradient_stability(*baird, baird_target(0.1), np.eye(7))
    assert stable and eig.size == 7


def test_report_records(baird, onehot):
    report = oracle.build_report(*baird, softmax_for(0.1), onehot, 1e-2)
    rec = dict(report.records())
    assert rec["J"] == pytest.approx(oracle.excursion_objective(*baird, baird_target(0.1)))
    assert isinstance(rec["gem.w"], list) and len(rec["gem.w"]) == 7
    assert rec["gem.c_singular"] is False
