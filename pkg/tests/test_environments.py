import numpy as np
import pytest

from emphatic_rl import oracle
from emphatic_rl.environments import (
    DASHED,
    HUB,
    SOLID,
    FeatureVariant,
    baird_target,
    build_baird,
    state_action_features,
    state_features,
)

from .conftest import VARIANTS


def test_baird_structure(baird):
    mdp, mu = baird
    assert mdp.discount == 0.99
    for s in range(7):
        assert np.allclose(mdp.transition[s, DASHED], np.r_[np.full(6, 1 / 6), 0])
        assert np.array_equal(mdp.transition[s, SOLID], np.eye(7)[HUB])
        assert np.all(mdp.reward[s, DASHED] == 1) and np.all(mdp.reward[s, SOLID] == 0)
    assert np.all(mu.probs[:, DASHED] == 6 / 7)
    assert np.array_equal(mdp.interest, np.ones(7))
    assert np.allclose(mdp.initial, 1 / 7)


@pytest.mark.parametrize("gamma", [1.0, 1.2, -0.5])
def test_baird_rejects_gamma(gamma):
    with pytest.raises(ValueError):
        build_baird(gamma)


@pytest.mark.parametrize("pi_solid, value", [(0.0, 100.0), (0.05, 95.0)])
def test_constant_values(baird, pi_solid, value):
    v = oracle.value_function(baird[0], baird_target(pi_solid))
    assert np.allclose(v, value, rtol=0, atol=1e-9)


def test_original_features():
    X = state_features("original")
    assert X.shape == (7, 8)
    assert np.array_equal(X[0], [2, 0, 0, 0, 0, 0, 0, 1])
    assert np.array_equal(X[6], [0, 0, 0, 0, 0, 0, 1, 2])


def test_onehot_and_zerohot():
    assert np.array_equal(state_features(FeatureVariant.ONEHOT), np.eye(7))
    assert np.array_equal(state_features("zerohot")[0], [0, 1, 1, 1, 1, 1, 1])


def test_aliased():
    X = state_features("aliased")
    assert X.shape == (7, 6)
    assert np.array_equal(X[HUB], X[HUB - 1])
    assert np.array_equal(X[:6], state_features("original")[:6, :6])


def test_unknown_variant():
    with pytest.raises(ValueError):
        state_features("tile")


@pytest.mark.parametrize("variant", VARIANTS)
def test_state_action_blocks(variant):
    fm = state_action_features(variant)
    X = fm.state_features
    k = X.shape[1]
    assert fm.state_action_features.shape == (14, 2 * k)
    for s in range(7):
        dashed = fm.state_action_features[2 * s + DASHED]
        solid = fm.state_action_features[2 * s + SOLID]
        assert dashed @ solid == 0
        assert np.array_equal(dashed[:k], X[s]) and not dashed[k:].any()
        assert np.array_equal(solid[k:], X[s]) and not solid[:k].any()


def test_onehot_state_action_unit():
    row = state_action_features("onehot").state_action_features[2 * 2 + SOLID]
    assert np.array_equal(row, np.eye(14)[7 + 2])


def test_original_state_action_embedding():
    row = state_action_features("original").state_action_features[DASHED]
    assert np.array_equal(row[:8], [2, 0, 0, 0, 0, 0, 0, 1]) and not row[8:].any()


@pytest.mark.parametrize("variant", ["onehot", "zerohot"])
@pytest.mark.parametrize("p", [0.1, 0.3, 0.05])
def test_exactly_representable(baird, variant, p):
    mdp, mu = baird
    X = state_features(variant)
    pi = baird_target(p)
    for target in (oracle.emphasis(mdp, mu, pi), oracle.value_function(mdp, pi)):
        w = np.linalg.lstsq(X, target, rcond=None)[0]
        assert np.abs(X @ w - target).max() < 1e-9


@pytest.mark.parametrize("p", [0.1, 0.3])
def test_aliased_not_representable(baird, p):
    mdp, mu = baird
    X = state_features("aliased")
    m = oracle.emphasis(mdp, mu, baird_target(p))
    w = np.linalg.lstsq(X, m, rcond=None)[0]
    assert np.linalg.norm(X @ w - m) > 1e-3


def test_original_gram_singular(baird):
    mdp, mu = baird
    X = state_features("original")
    d = oracle.stationary_distribution(mdp, mu)
    assert np.linalg.matrix_rank(X.T @ (d[:, None] * X)) == 7
