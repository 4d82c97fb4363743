"""Baird's counterexample (seven states, dashed/solid actions) and its four
feature sets."""
from __future__ import annotations

from enum import Enum
from fractions import Fraction

import numpy as np

from .mdp import FeatureMap, FiniteMdp, TabularPolicy

N_STATES = 7
DASHED, SOLID = 0, 1
ACTION_NAMES = ("dashed", "solid")
# Zero-based index of the state every solid action leads to.
HUB = 6


class FeatureVariant(str, Enum):
    ORIGINAL = "original"
    ONEHOT = "onehot"
    ZEROHOT = "zerohot"
    ALIASED = "aliased"


def build_baird(gamma: float = 0.99) -> tuple[FiniteMdp, TabularPolicy]:
    """The Baird MDP and its behavior policy mu(dashed) = 6/7.

    Dashed moves uniformly to one of the first six states with reward +1;
    solid moves to the hub state with reward 0. Interest is 1 everywhere and
    the initial state is uniform.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    p = np.zeros((N_STATES, 2, N_STATES))
    p[:, DASHED, :HUB] = 1.0 / 6.0
    p[:, SOLID, HUB] = 1.0
    r = np.zeros_like(p)
    r[:, DASHED, :] = 1.0
    mdp = FiniteMdp(p, r, gamma, interest=np.ones(N_STATES),
                    initial=np.full(N_STATES, 1.0 / N_STATES))
    mu_dashed = Fraction(6, 7)
    mu = TabularPolicy.from_action_probs(N_STATES, [float(mu_dashed), float(1 - mu_dashed)])
    return mdp, mu


def baird_target(pi_solid: float) -> TabularPolicy:
    """Target policy taking solid with the same probability in every state."""
    if not 0.0 <= pi_solid <= 1.0:
        raise ValueError(f"pi_solid must lie in [0, 1], got {pi_solid}")
    return TabularPolicy.from_action_probs(N_STATES, [1.0 - pi_solid, pi_solid])


def original_features() -> np.ndarray:
    X = np.zeros((N_STATES, 8))
    for k in range(6):
        X[k, k] = 2.0
        X[k, 7] = 1.0
    X[HUB, 6] = 1.0
    X[HUB, 7] = 2.0
    return X


def state_features(variant: FeatureVariant | str) -> np.ndarray:
    variant = FeatureVariant(variant)
    if variant is FeatureVariant.ORIGINAL:
        return original_features()
    if variant is FeatureVariant.ONEHOT:
        return np.eye(N_STATES)
    if variant is FeatureVariant.ZEROHOT:
        return 1.0 - np.eye(N_STATES)
    X = original_features()
    X[HUB] = X[HUB - 1]
    # The last two columns are now constant across states (0 and 1).
    return X[:, :6].copy()


def state_action_features(variant: FeatureVariant | str, n_actions: int = 2) -> FeatureMap:
    """Action-blocked features: row (s, a) holds x(s) in block a, zeros elsewhere."""
    X = state_features(variant)
    n_states, k1 = X.shape
    Xt = np.zeros((n_states * n_actions, n_actions * k1))
    for s in range(n_states):
        for a in range(n_actions):
            Xt[s * n_actions + a, a * k1:(a + 1) * k1] = X[s]
    return FeatureMap(X, Xt)
