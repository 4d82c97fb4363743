import numpy as np
import pytest
from hypothesis import settings

from emphatic_rl.environments import baird_target, build_baird, state_action_features
from emphatic_rl.mdp import random_mdp, random_policy

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

VARIANTS = ("original", "onehot", "zerohot", "aliased")


@pytest.fixture
def baird():
    return build_baird(0.99)


@pytest.fixture
def onehot():
    return state_action_features("onehot")


@pytest.fixture(params=VARIANTS)
def variant(request):
    return request.param


def random_setup(seed, n_states=5, n_actions=2, discount=0.9):
    """A random dense MDP with random behavior and target policies."""
    rng = np.random.default_rng(seed)
    mdp = random_mdp(n_states, n_actions, rng, discount)
    return mdp, random_policy(n_states, n_actions, rng), random_policy(n_states, n_actions, rng)


def pi_solid(p):
    return baird_target(p)
