"""Emphasis learning and convergent off-policy actor-critic on finite MDPs."""
from .environments import FeatureVariant, baird_target, build_baird, state_action_features
from .mdp import (
    ErgodicityError,
    FeatureMap,
    FiniteMdp,
    PolicyError,
    SoftmaxPolicy,
    TabularPolicy,
    sample_step,
    sample_trajectory,
    stationary_distribution,
)

__version__ = "0.1.0"

__all__ = [
    "ErgodicityError",
    "FeatureMap",
    "FeatureVariant",
    "FiniteMdp",
    "PolicyError",
    "SoftmaxPolicy",
    "TabularPolicy",
    "baird_target",
    "build_baird",
    "sample_step",
    "sample_trajectory",
    "state_action_features",
    "stationary_distribution",
]
