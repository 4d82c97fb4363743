from .estimators import ETD0, GEM, GEMETD0, GQ2, FollowonTrace, SemiGradientEmphasis
from .schedules import StepSchedule, as_schedule, check_two_timescale
from .steps import (
    DivergenceError,
    EtdState,
    EtdTransition,
    GemEtdTransition,
    GemState,
    GemTransition,
    Gq2State,
    Gq2Transition,
    etd0_step,
    followon_step,
    gem_etd0_step,
    gem_step,
    gq2_step,
    semi_gradient_emphasis_step,
)

__all__ = [
    "DivergenceError",
    "ETD0",
    "EtdState",
    "EtdTransition",
    "FollowonTrace",
    "GEM",
    "GEMETD0",
    "GQ2",
    "GemEtdTransition",
    "GemState",
    "GemTransition",
    "Gq2State",
    "Gq2Transition",
    "SemiGradientEmphasis",
    "StepSchedule",
    "as_schedule",
    "check_two_timescale",
    "etd0_step",
    "followon_step",
    "gem_etd0_step",
    "gem_step",
    "gq2_step",
    "semi_gradient_emphasis_step",
]
