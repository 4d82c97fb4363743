"""Learner states and single-step transitions.

Each step function is pure: it copies the incoming state and returns a new
one. The arithmetic is the compiled batch kernel run over a one-transition
trajectory, so stepping one transition at a time reproduces a batch run
bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .schedules import StepSchedule, as_schedule


class DivergenceError(RuntimeError):
    def __init__(self, algorithm: str, step: int):
        super().__init__(f"{algorithm} diverged at step {step}")
        self.algorithm = algorithm
        self.step = step


def _ensure_finite(vec: np.ndarray, what: str) -> np.ndarray:
    vec = np.array(vec, dtype=float)
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"{what} has non-finite entries")
    return vec


@dataclass(frozen=True, eq=False)
class GemState:
    kappa: np.ndarray
    w: np.ndarray
    eta: float
    schedule: StepSchedule
    gamma: float
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kappa", _ensure_finite(self.kappa, "kappa"))
        object.__setattr__(self, "w", _ensure_finite(self.w, "w"))
        object.__setattr__(self, "schedule", as_schedule(self.schedule))
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")


@dataclass(frozen=True, eq=False)
class Gq2State:
    kappa_tilde: np.ndarray
    u: np.ndarray
    eta: float
    schedule: StepSchedule
    gamma: float
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kappa_tilde", _ensure_finite(self.kappa_tilde, "kappa_tilde"))
        object.__setattr__(self, "u", _ensure_finite(self.u, "u"))
        object.__setattr__(self, "schedule", as_schedule(self.schedule))
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")


@dataclass(frozen=True, eq=False)
class EtdState:
    """ETD(0) weights plus the followon trace M_{t-1} and ratio rho_{t-1}.

    A fresh state has ``followon = 0`` (the M_{-1} = 0 convention).
    """

    nu: np.ndarray
    schedule: StepSchedule
    gamma: float
    followon: float = 0.0
    rho_prev: float = 0.0
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "nu", _ensure_finite(self.nu, "nu"))
        object.__setattr__(self, "schedule", as_schedule(self.schedule))


class GemTransition(NamedTuple):
    x: np.ndarray
    rho: float
    interest_next: float
    x_next: np.ndarray


class Gq2Transition(NamedTuple):
    x_sa: np.ndarray
    reward: float
    rho_next: float
    x_sa_next: np.ndarray


class EtdTransition(NamedTuple):
    x: np.ndarray
    rho: float
    reward: float
    x_next: np.ndarray
    interest: float


class GemEtdTransition(NamedTuple):
    x: np.ndarray
    rho: float
    reward: float
    interest_next: float
    x_next: np.ndarray


_IDX0 = np.zeros(1, dtype=np.int64)
_IDX1 = np.ones(1, dtype=np.int64)


def _pair(x, x_next) -> np.ndarray:
    return np.vstack([np.asarray(x, float), np.asarray(x_next, float)])


def followon_step(m_prev: float, interest: float, rho_prev: float, gamma: float) -> float:
    """M_t = i(S_t) + gamma * rho_{t-1} * M_{t-1}."""
    return float(K.run_followon(np.array([interest], float), np.zeros(1), gamma,
                                float(m_prev), float(rho_prev))[0])


def gem_step(state: GemState, tr: GemTransition) -> GemState:
    kappa, w = state.kappa.copy(), state.w.copy()
    _, bad = K.run_gem(_pair(tr.x, tr.x_next), _IDX0, _IDX1, np.array([tr.rho], float),
                       np.array([tr.interest_next], float),
                       np.array([state.schedule(state.t)]), state.gamma, state.eta, kappa, w)
    if bad >= 0:
        raise DivergenceError("GEM", state.t)
    return replace(state, kappa=kappa, w=w, t=state.t + 1)


def gq2_step(state: Gq2State, tr: Gq2Transition) -> Gq2State:
    kt, u = state.kappa_tilde.copy(), state.u.copy()
    _, bad = K.run_gq2(_pair(tr.x_sa, tr.x_sa_next), _IDX0, _IDX1, np.array([tr.reward], float),
                       np.array([tr.rho_next], float), np.array([state.schedule(state.t)]),
                       state.gamma, state.eta, kt, u)
    if bad >= 0:
        raise DivergenceError("GQ2", state.t)
    return replace(state, kappa_tilde=kt, u=u, t=state.t + 1)


_NO_EVAL = np.zeros((0, 1))
_NO_VEC = np.zeros(0)


def etd0_step(state: EtdState, tr: EtdTransition) -> EtdState:
    """Update the followon trace, then nu."""
    m_t = followon_step(state.followon, tr.interest, state.rho_prev, state.gamma)
    nu = state.nu.copy()
    _, bad = K.run_etd(_pair(tr.x, tr.x_next), _IDX0, _IDX1, np.array([tr.rho], float),
                       np.array([tr.reward], float), np.array([m_t]),
                       np.array([state.schedule(state.t)]), state.gamma, nu,
                       _NO_EVAL, _NO_VEC, _NO_VEC)
    if bad >= 0:
        raise DivergenceError("ETD(0)", state.t)
    return replace(state, nu=nu, followon=m_t, rho_prev=float(tr.rho), t=state.t + 1)


def gem_etd0_step(gem: GemState, nu: np.ndarray, tr: GemEtdTransition,
                  nu_schedule) -> tuple[GemState, np.ndarray]:
    """One GEM step followed by an ETD(0) step weighted by w_t^T x_t.

    ``nu_schedule`` is indexed by the same step counter as ``gem``.
    """
    kappa, w, nu = gem.kappa.copy(), gem.w.copy(), np.array(nu, dtype=float)
    alpha2 = as_schedule(nu_schedule)(gem.t)
    _, _, bad = K.run_gem_etd(_pair(tr.x, tr.x_next), _IDX0, _IDX1, np.array([tr.rho], float),
                              np.array([tr.reward], float), np.array([tr.interest_next], float),
                              np.array([gem.schedule(gem.t)]), np.array([alpha2]), gem.gamma,
                              gem.eta, kappa, w, nu, _NO_EVAL, _NO_VEC, _NO_VEC)
    if bad >= 0:
        raise DivergenceError("GEM-ETD(0)", gem.t)
    return replace(gem, kappa=kappa, w=w, t=gem.t + 1), nu


def semi_gradient_emphasis_step(w: np.ndarray, schedule, t: int, tr: GemTransition,
                                gamma: float) -> np.ndarray:
    """w + alpha_t (i(S_{t+1}) + gamma rho_t x_t^T w - x_{t+1}^T w) x_{t+1}.

    Can diverge; kept for demonstrating exactly that.
    """
    w = np.array(w, dtype=float)
    _, bad = K.run_semi_gradient(_pair(tr.x, tr.x_next), _IDX0, _IDX1, np.array([tr.rho], float),
                                 np.array([tr.interest_next], float),
                                 np.array([as_schedule(schedule)(t)]), gamma, w)
    if bad >= 0:
        raise DivergenceError("semi-gradient emphasis", t)
    return w
