"""Two-timescale off-policy actor-critics over a softmax policy: COF-PAC
(emphasis from GEM, values from GQ2), ACE (followon-trace emphasis) and
Off-PAC (no emphasis)."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import oracle
from .learners import _kernels as K
from .learners.estimators import _init_weights
from .learners.schedules import StepSchedule, as_schedule, check_two_timescale
from .learners.steps import DivergenceError, GemState, Gq2State
from .mdp import FeatureMap, FiniteMdp, SoftmaxPolicy, TabularPolicy, softmax_probs


@dataclass(frozen=True)
class AdaptiveStepsize:
    """Gamma(d) = 1 if ||d|| < c0 else (1 + c0) / (1 + ||d||)."""

    c0: float = 10.0

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")

    def __call__(self, d) -> float:
        return gamma_stepsize(self, d)


def gamma_stepsize(g: AdaptiveStepsize, d) -> float:
    return float(K.adaptive_stepsize(float(np.linalg.norm(d)), g.c0))


def default_critic_schedule(alpha0: float = 0.05, t0: float = 1e3) -> StepSchedule:
    return StepSchedule.polynomial(alpha0, t0, 0.6)


def default_actor_schedule(beta0: float = 0.01, t0: float = 1e3) -> StepSchedule:
    return StepSchedule.polynomial(beta0, t0, 0.9)


@dataclass(frozen=True, eq=False)
class CofPacState:
    theta: np.ndarray
    gem: GemState
    gq2: Gq2State
    actor_schedule: StepSchedule
    c0: float
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta", np.array(self.theta, dtype=float))
        if self.gem.schedule != self.gq2.schedule:
            raise ValueError("GEM and GQ2 share one critic schedule")
        check_two_timescale(self.gem.schedule, self.actor_schedule)

    @property
    def critic_schedule(self) -> StepSchedule:
        return self.gem.schedule


class EnvTransition(NamedTuple):
    """S_t, A_t, R_{t+1}, S_{t+1} and the pre-sampled A_{t+1} ~ mu(.|S_{t+1})."""

    state: int
    action: int
    reward: float
    next_state: int
    next_action: int


def _run(mode, features, mu_probs, interest, theta, kappa, w, kt, u, trace_state, states,
         actions, rewards, alphas, betas, gamma, eta, c0, snap_every):
    return K.run_actor_critic(
        mode, np.ascontiguousarray(features.state_features),
        np.ascontiguousarray(features.state_action_features), states, actions, rewards,
        mu_probs, interest, theta, kappa, w, kt, u, trace_state, alphas, betas, gamma, eta, c0,
        snap_every)


def cofpac_step(state: CofPacState, tr: EnvTransition, features: FeatureMap,
                mu: TabularPolicy, interest: np.ndarray) -> CofPacState:
    """One pass of the COF-PAC loop body: GEM, GQ2, then the actor."""
    theta = state.theta.copy()
    kappa, w = state.gem.kappa.copy(), state.gem.w.copy()
    kt, u = state.gq2.kappa_tilde.copy(), state.gq2.u.copy()
    t = state.t
    _, _, bad = _run(
        K.COFPAC, features, mu.probs, np.asarray(interest, float), theta, kappa, w, kt, u,
        np.zeros(2), np.array([tr.state, tr.next_state], np.int64),
        np.array([tr.action, tr.next_action], np.int64), np.array([tr.reward], float),
        np.array([state.critic_schedule(t)]), np.array([state.actor_schedule(t)]),
        state.gem.gamma, state.gem.eta, state.c0, 1)
    if bad >= 0:
        raise DivergenceError("COF-PAC", t)
    return replace(state, theta=theta, gem=replace(state.gem, kappa=kappa, w=w, t=t + 1),
                   gq2=replace(state.gq2, kappa_tilde=kt, u=u, t=t + 1), t=t + 1)


def actor_increment(theta, w, u, s: int, a: int, features: FeatureMap,
                    mu: TabularPolicy) -> np.ndarray:
    """Delta = rho (w^T x(s)) (u^T x~(s, a)) grad log pi(a|s)."""
    n_states, n_actions = mu.probs.shape
    pi = SoftmaxPolicy(theta, n_states, n_actions)
    m_hat = features.state_features[s] @ w
    q_hat = features.state_action_features[s * n_actions + a] @ u
    return pi.score(mu, s, a) * m_hat * q_hat


def ace_step(theta, m_t: float, q_estimate: float, s: int, a: int, mu: TabularPolicy,
             beta: float) -> np.ndarray:
    """theta + beta M_t rho_t q(S_t, A_t) grad log pi(A_t|S_t).

    ``q_estimate`` may come from the oracle or from a critic.
    """
    n_states, n_actions = mu.probs.shape
    pi = SoftmaxPolicy(theta, n_states, n_actions)
    return pi.theta + beta * m_t * q_estimate * pi.score(mu, s, a)


def offpac_step(theta, q_estimate: float, s: int, a: int, mu: TabularPolicy,
                beta: float) -> np.ndarray:
    """theta + beta rho_t q(S_t, A_t) grad log pi(A_t|S_t); no emphasis."""
    return ace_step(theta, 1.0, q_estimate, s, a, mu, beta)


def displacement_bound(features: FeatureMap, mu: TabularPolicy, c0: float) -> float:
    """Run-constant bound on Gamma1(w) Gamma2(u) ||Delta|| for softmax actors.

    Uses rho <= 1 / min mu, Gamma(d) |d^T x| <= (1 + c0) ||x|| and
    ||grad log pi|| <= sqrt(2).
    """
    x_max = np.linalg.norm(features.state_features, axis=1).max()
    xt_max = np.linalg.norm(features.state_action_features, axis=1).max()
    return float((1.0 / mu.probs.min()) * (1.0 + c0) ** 2 * x_max * xt_max * np.sqrt(2.0))


_MODES = {"cofpac": K.COFPAC, "ace": K.ACE, "offpac": K.OFFPAC}


class COFPAC(BaseEstimator):
    """Convergent off-policy actor-critic with a linear emphasis critic (GEM)
    and a linear action-value critic (GQ2).

    ``fit`` consumes a behavior trajectory: ``states`` and ``actions`` of
    length n + 1 (the final action is A_n, sampled ahead as in the loop
    body) and ``rewards`` of length n.

    Parameters
    ----------
    features : FeatureMap
    behavior : TabularPolicy
    eta : float
        Ridge weight for both critics; must be positive.
    critic_schedule, actor_schedule : StepSchedule
        The actor schedule must decay strictly faster.
    gamma : float
    c0 : float
        Threshold of the adaptive step sizes.
    interest : array or None
        Per-state interest; ones when None.
    theta_init : array or None
        Initial logits; zeros (the uniform policy) when None.
    w_init : {'zeros', 'normal'}
    snapshot_every : int
        Logits are recorded every this many steps in ``theta_history_``.
    """

    _mode = "cofpac"

    def __init__(self, features=None, behavior=None, eta=1e-3, critic_schedule=None,
                 actor_schedule=None, gamma=0.99, c0=10.0, interest=None, theta_init=None,
                 w_init="zeros", random_state=None, snapshot_every=100):
        self.features = features
        self.behavior = behavior
        self.eta = eta
        self.critic_schedule = critic_schedule
        self.actor_schedule = actor_schedule
        self.gamma = gamma
        self.c0 = c0
        self.interest = interest
        self.theta_init = theta_init
        self.w_init = w_init
        self.random_state = random_state
        self.snapshot_every = snapshot_every

    def _schedules(self):
        critic = as_schedule(self.critic_schedule or default_critic_schedule())
        actor = as_schedule(self.actor_schedule or default_actor_schedule())
        if self._mode == "cofpac":
            check_two_timescale(critic, actor)
        return critic, actor

    def _reset(self):
        if not isinstance(self.features, FeatureMap) or not isinstance(self.behavior, TabularPolicy):
            raise TypeError("features must be a FeatureMap and behavior a TabularPolicy")
        if self._mode == "cofpac" and not self.eta > 0:
            raise ValueError("COF-PAC needs eta > 0")
        self.behavior.require_full_support()
        n_states, n_actions = self.behavior.probs.shape
        k1 = self.features.n_state_features
        k2 = self.features.n_state_action_features
        if self.theta_init is None:
            self.theta_ = np.zeros(n_states * n_actions)
        else:
            self.theta_ = np.array(self.theta_init, dtype=float)
        self.w_ = _init_weights(self.w_init, k1, self.random_state)
        self.kappa_ = np.zeros(k1)
        self.u_ = np.zeros(k2)
        self.kappa_tilde_ = np.zeros(k2)
        self.trace_state_ = np.zeros(2)
        self.t_ = 0
        self.diverged_at_ = None

    def fit(self, states, actions, rewards):
        self._reset()
        return self.partial_fit(states, actions, rewards)

    def partial_fit(self, states, actions, rewards):
        if not hasattr(self, "theta_"):
            self._reset()
        states = np.ascontiguousarray(states, dtype=np.int64)
        actions = np.ascontiguousarray(actions, dtype=np.int64)
        rewards = np.ascontiguousarray(rewards, dtype=float)
        n = rewards.size
        if states.size != n + 1 or actions.size != n + 1:
            raise ValueError("states and actions need one more entry than rewards")
        n_states, n_actions = self.behavior.probs.shape
        if states.min() < 0 or states.max() >= n_states or actions.min() < 0 \
                or actions.max() >= n_actions:
            raise ValueError("state or action index out of range")
        critic, actor = self._schedules()
        interest = np.ones(n_states) if self.interest is None else np.asarray(self.interest, float)
        snaps, disp, bad = _run(
            _MODES[self._mode], self.features, self.behavior.probs, interest, self.theta_,
            self.kappa_, self.w_, self.kappa_tilde_, self.u_, self.trace_state_, states, actions,
            rewards, critic.values(n, self.t_), actor.values(n, self.t_), float(self.gamma),
            float(self.eta), float(self.c0), int(self.snapshot_every))
        self.theta_history_ = snaps
        self.displacement_ = disp
        self.t_ += disp.size
        self.diverged_at_ = None if bad < 0 else int(self.t_ - 1)
        return self

    @property
    def policy_(self) -> SoftmaxPolicy:
        check_is_fitted(self, "theta_")
        n_states, n_actions = self.behavior.probs.shape
        return SoftmaxPolicy(self.theta_, n_states, n_actions)

    def predict_proba(self, states):
        """Target-policy action probabilities at the given state indices."""
        probs = self.policy_.probs
        return probs[np.asarray(states, dtype=np.int64)]

    @property
    def state_(self) -> CofPacState:
        check_is_fitted(self, "theta_")
        critic, actor = self._schedules()
        return CofPacState(
            self.theta_,
            GemState(self.kappa_, self.w_, self.eta, critic, self.gamma, self.t_),
            Gq2State(self.kappa_tilde_, self.u_, self.eta, critic, self.gamma, self.t_),
            actor, self.c0, self.t_)


class ACE(COFPAC):
    """Actor-critic with emphatic weightings from the followon trace; the
    actor step has no adaptive step-size factors."""

    _mode = "ace"


class OffPAC(COFPAC):
    """Off-policy actor-critic without emphasis."""

    _mode = "offpac"


class MonitorResult(NamedTuple):
    steps: np.ndarray
    grad_norm: np.ndarray
    bias_norm: np.ndarray
    gap: np.ndarray
    running_min: np.ndarray
    J: np.ndarray


def stationarity_monitor(thetas, mdp: FiniteMdp, mu: TabularPolicy, features: FeatureMap,
                     eta: float, every: int = 100) -> MonitorResult:
    """||grad J(theta)|| - ||b(theta)|| along a sequence of logit snapshots,
    with its running minimum. Snapshot k is taken at step k * every."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    n_states, n_actions = mu.probs.shape
    d = oracle.stationary_distribution(mdp, mu)
    grad_n = np.empty(len(thetas))
    bias_n = np.empty(len(thetas))
    J = np.empty(len(thetas))
    for k, theta in enumerate(thetas):
        pi = SoftmaxPolicy(theta, n_states, n_actions)
        g_hat, b, _ = oracle.bias(mdp, mu, pi, features, eta, diagnostics=False, d_mu=d)
        J[k] = oracle.excursion_objective(mdp, mu, pi, d_mu=d)
        grad_n[k] = np.linalg.norm(g_hat + b)
        bias_n[k] = np.linalg.norm(b)
    gap = grad_n - bias_n
    return MonitorResult(np.arange(len(thetas)) * every, grad_n, bias_n, gap,
                         np.minimum.accumulate(gap), J)


def policy_probs(theta, n_states: int, n_actions: int) -> np.ndarray:
    return softmax_probs(theta, n_states, n_actions)
