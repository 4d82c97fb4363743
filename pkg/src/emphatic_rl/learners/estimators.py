"""scikit-learn style wrappers around the online learners.

Every estimator consumes a batch of transitions in ``fit``/``partial_fit``
(one row per time step) and predicts with its linear weights. ``fit`` starts
from fresh weights; ``partial_fit`` continues from the current weights and
step counter, so splitting a trajectory across calls is equivalent to one
call.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, check_random_state

from . import _kernels as K
from ._validation import check_features, check_transition_arrays
from .schedules import as_schedule
from .steps import DivergenceError, EtdState, GemState, Gq2State

_NO_EVAL = np.zeros((0, 1))
_NO_VEC = np.zeros(0)


def _stack_rows(X, X_next):
    n = X.shape[0]
    feat = np.ascontiguousarray(np.vstack([X, X_next]))
    return feat, np.arange(n, dtype=np.int64), np.arange(n, 2 * n, dtype=np.int64)


def _init_weights(kind, n_features, random_state):
    if not isinstance(kind, str):
        w = np.array(kind, dtype=float)
        if w.shape != (n_features,):
            raise ValueError(f"w_init has shape {w.shape}, expected ({n_features},)")
        return w
    if kind == "zeros":
        return np.zeros(n_features)
    if kind == "normal":
        return check_random_state(random_state).standard_normal(n_features)
    raise ValueError(f"w_init must be 'normal', 'zeros' or an array, got {kind!r}")


class _Tracking:
    """Optional RMSVE tracking arguments for the value learners."""

    @staticmethod
    def unpack(track):
        if track is None:
            return _NO_EVAL, _NO_VEC, _NO_VEC
        features, target, weights = track
        return (np.ascontiguousarray(features, dtype=float), np.asarray(target, float),
                np.asarray(weights, float))


class GEM(BaseEstimator):
    """Gradient emphasis learning: a ridge-regularized gradient learner for
    the emphasis m_pi with a linear estimate X w.

    Parameters
    ----------
    eta : float
        Ridge weight. Zero is allowed for a fixed target policy; tracking a
        moving target policy requires ``eta > 0``.
    learning_rate : float or StepSchedule
    gamma : float
    w_init : {'normal', 'zeros'} or array
        Initial emphasis weights; ``'normal'`` draws them from a unit normal
        distribution using ``random_state``. The auxiliary weights start at
        zero.
    random_state : int, Generator or None
    """

    def __init__(self, eta=1e-2, learning_rate=0.1, gamma=0.99, w_init="normal",
                 random_state=None):
        self.eta = eta
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.w_init = w_init
        self.random_state = random_state

    def _reset(self, n_features):
        if self.eta < 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        self.w_ = _init_weights(self.w_init, n_features, self.random_state)
        self.kappa_ = np.zeros(n_features)
        self.t_ = 0
        self.n_features_in_ = n_features
        self.diverged_at_ = None

    def fit(self, X, X_next, rho, interest_next):
        """Run GEM over transitions (x_t, rho_t, i(S_{t+1}), x_{t+1}).

        Returns self. ``estimates_`` holds x_t^T w_t before each update.
        """
        X, X_next, (rho, interest_next) = check_transition_arrays(X, X_next, rho, interest_next)
        self._reset(X.shape[1])
        return self.partial_fit(X, X_next, rho, interest_next)

    def partial_fit(self, X, X_next, rho, interest_next):
        X, X_next, (rho, interest_next) = check_transition_arrays(X, X_next, rho, interest_next)
        if not hasattr(self, "w_"):
            self._reset(X.shape[1])
        feat, idx, idx_next = _stack_rows(X, X_next)
        self.run_indexed(feat, idx, idx_next, rho, interest_next)
        if self.diverged_at_ is not None:
            raise DivergenceError("GEM", self.diverged_at_)
        return self

    def run_indexed(self, feat, idx, idx_next, rho, interest_next):
        """Run on a feature table addressed by row indices.

        Divergence is recorded in ``diverged_at_`` rather than raised, and
        ``estimates_`` is truncated at the divergent step.
        """
        if not hasattr(self, "w_"):
            self._reset(feat.shape[1])
        alphas = as_schedule(self.learning_rate).values(idx.size, start=self.t_)
        est, bad = K.run_gem(feat, idx, idx_next, rho, interest_next, alphas, float(self.gamma),
                             float(self.eta), self.kappa_, self.w_)
        self.estimates_ = est
        self.t_ += est.size
        self.diverged_at_ = None if bad < 0 else int(self.t_ - 1)
        return self

    def predict(self, X):
        """Emphasis estimates X w."""
        check_is_fitted(self, "w_")
        return check_features(X, self.n_features_in_) @ self.w_

    @property
    def state_(self) -> GemState:
        check_is_fitted(self, "w_")
        return GemState(self.kappa_, self.w_, self.eta, as_schedule(self.learning_rate),
                        self.gamma, self.t_)


class GQ2(BaseEstimator):
    """Ridge-regularized GTD2-style learner for q_pi, estimate X~ u.

    Both weight vectors start at zero.
    """

    def __init__(self, eta=1e-2, learning_rate=0.1, gamma=0.99):
        self.eta = eta
        self.learning_rate = learning_rate
        self.gamma = gamma

    def _reset(self, n_features):
        if self.eta < 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        self.u_ = np.zeros(n_features)
        self.kappa_ = np.zeros(n_features)
        self.t_ = 0
        self.n_features_in_ = n_features
        self.diverged_at_ = None

    def fit(self, X_sa, reward, rho_next, X_sa_next):
        """Transitions (x~_t, R_{t+1}, rho_{t+1}, x~_{t+1}); rho_{t+1} uses the
        already-sampled next action."""
        X_sa, X_sa_next, (reward, rho_next) = check_transition_arrays(X_sa, X_sa_next, reward,
                                                                      rho_next)
        self._reset(X_sa.shape[1])
        return self.partial_fit(X_sa, reward, rho_next, X_sa_next)

    def partial_fit(self, X_sa, reward, rho_next, X_sa_next):
        X_sa, X_sa_next, (reward, rho_next) = check_transition_arrays(X_sa, X_sa_next, reward,
                                                                      rho_next)
        if not hasattr(self, "u_"):
            self._reset(X_sa.shape[1])
        feat, idx, idx_next = _stack_rows(X_sa, X_sa_next)
        self.run_indexed(feat, idx, idx_next, reward, rho_next)
        if self.diverged_at_ is not None:
            raise DivergenceError("GQ2", self.diverged_at_)
        return self

    def run_indexed(self, feat, idx, idx_next, reward, rho_next):
        if not hasattr(self, "u_"):
            self._reset(feat.shape[1])
        alphas = as_schedule(self.learning_rate).values(idx.size, start=self.t_)
        est, bad = K.run_gq2(feat, idx, idx_next, reward, rho_next, alphas, float(self.gamma),
                             float(self.eta), self.kappa_, self.u_)
        self.estimates_ = est
        self.t_ += est.size
        self.diverged_at_ = None if bad < 0 else int(self.t_ - 1)
        return self

    def predict(self, X_sa):
        check_is_fitted(self, "u_")
        return check_features(X_sa, self.n_features_in_) @ self.u_

    @property
    def state_(self) -> Gq2State:
        check_is_fitted(self, "u_")
        return Gq2State(self.kappa_, self.u_, self.eta, as_schedule(self.learning_rate),
                        self.gamma, self.t_)


class FollowonTrace(BaseEstimator):
    """The scalar followon trace M_t = i(S_t) + gamma rho_{t-1} M_{t-1}, M_{-1} = 0."""

    def __init__(self, gamma=0.99):
        self.gamma = gamma

    def fit(self, interest, rho):
        """``interest[t]`` is i(S_t); ``rho[t]`` is rho_t. Sets ``trace_``."""
        for attr in ("m_prev_", "rho_prev_"):
            if hasattr(self, attr):
                delattr(self, attr)
        return self.partial_fit(interest, rho)

    def partial_fit(self, interest, rho):
        _, _, (interest, rho) = check_transition_arrays(None, None, interest, rho)
        m_prev = getattr(self, "m_prev_", 0.0)
        rho_prev = getattr(self, "rho_prev_", 0.0)
        self.trace_ = K.run_followon(interest, rho, float(self.gamma), m_prev, rho_prev)
        if self.trace_.size:
            self.m_prev_ = float(self.trace_[-1])
            self.rho_prev_ = float(rho[-1])
        return self


class ETD0(BaseEstimator):
    """Emphatic TD(0) with the followon trace as emphasis; weights start at zero."""

    def __init__(self, learning_rate=0.01, gamma=0.99):
        self.learning_rate = learning_rate
        self.gamma = gamma

    def _reset(self, n_features):
        self.nu_ = np.zeros(n_features)
        self.t_ = 0
        self.m_prev_ = 0.0
        self.rho_prev_ = 0.0
        self.n_features_in_ = n_features
        self.diverged_at_ = None

    def fit(self, X, rho, reward, X_next, interest):
        """Transitions (x_t, rho_t, R_{t+1}, x_{t+1}, i(S_t))."""
        X, X_next, (rho, reward, interest) = check_transition_arrays(X, X_next, rho, reward,
                                                                     interest)
        self._reset(X.shape[1])
        return self.partial_fit(X, rho, reward, X_next, interest)

    def partial_fit(self, X, rho, reward, X_next, interest):
        X, X_next, (rho, reward, interest) = check_transition_arrays(X, X_next, rho, reward,
                                                                     interest)
        if not hasattr(self, "nu_"):
            self._reset(X.shape[1])
        feat, idx, idx_next = _stack_rows(X, X_next)
        self.run_indexed(feat, idx, idx_next, rho, reward, interest)
        if self.diverged_at_ is not None:
            raise DivergenceError("ETD(0)", self.diverged_at_)
        return self

    def run_indexed(self, feat, idx, idx_next, rho, reward, interest, track=None):
        """``track = (features, v_pi, d_mu)`` records per-step RMSVE in ``rmsve_``."""
        if not hasattr(self, "nu_"):
            self._reset(feat.shape[1])
        trace = K.run_followon(interest, rho, float(self.gamma), self.m_prev_, self.rho_prev_)
        alphas = as_schedule(self.learning_rate).values(idx.size, start=self.t_)
        err, bad = K.run_etd(feat, idx, idx_next, rho, reward, trace, alphas, float(self.gamma),
                             self.nu_, *_Tracking.unpack(track))
        n_done = idx.size if bad < 0 else bad + 1
        self.followon_ = trace[:n_done]
        self.rmsve_ = err
        if n_done:
            self.m_prev_ = float(trace[n_done - 1])
            self.rho_prev_ = float(rho[n_done - 1])
        self.t_ += n_done
        self.diverged_at_ = None if bad < 0 else int(self.t_ - 1)
        return self

    def predict(self, X):
        check_is_fitted(self, "nu_")
        return check_features(X, self.n_features_in_) @ self.nu_

    @property
    def state_(self) -> EtdState:
        check_is_fitted(self, "nu_")
        return EtdState(self.nu_, as_schedule(self.learning_rate), self.gamma, self.m_prev_,
                        self.rho_prev_, self.t_)


class GEMETD0(BaseEstimator):
    """ETD(0) whose emphasis weight is a GEM estimate w_t^T x_t instead of the
    followon trace.

    ``learning_rate`` drives GEM and ``nu_learning_rate`` the value weights.
    """

    def __init__(self, eta=1e-2, learning_rate=0.025, nu_learning_rate=0.01, gamma=0.99,
                 w_init="normal", random_state=None):
        self.eta = eta
        self.learning_rate = learning_rate
        self.nu_learning_rate = nu_learning_rate
        self.gamma = gamma
        self.w_init = w_init
        self.random_state = random_state

    def _reset(self, n_features):
        if self.eta < 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        self.w_ = _init_weights(self.w_init, n_features, self.random_state)
        self.kappa_ = np.zeros(n_features)
        self.nu_ = np.zeros(n_features)
        self.t_ = 0
        self.n_features_in_ = n_features
        self.diverged_at_ = None

    def fit(self, X, rho, reward, interest_next, X_next):
        X, X_next, (rho, reward, interest_next) = check_transition_arrays(
            X, X_next, rho, reward, interest_next)
        self._reset(X.shape[1])
        return self.partial_fit(X, rho, reward, interest_next, X_next)

    def partial_fit(self, X, rho, reward, interest_next, X_next):
        X, X_next, (rho, reward, interest_next) = check_transition_arrays(
            X, X_next, rho, reward, interest_next)
        if not hasattr(self, "nu_"):
            self._reset(X.shape[1])
        feat, idx, idx_next = _stack_rows(X, X_next)
        self.run_indexed(feat, idx, idx_next, rho, reward, interest_next)
        if self.diverged_at_ is not None:
            raise DivergenceError("GEM-ETD(0)", self.diverged_at_)
        return self

    def run_indexed(self, feat, idx, idx_next, rho, reward, interest_next, track=None):
        if not hasattr(self, "nu_"):
            self._reset(feat.shape[1])
        n = idx.size
        a1 = as_schedule(self.learning_rate).values(n, start=self.t_)
        a2 = as_schedule(self.nu_learning_rate).values(n, start=self.t_)
        err, emph, bad = K.run_gem_etd(feat, idx, idx_next, rho, reward, interest_next, a1, a2,
                                       float(self.gamma), float(self.eta), self.kappa_, self.w_,
                                       self.nu_, *_Tracking.unpack(track))
        self.rmsve_ = err
        self.emphasis_ = emph
        self.t_ += emph.size
        self.diverged_at_ = None if bad < 0 else int(self.t_ - 1)
        return self

    def predict(self, X):
        """Value estimates X nu."""
        check_is_fitted(self, "nu_")
        return check_features(X, self.n_features_in_) @ self.nu_

    def predict_emphasis(self, X):
        check_is_fitted(self, "w_")
        return check_features(X, self.n_features_in_) @ self.w_


class SemiGradientEmphasis(BaseEstimator):
    """The semi-gradient emphasis update; unstable off the tabular case."""

    def __init__(self, learning_rate=0.01, gamma=0.99, w_init="zeros", random_state=None):
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.w_init = w_init
        self.random_state = random_state

    def fit(self, X, X_next, rho, interest_next):
        X, X_next, (rho, interest_next) = check_transition_arrays(X, X_next, rho, interest_next)
        self.w_ = _init_weights(self.w_init, X.shape[1], self.random_state)
        self.t_ = 0
        self.n_features_in_ = X.shape[1]
        return self.partial_fit(X, X_next, rho, interest_next)

    def partial_fit(self, X, X_next, rho, interest_next, raise_on_divergence=True):
        X, X_next, (rho, interest_next) = check_transition_arrays(X, X_next, rho, interest_next)
        if not hasattr(self, "w_"):
            return self.fit(X, X_next, rho, interest_next)
        feat, idx, idx_next = _stack_rows(X, X_next)
        alphas = as_schedule(self.learning_rate).values(idx.size, start=self.t_)
        est, bad = K.run_semi_gradient(feat, idx, idx_next, rho, interest_next, alphas,
                                       float(self.gamma), self.w_)
        self.estimates_ = est
        self.t_ += est.size
        self.diverged_at_ = None if bad < 0 else int(self.t_ - 1)
        if self.diverged_at_ is not None and raise_on_divergence:
            raise DivergenceError("semi-gradient emphasis", self.diverged_at_)
        return self

    def predict(self, X):
        check_is_fitted(self, "w_")
        return check_features(X, self.n_features_in_) @ self.w_
