"""Closed-form ground truth for finite MDPs by dense linear algebra.

Every learner and actor test compares against the quantities computed here:
values, action values, emphasis, the expected GEM/GQ2 systems and their
regularized fixed points, the exact policy gradient and the bias of the
limiting actor update.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .mdp import (
    ErgodicityError,
    FeatureMap,
    FiniteMdp,
    SoftmaxPolicy,
    TabularPolicy,
    _probs,
    check_ergodic,
    reward_vectors,
    state_action_transition_matrix,
    stationary_distribution,
    transition_matrix,
)

PINV_RTOL = 1e-10


class SingularSystemError(np.linalg.LinAlgError):
    """A linear system required for a fixed point has no unique solution."""


def behavior_weights(mdp: FiniteMdp, mu) -> tuple[np.ndarray, np.ndarray]:
    """``(d_mu, d~_mu)`` with d~_mu(s, a) = d_mu(s) mu(a|s), flattened."""
    d = stationary_distribution(mdp, mu)
    return d, (d[:, None] * _probs(mu)).ravel()


def weighted_norm(x: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sqrt(np.sum(weights * np.asarray(x) ** 2)))


def rmsve(v_estimate, v_pi, d_mu) -> float:
    """Root mean squared value error sqrt(sum_s d(s) (v(s) - v_pi(s))^2)."""
    v_estimate, v_pi, d_mu = (np.asarray(a, dtype=float) for a in (v_estimate, v_pi, d_mu))
    if not v_estimate.shape == v_pi.shape == d_mu.shape:
        raise ValueError("rmsve arguments must have equal lengths")
    return weighted_norm(v_estimate - v_pi, d_mu)


def value_function(mdp: FiniteMdp, pi) -> np.ndarray:
    """v_pi, the solution of (I - gamma P_pi) v = r_pi."""
    P = transition_matrix(mdp, pi)
    r_pi, _ = reward_vectors(mdp, pi)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.discount * P, r_pi)


def action_value_function(mdp: FiniteMdp, pi) -> np.ndarray:
    """q_pi flattened over state-action pairs."""
    Pt = state_action_transition_matrix(mdp, pi)
    _, r_t = reward_vectors(mdp, pi)
    return np.linalg.solve(np.eye(Pt.shape[0]) - mdp.discount * Pt, r_t)


def emphasis(mdp: FiniteMdp, mu, pi, d_mu: np.ndarray | None = None) -> np.ndarray:
    """m_pi = D^-1 (I - gamma P_pi^T)^-1 D i."""
    d = stationary_distribution(mdp, mu) if d_mu is None else d_mu
    P = transition_matrix(mdp, pi)
    mbar = np.linalg.solve(np.eye(mdp.n_states) - mdp.discount * P.T, d * mdp.interest)
    return mbar / d


def reversed_operator(mdp: FiniteMdp, mu, pi, d_mu: np.ndarray | None = None) -> np.ndarray:
    """The matrix gamma D^-1 P_pi^T D."""
    d = stationary_distribution(mdp, mu) if d_mu is None else d_mu
    P = transition_matrix(mdp, pi)
    return mdp.discount * (P.T * d[None, :]) / d[:, None]


def operator_hat_T(mdp: FiniteMdp, mu, pi, y) -> np.ndarray:
    """Apply y -> i + gamma D^-1 P_pi^T D y; its unique fixed point is m_pi."""
    y = np.asarray(y, dtype=float)
    if y.shape != (mdp.n_states,):
        raise ValueError(f"y must have length {mdp.n_states}")
    return mdp.interest + reversed_operator(mdp, mu, pi) @ y


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def projection(X: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted least-squares projection X (X^T D X)^+ X^T D.

    The pseudo-inverse (relative cutoff 1e-10) covers feature sets whose Gram
    matrix is singular.
    """
    C = X.T @ (weights[:, None] * X)
    return X @ np.linalg.pinv(C, rcond=PINV_RTOL, hermitian=True) @ (X.T * weights[None, :])


def _is_singular(M: np.ndarray) -> bool:
    s = np.linalg.svd(M, compute_uv=False)
    return s[-1] <= PINV_RTOL * s[0]


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Expected driving terms of a GEM/GQ2-style learner and its fixed point.

    ``G`` is the block matrix [[C, A], [-A^T, eta I]] and ``h`` is [b; 0].
    ``kappa`` and ``w`` solve ``G [kappa; w] = h``.
    """

    A: np.ndarray
    C: np.ndarray
    b: np.ndarray
    eta: float
    G: np.ndarray
    h: np.ndarray
    kappa: np.ndarray
    w: np.ndarray
    c_singular: bool


def _solve_gtd_system(A, C, b, eta) -> LinearSystem:
    k = A.shape[0]
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    G = np.block([[C, A], [-A.T, eta * np.eye(k)]])
    h = np.concatenate([b, np.zeros(k)])
    c_singular = _is_singular(C)
    if eta == 0:
        if _is_singular(A):
            raise SingularSystemError("eta = 0 requires a nonsingular A matrix")
        w = np.linalg.solve(A, b)
        kappa = np.zeros(k) if c_singular else np.linalg.solve(C, b - A @ w)
    elif not c_singular:
        CiA = np.linalg.solve(C, A)
        w = np.linalg.solve(A.T @ CiA + eta * np.eye(k), A.T @ np.linalg.solve(C, b))
        kappa = np.linalg.solve(C, b - A @ w)
    else:
        # With singular C the kappa part is determined only up to the null
        # space of C; w stays unique for eta > 0. Minimum-norm solution.
        sol = np.linalg.lstsq(G, h, rcond=None)[0]
        kappa, w = sol[:k], sol[k:]
        if np.linalg.norm(G @ sol - h) > 1e-8 * max(1.0, np.linalg.norm(h)):
            raise SingularSystemError("GTD system with singular C has no solution")
    return LinearSystem(A, C, b, float(eta), G, h, kappa, w, c_singular)


def gem_system(mdp: FiniteMdp, mu, pi, features, eta: float,
               d_mu: np.ndarray | None = None) -> LinearSystem:
    """A(theta) = X^T (I - gamma P^T) D X, C = X^T D X, b = X^T D i and the
    ridge-regularized emphasis weights w*(eta)."""
    X = _state_features(features)
    d = stationary_distribution(mdp, mu) if d_mu is None else d_mu
    P = transition_matrix(mdp, pi)
    DX = d[:, None] * X
    C = X.T @ DX
    A = X.T @ (np.eye(mdp.n_states) - mdp.discount * P.T) @ DX
    b = X.T @ (d * mdp.interest)
    return _solve_gtd_system(A, C, b, eta)


def gq2_system(mdp: FiniteMdp, mu, pi, features, eta: float,
               d_mu: np.ndarray | None = None) -> LinearSystem:
    """A~(theta) = X~^T D~ (I - gamma P~) X~, C~ = X~^T D~ X~, b = X~^T D~ r~ and
    the ridge-regularized action-value weights u*(eta)."""
    Xt = _state_action_features(features)
    d = stationary_distribution(mdp, mu) if d_mu is None else d_mu
    dt = (d[:, None] * _probs(mu)).ravel()
    Pt = state_action_transition_matrix(mdp, pi)
    _, r_t = reward_vectors(mdp, pi)
    DXt = dt[:, None] * Xt
    C = Xt.T @ DXt
    A = DXt.T @ (np.eye(Pt.shape[0]) - mdp.discount * Pt) @ Xt
    b = DXt.T @ r_t
    return _solve_gtd_system(A, C, b, eta)


def _state_features(features) -> np.ndarray:
    return features.state_features if isinstance(features, FeatureMap) else np.asarray(features, float)


def _state_action_features(features) -> np.ndarray:
    if isinstance(features, FeatureMap):
        return features.state_action_features
    return np.asarray(features, float)


def excursion_objective(mdp: FiniteMdp, mu, pi, d_mu: np.ndarray | None = None) -> float:
    """J(pi) = sum_s d_mu(s) i(s) v_pi(s)."""
    d = stationary_distribution(mdp, mu) if d_mu is None else d_mu
    return float(np.sum(d * mdp.interest * value_function(mdp, pi)))


def policy_gradient(mdp: FiniteMdp, mu, pi: SoftmaxPolicy,
                    d_mu: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Exact ``(J(theta), grad J(theta))``.

    The gradient is the expectation of m_pi(s) psi(s, a) q_pi(s, a) under
    s ~ d_mu, a ~ mu(.|s).
    """
    d = stationary_distribution(mdp, mu) if d_mu is None else d_mu
    v = value_function(mdp, pi)
    J = float(np.sum(d * mdp.interest * v))
    m = emphasis(mdp, mu, pi, d_mu=d)
    q = action_value_function(mdp, pi)
    psi = pi.score_table(mu)
    weight = (d * m)[:, None] * _probs(mu)
    grad = psi.T @ (weight.ravel() * q)
    return J, grad


def finite_difference_gradient(mdp: FiniteMdp, mu, theta: np.ndarray, n_states: int,
                               n_actions: int, rel_step: float = 1e-5) -> np.ndarray:
    """Central differences of J with step 1e-5 * max(1, |theta_k|)."""
    theta = np.asarray(theta, dtype=float)
    d = stationary_distribution(mdp, mu)
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        h = rel_step * max(1.0, abs(theta[k]))
        up, down = theta.copy(), theta.copy()
        up[k] += h
        down[k] -= h
        j_up = excursion_objective(mdp, mu, SoftmaxPolicy(up, n_states, n_actions), d)
        j_down = excursion_objective(mdp, mu, SoftmaxPolicy(down, n_states, n_actions), d)
        grad[k] = (j_up - j_down) / (2 * h)
    return grad


@dataclass(frozen=True)
class BiasDiagnostics:
    """Components of the bias bound; the bound's constants are not computed."""

    residual_m: float
    residual_q: float
    target_ergodic: bool
    d_theta: np.ndarray | None
    cond_state: float
    cond_state_action: float
    f_min_eig: float
    f_tilde_min_eig: float
    bias_norm: float


def limiting_actor_update(mdp: FiniteMdp, mu, pi: SoftmaxPolicy, features: FeatureMap,
                          w: np.ndarray, u: np.ndarray,
                          d_mu: np.ndarray | None = None) -> np.ndarray:
    """sum_s d(s) (x(s)^T w) sum_a mu(a|s) psi(s, a) (x~(s, a)^T u)."""
    d = stationary_distribution(mdp, mu) if d_mu is None else d_mu
    m_hat = features.state_features @ w
    q_hat = features.state_action_features @ u
    weight = (d * m_hat)[:, None] * _probs(mu)
    return pi.score_table(mu).T @ (weight.ravel() * q_hat)


def bias(mdp: FiniteMdp, mu, pi: SoftmaxPolicy, features: FeatureMap, eta: float,
         diagnostics: bool = True, d_mu: np.ndarray | None = None):
    """``(g_hat, b, diag)`` where b = grad J - g_hat.

    ``diag`` is ``None`` when ``diagnostics`` is false.
    """
    d = stationary_distribution(mdp, mu) if d_mu is None else d_mu
    gem = gem_system(mdp, mu, pi, features, eta, d_mu=d)
    gq = gq2_system(mdp, mu, pi, features, eta, d_mu=d)
    g_hat = limiting_actor_update(mdp, mu, pi, features, gem.w, gq.w, d_mu=d)
    _, grad = policy_gradient(mdp, mu, pi, d_mu=d)
    b = grad - g_hat
    if not diagnostics:
        return g_hat, b, None
    return g_hat, b, bias_diagnostics(mdp, mu, pi, features, b, d_mu=d)


def bias_diagnostics(mdp: FiniteMdp, mu, pi, features: FeatureMap, b: np.ndarray,
                     d_mu: np.ndarray | None = None) -> BiasDiagnostics:
    d = stationary_distribution(mdp, mu) if d_mu is None else d_mu
    dt = (d[:, None] * _probs(mu)).ravel()
    X, Xt = features.state_features, features.state_action_features
    m = emphasis(mdp, mu, pi, d_mu=d)
    q = action_value_function(mdp, pi)
    res_m = weighted_norm(m - projection(X, d) @ m, d)
    res_q = weighted_norm(q - projection(Xt, dt) @ q, dt)

    P = transition_matrix(mdp, pi)
    Pt = state_action_transition_matrix(mdp, pi)
    C = X.T @ (d[:, None] * X)
    Ct = Xt.T @ (dt[:, None] * Xt)
    cross = X.T @ P.T @ (d[:, None] * X)
    cross_t = Xt.T @ (dt[:, None] * Pt) @ Xt
    F = np.block([[C, cross], [cross.T, C]])
    Ft = np.block([[Ct, cross_t], [cross_t.T, Ct]])

    try:
        check_ergodic(P)
        d_theta = stationary_distribution(mdp, pi)
        ergodic = True
    except ErgodicityError:
        d_theta, ergodic = None, False
    if ergodic:
        # Both matrices are diagonal, so the l2 condition number is max/min.
        r = np.sqrt(d_theta / d)
        rt = np.sqrt((d_theta[:, None] * _probs(pi)).ravel() / dt)
        cond = float(r.max() / r.min())
        cond_t = float(rt.max() / rt.min()) if rt.min() > 0 else float("inf")
    else:
        cond = cond_t = float("nan")
    return BiasDiagnostics(
        residual_m=res_m,
        residual_q=res_q,
        target_ergodic=ergodic,
        d_theta=d_theta,
        cond_state=cond,
        cond_state_action=cond_t,
        f_min_eig=float(np.linalg.eigvalsh(F).min()),
        f_tilde_min_eig=float(np.linalg.eigvalsh(Ft).min()),
        bias_norm=float(np.linalg.norm(b)),
    )


def operator_norm_pair(mdp: FiniteMdp, mu, pi) -> tuple[float, float]:
    """``(||P_pi||_D, ||D^-1 P_pi^T D||_D)`` as spectral norms of the
    similarity-transformed matrices."""
    d = stationary_distribution(mdp, mu)
    P = transition_matrix(mdp, pi)
    sq = np.sqrt(d)
    left = sq[:, None] * P / sq[None, :]
    right = P.T * sq[None, :] / sq[:, None]
    return float(np.linalg.norm(left, 2)), float(np.linalg.norm(right, 2))


def semi_gradient_stability(mdp: FiniteMdp, mu, pi, X: np.ndarray) -> tuple[np.ndarray, bool]:
    """Eigenvalues of the expected semi-gradient emphasis update matrix.

    The expected update is ``X^T D i - A(theta) w``; the returned eigenvalues
    are those of ``-A(theta)``. The configuration is stable only when all of
    them have negative real part (a zero eigenvalue, as with singular A,
    counts as not stable).
    """
    sys = gem_system(mdp, mu, pi, X, eta=1.0)
    eig = np.linalg.eigvals(-sys.A)
    tol = PINV_RTOL * max(1.0, np.abs(eig).max())
    return eig, bool(np.all(eig.real < -tol))


@dataclass(frozen=True, eq=False)
class OracleReport:
    d_mu: np.ndarray
    d_mu_sa: np.ndarray
    P: np.ndarray
    P_sa: np.ndarray
    v: np.ndarray
    q: np.ndarray
    m: np.ndarray
    Pi: np.ndarray
    Pi_sa: np.ndarray
    gem: LinearSystem
    gq2: LinearSystem
    J: float | None
    grad_J: np.ndarray | None
    g_hat: np.ndarray | None
    b: np.ndarray | None

    def records(self):
        """Flat ``(key, value)`` pairs; arrays become nested lists."""
        out = {}
        for name in ("d_mu", "d_mu_sa", "P", "P_sa", "v", "q", "m", "Pi", "Pi_sa", "J", "grad_J",
                     "g_hat", "b"):
            out[name] = getattr(self, name)
        for prefix, sys in (("gem", self.gem), ("gq2", self.gq2)):
            for key, value in asdict(sys).items():
                out[f"{prefix}.{key}"] = value
        for key, value in out.items():
            if isinstance(value, np.ndarray):
                value = value.tolist()
            elif isinstance(value, np.generic):
                value = value.item()
            yield key, value


def build_report(mdp: FiniteMdp, mu: TabularPolicy, pi, features: FeatureMap,
                 eta: float) -> OracleReport:
    """Every oracle quantity for one (MDP, mu, pi, features, eta)."""
    d, dt = behavior_weights(mdp, mu)
    gem = gem_system(mdp, mu, pi, features, eta, d_mu=d)
    gq = gq2_system(mdp, mu, pi, features, eta, d_mu=d)
    J = grad = g_hat = b = None
    if isinstance(pi, SoftmaxPolicy):
        J, grad = policy_gradient(mdp, mu, pi, d_mu=d)
        g_hat = limiting_actor_update(mdp, mu, pi, features, gem.w, gq.w, d_mu=d)
        b = grad - g_hat
    return OracleReport(
        d_mu=d,
        d_mu_sa=dt,
        P=transition_matrix(mdp, pi),
        P_sa=state_action_transition_matrix(mdp, pi),
        v=value_function(mdp, pi),
        q=action_value_function(mdp, pi),
        m=emphasis(mdp, mu, pi, d_mu=d),
        Pi=projection(features.state_features, d),
        Pi_sa=projection(features.state_action_features, dt),
        gem=gem,
        gq2=gq,
        J=J,
        grad_J=grad,
        g_hat=g_hat,
        b=b,
    )
