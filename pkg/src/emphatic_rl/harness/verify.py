"""Numerical self-checks of the oracle: fixed-point residuals, norm and
spectral identities, the regularized block system and the exact gradient."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import oracle
from ..environments import HUB, baird_target, build_baird, state_action_features
from ..mdp import (
    FeatureMap,
    FiniteMdp,
    SoftmaxPolicy,
    TabularPolicy,
    reward_vectors,
    state_action_transition_matrix,
    transition_matrix,
)

BELLMAN_TOL = 1e-9
NORM_TOL = 1e-9
SPECTRAL_TOL = 1e-10
PROJECTED_TOL = 1e-8
DET_SLACK = 1e-9
QUADRATIC_TOL = 1e-12
GRADIENT_RTOL = 1e-4
SOLVE_TOL = 1e-8
RIDGE_GRID = (1e-4, 1e-2, 1.0)


@dataclass(frozen=True)
class Check:
    """``status`` is 'pass', 'fail' or 'skip'; ``detail`` explains a skip."""

    name: str
    status: str
    residual: float | None = None
    tolerance: float | None = None
    detail: str = ""

    @property
    def failed(self) -> bool:
        return self.status == "fail"

    def line(self) -> str:
        res = "" if self.residual is None else f" residual={self.residual:.3e}"
        tol = "" if self.tolerance is None else f" tol={self.tolerance:.0e}"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{self.status.upper():4s} {self.name}{res}{tol}{extra}"


def _check(name, residual, tol, detail="") -> Check:
    residual = float(residual)
    ok = np.isfinite(residual) and residual < tol
    return Check(name, "pass" if ok else "fail", residual, tol, detail)


def bellman_checks(mdp: FiniteMdp, mu, pi, d_mu=None) -> list[Check]:
    d = oracle.stationary_distribution(mdp, mu) if d_mu is None else d_mu
    P = transition_matrix(mdp, pi)
    Pt = state_action_transition_matrix(mdp, pi)
    r, rt = reward_vectors(mdp, pi)
    v = oracle.value_function(mdp, pi)
    q = oracle.action_value_function(mdp, pi)
    m = oracle.emphasis(mdp, mu, pi, d_mu=d)
    g = mdp.discount
    return [
        _check("bellman_v", np.abs(r + g * P @ v - v).max(), BELLMAN_TOL),
        _check("bellman_q", np.abs(rt + g * Pt @ q - q).max(), BELLMAN_TOL),
        _check("bellman_m", np.abs(oracle.operator_hat_T(mdp, mu, pi, m) - m).max(), BELLMAN_TOL),
    ]


def operator_checks(mdp: FiniteMdp, mu, pi) -> list[Check]:
    a, b = oracle.operator_norm_pair(mdp, mu, pi)
    rho = oracle.spectral_radius(oracle.reversed_operator(mdp, mu, pi))
    return [
        _check("norm_equality", abs(a - b), NORM_TOL, f"||P||_D={a:.12g}"),
        _check("reversed_spectral_radius", abs(rho - mdp.discount), SPECTRAL_TOL),
    ]


def projected_fixed_point_check(mdp: FiniteMdp, mu, pi, X: np.ndarray, d_mu=None) -> Check:
    """X w*(0) is a fixed point of the projected reversed operator."""
    d = oracle.stationary_distribution(mdp, mu) if d_mu is None else d_mu
    if oracle.gem_system(mdp, mu, pi, X, eta=1.0, d_mu=d).c_singular:
        return Check("projected_fixed_point", "skip",
                     detail="C singular: projection uses the pseudo-inverse")
    try:
        sys = oracle.gem_system(mdp, mu, pi, X, eta=0.0, d_mu=d)
    except oracle.SingularSystemError:
        return Check("projected_fixed_point", "skip",
                     detail="A(theta) singular: no unique eta = 0 fixed point")
    y = X @ sys.w
    Pi = oracle.projection(X, d)
    return _check("projected_fixed_point",
                  np.abs(Pi @ oracle.operator_hat_T(mdp, mu, pi, y) - y).max(), PROJECTED_TOL)


def ridge_checks(mdp: FiniteMdp, mu, pi, X: np.ndarray, rng: np.random.Generator,
                 etas=RIDGE_GRID, n_vectors: int = 100, d_mu=None) -> list[Check]:
    """Invertibility and determinant bound of the block matrix G, and the
    identity d^T G d = kappa^T C kappa + eta w^T w."""
    d = oracle.stationary_distribution(mdp, mu) if d_mu is None else d_mu
    out = []
    for eta in etas:
        try:
            sys = oracle.gem_system(mdp, mu, pi, X, eta, d_mu=d)
        except oracle.SingularSystemError as exc:
            out.append(Check(f"ridge_solve[eta={eta:g}]", "fail", detail=str(exc)))
            continue
        k = sys.A.shape[0]
        G, C = sys.G, sys.C
        c_pd = np.linalg.eigvalsh(C).min() > oracle.PINV_RTOL * np.abs(C).max()
        if c_pd:
            det_g = np.linalg.det(G)
            bound = eta ** k * np.linalg.det(C)
            out.append(_check(f"ridge_det_bound[eta={eta:g}]", max(0.0, bound - det_g), DET_SLACK,
                              f"det(G)={det_g:.3e} bound={bound:.3e}"))
        else:
            out.append(Check(f"ridge_det_bound[eta={eta:g}]", "skip", detail="C not positive definite"))
        vecs = rng.standard_normal((n_vectors, 2 * k))
        worst = 0.0
        for v in vecs:
            kappa, w = v[:k], v[k:]
            lhs = v @ G @ v
            rhs = kappa @ C @ kappa + eta * w @ w
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs)))
        out.append(_check(f"ridge_quadratic_form[eta={eta:g}]", worst, QUADRATIC_TOL))
        if not sys.c_singular:
            resid = np.abs(G @ np.concatenate([sys.kappa, sys.w]) - sys.h).max()
            out.append(_check(f"ridge_solve[eta={eta:g}]", resid, SOLVE_TOL))
    return out


def gradient_check(mdp: FiniteMdp, mu: TabularPolicy, rng: np.random.Generator,
                   n_theta: int = 20, scale: float = 1.0) -> Check:
    """Worst relative error of the exact gradient against central differences
    over random logits."""
    n_states, n_actions = mu.probs.shape
    d = oracle.stationary_distribution(mdp, mu)
    worst = 0.0
    for _ in range(n_theta):
        theta = scale * rng.standard_normal(n_states * n_actions)
        _, grad = oracle.policy_gradient(mdp, mu, SoftmaxPolicy(theta, n_states, n_actions), d)
        fd = oracle.finite_difference_gradient(mdp, mu, theta, n_states, n_actions)
        worst = max(worst, np.linalg.norm(grad - fd) / max(np.linalg.norm(grad), 1e-12))
    return _check("gradient_finite_difference", worst, GRADIENT_RTOL)


def verify_oracle(mdp: FiniteMdp, mu: TabularPolicy, pi, features: FeatureMap,
                  rng: np.random.Generator, etas=RIDGE_GRID, n_theta: int = 20) -> list[Check]:
    """Every oracle self-check for one configuration."""
    d = oracle.stationary_distribution(mdp, mu)
    X = features.state_features
    checks = bellman_checks(mdp, mu, pi, d)
    checks += operator_checks(mdp, mu, pi)
    checks.append(projected_fixed_point_check(mdp, mu, pi, X, d))
    checks += ridge_checks(mdp, mu, pi, X, rng, etas, d_mu=d)
    if n_theta:
        checks.append(gradient_check(mdp, mu, rng, n_theta))
    return checks


def baird_reference_checks(gamma: float = 0.99) -> list[Check]:
    """Hand-derived Baird quantities (require gamma = 0.99)."""
    mdp, mu = build_baird(gamma)
    d = oracle.stationary_distribution(mdp, mu)
    out = [_check("baird_d_mu", np.abs(d - 1 / 7).max(), BELLMAN_TOL)]
    if gamma != 0.99:
        out.append(Check("baird_reference_values", "skip", detail="values derived for gamma=0.99"))
        return out
    m1 = oracle.emphasis(mdp, mu, baird_target(1.0))
    out.append(_check("baird_m_hub_solid", abs(m1[HUB] - 694.0), BELLMAN_TOL))
    m = oracle.emphasis(mdp, mu, baird_target(0.1))
    expected = np.r_[np.full(6, 104.95), 70.3]
    out.append(_check("baird_m_pi0.1", np.abs(m - expected).max(), BELLMAN_TOL))
    out.append(_check("baird_m_sum_pi0.1", abs(m.sum() - 700.0), BELLMAN_TOL))
    pi = baird_target(0.05)
    v = oracle.value_function(mdp, pi)
    out.append(_check("baird_v_pi0.05", np.abs(v - 95.0).max(), BELLMAN_TOL))
    out.append(_check("baird_J_pi0.05", abs(oracle.excursion_objective(mdp, mu, pi) - 95.0),
                      BELLMAN_TOL))
    return out


@dataclass
class VerifyResult:
    checks: list[Check]
    report: list[tuple[str, object]]

    @property
    def passed(self) -> bool:
        return not any(c.failed for c in self.checks)


def run_oracle_verify(config) -> VerifyResult:
    """All oracle self-checks on Baird for the configured features, target
    and ridge weight, plus the flat report of oracle quantities.

    A configuration whose linear systems have no unique solution (eta = 0
    with singular A) is reported as a failed ``system_solvable`` check.
    """
    cfg = config.resolved()
    mdp, mu = build_baird(cfg.gamma)
    pi = baird_target(cfg.pi_solid)
    features = state_action_features(cfg.features)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 0]))
    checks = verify_oracle(mdp, mu, pi, features, rng)
    checks += baird_reference_checks(cfg.gamma)
    gem = oracle.gem_system(mdp, mu, pi, features, max(cfg.eta, 1.0))
    checks.append(Check("gram_state", "pass",
                        detail="C singular, pseudo-inverse path" if gem.c_singular else "C nonsingular"))
    report = [("config.features", cfg.features), ("config.pi_solid", cfg.pi_solid),
              ("config.gamma", cfg.gamma), ("config.eta", cfg.eta)]
    try:
        report += list(oracle.build_report(mdp, mu, pi, features, cfg.eta).records())
        checks.append(Check(f"system_solvable[eta={cfg.eta:g}]", "pass"))
    except oracle.SingularSystemError as exc:
        checks.append(Check(f"system_solvable[eta={cfg.eta:g}]", "fail", detail=f"singular: {exc}"))
    return VerifyResult(checks, report)
