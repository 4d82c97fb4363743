"""Seeded, sweepable experiments on Baird's counterexample.

Run ``k`` of an experiment draws its trajectory from
``default_rng(SeedSequence([master_seed, k]))`` and any random initial weights
from ``default_rng(SeedSequence([master_seed, k, 1]))``. Every algorithm and
learning rate in a sweep therefore sees the same trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from .. import oracle
from ..actor_critic import ACE, COFPAC, OffPAC, stationarity_monitor
from ..environments import DASHED, baird_target, build_baird, state_action_features, state_features
from ..learners import ETD0, GEM, GEMETD0, GQ2, StepSchedule
from ..learners._kernels import run_followon
from ..mdp import SoftmaxPolicy, ratio_table, sample_trajectory
from .records import Curve, RunSeries, log_steps, summarize_run

EXPERIMENTS = ("emphasis", "policy-eval", "control", "oracle-verify")
EMPHASIS_SWEEP = tuple(0.1 * 2.0 ** k for k in range(1, -7, -1))
POLICY_EVAL_SWEEP = tuple(0.1 * 2.0 ** k for k in range(0, -20, -1))

_DEFAULTS = {
    "emphasis": dict(pi_solid=0.1, eta=0.0, steps=100_000),
    "policy-eval": dict(pi_solid=0.05, eta=0.0, alpha=0.025, steps=100_000),
    "control": dict(eta=1e-3, alpha=0.2, beta=0.02, features="onehot", steps=100_000),
    "oracle-verify": dict(pi_solid=0.1, eta=1e-2, steps=1, runs=1),
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for one harness invocation; ``None`` fields take the
    experiment's default."""

    experiment: str
    features: str = "onehot"
    pi_solid: float | None = None
    gamma: float = 0.99
    eta: float | None = None
    alpha: float | None = None
    alpha2: float | None = None
    beta: float | None = None
    c0: float = 10.0
    steps: int | None = None
    runs: int = 30
    master_seed: int = 0
    sweep: tuple[float, ...] | None = None
    out: str | None = None
    log_every: int | None = None
    snapshot_every: int = 100
    n_jobs: int = 1
    window: int = 1000

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.steps is not None and self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.sweep is not None and (len(self.sweep) == 0 or min(self.sweep) <= 0):
            raise ConfigError("sweep values must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.pi_solid is not None and not 0.0 <= self.pi_solid <= 1.0:
            raise ConfigError("pi_solid must lie in [0, 1]")
        if self.eta is not None and self.eta < 0:
            raise ConfigError("eta must be nonnegative")
        for name in ("alpha", "alpha2", "beta"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.log_every is not None and self.log_every < 1:
            raise ConfigError("log_every must be >= 1")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be >= 1")
        try:
            state_features(self.features)
        except ValueError:
            raise ConfigError(f"unknown feature set {self.features!r}") from None

    def resolved(self) -> "ExperimentConfig":
        """Fill unset fields with the experiment defaults."""
        updates = {k: v for k, v in _DEFAULTS[self.experiment].items()
                   if getattr(self, k) is None or (k == "features" and self.features is None)}
        return replace(self, **updates)


def run_generators(master_seed: int, k: int) -> tuple[np.random.Generator, np.random.Generator]:
    """``(trajectory_rng, init_rng)`` for run ``k``."""
    return (np.random.default_rng(np.random.SeedSequence([master_seed, k])),
            np.random.default_rng(np.random.SeedSequence([master_seed, k, 1])))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    curves: list[Curve]
    summary: dict = field(default_factory=dict)

    def records(self):
        for curve in self.curves:
            yield from curve.records(self.config.experiment, self.config.features)

    def curves_for(self, algorithm: str) -> list[Curve]:
        return [c for c in self.curves if c.algorithm == algorithm]

    def best(self, algorithm: str) -> Curve:
        """The setting with the smallest AUC of the mean curve."""
        return min(self.curves_for(algorithm), key=lambda c: c.auc)

    def best_final(self, algorithm: str, key: str = "final_trailing") -> Curve:
        """The setting with the smallest across-run mean of a final statistic,
        among settings with at least one non-divergent run."""
        ok = [c for c in self.curves_for(algorithm) if c.ok_runs]
        if not ok:
            raise ValueError(f"every {algorithm} setting diverged")
        return min(ok, key=lambda c: c.final_stats(key)[0])

    @property
    def all_diverged(self) -> bool:
        return all(not c.ok_runs for c in self.curves)


def _map_runs(fn, runs: int, n_jobs: int, *args):
    if n_jobs == 1:
        return [fn(k, *args) for k in range(runs)]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(k, *args) for k in range(runs))


def _collect(per_run: list[list[tuple[tuple, RunSeries]]]) -> list[Curve]:
    curves: dict[tuple, Curve] = {}
    for run_items in per_run:
        for key, series in run_items:
            if key not in curves:
                curves[key] = Curve(*key)
            curves[key].runs.append(series)
    return list(curves.values())


def _transitions(mdp, mu, pi, n_steps, traj_rng):
    traj = sample_trajectory(mdp, mu, n_steps, traj_rng)
    s, a = traj.states, traj.actions
    rho = ratio_table(pi, mu)[s[:-1], a[:-1]]
    return traj, s[:-1].copy(), s[1:].copy(), rho


# --- emphasis approximation ------------------------------------------------


def _emphasis_run(k, cfg: ExperimentConfig, sweep):
    mdp, mu = build_baird(cfg.gamma)
    pi = baird_target(cfg.pi_solid)
    X = state_features(cfg.features)
    m = oracle.emphasis(mdp, mu, pi)
    traj_rng, init_rng = run_generators(cfg.master_seed, k)
    traj, idx, idx_next, rho = _transitions(mdp, mu, pi, cfg.steps, traj_rng)
    w0 = init_rng.standard_normal(X.shape[1])
    steps = log_steps(cfg.steps, cfg.log_every)
    target = m[idx]

    out = []
    trace = run_followon(mdp.interest[idx], rho, cfg.gamma, 0.0, 0.0)
    out.append((("followon", None, None),
                 summarize_run(k, {"error": np.abs(trace - target)}, "error", steps, cfg.steps,
                               None, window=cfg.window)))
    for lr in sweep:
        gem = GEM(eta=cfg.eta, learning_rate=lr, gamma=cfg.gamma, w_init=w0)
        gem.run_indexed(X, idx, idx_next, rho, mdp.interest[idx_next])
        err = np.abs(gem.estimates_ - target[:gem.estimates_.size])
        out.append((("GEM", lr, None),
                    summarize_run(k, {"error": err}, "error", steps, cfg.steps, gem.diverged_at_,
                                  window=cfg.window)))
    return out


def run_emphasis_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Followon trace versus GEM as estimates of the emphasis m_pi(S_t).

    The per-step metric is |estimate - m_pi(S_t)|; GEM is swept over its
    constant learning rate.
    """
    cfg = config.resolved()
    sweep = cfg.sweep or EMPHASIS_SWEEP
    per_run = _map_runs(_emphasis_run, cfg.runs, cfg.n_jobs, cfg, sweep)
    result = ExperimentResult(cfg, _collect(per_run))
    result.summary = _sweep_summary(result, ("followon", "GEM"))
    return result


def _sweep_summary(result: ExperimentResult, algorithms) -> dict:
    summary = {}
    for alg in algorithms:
        if not result.curves_for(alg):
            continue
        best = result.best(alg)
        mean, std = best.final_stats("final_trailing") if best.ok_runs else (float("nan"),) * 2
        summary[alg] = dict(lr1=best.lr1, lr2=best.lr2, auc=best.auc, final_mean=mean,
                            final_std=std, diverged=best.n_diverged)
    return summary


# --- policy evaluation -----------------------------------------------------


def _policy_eval_run(k, cfg: ExperimentConfig, sweep, value_sweep):
    mdp, mu = build_baird(cfg.gamma)
    pi = baird_target(cfg.pi_solid)
    X = state_features(cfg.features)
    d = oracle.stationary_distribution(mdp, mu)
    v = oracle.value_function(mdp, pi)
    traj_rng, init_rng = run_generators(cfg.master_seed, k)
    traj, idx, idx_next, rho = _transitions(mdp, mu, pi, cfg.steps, traj_rng)
    w0 = init_rng.standard_normal(X.shape[1])
    steps = log_steps(cfg.steps, cfg.log_every)
    track = (X, v, d)

    out = []
    for lr in sweep:
        etd = ETD0(learning_rate=lr, gamma=cfg.gamma)
        etd.run_indexed(X, idx, idx_next, rho, traj.rewards, mdp.interest[idx], track=track)
        out.append((("ETD(0)", lr, None),
                    summarize_run(k, {"rmsve": etd.rmsve_}, "rmsve", steps, cfg.steps,
                                  etd.diverged_at_, window=cfg.window)))
    for lr in value_sweep:
        ge = GEMETD0(eta=cfg.eta, learning_rate=cfg.alpha, nu_learning_rate=lr, gamma=cfg.gamma,
                     w_init=w0)
        ge.run_indexed(X, idx, idx_next, rho, traj.rewards, mdp.interest[idx_next], track=track)
        out.append((("GEM-ETD(0)", cfg.alpha, lr),
                    summarize_run(k, {"rmsve": ge.rmsve_}, "rmsve", steps, cfg.steps,
                                  ge.diverged_at_, window=cfg.window)))
    return out


def run_policy_eval_experiment(config: ExperimentConfig) -> ExperimentResult:
    """ETD(0) versus GEM-ETD(0); per-step RMSVE ||X nu_t - v_pi||_D.

    ETD(0) sweeps its learning rate; GEM-ETD(0) keeps its GEM rate fixed
    (``alpha``) and sweeps the value rate over the same grid, or uses
    ``alpha2`` alone when it is set.
    """
    cfg = config.resolved()
    sweep = cfg.sweep or POLICY_EVAL_SWEEP
    value_sweep = sweep if cfg.alpha2 is None else (cfg.alpha2,)
    per_run = _map_runs(_policy_eval_run, cfg.runs, cfg.n_jobs, cfg, sweep, value_sweep)
    result = ExperimentResult(cfg, _collect(per_run))
    result.summary = _sweep_summary(result, ("ETD(0)", "GEM-ETD(0)"))
    return result


# --- control ---------------------------------------------------------------


CONTROL_ALGORITHMS = (("COF-PAC", COFPAC), ("ACE", ACE), ("Off-PAC", OffPAC))


def control_schedules(cfg: ExperimentConfig) -> tuple[StepSchedule, StepSchedule]:
    """Critic alpha_t = a (t0/(t0+t))^0.6 and actor beta_t = b (t0/(t0+t))^0.9, t0 = 1e3."""
    return (StepSchedule.polynomial(cfg.alpha, 1e3, 0.6),
            StepSchedule.polynomial(cfg.beta, 1e3, 0.9))


def _control_run(k, cfg: ExperimentConfig, algorithms):
    mdp, mu = build_baird(cfg.gamma)
    fm = state_action_features(cfg.features)
    traj_rng, _ = run_generators(cfg.master_seed, k)
    traj = sample_trajectory(mdp, mu, cfg.steps, traj_rng)
    critic, actor = control_schedules(cfg)
    n_states, n_actions = mu.probs.shape
    d = oracle.stationary_distribution(mdp, mu)
    out = []
    for name, cls in CONTROL_ALGORITHMS:
        if name not in algorithms:
            continue
        agent = cls(features=fm, behavior=mu, eta=cfg.eta, critic_schedule=critic,
                    actor_schedule=actor, gamma=cfg.gamma, c0=cfg.c0,
                    snapshot_every=cfg.snapshot_every)
        agent.fit(traj.states, traj.actions, traj.rewards)
        snaps = agent.theta_history_
        snap_steps = np.arange(len(snaps)) * cfg.snapshot_every
        if name == "COF-PAC":
            mon = stationarity_monitor(snaps, mdp, mu, fm, cfg.eta, cfg.snapshot_every)
            metrics = dict(J=mon.J, grad_norm=mon.grad_norm, bias_norm=mon.bias_norm,
                           gap=mon.gap, gap_running_min=mon.running_min)
            J = mon.J
        else:
            J = np.array([oracle.excursion_objective(mdp, mu, SoftmaxPolicy(th, n_states, n_actions),
                                                     d_mu=d) for th in snaps])
            metrics = dict(J=J)
        pi_final = SoftmaxPolicy(agent.theta_, n_states, n_actions).probs
        final = dict(J0=float(J[0]), J_final=float(J[-1]),
                     update_norm_var=float(np.var(agent.displacement_)))
        if "gap_running_min" in metrics:
            final["gap_min"] = float(metrics["gap_running_min"][-1])
            final["grad_norm0"] = float(metrics["grad_norm"][0])
        for s in range(n_states):
            final[f"pi_dashed_s{s + 1}"] = float(pi_final[s, DASHED])
        series = RunSeries(k, metrics, snap_steps, float(-np.sum(J)), final, agent.diverged_at_)
        out.append(((name, cfg.alpha, cfg.beta), series))
    return out


def run_control_experiment(config: ExperimentConfig,
                           algorithms=("COF-PAC", "ACE", "Off-PAC")) -> ExperimentResult:
    """COF-PAC, ACE and Off-PAC with a softmax actor on Baird, starting from
    the uniform policy. J(theta_t) and, for COF-PAC, the gap
    ||grad J|| - ||b|| are evaluated exactly at every snapshot."""
    cfg = config.resolved()
    per_run = _map_runs(_control_run, cfg.runs, cfg.n_jobs, cfg, tuple(algorithms))
    result = ExperimentResult(cfg, _collect(per_run))
    summary = {}
    for curve in result.curves:
        ok = curve.ok_runs
        summary[curve.algorithm] = dict(
            J0=[r.final["J0"] for r in ok],
            J_final=[r.final["J_final"] for r in ok],
            update_norm_var=[r.final["update_norm_var"] for r in ok],
            gap_min=[r.final.get("gap_min") for r in ok],
            grad_norm0=[r.final.get("grad_norm0") for r in ok],
            diverged=curve.n_diverged,
        )
    result.summary = summary
    return result


# --- fixed-policy tracking and variance profiles ---------------------------


@dataclass
class TrackingResult:
    """Final relative errors ||w_T - w*|| / ||w*|| per run (NaN if diverged)."""

    gem: np.ndarray
    gq2: np.ndarray
    w_star: np.ndarray
    u_star: np.ndarray


def _tracking_run(k, cfg: ExperimentConfig, schedule, w_star, u_star):
    mdp, mu = build_baird(cfg.gamma)
    pi = baird_target(cfg.pi_solid)
    fm = state_action_features(cfg.features)
    traj_rng, init_rng = run_generators(cfg.master_seed, k)
    traj, idx, idx_next, rho = _transitions(mdp, mu, pi, cfg.steps, traj_rng)
    w0 = init_rng.standard_normal(fm.n_state_features)
    gem = GEM(eta=cfg.eta, learning_rate=schedule, gamma=cfg.gamma, w_init=w0)
    gem.run_indexed(fm.state_features, idx, idx_next, rho, mdp.interest[idx_next])
    n_actions = mu.probs.shape[1]
    sa = traj.states * n_actions + traj.actions
    rho_all = ratio_table(pi, mu)[traj.states, traj.actions]
    gq2 = GQ2(eta=cfg.eta, learning_rate=schedule, gamma=cfg.gamma)
    gq2.run_indexed(fm.state_action_features, sa[:-1], sa[1:], traj.rewards, rho_all[1:])

    def rel(est, weights, star):
        if est.diverged_at_ is not None:
            return np.nan
        return float(np.linalg.norm(weights - star) / np.linalg.norm(star))

    return rel(gem, gem.w_, w_star), rel(gq2, gq2.u_, u_star)


def run_tracking(config: ExperimentConfig, schedule) -> TrackingResult:
    """GEM and GQ2 under a fixed target policy; final distance of each
    iterate to its ridge-regularized fixed point."""
    cfg = replace(config, experiment="emphasis").resolved()
    mdp, mu = build_baird(cfg.gamma)
    pi = baird_target(cfg.pi_solid)
    fm = state_action_features(cfg.features)
    w_star = oracle.gem_system(mdp, mu, pi, fm, cfg.eta).w
    u_star = oracle.gq2_system(mdp, mu, pi, fm, cfg.eta).w
    per_run = _map_runs(_tracking_run, cfg.runs, cfg.n_jobs, cfg, schedule, w_star, u_star)
    errs = np.array(per_run, dtype=float).reshape(cfg.runs, 2)
    return TrackingResult(errs[:, 0], errs[:, 1], w_star, u_star)


def _profile_run(k, cfg: ExperimentConfig, lr, times):
    mdp, mu = build_baird(cfg.gamma)
    pi = baird_target(cfg.pi_solid)
    X = state_features(cfg.features)
    traj_rng, init_rng = run_generators(cfg.master_seed, k)
    traj, idx, idx_next, rho = _transitions(mdp, mu, pi, cfg.steps, traj_rng)
    w0 = init_rng.standard_normal(X.shape[1])
    trace = run_followon(mdp.interest[idx], rho, cfg.gamma, 0.0, 0.0)
    gem = GEM(eta=cfg.eta, learning_rate=lr, gamma=cfg.gamma, w_init=w0)
    gem.run_indexed(X, idx, idx_next, rho, mdp.interest[idx_next])
    est = np.full(cfg.steps, np.nan)
    est[:gem.estimates_.size] = gem.estimates_
    return trace[times], est[times]


def variance_profile(config: ExperimentConfig, lr, times) -> tuple[np.ndarray, np.ndarray]:
    """Across-run variance of the followon trace M_t and of the GEM estimate
    x(S_t)^T w_t at the given steps, on the emphasis experiment's trajectories."""
    cfg = replace(config, experiment="emphasis").resolved()
    times = np.asarray(times, dtype=np.int64)
    if times.max() >= cfg.steps:
        raise ConfigError("profile times must be below steps")
    per_run = _map_runs(_profile_run, cfg.runs, cfg.n_jobs, cfg, lr, times)
    trace = np.array([p[0] for p in per_run])
    est = np.array([p[1] for p in per_run])
    return trace.var(axis=0), est.var(axis=0)
