"""Finite MDPs, tabular and softmax policies, feature maps, and the derived
matrices every other module consumes.

States and actions are zero-based integer indices. State-action pairs are
flattened row-major, so the pair ``(s, a)`` lives at ``s * n_actions + a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from ._sampling import rollout

_STOCH_TOL = 1e-12


class ErgodicityError(ValueError):
    """The chain induced by a policy is reducible or periodic."""


class PolicyError(ValueError):
    """A policy violates its probability or support invariants."""


def _check_stochastic(probs: np.ndarray, axis: int, what: str) -> None:
    if not np.all(np.isfinite(probs)):
        raise ValueError(f"{what} has non-finite entries")
    if np.any(probs < 0):
        raise ValueError(f"{what} has negative entries")
    err = np.max(np.abs(probs.sum(axis=axis) - 1.0))
    if err > _STOCH_TOL:
        raise ValueError(f"{what} does not sum to one (max error {err:.3g})")


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """The tuple (S, A, p, r, gamma) plus a per-state interest and an initial
    state distribution.

    ``transition[s, a, s2]`` is p(s2 | s, a) and ``reward[s, a, s2]`` is
    r(s, a, s2).
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    interest: np.ndarray | None = None
    initial: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.transition, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {p.shape}")
        n_states, n_actions, _ = p.shape
        _check_stochastic(p, axis=2, what="transition kernel")
        r = np.broadcast_to(np.asarray(self.reward, dtype=float), p.shape).copy()
        if not np.all(np.isfinite(r)):
            raise ValueError("reward has non-finite entries")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.discount}")
        i = np.ones(n_states) if self.interest is None else np.asarray(self.interest, dtype=float)
        if i.shape != (n_states,) or np.any(i < 0) or not np.all(np.isfinite(i)):
            raise ValueError("interest must be a finite nonnegative vector of length |S|")
        d0 = np.full(n_states, 1.0 / n_states) if self.initial is None else np.asarray(self.initial, dtype=float)
        if d0.shape != (n_states,):
            raise ValueError("initial distribution must have length |S|")
        _check_stochastic(d0, axis=0, what="initial distribution")
        for name, value in (("transition", p), ("reward", r), ("interest", i), ("initial", d0)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    """A stochastic policy stored as a |S| x |A| matrix of probabilities."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise PolicyError(f"policy probabilities must be 2-d, got shape {probs.shape}")
        try:
            _check_stochastic(probs, axis=1, what="policy")
        except ValueError as exc:
            raise PolicyError(str(exc)) from None
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_action_probs(cls, n_states: int, action_probs) -> "TabularPolicy":
        """The same action distribution in every state."""
        row = np.asarray(action_probs, dtype=float)
        return cls(np.tile(row, (n_states, 1)))

    def require_full_support(self) -> None:
        if np.any(self.probs <= 0):
            raise PolicyError("behavior policy must give every action positive probability")


def softmax_probs(theta: np.ndarray, n_states: int, n_actions: int) -> np.ndarray:
    logits = np.asarray(theta, dtype=float).reshape(n_states, n_actions)
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class SoftmaxPolicy:
    """Target policy with one logit per state-action pair."""

    theta: np.ndarray
    n_states: int
    n_actions: int
    probs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).ravel()
        if theta.size != self.n_states * self.n_actions:
            raise ValueError(
                f"theta needs {self.n_states * self.n_actions} logits, got {theta.size}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta has non-finite entries")
        theta.setflags(write=False)
        probs = softmax_probs(theta, self.n_states, self.n_actions)
        probs.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "SoftmaxPolicy":
        return cls(np.zeros(n_states * n_actions), n_states, n_actions)

    def grad_log_prob(self, s: int, a: int) -> np.ndarray:
        """Gradient of log pi(a|s) with respect to theta."""
        g = np.zeros(self.theta.size)
        block = slice(s * self.n_actions, (s + 1) * self.n_actions)
        g[block] = -self.probs[s]
        g[s * self.n_actions + a] += 1.0
        return g

    def score(self, mu: TabularPolicy, s: int, a: int) -> np.ndarray:
        """psi(s, a) = rho(s, a) * grad log pi(a|s)."""
        return importance_ratio(self, mu, s, a) * self.grad_log_prob(s, a)

    def score_table(self, mu: TabularPolicy) -> np.ndarray:
        """All scores at once, shape (|S| |A|, K)."""
        n_sa = self.n_states * self.n_actions
        psi = np.zeros((n_sa, n_sa))
        for s in range(self.n_states):
            for a in range(self.n_actions):
                psi[s * self.n_actions + a] = self.score(mu, s, a)
        return psi


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """State features X (|S| x K1) and state-action features (|S||A| x K2)."""

    state_features: np.ndarray
    state_action_features: np.ndarray

    def __post_init__(self):
        for name in ("state_features", "state_action_features"):
            m = np.array(getattr(self, name), dtype=float)
            if m.ndim != 2 or not np.all(np.isfinite(m)):
                raise ValueError(f"{name} must be a finite 2-d matrix")
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def n_state_features(self) -> int:
        return self.state_features.shape[1]

    @property
    def n_state_action_features(self) -> int:
        return self.state_action_features.shape[1]


def _probs(pi) -> np.ndarray:
    return np.asarray(getattr(pi, "probs", pi), dtype=float)


def transition_matrix(mdp: FiniteMdp, pi) -> np.ndarray:
    """P_pi(s, s') = sum_a pi(a|s) p(s'|s, a)."""
    return np.einsum("sa,sat->st", _probs(pi), mdp.transition)


def state_action_transition_matrix(mdp: FiniteMdp, pi) -> np.ndarray:
    """P~_pi((s, a), (s', a')) = p(s'|s, a) pi(a'|s')."""
    n_sa = mdp.n_states * mdp.n_actions
    full = mdp.transition[:, :, :, None] * _probs(pi)[None, None, :, :]
    return full.reshape(n_sa, n_sa)


def reward_vectors(mdp: FiniteMdp, pi) -> tuple[np.ndarray, np.ndarray]:
    """Expected one-step rewards ``(r_pi, r_tilde)``.

    ``r_tilde`` is flattened over state-action pairs.
    """
    r_sa = np.einsum("sat,sat->sa", mdp.transition, mdp.reward)
    r_pi = np.einsum("sa,sa->s", _probs(pi), r_sa)
    return r_pi, r_sa.ravel()


def importance_ratio(pi, mu: TabularPolicy, s: int, a: int) -> float:
    """rho(s, a) = pi(a|s) / mu(a|s)."""
    denom = _probs(mu)[s, a]
    if denom <= 0:
        raise PolicyError(f"behavior policy gives zero probability to action {a} in state {s}")
    return float(_probs(pi)[s, a] / denom)


def ratio_table(pi, mu: TabularPolicy) -> np.ndarray:
    mu_p = _probs(mu)
    if np.any(mu_p <= 0):
        raise PolicyError("behavior policy must give every action positive probability")
    return _probs(pi) / mu_p


def chain_period(P: np.ndarray) -> int:
    """Period of an irreducible chain, via BFS levels.

    The period is the gcd of ``level[u] + 1 - level[v]`` over all edges.
    """
    graph = csr_matrix(P > 0)
    order, _ = breadth_first_order(graph, 0, directed=True, return_predecessors=True)
    level = np.full(P.shape[0], -1)
    level[0] = 0
    for u in order:
        for v in graph.indices[graph.indptr[u]:graph.indptr[u + 1]]:
            if level[v] < 0:
                level[v] = level[u] + 1
    period = 0
    rows, cols = graph.nonzero()
    for u, v in zip(rows, cols):
        period = gcd(period, int(abs(level[u] + 1 - level[v])))
    return period


def is_irreducible(P: np.ndarray) -> bool:
    n, _ = connected_components(csr_matrix(P > 0), directed=True, connection="strong")
    return n == 1


def check_ergodic(P: np.ndarray, aperiodic: bool = True) -> None:
    if not is_irreducible(P):
        raise ErgodicityError("chain is reducible (more than one communicating class)")
    if aperiodic:
        period = chain_period(P)
        if period != 1:
            raise ErgodicityError(f"chain is periodic with period {period}")


def stationary_distribution(mdp: FiniteMdp, mu, aperiodic: bool = False) -> np.ndarray:
    """Stationary distribution of the chain induced by ``mu``.

    Solves ``(P^T - I) d = 0`` together with ``sum(d) = 1`` exactly. An
    irreducible chain is always required; pass ``aperiodic=True`` to insist on
    full ergodicity as well.
    """
    P = transition_matrix(mdp, mu)
    check_ergodic(P, aperiodic=aperiodic)
    n = P.shape[0]
    # Replace one redundant balance equation by the normalization.
    M = P.T - np.eye(n)
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    d = np.linalg.solve(M, rhs)
    if np.any(d <= 0):
        raise ErgodicityError("stationary distribution is not strictly positive")
    return d


def _inverse_cdf(cdf_row: np.ndarray, u: float) -> int:
    k = int(np.searchsorted(cdf_row, u, side="right"))
    return min(k, cdf_row.size - 1)


def sample_initial_state(mdp: FiniteMdp, rng: np.random.Generator) -> int:
    return _inverse_cdf(np.cumsum(mdp.initial), rng.random())


def sample_step(mdp: FiniteMdp, mu, state: int, rng: np.random.Generator,
                action: int | None = None) -> tuple[int, float, int]:
    """Draw ``(action, reward, next_state)`` from ``state``.

    Two uniforms are consumed per call, one for the action and one for the
    successor, even when ``action`` is forced. This keeps the stream aligned
    with :func:`sample_trajectory`.
    """
    if not 0 <= state < mdp.n_states:
        raise IndexError(f"state {state} out of range")
    u = rng.random(2)
    if action is None:
        action = _inverse_cdf(np.cumsum(_probs(mu)[state]), u[0])
    nxt = _inverse_cdf(np.cumsum(mdp.transition[state, action]), u[1])
    return action, float(mdp.reward[state, action, nxt]), nxt


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A behavior-policy rollout.

    ``states`` and ``actions`` have length ``n + 1`` (the final action is the
    pre-sampled A_{n}); ``rewards[t]`` is R_{t+1}.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __len__(self) -> int:
        return self.rewards.size


def sample_trajectory(mdp: FiniteMdp, mu, n_steps: int, rng: np.random.Generator,
                      initial_state: int | None = None) -> Trajectory:
    """Roll out ``n_steps`` transitions under ``mu``.

    Uses the same uniform stream as repeated :func:`sample_step` calls, plus
    one uniform for the initial state (when not given) and one for the
    trailing action A_n.
    """
    s0 = sample_initial_state(mdp, rng) if initial_state is None else int(initial_state)
    u = rng.random((n_steps + 1, 2))
    mu_cdf = np.cumsum(_probs(mu), axis=1)
    p_cdf = np.cumsum(mdp.transition, axis=2)
    states, actions, rewards = rollout(mu_cdf, p_cdf, mdp.reward, s0, u)
    return Trajectory(states, actions, rewards)


def random_mdp(n_states: int, n_actions: int, rng: np.random.Generator,
               discount: float = 0.9) -> FiniteMdp:
    """Dense random MDP: Dirichlet(1) transition rows and standard-normal
    rewards. Every transition has positive probability, so the chain is
    ergodic under any policy."""
    p = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    r = rng.standard_normal((n_states, n_actions, n_states))
    return FiniteMdp(p, r, discount)


def random_policy(n_states: int, n_actions: int, rng: np.random.Generator) -> TabularPolicy:
    """Dirichlet(1) action probabilities with full support."""
    return TabularPolicy(rng.dirichlet(np.ones(n_actions), size=n_states))
