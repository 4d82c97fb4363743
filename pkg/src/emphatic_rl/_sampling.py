import numpy as np
from numba import njit


@njit(cache=True)
def _pick(cdf_row, u):
    k = 0
    last = cdf_row.size - 1
    while k < last and cdf_row[k] <= u:
        k += 1
    return k


@njit(cache=True)
def rollout(mu_cdf, p_cdf, reward, s0, u):
    n = u.shape[0] - 1
    states = np.empty(n + 1, np.int64)
    actions = np.empty(n + 1, np.int64)
    rewards = np.empty(n)
    s = s0
    for t in range(n):
        a = _pick(mu_cdf[s], u[t, 0])
        s2 = _pick(p_cdf[s, a], u[t, 1])
        states[t] = s
        actions[t] = a
        rewards[t] = reward[s, a, s2]
        s = s2
    states[n] = s
    actions[n] = _pick(mu_cdf[s], u[n, 0])
    return states, actions, rewards
