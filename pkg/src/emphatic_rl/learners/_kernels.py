"""Compiled inner loops.

Every kernel updates its parameter arrays in place and returns the index of
the first divergent step (-1 when none). Dot products are explicit loops so
that results do not depend on BLAS reduction order.
"""
import numpy as np
from numba import njit

DIVERGENCE_LIMIT = 1e12

COFPAC, ACE, OFFPAC = 0, 1, 2


@njit(cache=True)
def _dot(a, b):
    s = 0.0
    for j in range(a.size):
        s += a[j] * b[j]
    return s


@njit(cache=True)
def _norm(a):
    return np.sqrt(_dot(a, a))


@njit(cache=True)
def _bad(v):
    for j in range(v.size):
        # NaN fails every comparison.
        if not abs(v[j]) <= DIVERGENCE_LIMIT:
            return True
    return False


@njit(cache=True)
def gem_update(kappa, w, x, xn, rho, i_next, alpha, gamma, eta):
    kxn = _dot(xn, kappa)
    delta = i_next + gamma * rho * _dot(x, w) - _dot(xn, w)
    for j in range(kappa.size):
        kappa[j] += alpha * (delta - kxn) * xn[j]
    for j in range(w.size):
        w[j] += alpha * ((xn[j] - gamma * rho * x[j]) * kxn - eta * w[j])


@njit(cache=True)
def gq2_update(kt, u, xt, xtn, reward, rho_next, alpha, gamma, eta):
    kx = _dot(xt, kt)
    delta = reward + gamma * rho_next * _dot(xtn, u) - _dot(xt, u)
    for j in range(kt.size):
        kt[j] += alpha * (delta - kx) * xt[j]
    for j in range(u.size):
        u[j] += alpha * ((xt[j] - gamma * rho_next * xtn[j]) * kx - eta * u[j])


@njit(cache=True)
def etd_update(nu, x, xn, emph, rho, reward, alpha, gamma):
    delta = reward + gamma * _dot(xn, nu) - _dot(x, nu)
    scale = alpha * emph * rho * delta
    for j in range(nu.size):
        nu[j] += scale * x[j]


@njit(cache=True)
def run_gem(feat, idx, idx_next, rho, i_next, alphas, gamma, eta, kappa, w):
    n = idx.size
    est = np.empty(n)
    for t in range(n):
        x = feat[idx[t]]
        est[t] = _dot(x, w)
        gem_update(kappa, w, x, feat[idx_next[t]], rho[t], i_next[t], alphas[t], gamma, eta)
        if _bad(w) or _bad(kappa):
            return est[:t + 1], t
    return est, -1


@njit(cache=True)
def run_gq2(feat, idx, idx_next, reward, rho_next, alphas, gamma, eta, kt, u):
    n = idx.size
    est = np.empty(n)
    for t in range(n):
        xt = feat[idx[t]]
        est[t] = _dot(xt, u)
        gq2_update(kt, u, xt, feat[idx_next[t]], reward[t], rho_next[t], alphas[t], gamma, eta)
        if _bad(u) or _bad(kt):
            return est[:t + 1], t
    return est, -1


@njit(cache=True)
def run_semi_gradient(feat, idx, idx_next, rho, i_next, alphas, gamma, w):
    n = idx.size
    est = np.empty(n)
    for t in range(n):
        x = feat[idx[t]]
        xn = feat[idx_next[t]]
        est[t] = _dot(x, w)
        delta = i_next[t] + gamma * rho[t] * est[t] - _dot(xn, w)
        for j in range(w.size):
            w[j] += alphas[t] * delta * xn[j]
        if _bad(w):
            return est[:t + 1], t
    return est, -1


@njit(cache=True)
def run_followon(i_t, rho, gamma, m_prev, rho_prev):
    """Followon trace M_t = i(S_t) + gamma rho_{t-1} M_{t-1}.

    ``m_prev`` and ``rho_prev`` carry M_{t-1} and rho_{t-1} in from a previous
    segment (0 and anything for a fresh start).
    """
    n = i_t.size
    out = np.empty(n)
    for t in range(n):
        m_prev = i_t[t] + gamma * rho_prev * m_prev
        out[t] = m_prev
        rho_prev = rho[t]
    return out


@njit(cache=True)
def _weighted_error(nu, eval_x, target, weights):
    acc = 0.0
    for s in range(eval_x.shape[0]):
        e = _dot(eval_x[s], nu) - target[s]
        acc += weights[s] * e * e
    return np.sqrt(acc)


@njit(cache=True)
def run_etd(feat, idx, idx_next, rho, reward, emph, alphas, gamma, nu, eval_x, target, weights):
    """ETD(0) driven by a precomputed emphasis sequence ``emph``.

    ``emph`` is the followon trace for ETD(0). RMSVE of nu_t (before the
    update) is recorded when ``eval_x`` has rows.
    """
    n = idx.size
    track = eval_x.shape[0] > 0
    err = np.empty(n if track else 0)
    for t in range(n):
        if track:
            err[t] = _weighted_error(nu, eval_x, target, weights)
        etd_update(nu, feat[idx[t]], feat[idx_next[t]], emph[t], rho[t], reward[t], alphas[t], gamma)
        if _bad(nu):
            return err[:t + 1], t
    return err, -1


@njit(cache=True)
def run_gem_etd(feat, idx, idx_next, rho, reward, i_next, alphas1, alphas2, gamma, eta,
                kappa, w, nu, eval_x, target, weights):
    """GEM-ETD(0): the emphasis weight is w_t^T x_t from a GEM learner.

    Per step the GEM update runs first, then the nu update weighted by the
    pre-update estimate w_t^T x_t.
    """
    n = idx.size
    track = eval_x.shape[0] > 0
    err = np.empty(n if track else 0)
    emph = np.empty(n)
    for t in range(n):
        x = feat[idx[t]]
        xn = feat[idx_next[t]]
        if track:
            err[t] = _weighted_error(nu, eval_x, target, weights)
        emph[t] = _dot(x, w)
        gem_update(kappa, w, x, xn, rho[t], i_next[t], alphas1[t], gamma, eta)
        etd_update(nu, x, xn, emph[t], rho[t], reward[t], alphas2[t], gamma)
        if _bad(nu) or _bad(w) or _bad(kappa):
            return err[:t + 1], emph[:t + 1], t
    return err, emph, -1


@njit(cache=True)
def adaptive_stepsize(norm, c0):
    if norm < c0:
        return 1.0
    return (1.0 + c0) / (1.0 + norm)


@njit(cache=True)
def _softmax_row(theta, s, n_actions, out):
    base = s * n_actions
    top = theta[base]
    for b in range(1, n_actions):
        if theta[base + b] > top:
            top = theta[base + b]
    z = 0.0
    for b in range(n_actions):
        out[b] = np.exp(theta[base + b] - top)
        z += out[b]
    for b in range(n_actions):
        out[b] /= z


@njit(cache=True)
def run_actor_critic(mode, X, Xt, S, A, R, mu, interest, theta, kappa, w, kt, u, state,
                     alphas, betas, gamma, eta, c0, snap_every):
    """Two-timescale actor-critic loop over a pre-sampled behavior trajectory.

    ``mode`` selects the emphasis used by the actor: the GEM estimate with
    adaptive step sizes (COF-PAC), the followon trace (ACE) or none
    (Off-PAC). The GQ2 critic supplies q in every mode. ``state`` holds
    ``[M_{t-1}, rho_{t-1}]`` and is updated in place.

    Returns theta snapshots (every ``snap_every`` steps, starting at step 0),
    the per-step actor displacement ``||theta_{t+1} - theta_t||``, and the
    divergence index.
    """
    n = R.size
    n_actions = mu.shape[1]
    n_snap = n // snap_every + 1
    snaps = np.empty((n_snap, theta.size))
    snaps[0] = theta
    disp = np.empty(n)
    pi_s = np.empty(n_actions)
    pi_s2 = np.empty(n_actions)
    m_prev = state[0]
    rho_prev = state[1]
    for t in range(n):
        s, a, s2, a2 = S[t], A[t], S[t + 1], A[t + 1]
        _softmax_row(theta, s, n_actions, pi_s)
        _softmax_row(theta, s2, n_actions, pi_s2)
        rho = pi_s[a] / mu[s, a]
        rho2 = pi_s2[a2] / mu[s2, a2]
        x = X[s]
        xt = Xt[s * n_actions + a]
        m_hat = _dot(w, x)
        q_hat = _dot(u, xt)
        g1 = adaptive_stepsize(_norm(w), c0)
        g2 = adaptive_stepsize(_norm(u), c0)
        m_prev = interest[s] + gamma * rho_prev * m_prev
        rho_prev = rho
        if mode == COFPAC:
            gem_update(kappa, w, x, X[s2], rho, interest[s2], alphas[t], gamma, eta)
        gq2_update(kt, u, xt, Xt[s2 * n_actions + a2], R[t], rho2, alphas[t], gamma, eta)
        if mode == COFPAC:
            scale = betas[t] * g1 * g2 * rho * m_hat * q_hat
        elif mode == ACE:
            scale = betas[t] * m_prev * rho * q_hat
        else:
            scale = betas[t] * rho * q_hat
        sq = 0.0
        for b in range(n_actions):
            g = (1.0 if b == a else 0.0) - pi_s[b]
            theta[s * n_actions + b] += scale * g
            sq += g * g
        disp[t] = abs(scale) * np.sqrt(sq)
        if (t + 1) % snap_every == 0:
            snaps[(t + 1) // snap_every] = theta
        if _bad(theta) or _bad(u) or _bad(kt) or _bad(w) or _bad(kappa):
            state[0] = m_prev
            state[1] = rho_prev
            return snaps[:(t + 1) // snap_every + 1], disp[:t + 1], t
    state[0] = m_prev
    state[1] = rho_prev
    return snaps, disp, -1
