"""Independent reference computations used to freeze and check expected values.

Nothing here calls the package's LP solver: programs go through scipy's HiGHS
or brute-force grids, regrets through plain loops.
"""
import itertools

import numpy as np
from scipy.optimize import linprog


def random_game_tables(rng, n_r, n_p, n_y):
    return rng.random((n_r, n_p, n_y)), rng.random((n_r, n_p, n_y))


def random_prior(rng, n):
    return rng.dirichlet(np.ones(n))


def simplex_points(d, n):
    """All d-vectors of non-negative multiples of 1/n summing to 1."""
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        a = np.arange(n + 1) / n
        return np.column_stack([a, 1 - a])
    if d == 3:
        i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        keep = i + j <= n
        i, j = i[keep], j[keep]
        return np.column_stack([i, j, n - i - j]) / n
    if d * n > 4000:
        raise ValueError("grid too large")
    # last coordinate n - k, the rest a (d-1)-composition of k
    rows = []
    for k in range(n + 1):
        sub = np.rint(simplex_points(d - 1, k) * k) if k else np.zeros((1, d - 1))
        rows.append(np.column_stack([sub, np.full(len(sub), n - k)]))
    return np.vstack(rows) / n


# ---- robust programs over a single response distribution


def robust_grid(u, v, eps, sense, step=1e-3):
    """min/max of v.mu over grid mu with u.mu >= max u - eps."""
    mu = simplex_points(len(u), int(round(1 / step)))
    ok = mu @ u >= u.max() - eps - 1e-12
    vals = mu[ok] @ v
    return vals.min() if sense == "min" else vals.max()


def robust_linprog(u, v, eps, sense):
    n = len(u)
    c = v if sense == "min" else -v
    res = linprog(c, A_ub=[-u], b_ub=[eps - u.max()], A_eq=[np.ones(n)], b_eq=[1], bounds=[(0, None)] * n, method="highs")
    assert res.status == 0
    return res.fun if sense == "min" else -res.fun


# ---- inf/sup over information structures, direct (recommendation) form


def direct_linprog(U, V, pi, eps, sense):
    """U, V are [r, y] for one policy. Variables psi (r-major) then z_r."""
    n_r, n_y = U.shape
    n_psi = n_r * n_y
    c = np.concatenate([V.ravel(), np.zeros(n_r)])
    if sense == "max":
        c = -c
    A_eq = np.zeros((n_y, n_psi + n_r))
    for y in range(n_y):
        A_eq[y, [r * n_y + y for r in range(n_r)]] = 1
    rows, rhs = [], []
    for r in range(n_r):
        for rp in range(n_r):
            if rp == r:
                continue
            row = np.zeros(n_psi + n_r)
            row[r * n_y:(r + 1) * n_y] = U[rp] - U[r]
            row[n_psi + r] = -1
            rows.append(row)
            rhs.append(0.0)
    budget = np.zeros(n_psi + n_r)
    budget[n_psi:] = 1
    rows.append(budget)
    rhs.append(eps)
    res = linprog(c, A_ub=np.array(rows), b_ub=rhs, A_eq=A_eq, b_eq=pi, bounds=[(0, None)] * (n_psi + n_r), method="highs")
    assert res.status == 0
    return res.fun if sense == "min" else -res.fun


def _psi_slack(U, psi):
    """Aggregate slack of joints psi with shape (N, r, y)."""
    gains = np.einsum("ky,nry->nrk", U, psi) - np.einsum("ry,nry->nr", U, psi)[:, :, None]
    return np.maximum(gains.max(axis=2), 0).sum(axis=1)


def direct_grid(U, V, pi, eps, sense, step):
    """Brute force over psi(., y) = pi(y) * grid point of the response simplex, one block per state."""
    n_r, n_y = U.shape
    g = simplex_points(n_r, int(round(1 / step)))
    best = np.inf if sense == "min" else -np.inf
    for head in itertools.product(range(len(g)), repeat=n_y - 1):
        cols = [g[i] * pi[y] for y, i in enumerate(head)]
        psi = np.empty((len(g), n_r, n_y))
        for y, col in enumerate(cols):
            psi[:, :, y] = col
        psi[:, :, n_y - 1] = g * pi[n_y - 1]
        ok = _psi_slack(U, psi) <= eps + 1e-12
        if not ok.any():
            continue
        vals = np.einsum("ry,nry->n", V, psi[ok])
        best = min(best, vals.min()) if sense == "min" else max(best, vals.max())
    return best


def binary_signal_grid(U, V, pi, sense, step=1e-3):
    """Exact-best-response value over binary signal kernels on a 2-state game (eps = 0).

    Kernel: signal 0 w.p. a in state 0 and w.p. b in state 1. Per signal the agent
    best-responds; ties go against (sense=min) or for (sense=max) the principal.
    """
    a = np.arange(int(round(1 / step)) + 1) * step
    A, B = np.meshgrid(a, a, indexing="ij")
    A, B = A.ravel(), B.ravel()
    total = np.zeros_like(A)
    for w0, w1 in ((A, B), (1 - A, 1 - B)):
        m = np.column_stack([pi[0] * w0, pi[1] * w1])  # unnormalised joint of (signal, y)
        eu = m @ U.T  # (N, r)
        ev = m @ V.T
        best = eu.max(axis=1, keepdims=True)
        tie = eu >= best - 1e-12 * np.maximum(1, np.abs(best))
        pick = np.where(tie, ev, np.inf).min(axis=1) if sense == "min" else np.where(tie, ev, -np.inf).max(axis=1)
        total += pick
    return total.min() if sense == "min" else total.max()


# ---- forecasting


def stationary_eig(Q):
    w, vecs = np.linalg.eig(np.asarray(Q).T)
    k = int(np.argmin(np.abs(w - 1)))
    p = np.real(vecs[:, k])
    return p / p.sum()


def quadratic_score(p, y):
    p = np.asarray(p, dtype=float)
    return 2 * p[y] - (p ** 2).sum()


# ---- regrets by loops


def loop_agent_regret(U, policies, own_utils, states, contexts):
    """max over modification rules h: context -> response, averaged over T."""
    T = len(states)
    n_r = U.shape[0]
    by_ctx = {}
    for t in range(T):
        tot = by_ctx.setdefault(contexts[t], [np.zeros(n_r), 0.0])
        for r in range(n_r):
            tot[0][r] += U[r, policies[t], states[t]]
        tot[1] += own_utils[t]
    return sum(best.max() - own for best, own in by_ctx.values()) / T


def loop_principal_regret(V, policies, mu, cf_mu, alternatives, states):
    T = len(states)
    gaps = []
    for a, p in enumerate(alternatives):
        s = 0.0
        for t in range(T):
            alt = sum(cf_mu[a][t][r] * V[r, p, states[t]] for r in range(V.shape[0]))
            base = sum(mu[t][r] * V[r, policies[t], states[t]] for r in range(V.shape[0]))
            s += alt - base
        gaps.append(s / T)
    return max(gaps)
