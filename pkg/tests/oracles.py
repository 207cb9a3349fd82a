"""Reference computations that share no code with the package.

Each oracle evaluates the model formulas directly (loops, dense grids) so the
tests can compare them against the vectorised implementation.
"""

import itertools

import numpy as np


def disjoint_grid_oracle(rpm, beta, budget, step=1e-3, sweeps=200):
    """Maximise sum(rpm*beta*f) on the surface sum(beta*f^2) = budget by grid search.

    Pairwise exchange: for every ordered pair (i, j) the budget they share is
    re-split on a grid of f_i values, keeping the other factors fixed, with
    f_j solved from the constraint.  The grid spacing is refined from coarse
    down to ``step``.  The objective is concave on the surface, so sweeping
    until nothing improves reaches the optimum up to the grid spacing.
    """
    rpm = np.asarray(rpm, float)
    beta = np.asarray(beta, float)
    m = len(rpm)
    if m == 1:
        return np.sqrt([budget / beta[0]])
    f = np.sqrt(np.full(m, budget / beta.sum()))

    def value(x):
        return float(np.sum(rpm * beta * x))

    for h in (step * 1000, step * 100, step * 10, step):
        for _ in range(sweeps):
            before = value(f)
            for i, j in itertools.permutations(range(m), 2):
                c = beta[i] * f[i] ** 2 + beta[j] * f[j] ** 2
                fi = np.arange(0.0, np.sqrt(c / beta[i]) + h, h)
                fi = fi[beta[i] * fi ** 2 <= c]
                fj = np.sqrt((c - beta[i] * fi ** 2) / beta[j])
                val = rpm[i] * beta[i] * fi + rpm[j] * beta[j] * fj
                k = int(np.argmax(val))
                if val[k] > rpm[i] * beta[i] * f[i] + rpm[j] * beta[j] * f[j]:
                    f[i], f[j] = fi[k], fj[k]
            if value(f) <= before:
                break
    return f


def marginal_volumes(a, betas, factors):
    """Volume of every group: intercept plus own beta*f times the product of
    the other dimensions' weighted factor sums (plain loops)."""
    K = len(betas)
    out = []
    for k in range(K):
        other = 1.0
        for d in range(K):
            if d != k:
                other *= sum(b * f for b, f in zip(betas[d], factors[d]))
        out.append([a[k] + betas[k][i] * factors[k][i] * other for i in range(len(betas[k]))])
    return out


def revenue_and_spend(a, betas, cpm_ab, rpm, factors):
    """Model revenue and spend averaged over dimensions (each impression is
    counted once per dimension)."""
    n = marginal_volumes(a, betas, factors)
    K = len(betas)
    rev = spend = 0.0
    for k in range(K):
        for i in range(len(betas[k])):
            ca, cb = cpm_ab[k][i]
            rev += n[k][i] * rpm[k][i]
            spend += n[k][i] * (ca + cb * factors[k][i])
    return rev / (1000.0 * K), spend / (1000.0 * K)


def grid_oracle_2x2(a, betas, cpm_ab, rpm, budget, lo, hi, step=0.01):
    """Best feasible revenue over the dense 4-D grid of a K=2, I=2 instance.

    The grid is evaluated in closed form per dimension pair: with S_d the
    weighted factor sum of dimension d, dimension 1's revenue is
    sum_i rpm_i (a + beta_i f_i S_2), so revenue and spend over all grid points
    are outer sums of per-dimension arrays.  Returns (best value, argmax).
    """
    g = np.round(np.arange(lo, hi + step / 2, step), 10)
    F0, F1 = np.meshgrid(g, g, indexing="ij")
    pairs = np.stack([F0.ravel(), F1.ravel()], axis=1)  # all (f_0, f_1) of one dimension
    S, W_rev, W_sp, C_rev, C_sp = [], [], [], [], []
    for k in range(2):
        b = np.asarray(betas[k], float)
        r = np.asarray(rpm[k], float)
        ca = np.array([c[0] for c in cpm_ab[k]])
        cb = np.array([c[1] for c in cpm_ab[k]])
        S.append(pairs @ b)
        # terms multiplying the other dimension's S, and constants
        W_rev.append(pairs @ (r * b))
        W_sp.append(((ca + cb * pairs) * b * pairs).sum(axis=1))
        C_rev.append(a[k] * r.sum())
        C_sp.append(a[k] * (ca + cb * pairs).sum(axis=1))
    best, arg = -np.inf, None
    chunk = 500
    for s in range(0, len(pairs), chunk):
        sl = slice(s, s + chunk)
        rev = (W_rev[0][sl, None] * S[1][None, :] + C_rev[0]
               + W_rev[1][None, :] * S[0][sl, None] + C_rev[1])
        sp = (W_sp[0][sl, None] * S[1][None, :] + C_sp[0][sl, None]
              + W_sp[1][None, :] * S[0][sl, None] + C_sp[1][None, :])
        rev = rev / 2000.0
        sp = sp / 2000.0
        rev = np.where(sp <= budget, rev, -np.inf)
        idx = np.unravel_index(int(np.argmax(rev)), rev.shape)
        if rev[idx] > best:
            best = float(rev[idx])
            arg = (pairs[s + idx[0]], pairs[idx[1]])
    return best, arg


def central_difference(fun, x, h=1e-6):
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (fun(x + e) - fun(x - e)) / (2 * e[i])
    return g
