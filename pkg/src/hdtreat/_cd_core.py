"""Numba kernels for the weighted elastic-net coordinate descent solver.

All kernels work on the Gram system (G = X'X, c = X'y) so that a sweep
costs O(p^2) regardless of n, and solve the objective

    sum_i (y_i - X_i theta)^2
        + lam * sum_j w_j * (mix * |theta_j| + (1 - mix) * theta_j^2 / 2)

Weights equal to zero leave a coordinate unpenalized.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _soft(x, t):
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


@njit(cache=True)
def _sweep(G, c, lam, w, mix, theta, g, idx):
    """One pass over the coordinates in idx; g = G @ theta is kept in sync.

    Returns the largest absolute coefficient change.
    """
    maxd = 0.0
    for t in range(idx.shape[0]):
        j = idx[t]
        gjj = G[j, j]
        old = theta[j]
        rho = c[j] - g[j] + gjj * old
        thr = 0.5 * lam * w[j] * mix
        denom = gjj + 0.5 * lam * w[j] * (1.0 - mix)
        if denom <= 0.0:
            new = 0.0
        else:
            new = _soft(rho, thr) / denom
        if new != old:
            diff = new - old
            row = G[j]
            for i in range(g.shape[0]):
                g[i] += row[i] * diff
            theta[j] = new
            d = abs(diff)
            if d > maxd:
                maxd = d
    return maxd


@njit(cache=True)
def cd_solve(G, c, lam, w, mix, theta, max_sweeps, tol):
    """Cyclic coordinate descent with active-set inner iterations.

    theta is updated in place (use zeros for a cold start).  Returns
    (sweeps_used, converged) where converged means a full sweep moved no
    coefficient by more than tol.
    """
    p = G.shape[0]
    g = np.zeros(p)
    for j in range(p):
        if theta[j] != 0.0:
            row = G[j]
            tj = theta[j]
            for i in range(p):
                g[i] += row[i] * tj
    all_idx = np.arange(p)
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        delta = _sweep(G, c, lam, w, mix, theta, g, all_idx)
        sweeps += 1
        if delta < tol:
            converged = True
            break
        active = np.nonzero(theta)[0]
        if active.shape[0] == 0 or active.shape[0] == p:
            continue
        while sweeps < max_sweeps:
            d2 = _sweep(G, c, lam, w, mix, theta, g, active)
            sweeps += 1
            if d2 < tol:
                break
    return sweeps, converged


@njit(cache=True)
def cv_fold_errors(Xp, yp, bounds, G, c, grid, w, mix, max_sweeps, tol):
    """Mean squared test error for every (fold, lambda) pair.

    Xp, yp are pre-permuted; bounds gives fold boundaries so fold k is
    rows bounds[k]:bounds[k+1].  The path is solved warm-start along the
    descending grid within each fold.
    """
    K = bounds.shape[0] - 1
    L = grid.shape[0]
    p = Xp.shape[1]
    errs = np.empty((K, L))
    Gtr = np.empty((p, p))
    ctr = np.empty(p)
    nz = np.empty(p, dtype=np.int64)
    for k in range(K):
        a = bounds[k]
        b = bounds[k + 1]
        nte = b - a
        for i in range(p):
            for j in range(i, p):
                s = 0.0
                for r in range(a, b):
                    s += Xp[r, i] * Xp[r, j]
                Gtr[i, j] = G[i, j] - s
                Gtr[j, i] = Gtr[i, j]
        for i in range(p):
            s = 0.0
            for r in range(a, b):
                s += Xp[r, i] * yp[r]
            ctr[i] = c[i] - s
        theta = np.zeros(p)
        for l in range(L):
            cd_solve(Gtr, ctr, grid[l], w, mix, theta, max_sweeps, tol)
            nnz = 0
            for j in range(p):
                if theta[j] != 0.0:
                    nz[nnz] = j
                    nnz += 1
            mse = 0.0
            for r in range(a, b):
                pred = 0.0
                for t in range(nnz):
                    j = nz[t]
                    pred += Xp[r, j] * theta[j]
                e = yp[r] - pred
                mse += e * e
            errs[k, l] = mse / nte
    return errs


@njit(cache=True)
def path_supports(G, c, grid, w, mix, max_sweeps, tol, warm):
    """Support masks along a lambda path, warm- or cold-started."""
    L = grid.shape[0]
    p = G.shape[0]
    out = np.zeros((L, p), dtype=np.bool_)
    theta = np.zeros(p)
    for l in range(L):
        if not warm:
            theta[:] = 0.0
        cd_solve(G, c, grid[l], w, mix, theta, max_sweeps, tol)
        for j in range(p):
            out[l, j] = theta[j] != 0.0
    return out
