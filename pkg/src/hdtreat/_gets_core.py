"""Numba kernel for the multi-path general-to-specific search.

Design columns are ordered [intercept | forced | candidates] in a
Fortran-ordered array.  The engine keeps, per search path, the inverse
Gram of the active columns and updates it by rank-one downdates as
variables are deleted, so one deletion step costs O(n*k + k^2).

Statistical decisions are made against precomputed critical-value
tables (t for significance, F for the backtest against the round-one
model, chi-square for the residual diagnostics), so no distribution
functions are needed inside the kernel.

States are memoized across paths: a path that reaches an
(active-set, retained-set) pair another path already continued from
adopts that path's terminal model directly.
"""

import numpy as np
from numba import njit, types
from numba.typed import Dict

U64 = types.uint64
KEY8 = types.UniTuple(types.uint64, 8)
KEY4 = types.UniTuple(types.uint64, 4)
I64 = types.int64
ERR_OK = 0
ERR_SINGULAR = 1

MAX_MASK_BITS = 256


@njit(cache=True)
def _mask4(flags, m):
    w = np.zeros(4, dtype=np.uint64)
    for i in range(m):
        if flags[i]:
            w[i >> 6] |= np.uint64(1) << np.uint64(i & 63)
    return w


@njit(cache=True)
def _state_key(active, retained, m):
    a = _mask4(active, m)
    r = _mask4(retained, m)
    return (a[0], a[1], a[2], a[3], r[0], r[1], r[2], r[3])


@njit(cache=True)
def _chol_inverse(A, k, L, W):
    """Cholesky-factorize A[:k,:k] in L and leave inv(A) in W.

    Returns the index of the first non-positive pivot, or -1 on success.
    """
    for j in range(k):
        s = A[j, j]
        for t in range(j):
            s -= L[j, t] * L[j, t]
        if s <= 0.0:
            return j
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, k):
            s = A[i, j]
            for t in range(j):
                s -= L[i, t] * L[j, t]
            L[i, j] = s / L[j, j]
    # Invert L in place (lower triangular): diagonal first so the
    # column pass can scale by the reciprocal pivot.
    for j in range(k):
        L[j, j] = 1.0 / L[j, j]
    for j in range(k):
        for i in range(j + 1, k):
            s = 0.0
            for t in range(j, i):
                s += L[i, t] * L[t, j]
            L[i, j] = -s * L[i, i]
    # W = L^-T L^-1 (only lower of W computed, then mirrored).
    for i in range(k):
        for j in range(i + 1):
            s = 0.0
            for t in range(i, k):
                s += L[t, i] * L[t, j]
            W[i, j] = s
            W[j, i] = s
    return -1


@njit(cache=True)
def _jb_stat(e, n):
    mean = 0.0
    for t in range(n):
        mean += e[t]
    mean /= n
    m2 = 0.0
    m3 = 0.0
    m4 = 0.0
    for t in range(n):
        d = e[t] - mean
        d2 = d * d
        m2 += d2
        m3 += d2 * d
        m4 += d2 * d2
    m2 /= n
    m3 /= n
    m4 /= n
    if m2 <= 0.0:
        return 0.0
    skew = m3 / m2**1.5
    kurt = m4 / (m2 * m2)
    return n * (skew * skew / 6.0 + (kurt - 3.0) ** 2 / 24.0)


@njit(cache=True)
def _fit_active(X, y, G, cols, k, L, W, theta, resid):
    """OLS on the active columns; fills W = inverse Gram, theta, resid.

    Returns (rss, first bad pivot or -1)."""
    n = X.shape[0]
    A = np.empty((k, k))
    for i in range(k):
        ci = cols[i]
        for j in range(i, k):
            A[i, j] = G[ci, cols[j]]
            A[j, i] = A[i, j]
    bad = _chol_inverse(A, k, L, W)
    if bad >= 0:
        return 0.0, bad
    for i in range(k):
        s = 0.0
        xc = X[:, cols[i]]
        for t in range(n):
            s += xc[t] * y[t]
        theta[i] = s
    # theta = W @ X'y
    tmp = np.empty(k)
    for i in range(k):
        s = 0.0
        for j in range(k):
            s += W[i, j] * theta[j]
        tmp[i] = s
    for i in range(k):
        theta[i] = tmp[i]
    for t in range(n):
        resid[t] = y[t]
    for i in range(k):
        xc = X[:, cols[i]]
        ti = theta[i]
        for t in range(n):
            resid[t] -= ti * xc[t]
    rss = 0.0
    for t in range(n):
        rss += resid[t] * resid[t]
    return rss, -1


@njit(cache=True)
def _bp_stat_candidate(X, u, cols, k_new, Ainv, r_del, ajj, n):
    """Breusch-Pagan statistic of the model that would remain after
    deleting position r_del (= k_new, already swapped to the end).

    u must be the centered squared residuals of the candidate model.
    Uses the pre-deletion inverse Gram via the downdate identity.
    """
    uss = 0.0
    for t in range(n):
        uss += u[t] * u[t]
    if uss <= 0.0:
        return 0.0
    k_old = k_new + 1
    q = np.zeros(k_old)
    for i in range(k_new):
        xc = X[:, cols[i]]
        s = 0.0
        for t in range(n):
            s += xc[t] * u[t]
        q[i] = s
    # b = Ainv_new @ q with Ainv_new = W - w w'/ajj, w = Ainv[:,r_del]
    ess = 0.0
    s_last = 0.0
    for j in range(k_new):
        s_last += Ainv[r_del, j] * q[j]
    for i in range(k_new):
        s = 0.0
        for j in range(k_new):
            s += Ainv[i, j] * q[j]
        b = s - Ainv[i, r_del] * s_last / ajj
        ess += q[i] * b
    if ess < 0.0:
        ess = 0.0
    r2 = ess / uss
    if r2 > 1.0:
        r2 = 1.0
    return n * r2


@njit(cache=True)
def _swap_state(cols, theta, tvals, Ainv, k, a, b):
    if a == b:
        return
    cols[a], cols[b] = cols[b], cols[a]
    theta[a], theta[b] = theta[b], theta[a]
    tvals[a], tvals[b] = tvals[b], tvals[a]
    for i in range(k):
        Ainv[i, a], Ainv[i, b] = Ainv[i, b], Ainv[i, a]
    for j in range(k):
        Ainv[a, j], Ainv[b, j] = Ainv[b, j], Ainv[a, j]


@njit(cache=True)
def _recompute_tvals(theta, Ainv, rss, n, k, tvals):
    sigma2 = rss / (n - k)
    for i in range(k):
        v = sigma2 * Ainv[i, i]
        if v > 0.0:
            tvals[i] = theta[i] / np.sqrt(v)
        else:
            tvals[i] = 0.0


@njit(cache=True)
def gets_search(X, y, G, n_protected, t_crit, f_crit_row, chi2_crit, jb_crit,
                max_paths, max_rounds):
    """Multi-path backward search with union-of-terminals iteration.

    X : (n, m) Fortran-ordered design, column 0 the intercept, columns
        1..n_protected-1 forced.
    G : (m, m) Gram matrix of X.
    t_crit : two-sided t critical values indexed by residual dof.
    f_crit_row : F critical values indexed by (dropped count, dof_u).
    chi2_crit : chi-square critical values for the heteroscedasticity
        diagnostic, indexed by its dof.
    jb_crit : scalar chi-square(2) critical value for the normality
        diagnostic.

    Returns (selected mask over m columns, paths_explored,
    terminal_count, diag_ok flag, err code, err col).
    """
    n, m = X.shape

    sel = np.zeros(m, dtype=np.bool_)
    # Workspaces sized for the largest model.
    L = np.empty((m, m))
    W = np.empty((m, m))
    gum_cols = np.empty(m, dtype=np.int64)
    gum_theta = np.empty(m)
    gum_tvals = np.empty(m)
    gum_resid = np.empty(n)
    cols = np.empty(m, dtype=np.int64)
    theta = np.empty(m)
    tvals = np.empty(m)
    Ainv = np.empty((m, m))
    resid = np.empty(n)
    resid_new = np.empty(n)
    z = np.empty(n)
    u = np.empty(n)
    retained = np.zeros(m, dtype=np.bool_)
    active = np.zeros(m, dtype=np.bool_)
    order = np.empty(m, dtype=np.int64)
    traj = np.empty((2 * m + 4, 8), dtype=np.uint64)

    # Terminal store.
    max_terms = 2 * (m + max_paths) + 16
    term_masks = np.zeros((max_terms, 4), dtype=np.uint64)
    term_rss = np.empty(max_terms)
    term_k = np.empty(max_terms, dtype=np.int64)
    term_cols = np.zeros((max_terms, m), dtype=np.bool_)

    round_active = np.ones(m, dtype=np.bool_)

    # Round-one model fixes the backtest target.
    k1 = m
    for i in range(m):
        gum_cols[i] = i
    rss1, bad = _fit_active(X, y, G, gum_cols, k1, L, W, gum_theta, gum_resid)
    if bad >= 0:
        return sel, 0, 0, False, ERR_SINGULAR, gum_cols[bad]
    dof1 = n - k1

    paths_explored_max = 0
    terminal_count = 0
    final_first_term = 0
    rounds = 0

    while True:
        rounds += 1
        k_gum = 0
        for i in range(m):
            if round_active[i]:
                gum_cols[k_gum] = i
                k_gum += 1
        rss_gum, bad = _fit_active(X, y, G, gum_cols, k_gum, L, W, gum_theta, gum_resid)
        if bad >= 0:
            return sel, paths_explored_max, 0, False, ERR_SINGULAR, gum_cols[bad]
        _recompute_tvals(gum_theta, W, rss_gum, n, k_gum, gum_tvals)

        # Round battery decides which diagnostics are enforceable.
        jb0 = _jb_stat(gum_resid, n)
        enforce_jb = jb0 <= jb_crit
        mean_u = 0.0
        for t in range(n):
            u[t] = gum_resid[t] * gum_resid[t]
            mean_u += u[t]
        mean_u /= n
        for t in range(n):
            u[t] -= mean_u
        bp_dof0 = k_gum - 1
        if bp_dof0 >= 1:
            # full-model BP via the fitted inverse Gram (no deletion)
            uss = 0.0
            for t in range(n):
                uss += u[t] * u[t]
            ess = 0.0
            if uss > 0.0:
                qv = np.zeros(k_gum)
                for i in range(k_gum):
                    xc = X[:, gum_cols[i]]
                    s = 0.0
                    for t in range(n):
                        s += xc[t] * u[t]
                    qv[i] = s
                for i in range(k_gum):
                    s = 0.0
                    for j in range(k_gum):
                        s += W[i, j] * qv[j]
                    ess += qv[i] * s
                if ess < 0.0:
                    ess = 0.0
                r2 = ess / uss if uss > 0.0 else 0.0
                if r2 > 1.0:
                    r2 = 1.0
                bp0 = n * r2
            else:
                bp0 = 0.0
            enforce_bp = bp0 <= chi2_crit[bp_dof0]
        else:
            enforce_bp = True

        dof_gum = n - k_gum
        tc_gum = t_crit[dof_gum]

        # Paths: one per insignificant unprotected variable, least
        # significant first.
        n_paths = 0
        for i in range(n_protected, k_gum):
            if abs(gum_tvals[i]) < tc_gum:
                order[n_paths] = i
                n_paths += 1
        # sort ascending |t| (insertion sort; n_paths <= m)
        for a in range(1, n_paths):
            v = order[a]
            key = abs(gum_tvals[v])
            b = a - 1
            while b >= 0 and abs(gum_tvals[order[b]]) > key:
                order[b + 1] = order[b]
                b -= 1
            order[b + 1] = v
        if n_paths > max_paths:
            n_paths = max_paths
        if n_paths > paths_explored_max:
            paths_explored_max = n_paths

        memo = Dict.empty(KEY8, I64)
        term_dedup = Dict.empty(KEY4, I64)
        round_first_term = terminal_count

        if n_paths == 0:
            # The model as it stands is the sole terminal.
            am = _mask4(round_active, m)
            tkey = (am[0], am[1], am[2], am[3])
            if tkey not in term_dedup and terminal_count < max_terms:
                term_dedup[tkey] = terminal_count
                term_masks[terminal_count, 0] = am[0]
                term_masks[terminal_count, 1] = am[1]
                term_masks[terminal_count, 2] = am[2]
                term_masks[terminal_count, 3] = am[3]
                term_rss[terminal_count] = rss_gum
                term_k[terminal_count] = k_gum
                for i in range(m):
                    term_cols[terminal_count, i] = round_active[i]
                terminal_count += 1
            final_first_term = round_first_term
            break

        for pth in range(n_paths):
            v0 = order[pth]
            # Load the round model into the path workspace.
            k = k_gum
            for i in range(k):
                cols[i] = gum_cols[i]
                theta[i] = gum_theta[i]
                tvals[i] = gum_tvals[i]
            for i in range(k):
                for j in range(k):
                    Ainv[i, j] = W[i, j]
            for t in range(n):
                resid[t] = gum_resid[t]
            rss = rss_gum
            for i in range(m):
                retained[i] = False
                active[i] = round_active[i]

            n_traj = 0
            term_id = -1
            first_target = v0  # position in cols of the forced first victim
            forced_first = True

            while True:
                # Choose the deletion victim.
                r = -1
                if forced_first:
                    r = first_target
                    forced_first = False
                else:
                    tc = t_crit[n - k]
                    best = 1e300
                    for i in range(n_protected, k):
                        if retained[cols[i]]:
                            continue
                        a = abs(tvals[i])
                        if a < tc and a < best:
                            best = a
                            r = i
                if r < 0:
                    break  # terminal: everything significant or retained

                jcol = cols[r]
                _swap_state(cols, theta, tvals, Ainv, k, r, k - 1)
                r = k - 1
                ajj = Ainv[r, r]
                thq = theta[r]
                ok = ajj > 0.0

                # Backtest against the round-one model.
                if ok:
                    rss_new = rss + thq * thq / ajj
                    qdrop = k1 - (k - 1)
                    fstat = ((rss_new - rss1) / qdrop) / (rss1 / dof1)
                    if fstat > f_crit_row[qdrop]:
                        ok = False

                # Diagnostics on the candidate model.
                if ok and (enforce_jb or enforce_bp):
                    for t in range(n):
                        z[t] = X[t, jcol]
                    for i in range(k - 1):
                        a = Ainv[i, r] / ajj
                        if a != 0.0:
                            xc = X[:, cols[i]]
                            for t in range(n):
                                z[t] += a * xc[t]
                    for t in range(n):
                        resid_new[t] = resid[t] + thq * z[t]
                    if enforce_jb:
                        if _jb_stat(resid_new, n) > jb_crit:
                            ok = False
                    if ok and enforce_bp:
                        bp_dof = k - 2  # candidate has k-1 cols incl intercept
                        if bp_dof >= 1:
                            mu = 0.0
                            for t in range(n):
                                u[t] = resid_new[t] * resid_new[t]
                                mu += u[t]
                            mu /= n
                            for t in range(n):
                                u[t] -= mu
                            bp = _bp_stat_candidate(X, u, cols, k - 1, Ainv, r, ajj, n)
                            if bp > chi2_crit[bp_dof]:
                                ok = False

                if not ok:
                    retained[jcol] = True
                    continue

                # Commit the deletion.
                for i in range(k - 1):
                    theta[i] -= Ainv[i, r] * thq / ajj
                for i in range(k - 1):
                    for j in range(k - 1):
                        Ainv[i, j] -= Ainv[i, r] * Ainv[r, j] / ajj
                if enforce_jb or enforce_bp:
                    for t in range(n):
                        resid[t] = resid_new[t]
                rss = rss + thq * thq / ajj
                active[jcol] = False
                k -= 1
                _recompute_tvals(theta, Ainv, rss, n, k, tvals)

                key = _state_key(active, retained, m)
                if key in memo:
                    term_id = memo[key]
                    break
                if n_traj < traj.shape[0]:
                    for w in range(8):
                        traj[n_traj, w] = key[w]
                    n_traj += 1

            if term_id < 0:
                # Record a fresh terminal (dedup on the active mask).
                am = _mask4(active, m)
                tkey = (am[0], am[1], am[2], am[3])
                if tkey in term_dedup:
                    term_id = term_dedup[tkey]
                else:
                    if terminal_count < max_terms:
                        term_id = terminal_count
                        term_dedup[tkey] = term_id
                        term_masks[term_id, 0] = am[0]
                        term_masks[term_id, 1] = am[1]
                        term_masks[term_id, 2] = am[2]
                        term_masks[term_id, 3] = am[3]
                        term_rss[term_id] = rss
                        term_k[term_id] = k
                        for i in range(m):
                            term_cols[term_id, i] = active[i]
                        terminal_count += 1
                    else:
                        term_id = round_first_term
            for s in range(n_traj):
                kk = (traj[s, 0], traj[s, 1], traj[s, 2], traj[s, 3],
                      traj[s, 4], traj[s, 5], traj[s, 6], traj[s, 7])
                if kk not in memo:
                    memo[kk] = term_id

        # Union of this round's terminals.
        n_union = 0
        for i in range(m):
            hit = False
            for tI in range(round_first_term, terminal_count):
                if term_cols[tI, i]:
                    hit = True
                    break
            active[i] = hit
            if hit:
                n_union += 1
        final_first_term = round_first_term
        if n_union < k_gum and rounds < max_rounds:
            for i in range(m):
                round_active[i] = active[i]
            continue
        break

    # BIC tie-break among the final round's terminals.
    best_t = final_first_term
    best_bic = 1e300
    for tI in range(final_first_term, terminal_count):
        bic = n * np.log(term_rss[tI] / n) + term_k[tI] * np.log(n)
        if bic < best_bic:
            best_bic = bic
            best_t = tI
    for i in range(m):
        sel[i] = term_cols[best_t, i]

    # Battery verdict on the returned model.
    k = 0
    for i in range(m):
        if sel[i]:
            cols[k] = i
            k += 1
    rss, bad = _fit_active(X, y, G, cols, k, L, W, theta, resid)
    diag_ok = True
    if bad >= 0:
        diag_ok = False
    else:
        if _jb_stat(resid, n) > jb_crit:
            diag_ok = False
        if diag_ok and k >= 2:
            mu = 0.0
            for t in range(n):
                u[t] = resid[t] * resid[t]
                mu += u[t]
            mu /= n
            for t in range(n):
                u[t] -= mu
            uss = 0.0
            for t in range(n):
                uss += u[t] * u[t]
            if uss > 0.0:
                qv = np.zeros(k)
                for i in range(k):
                    xc = X[:, cols[i]]
                    s = 0.0
                    for t in range(n):
                        s += xc[t] * u[t]
                    qv[i] = s
                ess = 0.0
                for i in range(k):
                    s = 0.0
                    for j in range(k):
                        s += W[i, j] * qv[j]
                    ess += qv[i] * s
                if ess < 0.0:
                    ess = 0.0
                r2 = ess / uss
                if r2 > 1.0:
                    r2 = 1.0
                if n * r2 > chi2_crit[k - 1]:
                    diag_ok = False

    n_terms_final = terminal_count - final_first_term
    return sel, paths_explored_max, n_terms_final, diag_ok, ERR_OK, -1
