"""Loop-form kernel implementations.

These functions are written in numba-compatible numpy style: the numba
backend jits them unchanged, and the numpy backend either runs them as-is
(coordinate descent) or swaps in vectorized equivalents (resampled
directions, nearest-neighbor means). Keep them free of Python objects,
closures, and keyword-only tricks.
"""

import numpy as np


def boot_sir_impl(Z, x_order, counts, quotas, jitter_rel):
    """Direction estimates for resampled stage-one data given row multiplicities.

    Z : (n, p) instrument rows, any centering (each resample is re-centered).
    x_order : (n,) stable ascending order of the exposure.
    counts : (M, n) nonnegative row multiplicities, each row summing to n.
    quotas : (S,) slice sizes summing to n.
    Returns (thetas (M, p), ok (M,) uint8). A failed resample leaves ok = 0.

    Equal-exposure ties collapse to ascending original row order, which is
    what a stable sort of the expanded resample produces up to the ordering
    of distinct tied rows.
    """
    n, p = Z.shape
    M = counts.shape[0]
    S = quotas.shape[0]
    thetas = np.zeros((M, p))
    ok = np.zeros(M, dtype=np.uint8)
    qcum = np.zeros(S + 1, dtype=np.int64)
    for s in range(S):
        qcum[s + 1] = qcum[s] + quotas[s]
    U = np.empty((n, p))
    for m in range(M):
        c = counts[m]
        mu = np.zeros(p)
        for i in range(n):
            ci = c[i]
            if ci > 0:
                for j in range(p):
                    mu[j] += ci * Z[i, j]
        mu /= n
        for i in range(n):
            f = np.sqrt(float(c[i]))
            for j in range(p):
                U[i, j] = f * Z[i, j]
        Sig = np.dot(U.T, U) / n
        for a in range(p):
            for b in range(p):
                Sig[a, b] -= mu[a] * mu[b]
        # slice sums walking rows in exposure order, splitting multiplicities
        # at slice boundaries
        zbar = np.zeros((S, p))
        s = 0
        acc = 0
        for t in range(n):
            i = x_order[t]
            ci = c[i]
            while ci > 0:
                room = qcum[s + 1] - acc
                take = ci if ci < room else room
                for j in range(p):
                    zbar[s, j] += take * Z[i, j]
                acc += take
                ci -= take
                if acc == qcum[s + 1] and s < S - 1:
                    s += 1
        for s2 in range(S):
            q = quotas[s2]
            for j in range(p):
                zbar[s2, j] = zbar[s2, j] / q - mu[j]
        Gam = np.zeros((p, p))
        for s2 in range(S):
            w = quotas[s2] / n
            for a in range(p):
                va = w * zbar[s2, a]
                for b in range(p):
                    Gam[a, b] += va * zbar[s2, b]
        finite = True
        for a in range(p):
            for b in range(p):
                if not np.isfinite(Sig[a, b]) or not np.isfinite(Gam[a, b]):
                    finite = False
        if not finite:
            continue
        tr = 0.0
        for j in range(p):
            tr += Sig[j, j]
        eps = jitter_rel * tr / p
        evals = np.linalg.eigh(Sig)[0]
        if evals[0] < eps:
            if evals[0] + eps <= 0.0:
                continue
            for j in range(p):
                Sig[j, j] += eps
        L = np.linalg.cholesky(Sig)
        W1 = np.linalg.solve(L, Gam)
        W = np.linalg.solve(L, np.ascontiguousarray(W1.T))
        for a in range(p):
            for b in range(a + 1, p):
                v = 0.5 * (W[a, b] + W[b, a])
                W[a, b] = v
                W[b, a] = v
        evecs = np.linalg.eigh(W)[1]
        v1 = np.ascontiguousarray(evecs[:, p - 1])
        theta = np.linalg.solve(np.ascontiguousarray(L.T), v1)
        jmax = 0
        amax = -1.0
        for j in range(p):
            aj = abs(theta[j])
            if aj > amax:
                amax = aj
                jmax = j
        if theta[jmax] < 0.0:
            theta = -theta
        for j in range(p):
            thetas[m, j] = theta[j]
        ok[m] = 1
    return thetas, ok


def cd_path_impl(R, sbar, g, c_theta, t_theta, lambdas, pen_code, pen_a, pen_tau,
                 max_iter, tol):
    """Penalized coordinate descent along a penalty-level path with warm starts.

    Works in standardized coordinates: R has unit diagonal, sbar are the
    standardized cross moments, g the standardized loadings of the fixed
    direction, c_theta its quadratic form, t_theta its cross moment. The
    smooth part is 0.5*(b'Sb) - s'b written in (beta, alpha) blocks; the
    direction coefficient beta is unpenalized and minimized exactly each
    sweep, each alpha coordinate is solved by its exact scalar prox.
    pen_code: 0 SCAD, 1 MCP, 2 truncated-L1.
    Returns (alphas (L, p), betas (L,), iters (L,), monotone (L,), converged (L,)).
    """
    p = R.shape[0]
    L = lambdas.shape[0]
    alphas = np.zeros((L, p))
    betas = np.zeros(L)
    iters = np.zeros(L, dtype=np.int64)
    monotone = np.ones(L, dtype=np.uint8)
    converged = np.zeros(L, dtype=np.uint8)
    a_cur = np.zeros(p)
    v = np.zeros(p)  # v = R @ a_cur, maintained incrementally
    for li in range(L):
        lam = lambdas[li]
        # penalty value helper constants
        if pen_code == 0:
            thr_a = pen_a
        elif pen_code == 1:
            thr_a = pen_a
        else:
            thr_a = pen_tau
        ga = 0.0
        for j in range(p):
            ga += g[j] * a_cur[j]
        beta = (t_theta - ga) / c_theta
        pen_sum = 0.0
        for j in range(p):
            t = abs(a_cur[j])
            if pen_code == 0:
                if t <= lam:
                    pen_sum += lam * t
                elif t <= pen_a * lam:
                    pen_sum += (2.0 * pen_a * lam * t - t * t - lam * lam) / (2.0 * (pen_a - 1.0))
                else:
                    pen_sum += lam * lam * (pen_a + 1.0) / 2.0
            elif pen_code == 1:
                if t <= pen_a * lam:
                    pen_sum += lam * t - t * t / (2.0 * pen_a)
                else:
                    pen_sum += pen_a * lam * lam / 2.0
            else:
                pen_sum += lam * min(t, pen_tau) / pen_tau
        av = 0.0
        sa = 0.0
        for j in range(p):
            av += a_cur[j] * v[j]
            sa += sbar[j] * a_cur[j]
        obj = 0.5 * (beta * beta * c_theta + 2.0 * beta * ga + av) \
            - beta * t_theta - sa + pen_sum
        mono_ok = np.uint8(1)
        it = 0
        while it < max_iter:
            it += 1
            ga = 0.0
            for j in range(p):
                ga += g[j] * a_cur[j]
            beta = (t_theta - ga) / c_theta
            for j in range(p):
                aj = a_cur[j]
                zj = sbar[j] - beta * g[j] - (v[j] - aj)
                azj = abs(zj)
                sgn = 1.0 if zj >= 0.0 else -1.0
                if pen_code == 0:  # SCAD, exact scalar minimizer for a > 2
                    if azj <= 2.0 * lam:
                        new_aj = sgn * max(azj - lam, 0.0)
                    elif azj <= pen_a * lam:
                        new_aj = ((pen_a - 1.0) * zj - sgn * pen_a * lam) / (pen_a - 2.0)
                    else:
                        new_aj = zj
                elif pen_code == 1:  # MCP, exact scalar minimizer for a > 1
                    if azj <= lam:
                        new_aj = 0.0
                    elif azj <= pen_a * lam:
                        new_aj = sgn * (azj - lam) / (1.0 - 1.0 / pen_a)
                    else:
                        new_aj = zj
                else:  # truncated L1: lam * min(|t|, tau) / tau
                    gam = lam / pen_tau
                    cand = sgn * max(azj - gam, 0.0)
                    if abs(cand) > pen_tau:
                        cand = sgn * pen_tau
                    obj_cand = 0.5 * (cand - zj) ** 2 + gam * min(abs(cand), pen_tau)
                    obj_far = 0.5 * 0.0 + lam
                    if azj >= pen_tau and obj_far < obj_cand - 1e-15:
                        new_aj = zj
                    else:
                        new_aj = cand
                if new_aj != aj:
                    delta = new_aj - aj
                    # R symmetric, row access keeps the walk contiguous
                    for t2 in range(p):
                        v[t2] += R[j, t2] * delta
                    a_cur[j] = new_aj
            # objective after the sweep
            ga = 0.0
            av = 0.0
            sa = 0.0
            for j in range(p):
                ga += g[j] * a_cur[j]
                av += a_cur[j] * v[j]
                sa += sbar[j] * a_cur[j]
            pen_sum = 0.0
            for j in range(p):
                t = abs(a_cur[j])
                if pen_code == 0:
                    if t <= lam:
                        pen_sum += lam * t
                    elif t <= pen_a * lam:
                        pen_sum += (2.0 * pen_a * lam * t - t * t - lam * lam) / (2.0 * (pen_a - 1.0))
                    else:
                        pen_sum += lam * lam * (pen_a + 1.0) / 2.0
                elif pen_code == 1:
                    if t <= pen_a * lam:
                        pen_sum += lam * t - t * t / (2.0 * pen_a)
                    else:
                        pen_sum += pen_a * lam * lam / 2.0
                else:
                    pen_sum += lam * min(t, pen_tau) / pen_tau
            new_obj = 0.5 * (beta * beta * c_theta + 2.0 * beta * ga + av) \
                - beta * t_theta - sa + pen_sum
            if new_obj > obj + 1e-12 * (1.0 + abs(obj)):
                mono_ok = np.uint8(0)
            done = abs(obj - new_obj) <= tol * (1.0 + abs(obj))
            obj = new_obj
            if done:
                converged[li] = 1
                break
        iters[li] = it
        monotone[li] = mono_ok
        betas[li] = beta
        for j in range(p):
            alphas[li, j] = a_cur[j]
    return alphas, betas, iters, monotone, converged


def knn_means_impl(x_train, r_train, x_query, k):
    """Mean of r over the k nearest x_train points for each query.

    Distance ties break toward the smaller training row index (stable sort
    on distance). Out-of-range queries keep the k edge points, so the fit
    clamps to the nearest-edge fitted value.
    """
    n = x_train.shape[0]
    nq = x_query.shape[0]
    out = np.empty(nq)
    d = np.empty(n)
    for t in range(nq):
        xq = x_query[t]
        for i in range(n):
            d[i] = abs(x_train[i] - xq)
        order = np.argsort(d, kind="mergesort")
        acc = 0.0
        for j in range(k):
            acc += r_train[order[j]]
        out[t] = acc / k
    return out
