"""Vectorized numpy fallbacks for the hot kernels.

boot_sir and knn_means batch their work in chunks to bound peak memory.
Coordinate descent stays on the loop-form implementation: it runs once per
fit, not per resample, so the interpreter overhead is acceptable.
"""

import numpy as np

from ._kernels_impl import cd_path_impl as cd_path

# target elements per temporary batch array
_CHUNK_ELEMS = 4_000_000


def boot_sir(Z, x_order, counts, quotas, jitter_rel):
    n, p = Z.shape
    M = counts.shape[0]
    S = quotas.shape[0]
    thetas = np.zeros((M, p))
    ok = np.zeros(M, dtype=np.uint8)
    qcum = np.concatenate(([0], np.cumsum(quotas)))
    Zs = Z[x_order]
    chunk = max(1, int(_CHUNK_ELEMS / (n * p)))
    for lo in range(0, M, chunk):
        hi = min(M, lo + chunk)
        C = counts[lo:hi].astype(np.float64)
        B = hi - lo
        mu = C @ Z / n
        U = np.sqrt(C)[:, :, None] * Z[None, :, :]
        Sig = U.transpose(0, 2, 1) @ U / n - mu[:, :, None] * mu[:, None, :]
        Cs = C[:, x_order]
        cum = np.cumsum(Cs, axis=1)
        prev = cum - Cs
        Gam = np.zeros((B, p, p))
        for s in range(S):
            W = np.minimum(cum, qcum[s + 1]) - np.maximum(prev, qcum[s])
            np.clip(W, 0.0, None, out=W)
            zbar = W @ Zs / quotas[s] - mu
            Gam += (quotas[s] / n) * (zbar[:, :, None] * zbar[:, None, :])
        good = (np.isfinite(Sig).all(axis=(1, 2))
                & np.isfinite(Gam).all(axis=(1, 2)))
        Sig[~good] = np.eye(p)
        Gam[~good] = 0.0
        eps = jitter_rel * np.trace(Sig, axis1=1, axis2=2) / p
        evmin = np.linalg.eigvalsh(Sig)[:, 0]
        dead = evmin + eps <= 0.0
        good &= ~dead
        Sig[dead] = np.eye(p)
        need = (evmin < eps) & good
        Sig[need] += eps[need, None, None] * np.eye(p)
        try:
            L = np.linalg.cholesky(Sig)
        except np.linalg.LinAlgError:
            L = np.empty_like(Sig)
            for b in range(B):
                try:
                    L[b] = np.linalg.cholesky(Sig[b])
                except np.linalg.LinAlgError:
                    L[b] = np.eye(p)
                    good[b] = False
        W1 = np.linalg.solve(L, Gam)
        Wm = np.linalg.solve(L, W1.transpose(0, 2, 1))
        Wm = 0.5 * (Wm + Wm.transpose(0, 2, 1))
        vecs = np.linalg.eigh(Wm)[1]
        th = np.linalg.solve(L.transpose(0, 2, 1), vecs[:, :, -1:])[:, :, 0]
        jmax = np.argmax(np.abs(th), axis=1)
        flip = th[np.arange(B), jmax] < 0.0
        th[flip] = -th[flip]
        good &= np.isfinite(th).all(axis=1)
        th[~good] = 0.0
        thetas[lo:hi] = th
        ok[lo:hi] = good.astype(np.uint8)
    return thetas, ok


def knn_means(x_train, r_train, x_query, k):
    n = x_train.shape[0]
    nq = x_query.shape[0]
    out = np.empty(nq)
    chunk = max(1, int(_CHUNK_ELEMS / max(n, 1)))
    for lo in range(0, nq, chunk):
        hi = min(nq, lo + chunk)
        d = np.abs(x_query[lo:hi, None] - x_train[None, :])
        idx = np.argsort(d, axis=1, kind="mergesort")[:, :k]
        out[lo:hi] = r_train[idx].mean(axis=1)
    return out
