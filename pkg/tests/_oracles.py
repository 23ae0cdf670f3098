"""Independent reference implementations used as test oracles.

These deliberately avoid the package's own code paths: matrix transforms are
built as explicit matrices, selections by exhaustive scans, projections by
baseline constructions.
"""

import numpy as np


def explicit_transform_matrix(T, g, h):
    """Orthonormal pyramid transform as an explicit matrix product."""

    def stage(n):
        A = np.zeros((n, n))
        half = n // 2
        for m in range(half):
            for i, gv in enumerate(g):
                A[m, (2 * m + i) % n] += gv
            for i, hv in enumerate(h):
                A[half + m, (2 * m + i) % n] += hv
        return A

    W = np.eye(T)
    n = T
    while n > 1:
        full = np.eye(T)
        full[:n, :n] = stage(n)
        W = full @ W
        n //= 2
    return W


def brute_force_fdr(z, noise_sd, q):
    """O(T^2) exhaustive step-up scan over all candidate cutoffs."""
    from math import erfc, sqrt, inf

    z = np.asarray(z, dtype=np.float64)
    T = z.size
    pvals = np.array([erfc(abs(v) / noise_sd / sqrt(2.0)) for v in z])
    best = None
    order = np.argsort(pvals, kind="stable")
    for m in range(T, 0, -1):
        p_m = pvals[order[m - 1]]
        if p_m <= q * m / T:
            best = m
            break
    if best is None:
        return np.zeros(T, dtype=bool), inf
    cutoff = abs(z[order[best - 1]])
    return np.abs(z) >= cutoff, cutoff


def clip_and_rescale_correlation(M):
    """Eigenvalue clipping followed by unit-diagonal rescaling (baseline)."""
    evals, evecs = np.linalg.eigh(np.asarray(M, dtype=np.float64))
    B = (evecs * np.maximum(evals, 0.0)) @ evecs.T
    d = np.sqrt(np.clip(np.diag(B), 1e-300, None))
    out = B / np.outer(d, d)
    np.fill_diagonal(out, 1.0)
    return 0.5 * (out + out.T)


def hard_threshold_mse_mc(h_k, lam, V, w, n_draws, seed):
    """Monte-Carlo risk of the thresholded weighted mean; returns (mean, se)."""
    V = np.asarray(V, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    S = V.shape[0]
    rng = np.random.default_rng(seed)
    L = np.linalg.cholesky(V + 1e-14 * np.eye(S))
    sq_sum = 0.0
    sq_sq_sum = 0.0
    chunk = 200_000
    remaining = n_draws
    while remaining > 0:
        n = min(chunk, remaining)
        xi = h_k + rng.standard_normal((n, S)) @ L.T
        est = (xi @ w) * (np.abs(xi.mean(axis=1)) >= lam)
        errs = (est - h_k) ** 2
        sq_sum += errs.sum()
        sq_sq_sum += (errs**2).sum()
        remaining -= n
    mean = sq_sum / n_draws
    var = sq_sq_sum / n_draws - mean**2
    return mean, np.sqrt(max(var, 0.0) / n_draws)
