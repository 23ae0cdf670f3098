"""Pure-NumPy periodized pyramid kernels (fallback backend).

Layout of a length-n transform (n dyadic): slot 0 holds the single scaling
coefficient, slots [2**j, 2**(j+1)) hold the detail coefficients of scale j,
coarsest first.  Both kernels operate on batches of rows.
"""

import numpy as np

BACKEND = "python"


def forward(x, g, h):
    """Orthonormal periodized analysis of each row of x (shape (B, n))."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    batch, n = x.shape
    out = np.empty_like(x)
    approx = x
    length = g.size
    taps = np.arange(length)
    while n > 1:
        half = n // 2
        base = 2 * np.arange(half)
        idx = (base[:, None] + taps[None, :]) % n
        window = approx[:, idx]
        out[:, half:n] = window @ h
        approx = window @ g
        n = half
    out[:, 0] = approx[:, 0]
    return out


def inverse(c, g, h):
    """Exact inverse of forward for each row of c (shape (B, n))."""
    c = np.ascontiguousarray(c, dtype=np.float64)
    batch, total = c.shape
    approx = c[:, :1].copy()
    length = g.size
    n = 1
    while n < total:
        detail = c[:, n : 2 * n]
        up = np.zeros((batch, 2 * n), dtype=np.float64)
        base = 2 * np.arange(n)
        for i in range(length):
            idx = (base + i) % (2 * n)
            up[:, idx] += g[i] * approx + h[i] * detail
        approx = up
        n *= 2
    return approx
