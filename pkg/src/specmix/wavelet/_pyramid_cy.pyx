# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled periodized pyramid kernels (hot path of the batch transforms).

Same coefficient layout as the pure-Python backend: slot 0 is the scaling
coefficient, slots [2**j, 2**(j+1)) the scale-j details.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def forward(x, g, h):
    x = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] xv = x
    cdef const double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef const double[::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    out = np.empty_like(x)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t batch = xv.shape[0], total = xv.shape[1]
    cur = np.empty(total, dtype=np.float64)
    nxt = np.empty(total, dtype=np.float64)
    cdef double[::1] wv = cur
    cdef double[::1] nv = nxt
    cdef Py_ssize_t b, n, half, m, i, idx, L = gv.shape[0]
    cdef double sa, sd
    for b in range(batch):
        for i in range(total):
            wv[i] = xv[b, i]
        n = total
        while n > 1:
            half = n // 2
            for m in range(half):
                sa = 0.0
                sd = 0.0
                for i in range(L):
                    idx = (2 * m + i) % n
                    sa += gv[i] * wv[idx]
                    sd += hv[i] * wv[idx]
                ov[b, half + m] = sd
                nv[m] = sa
            for m in range(half):
                wv[m] = nv[m]
            n = half
        ov[b, 0] = wv[0]
    return out


def inverse(c, g, h):
    c = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[:, ::1] cv = c
    cdef const double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef const double[::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef Py_ssize_t batch = cv.shape[0], total = cv.shape[1]
    out = np.empty((batch, total), dtype=np.float64)
    cdef double[:, ::1] ov = out
    approx = np.empty(total, dtype=np.float64)
    nxt = np.empty(total, dtype=np.float64)
    cdef double[::1] av = approx
    cdef double[::1] nv = nxt
    cdef Py_ssize_t b, n, m, i, idx, L = gv.shape[0]
    cdef double am, dm
    for b in range(batch):
        av[0] = cv[b, 0]
        n = 1
        while n < total:
            for i in range(2 * n):
                nv[i] = 0.0
            for m in range(n):
                am = av[m]
                dm = cv[b, n + m]
                for i in range(L):
                    idx = (2 * m + i) % (2 * n)
                    nv[idx] += gv[i] * am + hv[i] * dm
            for i in range(2 * n):
                av[i] = nv[i]
            n *= 2
        for i in range(total):
            ov[b, i] = av[i]
    return out
