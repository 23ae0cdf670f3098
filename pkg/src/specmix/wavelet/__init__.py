"""Periodized orthonormal discrete wavelet transform.

The transform matrix is 1/sqrt(T) times an orthonormal periodized pyramid
transform, so a length-T forward/inverse pair satisfies W W' = I/T.  Scale
ordering follows the compressed scale-location index: k=1 (slot 0) is the
single scaling coefficient, k >= 2 sits at scale floor(log2(k-1)).

The hot kernels come from a compiled Cython extension when available and
fall back to a NumPy implementation otherwise.  Set SPECMIX_PURE_PYTHON=1
to force the fallback.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    IndexOutOfRange,
    LengthBelowFilterSupport,
    NonDyadicLength,
)
from . import _pyramid_py
from ._filters import check_orthonormality, scaling_filter, wavelet_filter

if os.environ.get("SPECMIX_PURE_PYTHON"):
    _kernels = _pyramid_py
else:
    try:
        from . import _pyramid_cy as _kernels
    except ImportError:
        _kernels = _pyramid_py


def backend_name():
    """Name of the active transform backend ('cython' or 'python')."""
    return _kernels.BACKEND


def available_backends():
    names = ["python"]
    try:
        from . import _pyramid_cy  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def _backend_module(name):
    if name == "python":
        return _pyramid_py
    if name == "cython":
        from . import _pyramid_cy

        return _pyramid_cy
    raise ValueError(f"unknown backend {name!r}")


@dataclass(frozen=True)
class WaveletBasisSpec:
    """Daubechies extremal-phase basis with periodic boundary handling."""

    vanishing_moments: int = 6
    family: str = "DaubechiesExtremalPhase"
    normalization: str = "paper-1/sqrtT"
    _filters: tuple = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.family != "DaubechiesExtremalPhase":
            raise ValueError(f"unsupported wavelet family {self.family!r}")
        if self.normalization != "paper-1/sqrtT":
            raise ValueError(f"unsupported normalization {self.normalization!r}")
        g = scaling_filter(self.vanishing_moments)
        check_orthonormality(g)
        h = wavelet_filter(g)
        object.__setattr__(self, "_filters", (g, h))

    @property
    def filter_length(self):
        return 2 * self.vanishing_moments

    @property
    def filters(self):
        return self._filters


DEFAULT_BASIS = WaveletBasisSpec()


def _check_length(n, basis):
    if n < 2 or n & (n - 1):
        raise NonDyadicLength(f"length {n} is not a power of two >= 2")
    if n < basis.filter_length:
        raise LengthBelowFilterSupport(
            f"length {n} below filter support {basis.filter_length}"
        )


def dwt(v, basis=DEFAULT_BASIS):
    """Forward transform, scaled by 1/sqrt(T).  Accepts a vector or row batch."""
    arr = np.asarray(v, dtype=np.float64)
    single = arr.ndim == 1
    rows = arr[None, :] if single else arr
    _check_length(rows.shape[1], basis)
    g, h = basis.filters
    out = _kernels.forward(rows, g, h)
    out /= math.sqrt(rows.shape[1])
    return out[0] if single else out


def idwt(c, basis=DEFAULT_BASIS):
    """Exact inverse of dwt.  Accepts a vector or row batch."""
    arr = np.asarray(c, dtype=np.float64)
    single = arr.ndim == 1
    rows = arr[None, :] if single else arr
    _check_length(rows.shape[1], basis)
    g, h = basis.filters
    out = _kernels.inverse(rows * math.sqrt(rows.shape[1]), g, h)
    return out[0] if single else out


def scale_of_index(k, T):
    """Wavelet scale of index k in 1..T; the scaling coefficient maps to -1."""
    if not 1 <= k <= T:
        raise IndexOutOfRange(f"index {k} outside 1..{T}")
    if k == 1:
        return -1
    return int(math.floor(math.log2(k - 1)))


def scales_of_indices(T):
    """Vector of scales for k = 1..T (slot 0 gets the sentinel -1)."""
    scales = np.empty(T, dtype=np.int64)
    scales[0] = -1
    k = np.arange(2, T + 1)
    scales[1:] = np.floor(np.log2(k - 1)).astype(np.int64)
    return scales


def sparsify(coeffs, tol):
    """Hard-zero entries with |c| < tol; returns (new vector, surviving 1-based k)."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    arr = np.asarray(coeffs, dtype=np.float64)
    keep = np.abs(arr) >= tol
    out = np.where(keep, arr, 0.0)
    return out, np.flatnonzero(keep) + 1
