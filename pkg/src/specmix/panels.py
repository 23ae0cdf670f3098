"""Replicate panel containers and their CSV / binary serialization.

All panels are S x ncol float64 matrices with immutable storage.  The CSV
format has one header row of column labels and one row per replicate; the
binary format is magic b'SPXP1', two little-endian u32 dims, then row-major
little-endian f64 payload.
"""

import io
import os
from dataclasses import dataclass

import numpy as np

from .errors import NonDyadicLength, PanelFormatError

_MAGIC = b"SPXP1"


def _freeze(arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _require_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite entries")


def _require_dyadic(n, what):
    if n < 2 or n & (n - 1):
        raise NonDyadicLength(f"{what} length {n} is not a power of two")


@dataclass(frozen=True)
class TimeSeriesPanel:
    """S replicate series of dyadic length 2T, sampled at t = 1..2T."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        _require_dyadic(arr.shape[1], "time series")
        _require_finite(arr, "time series panel")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def n_replicates(self):
        return self.data.shape[0]

    @property
    def n_time(self):
        return self.data.shape[1]

    @property
    def half_length(self):
        """T such that the series length is 2T."""
        return self.data.shape[1] // 2


@dataclass(frozen=True)
class LogPeriodogramPanel:
    """Bias-corrected log-periodograms on the Fourier grid l/(2T), l=0..T-1."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        _require_dyadic(arr.shape[1], "frequency grid")
        _require_finite(arr, "log-periodogram panel")
        object.__setattr__(self, "values", _freeze(arr))

    @property
    def n_replicates(self):
        return self.values.shape[0]

    @property
    def n_freq(self):
        return self.values.shape[1]

    @property
    def frequencies(self):
        T = self.values.shape[1]
        return np.arange(T) / (2.0 * T)


@dataclass(frozen=True)
class CoefficientPanel:
    """S x T matrix of wavelet coefficients, columns ordered by index k=1..T."""

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.coeffs, dtype=np.float64))
        _require_dyadic(arr.shape[1], "coefficient grid")
        _require_finite(arr, "coefficient panel")
        object.__setattr__(self, "coeffs", _freeze(arr))

    @property
    def n_replicates(self):
        return self.coeffs.shape[0]

    @property
    def n_coeff(self):
        return self.coeffs.shape[1]


def write_matrix_csv(path, matrix, column_labels):
    """Shortest round-trip decimal formatting keeps golden files stable."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if len(column_labels) != matrix.shape[1]:
        raise ValueError("column label count does not match matrix width")
    buf = io.StringIO()
    buf.write(",".join(str(c) for c in column_labels))
    buf.write("\n")
    for row in matrix:
        buf.write(",".join(repr(float(x)) for x in row))
        buf.write("\n")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(buf.getvalue())


def read_matrix_csv(path):
    """Returns (matrix, column_labels)."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        if not header:
            raise PanelFormatError(f"{path}: empty file")
        labels = header.rstrip("\n").split(",")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(labels):
                raise PanelFormatError(
                    f"{path}: row {lineno} has {len(parts)} fields, "
                    f"expected {len(labels)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise PanelFormatError(f"{path}: row {lineno}: {exc}") from exc
    if not rows:
        raise PanelFormatError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64), labels


def write_matrix_binary(path, matrix):
    matrix = np.atleast_2d(np.ascontiguousarray(matrix, dtype=np.float64))
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.asarray([rows, cols], dtype="<u4").tobytes())
        fh.write(matrix.astype("<f8", copy=False).tobytes())


def read_matrix_binary(path):
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != _MAGIC:
            raise PanelFormatError(f"{path}: bad magic {magic!r}")
        dims = np.frombuffer(fh.read(8), dtype="<u4")
        if dims.size != 2:
            raise PanelFormatError(f"{path}: truncated header")
        rows, cols = int(dims[0]), int(dims[1])
        expected = 5 + 8 + 8 * rows * cols
        if size != expected:
            raise PanelFormatError(
                f"{path}: payload size {size} does not match dims {rows}x{cols}"
            )
        payload = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8")
    return payload.reshape(rows, cols).astype(np.float64)
