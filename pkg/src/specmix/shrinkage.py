"""Threshold rules, selection statistics, and the special functions they need.

Hard thresholding only; sigma_e^2 = pi^2/6 is the known log-periodogram noise
variance and is configurable for experimentation, never estimated.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DegenerateVariance,
    DomainError,
    InvalidSparsity,
)
from .wavelet import scales_of_indices

SIGMA_E2 = math.pi**2 / 6.0

_SQRT2 = math.sqrt(2.0)

# Bernoulli-number coefficients of the asymptotic tails, smallest order first
_DIGAMMA_TAIL = (
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
    -1.0 / 12.0,
)
_TRIGAMMA_TAIL = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)
_SHIFT_CUTOFF = 12.0


def digamma(x):
    """psi(x) for x > 0, via recurrence shift plus asymptotic expansion."""
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"digamma requires x > 0, got {x}")
    acc = 0.0
    while x < _SHIFT_CUTOFF:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    tail = 0.0
    power = inv2
    for coeff in _DIGAMMA_TAIL:
        tail += coeff * power
        power *= inv2
    return acc + math.log(x) - 0.5 / x + tail


def trigamma(x):
    """psi'(x) for x > 0, via recurrence shift plus asymptotic expansion."""
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"trigamma requires x > 0, got {x}")
    acc = 0.0
    while x < _SHIFT_CUTOFF:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    tail = 0.0
    power = inv * inv2
    for coeff in _TRIGAMMA_TAIL:
        tail += coeff * power
        power *= inv2
    return acc + inv + 0.5 * inv2 + tail


def norm_cdf(z):
    return 0.5 * math.erfc(-z / _SQRT2)


def norm_sf(z):
    return 0.5 * math.erfc(z / _SQRT2)


def norm_pdf(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


_erfc_vec = np.frompyfunc(math.erfc, 1, 1)


def two_sided_pvalues(z, noise_sd):
    """p_k = 2 (1 - Phi(|z_k| / noise_sd)) computed without cancellation."""
    if noise_sd <= 0:
        raise ValueError("noise_sd must be positive")
    z = np.abs(np.asarray(z, dtype=np.float64)) / noise_sd
    return _erfc_vec(z / _SQRT2).astype(np.float64)


@dataclass(frozen=True)
class SelectedSet:
    """Sorted 1-based indices of selected coefficients, with the cutoff used."""

    indices: np.ndarray
    threshold_used: float

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def size(self):
        return int(self.indices.size)

    def mask(self, T):
        if self.indices.size and (self.indices[0] < 1 or self.indices[-1] > T):
            raise ValueError("selected indices outside 1..T")
        m = np.zeros(T, dtype=bool)
        m[self.indices - 1] = True
        return m

    @classmethod
    def from_mask(cls, mask, threshold_used):
        return cls(np.flatnonzero(np.asarray(mask, dtype=bool)) + 1, threshold_used)


@dataclass(frozen=True)
class ThresholdConfig:
    """Selection configuration; exactly one of k_h / fdr_q drives fixed effects.

    scale_cutoff_alpha = None excludes exactly the finest wavelet scale;
    a numeric alpha in (0, 1] admits scales with 2**j <= T**(1 - alpha).
    """

    sigma_e2: float = SIGMA_E2
    k_h: int | None = None
    fdr_q: float | None = None
    scale_cutoff_alpha: float | None = None

    def __post_init__(self):
        if (self.k_h is None) == (self.fdr_q is None):
            raise ConfigError("exactly one of k_h / fdr_q must be set")
        if self.sigma_e2 <= 0:
            raise ConfigError("sigma_e2 must be positive")
        if self.k_h is not None and self.k_h < 1:
            raise ConfigError("k_h must be >= 1")
        if self.fdr_q is not None and not 0.0 < self.fdr_q <= 1.0:
            raise ConfigError("fdr_q must lie in (0, 1]")
        if self.scale_cutoff_alpha is not None and not (
            0.0 < self.scale_cutoff_alpha <= 1.0
        ):
            raise ConfigError("scale_cutoff_alpha must lie in (0, 1]")


def admissible_scale_mask(T, alpha=None):
    """Boolean mask over k = 1..T of scale-admissible indices.

    With alpha given, keeps {1} union {k >= 2 : 2**scale(k) <= T**(1-alpha)};
    with alpha = None it keeps everything except the finest wavelet scale.
    """
    scales = scales_of_indices(T)
    if alpha is None:
        bound = T // 2  # exclusive: drops exactly the scale with T/2 coefficients
        mask = (1 << np.maximum(scales, 0)) < bound if T > 2 else scales < 0
        mask = np.asarray(mask, dtype=bool)
        mask[0] = True
        return mask
    bound = float(T) ** (1.0 - alpha)
    mask = (1 << np.maximum(scales, 0)).astype(np.float64) <= bound
    mask[0] = True
    return mask


def universal_threshold_h(S, T, k_h, sigma_e2=SIGMA_E2):
    """sqrt(sigma_e^2/(S T)) * sqrt(2 log(T / k_h))."""
    if not 1 <= k_h < T:
        raise InvalidSparsity(f"k_h must satisfy 1 <= k_h < T, got {k_h}")
    return math.sqrt(sigma_e2 / (S * T)) * math.sqrt(2.0 * math.log(T / k_h))


def universal_threshold_u(S, T):
    """sqrt(trigamma(S/2)) * sqrt(2 log T); conservative variance threshold."""
    if S < 1 or T < 2:
        raise ValueError("need S >= 1 and T >= 2")
    return math.sqrt(trigamma(S / 2.0)) * math.sqrt(2.0 * math.log(T))


def fdr_select(z, noise_sd, q):
    """Two-sided step-up selection at rate q; returns a SelectedSet.

    Ties in the sorted p-values are broken by index order, so the output is
    deterministic for any input.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    z = np.asarray(z, dtype=np.float64)
    T = z.size
    pvals = two_sided_pvalues(z, noise_sd)
    order = np.argsort(pvals, kind="stable")
    sorted_p = pvals[order]
    steps = q * np.arange(1, T + 1) / T
    passing = np.flatnonzero(sorted_p <= steps)
    if passing.size == 0:
        return SelectedSet(np.empty(0, dtype=np.int64), math.inf)
    m = passing[-1]
    cutoff = float(np.abs(z[order[m]]))
    mask = np.abs(z) >= cutoff
    return SelectedSet.from_mask(mask, cutoff)


def variance_statistic(Yk, h_k_hat, T, sigma_e2=SIGMA_E2):
    """Log sample variance about h_k_hat, centered to be ~N(0, trigamma(S/2))."""
    Yk = np.asarray(Yk, dtype=np.float64)
    S = Yk.size
    if S < 2:
        raise ValueError("variance statistic needs S >= 2")
    ssq = float(np.mean((Yk - h_k_hat) ** 2))
    if ssq == 0.0:
        raise DegenerateVariance("centered sum of squares is zero")
    return math.log(ssq) - math.log(2.0 * sigma_e2 / (S * T)) - digamma(S / 2.0)


def variance_statistics(Y, h_hat, sigma_e2=SIGMA_E2):
    """Vectorized variance statistic for every column of an S x T panel.

    Columns with exactly zero centered sum of squares map to -inf, the
    continuous limit of the statistic (they select with zero variance).
    """
    Y = np.asarray(Y, dtype=np.float64)
    S, T = Y.shape
    ssq = np.mean((Y - h_hat[None, :]) ** 2, axis=0)
    out = np.full(T, -np.inf)
    pos = ssq > 0.0
    out[pos] = (
        np.log(ssq[pos]) - math.log(2.0 * sigma_e2 / (S * T)) - digamma(S / 2.0)
    )
    return out
