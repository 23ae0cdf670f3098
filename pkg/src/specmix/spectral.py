"""Discrete Fourier analysis of replicate panels.

Provides the bias-corrected log-periodogram of a panel and analytic ARMA
log-spectra used as simulation ground truth.
"""

import math

import numpy as np

from .errors import UnstableModel, ZeroPowerBin
from .panels import LogPeriodogramPanel, TimeSeriesPanel

EULER_GAMMA = 0.5772156649015329

# ARMA convention: AR polynomial 1 - sum_p phi_p z^p, MA polynomial
# 1 + sum_q theta_q z^q, evaluated at z = exp(-2*pi*i*omega).
ARMA_SIGN_CONVENTION = "AR: 1 - sum(phi_p z^p); MA: 1 + sum(theta_q z^q)"


def log_periodogram(panel):
    """Bias-corrected log-periodograms on frequencies l/(2T), l = 0..T-1.

    Y_s(w_l) = log((1/2T) |sum_t X_s(t) exp(-2 pi i w_l t)|^2) + gamma with
    gamma the Euler-Mascheroni constant.
    """
    if not isinstance(panel, TimeSeriesPanel):
        panel = TimeSeriesPanel(np.asarray(panel))
    x = panel.data
    n = panel.n_time
    T = panel.half_length
    spec = np.fft.rfft(x, axis=1)[:, :T]
    power = (spec.real**2 + spec.imag**2) / n
    if np.any(power == 0.0):
        bad = np.argwhere(power == 0.0)[0]
        raise ZeroPowerBin(
            f"replicate {bad[0]} has zero periodogram power at bin {bad[1]}"
        )
    return LogPeriodogramPanel(np.log(power) + EULER_GAMMA)


# Squared MA gains below this are unit-root rounding artifacts at double
# precision (an honest off-root sample is >= (4 pi / 2T)^2 ~ 1e-11 even at
# absurd T), not genuine spectral values.
_MA_ZERO_GUARD = 1e-24


def _polynomial_gains(phi, theta, freqs):
    """Squared moduli of the MA and AR polynomials on the unit circle."""
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    freqs = np.asarray(freqs, dtype=np.float64)
    z = np.exp(-2j * np.pi * freqs)
    num = np.ones_like(z)
    for q, t in enumerate(theta, start=1):
        num = num + t * z**q
    den = np.ones_like(z)
    for p, f in enumerate(phi, start=1):
        den = den - f * z**p
    den_mod2 = np.abs(den) ** 2
    if np.any(den_mod2 < 1e-24):
        w = float(freqs[np.argmin(den_mod2)])
        raise UnstableModel(f"AR polynomial vanishes near frequency {w}")
    return np.abs(num) ** 2, den_mod2


def arma_transfer(phi, theta, sigma_w2, freqs):
    """Squared transfer gain of the ARMA model on the given frequencies."""
    if sigma_w2 <= 0:
        raise ValueError("innovation variance must be positive")
    num2, den2 = _polynomial_gains(phi, theta, freqs)
    return sigma_w2 * num2 / den2


def arma_log_spectrum(phi, theta, sigma_w2, T):
    """Log-spectrum of the ARMA model on the grid l/(2T), l = 0..T-1.

    Isolated MA unit roots can land exactly on a dyadic Fourier grid; such
    bins carry only a rounding artifact of the true -inf and are patched by
    interpolating the log-spectrum from the adjacent non-degenerate bins.
    """
    if sigma_w2 <= 0:
        raise ValueError("innovation variance must be positive")
    freqs = np.arange(T) / (2.0 * T)
    num2, den2 = _polynomial_gains(phi, theta, freqs)
    degenerate = num2 < _MA_ZERO_GUARD
    if np.all(degenerate):
        raise UnstableModel("MA polynomial vanishes on the entire grid")
    values = np.empty(T)
    good = ~degenerate
    values[good] = (
        math.log(sigma_w2) + np.log(num2[good]) - np.log(den2[good])
    )
    if degenerate.any():
        idx = np.arange(T)
        values[degenerate] = np.interp(
            idx[degenerate], idx[good], values[good]
        )
    return values
