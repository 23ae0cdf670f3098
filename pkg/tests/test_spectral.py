import math

import numpy as np
import pytest

from specmix.errors import NonDyadicLength, UnstableModel, ZeroPowerBin
from specmix.panels import TimeSeriesPanel
from specmix.spectral import (
    EULER_GAMMA,
    arma_log_spectrum,
    arma_transfer,
    log_periodogram,
)


def _hermitian_signal(T, rng, zero_nyquist=True):
    """Real series of length 2T synthesized from a random spectrum."""
    Z = np.zeros(2 * T, dtype=complex)
    Z[0] = rng.standard_normal()
    Z[1:T] = rng.standard_normal(T - 1) + 1j * rng.standard_normal(T - 1)
    Z[T] = 0.0 if zero_nyquist else rng.standard_normal()
    Z[T + 1 :] = np.conj(Z[1:T][::-1])
    return np.fft.ifft(Z).real * (2 * T)


def test_pure_cosine_peak_value():
    T = 128
    l0 = 37
    t = np.arange(1, 2 * T + 1)
    x = np.sqrt(2.0) * np.cos(2 * np.pi * (l0 / (2 * T)) * t)
    # broadband jitter-free single-line signal has exact zeros elsewhere,
    # so add a tiny independent bed to keep every bin positive
    rng = np.random.default_rng(0)
    x = x + 1e-8 * rng.standard_normal(2 * T)
    Y = log_periodogram(TimeSeriesPanel(x)).values[0]
    assert abs(Y[l0] - (math.log(T) + EULER_GAMMA)) <= 1e-6


def test_amplitude_scaling_shifts_by_2_log_c():
    rng = np.random.default_rng(1)
    x = _hermitian_signal(64, rng)
    c = 3.7
    Y1 = log_periodogram(TimeSeriesPanel(x)).values
    Y2 = log_periodogram(TimeSeriesPanel(c * x)).values
    assert np.max(np.abs(Y2 - Y1 - 2.0 * math.log(c))) <= 1e-10


def test_parseval_boundary_counted_once():
    # boundary bins of the half grid are omega_0 and the Nyquist bin; the
    # signal is built without Nyquist power so the stored T bins are exhaustive
    rng = np.random.default_rng(2)
    for T in (32, 256):
        x = _hermitian_signal(T, rng, zero_nyquist=True)
        Y = log_periodogram(TimeSeriesPanel(x)).values[0]
        power = np.exp(Y - EULER_GAMMA)
        total = (power[0] + 2.0 * power[1:].sum()) / (2 * T)
        sample_var = np.mean(x**2)
        assert abs(total - sample_var) <= 1e-8 * sample_var


def test_parseval_general_signal_with_explicit_nyquist():
    rng = np.random.default_rng(3)
    T = 128
    x = _hermitian_signal(T, rng, zero_nyquist=False)
    Y = log_periodogram(TimeSeriesPanel(x)).values[0]
    power = np.exp(Y - EULER_GAMMA)
    nyquist = np.abs(np.fft.rfft(x)[T]) ** 2 / (2 * T)
    total = (power[0] + nyquist + 2.0 * power[1:].sum()) / (2 * T)
    assert abs(total - np.mean(x**2)) <= 1e-8 * np.mean(x**2)


def test_white_noise_column_means_near_zero():
    rng = np.random.default_rng(4)
    S, T = 500, 512
    panel = TimeSeriesPanel(rng.standard_normal((S, 2 * T)))
    Y = log_periodogram(panel).values
    means = Y.mean(axis=0)
    # interior bins: unit white noise has log-spectrum 0
    assert abs(means[1:].mean()) <= 0.02
    assert np.max(np.abs(means[1:])) <= 0.35


def test_grid_and_shapes():
    rng = np.random.default_rng(5)
    panel = TimeSeriesPanel(rng.standard_normal((3, 256)))
    out = log_periodogram(panel)
    assert out.values.shape == (3, 128)
    assert out.frequencies[0] == 0.0
    assert out.frequencies[-1] == pytest.approx((128 - 1) / 256)


def test_errors():
    with pytest.raises(NonDyadicLength):
        log_periodogram(TimeSeriesPanel(np.random.default_rng(0).standard_normal((2, 100))))
    const = np.ones((1, 64))
    with pytest.raises(ZeroPowerBin):
        log_periodogram(TimeSeriesPanel(const))


def test_arma_white_noise_flat():
    h = arma_log_spectrum((0.0, 0.0), (0.0, 0.0), 1.0, 64)
    assert np.max(np.abs(h)) <= 1e-12


def test_arma_benchmark_value_at_zero():
    h = arma_log_spectrum((-0.2, -0.9), (0.0, 1.0), 1.0, 512)
    assert h[0] == pytest.approx(-0.097580328338864006, abs=1e-12)


def test_arma_theta_equals_phi_is_flat():
    h = arma_log_spectrum((0.3, -0.4), (-0.3, 0.4), 2.0, 64)
    assert np.max(np.abs(h - math.log(2.0))) <= 1e-12


def test_arma_unit_root_rejected():
    # AR root exactly on the grid at omega = 1/8: 1 - 2cos(theta) z + z^2
    theta = 2 * math.pi / 8
    phi = (2 * math.cos(theta), -1.0)
    with pytest.raises(UnstableModel):
        arma_log_spectrum(phi, (0.0,), 1.0, 64)


def test_arma_ma_zero_bin_is_patched_finite():
    h = arma_log_spectrum((-0.2, -0.9), (0.0, 1.0), 1.0, 512)
    assert np.all(np.isfinite(h))
    k = 256  # omega = 1/4 carries the exact MA unit root
    assert h[k] == pytest.approx(0.5 * (h[k - 1] + h[k + 1]), abs=1e-12)
    # neighbors are genuine samples of the formula
    raw = arma_transfer((-0.2, -0.9), (0.0, 1.0), 1.0, np.asarray([255 / 1024]))
    assert h[255] == pytest.approx(math.log(raw[0]), abs=1e-12)
