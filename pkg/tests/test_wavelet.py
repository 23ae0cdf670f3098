import numpy as np
import pytest

from specmix import wavelet as wv
from specmix.errors import (
    ConfigError,
    IndexOutOfRange,
    LengthBelowFilterSupport,
    NonDyadicLength,
)
from specmix.wavelet._filters import scaling_filter, wavelet_filter

from _oracles import explicit_transform_matrix


@pytest.mark.parametrize("T", [16, 64, 512, 1024])
def test_roundtrip_identity(T):
    rng = np.random.default_rng(T)
    v = rng.standard_normal(T)
    assert np.max(np.abs(wv.idwt(wv.dwt(v)) - v)) <= 1e-10


@pytest.mark.parametrize("T", [16, 64, 512, 1024])
def test_energy_identity(T):
    rng = np.random.default_rng(T + 1)
    v = rng.standard_normal(T)
    assert abs(np.linalg.norm(wv.dwt(v)) * np.sqrt(T) - np.linalg.norm(v)) <= 1e-10


def test_linearity():
    rng = np.random.default_rng(5)
    u, v = rng.standard_normal((2, 256))
    lhs = wv.dwt(2.5 * u - 1.25 * v)
    rhs = 2.5 * wv.dwt(u) - 1.25 * wv.dwt(v)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_zero_maps_to_zero():
    assert np.all(wv.dwt(np.zeros(64)) == 0.0)
    assert np.all(wv.idwt(np.zeros(64)) == 0.0)


def test_constant_vector_concentrates_in_first_slot():
    v = np.full(64, 3.25)
    c = wv.dwt(v)
    assert abs(c[0] - 3.25) <= 1e-12
    assert np.max(np.abs(c[1:])) <= 1e-12
    # inverse image of the first slot is a constant vector
    e1 = np.zeros(64)
    e1[0] = -1.7
    assert np.max(np.abs(wv.idwt(e1) + 1.7)) <= 1e-12


def test_matches_explicit_matrix_T16():
    basis = wv.DEFAULT_BASIS
    g, h = basis.filters
    W = explicit_transform_matrix(16, g, h) / np.sqrt(16)
    rng = np.random.default_rng(16)
    for _ in range(5):
        v = rng.standard_normal(16)
        assert np.max(np.abs(wv.dwt(v, basis) - W @ v)) <= 1e-10
        assert np.max(np.abs(wv.idwt(W @ v, basis) - v)) <= 1e-10
    # entrywise: transforms of the basis vectors reassemble the matrix
    got = wv.dwt(np.eye(16), basis).T
    assert np.max(np.abs(got - W)) <= 1e-10


def test_transform_scaled_orthogonality():
    T = 32
    W = wv.dwt(np.eye(T)).T  # columns are transforms of basis vectors
    gram = W @ W.T
    assert np.max(np.abs(gram - np.eye(T) / T)) <= 1e-12


def test_errors():
    with pytest.raises(NonDyadicLength):
        wv.dwt(np.zeros(100))
    with pytest.raises(LengthBelowFilterSupport):
        wv.dwt(np.zeros(8))  # default N=6 has support 12
    with pytest.raises(ConfigError):
        wv.WaveletBasisSpec(vanishing_moments=23)


def test_small_lengths_with_narrow_filters():
    basis = wv.WaveletBasisSpec(vanishing_moments=2)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(8)
    assert np.max(np.abs(wv.idwt(wv.dwt(v, basis), basis) - v)) <= 1e-10


def test_filters_orthonormal_all_supported():
    for N in range(1, 11):
        g = scaling_filter(N)
        assert abs(np.sum(g * g) - 1.0) <= 1e-12
        assert abs(np.sum(g) - np.sqrt(2.0)) <= 1e-12
        h = wavelet_filter(g)
        assert abs(np.sum(h)) <= 1e-12
        assert abs(np.dot(g, h)) <= 1e-12


def test_scale_of_index():
    assert wv.scale_of_index(1, 16) == -1
    assert wv.scale_of_index(2, 16) == 0
    assert wv.scale_of_index(9, 16) == 3
    assert wv.scale_of_index(16, 16) == 3
    with pytest.raises(IndexOutOfRange):
        wv.scale_of_index(0, 16)
    with pytest.raises(IndexOutOfRange):
        wv.scale_of_index(17, 16)
    scales = wv.scales_of_indices(16)
    assert [wv.scale_of_index(k, 16) for k in range(1, 17)] == scales.tolist()


def test_sparsify():
    v = np.array([0.5, -0.01, 0.002, 0.0, -0.75])
    out, kept = wv.sparsify(v, 0.0)
    assert np.array_equal(out, v)
    out, kept = wv.sparsify(v, np.inf)
    assert np.all(out == 0.0) and kept.size == 0
    out, kept = wv.sparsify(v, 0.05)
    assert kept.tolist() == [1, 5]
    assert out.tolist() == [0.5, 0.0, 0.0, 0.0, -0.75]


def test_backends_agree():
    from specmix.wavelet import _pyramid_py

    if "cython" not in wv.available_backends():
        pytest.skip("compiled backend not built")
    from specmix.wavelet import _pyramid_cy

    g, h = wv.DEFAULT_BASIS.filters
    rng = np.random.default_rng(3)
    X = rng.standard_normal((6, 256))
    fwd_py = _pyramid_py.forward(X, g, h)
    fwd_cy = _pyramid_cy.forward(X, g, h)
    assert np.max(np.abs(fwd_py - fwd_cy)) <= 1e-12
    inv_py = _pyramid_py.inverse(fwd_py, g, h)
    inv_cy = _pyramid_cy.inverse(fwd_py, g, h)
    assert np.max(np.abs(inv_py - inv_cy)) <= 1e-12
