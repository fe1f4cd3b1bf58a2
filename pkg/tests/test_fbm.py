import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracheat.fbm import (circulant_eigenvalues, fbm_covariance, kernel_K, kernel_constant,
                          kernel_constant_reference, read_path_csv, sample_fbm, write_path_csv)


@given(st.floats(0.05, 0.95), st.floats(0.01, 2.0), st.floats(0.01, 2.0))
def test_covariance_symmetric_and_diagonal(H, t, s):
    assert fbm_covariance(H, t, s) == pytest.approx(fbm_covariance(H, s, t))
    assert fbm_covariance(H, t, t) == pytest.approx(t ** (2 * H))


@pytest.mark.parametrize("H", [0.2, 0.3, 0.45, 0.55, 0.7, 0.9])
def test_kernel_constant_reference(H):
    assert kernel_constant(H) == pytest.approx(kernel_constant_reference(H), rel=1e-10)


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_kernel_reproduces_covariance(H):
    # int_0^min K(t,r) K(s,r) dr = R(t,s)
    from scipy import integrate
    t, s = 1.0, 0.6
    v = integrate.quad(lambda r: kernel_K(H, t, r) * kernel_K(H, s, r), 0, s, limit=400)[0]
    assert v == pytest.approx(fbm_covariance(H, t, s), rel=1e-5)


def test_kernel_half_is_indicator():
    assert kernel_K(0.5, 1.0, 0.3) == 1.0


def test_circulant_nonnegative():
    for H in (0.2, 0.5, 0.8):
        assert circulant_eigenvalues(H, 256, 1 / 256).min() > -1e-10


def test_sample_variance_and_reproducibility(tmp_path):
    grid = np.linspace(0, 1, 129)
    a = sample_fbm(0.7, grid, 4000, seed=3)
    assert np.var(a.values[:, -1]) == pytest.approx(1.0, rel=0.07)
    b = sample_fbm(0.7, grid, 4000, seed=3)
    assert np.array_equal(a.values, b.values)
    p = tmp_path / "p.csv"
    write_path_csv(a[0], p)
    back = read_path_csv(p, 0.7)
    assert np.allclose(back.values, a[0].values)


def test_increment_covariance_matches():
    grid = np.linspace(0, 1, 65)
    x = sample_fbm(0.3, grid, 6000, seed=1).values
    emp = np.mean(x[:, 32] * x[:, 64])
    assert emp == pytest.approx(fbm_covariance(0.3, 0.5, 1.0), abs=0.05)
