import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracheat.modes import mode_increment_moment, mode_variance
from fracheat.simulate import mode_process_cross_cov

# [DERIVED] integration-by-parts Wiener integrals over the fBm covariance, mpmath at 20 digits
ORACLE_VAR = {(0.3, 2, 1.0): 0.194768994455649, (0.7, 1, 0.5): 0.236948049596297,
              (0.7, 3, 1.0): 0.0286548530618245}
ORACLE_CROSS_03_2 = 0.00049386813500726


@pytest.mark.parametrize("key", sorted(ORACLE_VAR))
@pytest.mark.parametrize("method", ["closed", "kstar"])
def test_mode_variance_oracle(key, method):
    assert mode_variance(*key, method=method) == pytest.approx(ORACLE_VAR[key], rel=1e-10)


def test_isometry_route_h_above_half():
    assert mode_variance(0.7, 3, 1.0, method="isometry") == pytest.approx(ORACLE_VAR[(0.7, 3, 1.0)], rel=1e-7)


@given(st.integers(1, 20), st.floats(0.05, 2.0))
def test_ito_closed_form(n, t):
    ito = -math.expm1(-2 * n * n * t) / (2 * n * n)
    assert mode_variance(0.5, n, t) == pytest.approx(ito, rel=1e-12)


def test_cross_cov_oracle_and_psd():
    C = mode_process_cross_cov(0.3, 2, [0.5, 1.0])
    assert C[0, 1] == pytest.approx(ORACLE_CROSS_03_2, rel=1e-9)
    assert C[0, 0] == pytest.approx(mode_variance(0.3, 2, 0.5), rel=1e-12)
    C = mode_process_cross_cov(0.7, 3, np.linspace(0.1, 1, 8))
    assert np.allclose(C, C.T, atol=1e-12)
    assert np.linalg.eigvalsh(C).min() > -1e-12


def test_one_point_grid():
    C = mode_process_cross_cov(0.6, 2, [0.7])
    assert C.shape == (1, 1) and C[0, 0] == pytest.approx(mode_variance(0.6, 2, 0.7))


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_increment_closed_vs_kstar(H):
    a = mode_increment_moment(H, 3, 0.6, 1.0)
    b = mode_increment_moment(H, 3, 0.6, 1.0, method="kstar")
    assert a == pytest.approx(b, rel=1e-8)


@given(st.sampled_from([0.3, 0.5, 0.7]), st.integers(1, 10), st.floats(0.2, 1.0), st.floats(0.0, 0.5))
def test_increment_nonnegative_and_bounded(H, n, s, h):
    v = mode_increment_moment(H, n, s, s + h)
    assert v >= -1e-14
    # (X(t) - X(s))^2 <= 2 X(t)^2 + 2 X(s)^2 in mean
    assert v <= 2 * (mode_variance(H, n, s) + mode_variance(H, n, s + h)) + 1e-12 if h > 0 else v == 0


def test_bad_inputs():
    with pytest.raises(ValueError):
        mode_variance(0.5, 0, 1.0)
    with pytest.raises(ValueError):
        mode_variance(0.5, 1, -1.0)
    with pytest.raises(ValueError):
        mode_variance(0.5, 1, 1.0, method="nope")
