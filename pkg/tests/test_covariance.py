import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracheat.covariance import (bivariate_bound, circle_distance, delta_metric, delta_t_sq, delta_x_sq,
                                 field_covariance, gamma_sq, metric_report, min_bound_constant, sigma_sq)
from fracheat.spectrum import SpectrumModel

WHITE = SpectrumModel.parse("white", 0.5)
# [DERIVED] mpmath: 1 + pi^2/12 - sum e^{-2n^2}/(2n^2), and pi r/2 - r^2/4 - sum (1-cos nr) e^{-2n^2}/n^2
SIGMA2_WHITE_HALF_T1 = 1.75475745813121
DELTA_T_SQ_WHITE_HALF = 0.442679700160216      # t = 1, r = 0.3


def test_white_half_oracles():
    assert sigma_sq(WHITE, 1.0) == pytest.approx(SIGMA2_WHITE_HALF_T1, rel=1e-11)
    assert delta_t_sq(WHITE, 1.0, 0.3) == pytest.approx(DELTA_T_SQ_WHITE_HALF, rel=1e-10)


@given(st.floats(0, 20), st.floats(0, 20))
def test_circle_distance(x, y):
    r = circle_distance(x, y)
    assert 0 <= r <= math.pi + 1e-12
    assert r == pytest.approx(circle_distance(y, x))


@pytest.mark.parametrize("spec,H", [("white", 0.4), ("white", 0.7), ("riesz:0.5", 0.5)])
def test_gamma_symmetric_zero_and_polarization(spec, H):
    m = SpectrumModel.parse(spec, H)
    p, q = (0.9, 0.2), (0.6, 1.1)
    g = gamma_sq(m, p, q)
    assert g == pytest.approx(gamma_sq(m, q, p), rel=1e-12)
    assert gamma_sq(m, p, p) == 0.0
    pol = sigma_sq(m, p[0]) + sigma_sq(m, q[0]) - 2 * field_covariance(m, p, q)
    assert g == pytest.approx(pol, rel=1e-8)


def test_reductions_are_exact():
    m = SpectrumModel.parse("white", 0.4)
    assert delta_t_sq(m, 1.0, 0.2) == gamma_sq(m, (1.0, 0.0), (1.0, 0.2))
    assert delta_x_sq(m, 0.7, 1.0) == gamma_sq(m, (1.0, 0.0), (0.7, 0.0))


@given(st.floats(0.5, 1.0), st.floats(0.5, 1.0), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_gamma_within_sandwich_band(t, s, x, y):
    # constants bracket the fitted band of the acceptance run with margin
    m = SpectrumModel.parse("white", 0.4)
    D = delta_metric((t, x), (s, y), 0.3, 0.4)
    if D < 1e-8:
        return
    r = gamma_sq(m, (t, x), (s, y)) / D
    assert 0.5 < r < 5.0


def test_delta_metric_domain():
    with pytest.raises(ValueError):
        delta_metric((1, 0), (1, 1), 1.5, 0.5)


def test_bivariate_bound_and_constant():
    m = WHITE
    res = bivariate_bound(m, (1.0, 0.0), (0.8, 0.5), [0.1, 0.2], [0.3, -0.1], 1.0)
    c = min_bound_constant(res["exact_density"], res["delta"], 0.13, 2)
    tight = bivariate_bound(m, (1.0, 0.0), (0.8, 0.5), [0.1, 0.2], [0.3, -0.1], c, moments=res["covariance"])
    assert tight["bound"] == pytest.approx(tight["exact_density"], rel=1e-8)
    with pytest.raises(ValueError):
        bivariate_bound(m, (1.0, 0.0), (1.0, 0.0), [0], [0], 1.0)


def test_metric_report_csv_deterministic(tmp_path):
    a = metric_report(WHITE, "delta_t", np.geomspace(1e-3, 1e-1, 6))
    a.to_csv(tmp_path / "a.csv")
    metric_report(WHITE, "delta_t", np.geomspace(1e-3, 1e-1, 6)).to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "r,delta_t_sq"
    assert a.fits["slope"] == pytest.approx(1.0, abs=0.05)
