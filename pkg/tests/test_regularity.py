import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracheat.regularity import (HolderRegressor, empirical_variogram, fit_holder_empirical, fit_holder_exact,
                                 fit_power_law, modulus_statistic)
from fracheat.simulate import FieldSample, SimConfig, simulate
from fracheat.spectrum import SpectrumModel


@given(st.floats(0.1, 2.0), st.floats(0.1, 10.0))
def test_power_law_self_test(p, c):
    lags = np.geomspace(1e-3, 1e-1, 12)
    assert fit_power_law(lags, c * lags ** p).slope == pytest.approx(p, abs=1e-9)


def test_degenerate_regression():
    with pytest.raises(ValueError):
        fit_power_law([0.1, 0.1, 0.2], [1, 1, 2])


def test_exact_fits():
    f = fit_holder_exact(SpectrumModel.parse("white", 0.4), "time", (1e-3, 1e-1))
    assert f.verdict and f.expected == pytest.approx(0.3)
    f = fit_holder_exact(SpectrumModel.parse("riesz:0.5", 0.5), "space", (1e-3, 1e-1))
    assert f.slope == pytest.approx(1.5, abs=0.05)
    with pytest.raises(ValueError):
        fit_holder_exact(SpectrumModel.parse("white", 0.4), "time", (1e-3, 0.9))


def test_time_exponent_both_sides_of_2H():
    # alpha < 2H for white noise; powerlaw:0.9 at H = 0.3 has alpha > 2H
    lo = fit_holder_exact(SpectrumModel.parse("white", 0.7), "time", (1e-3, 1e-1))
    # the h^alpha correction is only h^(alpha - 2H) = h^0.3 smaller, so this
    # side needs very small lags (slope 0.544 on [1e-3, 1e-1])
    hi = fit_holder_exact(SpectrumModel.parse("powerlaw:0.9", 0.3), "time", (1e-7, 1e-5))
    assert lo.expected == pytest.approx(0.9) and hi.expected == pytest.approx(0.6)
    assert lo.verdict and hi.verdict


def test_empirical_matches_exact():
    m = SpectrumModel.parse("white", 0.5)
    cfg = SimConfig(m, 128, np.linspace(0.5, 1.0, 33), 257, seed=0)
    samples = simulate(cfg, 1000)
    sp = fit_holder_empirical(samples, "space", (0.05, 0.5))
    assert sp.slope == pytest.approx(1.0, abs=0.1)
    tm = fit_holder_empirical(samples, "time", (1 / 64, 0.25))
    assert tm.slope == pytest.approx(0.5, abs=0.1)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        fit_holder_empirical(samples[:10], "space", (0.05, 0.5))
    assert any("replicas" in str(x.message) for x in w)


def test_modulus_zero_field_and_refinement():
    m = SpectrumModel.parse("white", 0.5)
    cfg = SimConfig(m, 32, [0.5, 0.75, 1.0], 65)
    zero = FieldSample(cfg, 0, np.zeros((1, 3, 65)))
    assert modulus_statistic(zero, 0.5, 0.5, 1.0) == 0.0
    coarse = SimConfig(m, 64, np.linspace(0.5, 1.0, 9), 129, seed=5)
    fine = SimConfig(m, 64, np.linspace(0.5, 1.0, 17), 257, seed=5)
    ratios = [modulus_statistic(b, 0.5, 0.5, 0.25) / modulus_statistic(a, 0.5, 0.5, 0.25)
              for a, b in zip(simulate(coarse, 100), simulate(fine, 100))]
    assert 0.5 <= np.median(ratios) <= 2.0


def test_regressor_api():
    x = np.geomspace(1e-3, 1e-1, 10)
    reg = HolderRegressor(expected=0.8).fit(x[:, None], 2 * x ** 0.8)
    assert reg.slope_ == pytest.approx(0.8)
    assert reg.score(x[:, None], 2 * x ** 0.8) == pytest.approx(1.0)
    assert np.allclose(reg.predict(x[:, None]), 2 * x ** 0.8)
    assert reg.get_params()["expected"] == 0.8


def test_variogram_lags_sorted():
    m = SpectrumModel.parse("white", 0.5)
    s = simulate(SimConfig(m, 8, [0.25, 0.5, 1.0], 17), 3)
    lags, v = empirical_variogram(s, "time")
    assert np.all(np.diff(lags) > 0) and len(v) == 2
