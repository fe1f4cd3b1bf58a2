import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracheat.hitting import (ResolutionError, TargetSet, cell_partition, hit_probability_mc,
                              range_dimension_estimate, small_ball_curve, wilson_interval, write_results)
from fracheat.simulate import SimConfig, simulate
from fracheat.spectrum import SpectrumModel, exponents

WHITE = SpectrumModel.parse("white", 0.5)


def test_target_parse_and_geometry():
    t = TargetSet.parse("ball:0,0:0.5;box:1,1:2,3")
    assert t.d == 2 and t.feature_size == 0.5
    assert TargetSet.parse(t.spec_string()).spec_string() == t.spec_string()
    assert np.allclose(t.distance([[0, 0], [0, 2], [1.5, 2]]), [0.0, 1.0, 0.0])
    with pytest.raises(ValueError):
        TargetSet.parse("ball:0,0:0.5;box:1:2")
    with pytest.raises(ValueError):
        TargetSet.parse("disc:0:1")


@given(st.integers(0, 1000), st.integers(1, 1000))
def test_wilson_valid(k, n):
    k = min(k, n)
    lo, hi = wilson_interval(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


def test_wilson_width_scaling():
    w1 = np.diff(wilson_interval(300, 1000))[0]
    w2 = np.diff(wilson_interval(600, 2000))[0]
    assert w1 / w2 == pytest.approx(np.sqrt(2), rel=0.05)


def test_empty_target_never_hit():
    cfg = SimConfig(WHITE, 16, np.linspace(0.5, 1, 5), 33, d=2, seed=0)
    r = hit_probability_mc(cfg, TargetSet(d=2), 20)
    assert r.p_hat == 0.0 and r.p_hat_hi == 0.0


def test_coupled_monotonicity_and_bracket(tmp_path):
    cfg = SimConfig(WHITE, 32, np.linspace(0.5, 1, 9), 65, d=2, seed=1)
    radii = [0.05, 0.1, 0.2, 0.4, 0.8]
    res = hit_probability_mc(cfg, [TargetSet.ball([0.3, -0.2], r) for r in radii], 60, allow_unresolved=True)
    lo = [r.hits_lo for r in res]
    assert lo == sorted(lo)                                  # inclusion, same replicas
    assert all(r.hits_lo <= r.hits_hi for r in res)          # undilated <= dilated
    assert all(r.beta == exponents(WHITE).beta for r in res)
    write_results(res, tmp_path / "h.csv")
    head = (tmp_path / "h.csv").read_text().splitlines()[0]
    assert head == "target_id,eps,p_hat_lo,p_hat_hi,ci_lo,ci_hi,cap,hausdorff_sum"


def test_resolution_error():
    cfg = SimConfig(WHITE, 16, np.linspace(0.5, 1, 5), 33, d=2, seed=0)
    with pytest.raises(ResolutionError):
        hit_probability_mc(cfg, TargetSet.ball([0, 0], 1e-3), 5)


def test_d1_point_nonpolar():
    cfg = SimConfig(WHITE, 32, np.linspace(0.5, 1, 9), 65, d=1, seed=2)
    r = hit_probability_mc(cfg, TargetSet.ball([0.0], 1e-3), 200, J=(0, 1), allow_unresolved=True)
    assert r.ci[0] > 0


def test_cell_partition():
    c = cell_partition(1.0, 0.5, 2)
    assert c["dt"] == 0.25 and c["dx"] == 2.0 ** -4
    beta = exponents(WHITE).beta
    counts = [cell_partition(0.5, 0.5, n, J=(0, 1))["count"] for n in (2, 3)]
    assert counts[1] / counts[0] == pytest.approx(2 ** beta, rel=0.1)
    assert cell_partition(0.5, 0.5, 2, I=(0.3, 0.3))["count"] == 0


def test_small_ball_slope_and_coupling():
    radii = 2.0 ** -np.arange(1, 7)
    c = small_ball_curve(WHITE, 2, [0, 0], radii, 100_000, seed=3)
    assert c.slope == pytest.approx(2.0, abs=0.5)
    big = small_ball_curve(WHITE, 2, [0, 0], [8.0, 16.0, 32.0], 2000, seed=3)
    assert np.all(big.p_hat > 0.9) and not big.used.any()       # saturation excluded
    coupled = small_ball_curve(WHITE, 2, [0, 0], radii, 20_000, seed=4, level=3)
    assert np.all(np.diff(coupled.hits[::-1]) >= 0)             # nondecreasing in eps


def test_small_ball_d3():
    c = small_ball_curve(WHITE, 3, [0, 0, 0], 2.0 ** -np.arange(0, 5), 400_000, seed=5)
    assert c.slope == pytest.approx(3.0, abs=0.5)


def test_range_dimension():
    assert range_dimension_estimate(np.zeros((100, 3)))[0] == 0.0
    cfg = SimConfig(WHITE, 127, np.linspace(0.5, 1, 65), 256, d=1, seed=0)
    d1 = range_dimension_estimate(simulate(cfg, 1)[0].values.reshape(1, -1).T)[0]
    assert d1 == pytest.approx(1.0, abs=0.15)
    with pytest.raises(ValueError):
        range_dimension_estimate(np.random.default_rng(0).random((20, 2)))
    # desk-scale estimates grow with the target dimension (the limit beta = 6 is out of reach)
    nx = 256
    grid = 0.5 + (2 * np.pi / nx) ** 2 * np.arange(1, 257)
    est = [range_dimension_estimate(simulate(SimConfig(WHITE, 127, grid, nx, d=d, seed=0), 1)[0]
                                    .values.reshape(d, -1).T)[0] for d in (2, 7)]
    assert 1.5 < est[0] < est[1]
