import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracheat.potential import (Box, CapacityEstimator, DiscreteMeasure, EnergyKernelSpec, PointCloud, capacity,
                                energy, energy_matrix, greedy_cover, hausdorff_estimate, k_beta,
                                optimality_certificate, prel_integral_check, self_energy)

# [DERIVED] 16/(3 pi h) disc self-energy (checked by 4e6-sample MC) and ball-averaged cross term 1.0000293
TWO_ATOM_ENERGY = 0.5 * 16 / (3 * math.pi * 0.01) + 0.5 * 1.0000293


def test_k_beta_examples():
    assert k_beta(EnergyKernelSpec(-1.0, 4.0), 0.3) == 1.0
    assert k_beta(EnergyKernelSpec(0.0, 4.0), 4.0) == 0.0
    assert k_beta(EnergyKernelSpec(2.0, 4.0), 0.5) == 4.0
    assert math.isinf(k_beta(EnergyKernelSpec(1.0, 4.0), 0.0))


@given(st.floats(0.1, 3.0), st.floats(0.01, 2.0))
def test_k_beta_continuous_in_beta(b, r):
    a = k_beta(EnergyKernelSpec(b, 4.0), r)
    c = k_beta(EnergyKernelSpec(b + 1e-9, 4.0), r)
    assert abs(a - c) <= 1e-6 * max(1.0, a)


def test_energy_examples():
    c = PointCloud(np.array([[0.0, 0.0], [1.0, 0.0]]), h=0.01)
    mu = DiscreteMeasure(c, np.array([0.5, 0.5]))
    assert energy(mu, EnergyKernelSpec(1.0, 4.0)) == pytest.approx(TWO_ATOM_ENERGY, rel=1e-5)
    assert energy(mu, EnergyKernelSpec(-0.5, 4.0)) == pytest.approx(1.0)
    point = PointCloud(np.zeros((1, 2)), h=0.0)
    assert math.isinf(energy(DiscreteMeasure(point, np.ones(1)), EnergyKernelSpec(0.5, 4.0)))


def test_self_energy_disc_closed_form():
    assert self_energy(EnergyKernelSpec(1.0, 4.0), 0.01, 2) == pytest.approx(16 / (3 * math.pi * 0.01), rel=1e-8)


def test_capacity_cases_and_certificate():
    cloud = PointCloud(np.linspace(0, 1, 64)[:, None], h=1 / 128)
    assert capacity(cloud, EnergyKernelSpec(-1, 4)).cap == 1.0
    single = PointCloud(np.zeros((1, 1)))
    assert capacity(single, EnergyKernelSpec(1, 4)).cap == 0.0
    assert capacity(single, EnergyKernelSpec(-1, 4)).cap == 1.0
    spec = EnergyKernelSpec(0.0, 4.0)
    res = capacity(cloud, spec)
    K = energy_matrix(cloud, spec)
    assert res.gap <= 1e-8 and optimality_certificate(K, res.minimizer.weights)
    # symmetric cloud: the mirrored minimizer gives the same energy
    w = res.minimizer.weights
    ws = 0.5 * (w + w[::-1])
    assert ws @ K @ ws >= w @ K @ w - 1e-8
    # independent solver
    from scipy.optimize import minimize
    n = len(w)
    r = minimize(lambda v: v @ K @ v, np.full(n, 1 / n), jac=lambda v: 2 * K @ v, method="SLSQP",
                 bounds=[(0, 1)] * n, constraints={"type": "eq", "fun": lambda v: v.sum() - 1},
                 options={"ftol": 1e-14, "maxiter": 500})
    assert res.cap == pytest.approx(1 / r.fun, rel=1e-6)


def test_capacity_monotone_in_set():
    spec = EnergyKernelSpec(0.5, 4.0)
    pts = np.linspace(0, 1, 40)[:, None]
    small = capacity(PointCloud(pts[::2], h=0.01), spec).cap
    big = capacity(PointCloud(pts, h=0.01), spec).cap
    assert small <= big + 1e-9


def test_hausdorff_examples():
    eps = 2.0 ** -np.arange(1, 13)
    assert hausdorff_estimate(Box([0.0], [2.0]), 1.0, eps)[-1] == pytest.approx(2.0, rel=0.02)
    assert all(math.isinf(v) for v in hausdorff_estimate(Box([0.0], [2.0]), -1.0, eps))
    pts = PointCloud(np.array([[0.0], [0.5], [1.0]]))
    sums = hausdorff_estimate(pts, 0.5, eps)
    assert sums[0] > 0 and sums[-1] == 0.0      # isolated atoms: radius-0 balls
    with pytest.raises(ValueError):
        hausdorff_estimate(pts, 1.0, [0.1, 0.2])


@given(st.integers(5, 60), st.floats(0.01, 0.3))
def test_greedy_cover_covers(n, eps):
    rng = np.random.default_rng(n)
    p = rng.random((n, 2))
    centers, radii = greedy_cover(p, eps)
    d = np.linalg.norm(p[:, None, :] - np.asarray(centers)[None, :, :], axis=2)
    assert np.all((d <= np.asarray(radii)[None, :] + 1e-12).any(axis=1))
    assert np.all(np.asarray(radii) <= eps + 1e-12)


def test_prel_regimes():
    I, J = (0.5, 1.0), (0.0, 1.0)
    for d in (8, 4):
        r = [prel_integral_check(a, I, J, 0.5, 0.5, d)["ratio"] for a in (1e-3, 1e-2)]
        assert np.all(np.isfinite(r)) and r[0] / r[1] == pytest.approx(1.0, abs=0.05)
    end = prel_integral_check(1.0, I, J, 0.5, 0.5, 6)
    assert 0 < end["ratio"] < np.inf


def test_estimator_api():
    est = CapacityEstimator(beta=0.0, h=1 / 64, N0=4.0)
    est.fit(np.linspace(0, 1, 16)[:, None])
    assert est.capacity_ > 0 and est.transform().sum() == pytest.approx(1.0)
    assert est.get_params()["beta"] == 0.0
    assert est.set_params(beta=-1.0).fit(np.arange(3.0)[:, None]).capacity_ == 1.0
