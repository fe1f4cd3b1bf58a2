import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracheat.covariance import sigma_sq
from fracheat.simulate import (NyquistError, SimConfig, _assemble, assemble_naive, sample_points, simulate,
                               truncation_tail, write_replicas)
from fracheat.spectrum import SpectrumModel

WHITE = SpectrumModel.parse("white", 0.5)


def test_nyquist_guard():
    with pytest.raises(NyquistError):
        SimConfig(WHITE, 64, [1.0], 100)
    with pytest.raises(ValueError):
        SimConfig(WHITE, 4, [1.0, 0.5], 33)


def test_fft_matches_naive():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 3, 17))
    x = 2 * np.pi * np.arange(33) / 33
    assert np.allclose(_assemble(a, b, 33), assemble_naive(a, b, x), atol=1e-10)


def test_initial_condition_zero_in_law():
    cfg = SimConfig(WHITE, 8, [1e-9, 1.0], 17, seed=1)
    s = simulate(cfg, 1)[0]
    assert np.max(np.abs(s.values[0, 0])) < 1e-3


def test_reproducible_and_split_independent():
    cfg = SimConfig(SpectrumModel.parse("white", 0.7), 8, [0.5, 1.0], 17, d=2, seed=4)
    full = simulate(cfg, 4)
    tail = simulate(cfg, 2, start=2)
    assert np.array_equal(full[3].values, tail[1].values)
    assert np.array_equal(simulate(cfg, 4, threads=2)[2].values, full[2].values)


def test_components_uncorrelated():
    cfg = SimConfig(WHITE, 16, [1.0], 33, d=2, seed=2)
    v = np.array([s.values[:, 0, 0] for s in simulate(cfg, 2000)])
    corr = np.corrcoef(v.T)[0, 1]
    assert abs(corr) < 3 / np.sqrt(2000)


@pytest.mark.parametrize("N", [16, 64, 256])
def test_truncation_tail_bracket(N):
    t = truncation_tail(WHITE, N)
    assert 1 / (N + 1) <= 2 * t <= 1 / N


def test_variance_close_to_sigma():
    cfg = SimConfig(WHITE, 64, [1.0], 129, seed=0)
    u = np.array([s.values[0, 0, 0] for s in simulate(cfg, 3000)])
    se = np.var(u) * np.sqrt(2 / 3000)
    assert abs(np.var(u) - sigma_sq(WHITE, 1.0)) < 3 * se + truncation_tail(WHITE, 64)


def test_point_sampler_covariance():
    pts = [(1.0, 0.0), (1.0, 0.4), (0.8, 0.0)]
    u = sample_points(WHITE, pts, 1, 40_000, seed=1)[:, :, 0]
    from fracheat.simulate import point_covariance
    C = point_covariance(WHITE, pts)
    assert np.allclose(np.cov(u.T), C, atol=0.06)
    more = sample_points(WHITE, pts, 1, 50_000, seed=1, cov=C)
    assert np.array_equal(more[:40_000], sample_points(WHITE, pts, 1, 40_000, seed=1, cov=C))


def test_write_replicas_manifest(tmp_path):
    cfg = SimConfig(WHITE, 4, [0.5, 1.0], 9, seed=3)
    mp = write_replicas(simulate(cfg, 2), tmp_path)
    man = json.loads(mp.read_text())
    assert len(man["files"]) == 2 and man["config_hash"] == cfg.config_hash()
    head = (tmp_path / man["files"][0]["file"]).read_text().splitlines()[0]
    assert head == "t,x,u_1"


@given(st.integers(0, 2 ** 31), st.integers(1, 3))
def test_same_seed_bit_identical(seed, d):
    cfg = SimConfig(WHITE, 4, [1.0], 9, d=d, seed=seed)
    assert np.array_equal(simulate(cfg, 1)[0].values, simulate(cfg, 1)[0].values)
