"""Sampling the solution field on a space-time grid.

Each replica draws, for every component and every mode n = 0..N, two
independent copies of the mode process (X_n(t_j))_j and assembles

    u_i(t_j, x_k) = sum_n sqrt(q_n) (cos(n x_k) X_n(t_j) + sin(n x_k) X'_n(t_j))

with one inverse real FFT per time slice.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg, special

from . import __version__
from ._numerics import cos_series
from .fbm import fbm_covariance, sample_fbm
from .modes import mode_cross_many, mode_var_closed
from .rng import stream_id, substream
from .spectrum import SpectrumModel, existence_margin

SAMPLERS = ("exact_gaussian", "pathwise")
JITTERS = (0.0, 1e-14, 1e-12, 1e-10)
PATHWISE_REFINE = 16


class NyquistError(ValueError):
    pass


def _as_x_grid(x_grid):
    if np.isscalar(x_grid):
        n = int(x_grid)
        return 2.0 * np.pi * np.arange(n) / n
    x = np.asarray(x_grid, dtype=float)
    n = x.size
    if n < 1 or not np.allclose(x, 2.0 * np.pi * np.arange(n) / n, rtol=0, atol=1e-12):
        raise ValueError("x_grid must be the uniform grid 2 pi k / N_x, k = 0..N_x-1")
    return x


@dataclass
class SimConfig:
    model: SpectrumModel
    N_modes: int
    t_grid: np.ndarray
    x_grid: np.ndarray | int
    d: int = 1
    seed: int = 0
    mode_sampler: str = "exact_gaussian"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("component count d must be >= 1")
        if self.N_modes < 0:
            raise ValueError("N_modes must be non-negative")
        if self.mode_sampler not in SAMPLERS:
            raise ValueError(f"mode_sampler must be one of {SAMPLERS}")
        t = np.atleast_1d(np.asarray(self.t_grid, dtype=float))
        if np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ValueError("t_grid must be positive and strictly increasing")
        self.t_grid = t
        self.x_grid = _as_x_grid(self.x_grid)
        if self.x_grid.size < 2 * self.N_modes + 1:
            raise NyquistError(f"x_grid has {self.x_grid.size} points; need >= 2 N_modes + 1 = {2 * self.N_modes + 1}")
        if not existence_margin(self.model, cap=2)["convergent"]:
            raise ValueError(f"{self.model!r} has no solution (existence series diverges)")

    def to_dict(self):
        return {"model": self.model.spec_string(), "H": self.model.H, "q0": self.model.q_zero,
                "N_modes": int(self.N_modes), "t_grid": self.t_grid.tolist(), "N_x": int(self.x_grid.size),
                "d": int(self.d), "seed": int(self.seed), "mode_sampler": self.mode_sampler}

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class FieldSample:
    config: SimConfig
    replica: int
    values: np.ndarray          # (component, time, space)

    def to_csv(self, path):
        cfg = self.config
        T, X = np.meshgrid(cfg.t_grid, cfg.x_grid, indexing="ij")
        cols = [T.ravel(), X.ravel()] + [self.values[i].ravel() for i in range(cfg.d)]
        header = ",".join(["t", "x"] + [f"u_{i + 1}" for i in range(cfg.d)])
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.17g")


# ------------------------------------------------------------ covariances
def mode_process_cross_cov(H, n, t_grid):
    """E[X_n(t_i) X_n(t_j)] over ``t_grid`` (n = 0 gives the fBm covariance)."""
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be positive and strictly increasing")
    if n == 0:
        return fbm_covariance(H, t[:, None], t[None, :])
    return _mode_cov_stack(H, np.array([float(n) ** 2]), t)[0]


def _mode_cov_stack(H, lam, t):
    """Covariance matrices for many modes at once, shape (len(lam), T, T)."""
    T = t.size
    iu, ju = np.triu_indices(T)
    s = t[iu][None, :]
    h = (t[ju] - t[iu])[None, :]
    lamc = lam[:, None]
    v = np.stack([mode_var_closed(H, lam, tt) for tt in t], axis=1)      # (N, T)
    vs = v[:, iu]
    up = np.exp(-lamc * h) * vs + mode_cross_many(H, lamc, s, h)
    out = np.zeros((lam.size, T, T))
    out[:, iu, ju] = up
    out[:, ju, iu] = up
    return out


def _cholesky_jitter(C):
    scale = max(float(np.max(np.diag(C))), 1e-300)
    for j in JITTERS:
        try:
            return linalg.cholesky(C + j * scale * np.eye(C.shape[0]), lower=True)
        except linalg.LinAlgError:
            continue
    raise linalg.LinAlgError("mode covariance not positive definite even with 1e-10 jitter")


class _ModeFactors:
    """Per-mode samplers over t_grid, scaled by sqrt(q_n).

    H = 1/2 modes are Markov, so the exact joint law is an AR(1) recursion
    (``decay``, ``innov``); otherwise Cholesky factors of the covariances.
    """

    def __init__(self, cfg: SimConfig):
        m, N, t = cfg.model, cfg.N_modes, cfg.t_grid
        self.T = t.size
        n = np.arange(1, N + 1)
        self.sq = np.concatenate([[math.sqrt(m.q_zero)], np.sqrt(m.q(n)) if N else []])
        self.markov = m.H == 0.5
        if self.markov:
            lam = np.arange(N + 1, dtype=float) ** 2
            gaps = np.diff(np.concatenate([[0.0], t]))               # (T,)
            self.decay = np.exp(-np.outer(lam, gaps))                # (N+1, T)
            self.innov = np.sqrt(np.stack([mode_var_closed(0.5, lam, g) for g in gaps], axis=1))
            self.factors = None
            return
        fac = np.zeros((N + 1, self.T, self.T))
        if m.q_zero > 0:
            fac[0] = _cholesky_jitter(fbm_covariance(m.H, t[:, None], t[None, :]))
        if N:
            covs = _mode_cov_stack(m.H, n.astype(float) ** 2, t)
            for k in range(N):
                fac[k + 1] = _cholesky_jitter(covs[k])
        self.factors = fac


# --------------------------------------------------------------- samplers
def _assemble(coef_cos, coef_sin, n_x):
    """sum_n (a_n cos(n x_k) + b_n sin(n x_k)) by inverse real FFT.

    ``coef_*`` have shape (..., N+1) over modes; returns (..., n_x).
    """
    N = coef_cos.shape[-1] - 1
    spec = np.zeros(coef_cos.shape[:-1] + (n_x // 2 + 1,), dtype=complex)
    spec[..., 0] = n_x * coef_cos[..., 0]
    spec[..., 1:N + 1] = 0.5 * n_x * (coef_cos[..., 1:] - 1j * coef_sin[..., 1:])
    return np.fft.irfft(spec, n=n_x, axis=-1)


def assemble_naive(coef_cos, coef_sin, x):
    n = np.arange(coef_cos.shape[-1])
    ang = np.outer(n, x)
    return coef_cos @ np.cos(ang) + coef_sin @ np.sin(ang)


def _exact_modes(cfg, fac: _ModeFactors, rng):
    # (2 copies, N+1 modes, T) standard normals -> correlated mode values
    z = rng.standard_normal((2, cfg.N_modes + 1, fac.T))
    if fac.markov:
        x = np.empty_like(z)
        prev = np.zeros(z.shape[:2])
        for j in range(fac.T):
            prev = fac.decay[:, j] * prev + fac.innov[:, j] * z[:, :, j]
            x[:, :, j] = prev
    else:
        x = np.einsum("nij,cnj->cni", fac.factors, z)
    return x * fac.sq[None, :, None]


def _pathwise_grid(t, n_modes):
    pts = np.concatenate([[0.0], t])
    step = np.min(np.diff(pts)) / PATHWISE_REFINE
    if n_modes:
        # also resolve the fastest mode's relaxation time 1/N^2
        fast = 1.0 / (PATHWISE_REFINE * n_modes ** 2)
        if fast < step:
            step = step / math.ceil(step / fast)
    idx = np.rint(t / step).astype(int)
    if not np.allclose(idx * step, t, rtol=0, atol=1e-9 * t[-1]):
        raise ValueError("pathwise sampler needs t_grid points on a common uniform lattice")
    return step, idx


def _pathwise_modes(cfg, fac: _ModeFactors, seed, replica, comp):
    """Mode values from refined fBm paths.

    X(t) = B(t) - lam int_0^t exp(-lam (t-s)) B(s) ds is evaluated exactly
    for the piecewise-linear interpolant of the refined path, which gives
    the recursion X_{k+1} = e^{-lam d} X_k + (B_{k+1} - B_k)(1 - e^{-lam d})/(lam d).
    """
    m, N = cfg.model, cfg.N_modes
    step, idx = _pathwise_grid(cfg.t_grid, N)
    M = int(idx[-1])
    grid = step * np.arange(M + 1)
    sid = stream_id(replica, comp, 1)
    paths = sample_fbm(m.H, grid, 2 * (N + 1), seed, stream=sid).values.reshape(2, N + 1, M + 1)
    lam = np.arange(N + 1, dtype=float) ** 2
    decay = np.exp(-lam * step)
    gain = np.where(lam > 0, -np.expm1(-lam * step) / np.where(lam > 0, lam * step, 1.0), 1.0)
    dB = np.diff(paths, axis=2)
    X = np.zeros((2, N + 1))
    out = np.empty((2, N + 1, idx.size))
    want = {int(k): j for j, k in enumerate(idx)}
    for k in range(M):
        X = decay * X + gain * dB[:, :, k]
        j = want.get(k + 1)
        if j is not None:
            out[:, :, j] = X
    return out * fac.sq[None, :, None]


def _one_replica(cfg: SimConfig, fac: _ModeFactors, r: int) -> FieldSample:
    n_x = cfg.x_grid.size
    vals = np.empty((cfg.d, fac.T, n_x))
    for i in range(cfg.d):
        if cfg.mode_sampler == "exact_gaussian":
            modes = _exact_modes(cfg, fac, substream(cfg.seed, r, i, 0))
        else:
            modes = _pathwise_modes(cfg, fac, cfg.seed, r, i)
        # modes: (2, N+1, T) -> per-time coefficient rows (T, N+1)
        vals[i] = _assemble(modes[0].T, modes[1].T, n_x)
    vals.setflags(write=False)
    return FieldSample(cfg, r, vals)


def simulate(config: SimConfig, n_replicas: int, threads: int = 1, start: int = 0):
    """Replicas ``start .. start+n_replicas-1`` of the field (list of FieldSample)."""
    fac = _ModeFactors(config)
    idx = range(start, start + n_replicas)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(lambda r: _one_replica(config, fac, r), idx))
    return [_one_replica(config, fac, r) for r in idx]


def iter_simulate(config: SimConfig, n_replicas: int, start: int = 0):
    """Generator version of :func:`simulate` (constant memory)."""
    fac = _ModeFactors(config)
    for r in range(start, start + n_replicas):
        yield _one_replica(config, fac, r)


# ---------------------------------------------------------- point sampler
POINT_BATCH = 4096


def point_covariance(model, points, **kw):
    """Covariance matrix of one component of u at arbitrary (t, x) points."""
    from .covariance import field_covariance, sigma_sq
    P = [tuple(map(float, p)) for p in points]
    m = len(P)
    C = np.empty((m, m))
    var = {}
    for i in range(m):
        t = P[i][0]
        if t not in var:
            var[t] = sigma_sq(model, t, **kw)
        C[i, i] = var[t]
        for j in range(i):
            C[i, j] = C[j, i] = field_covariance(model, P[i], P[j], **kw)
    return C


def sample_points(model, points, d, n_replicas, seed, stream=0, cov=None):
    """Exact joint samples of the d-component field at ``points``.

    Returns an array (n_replicas, n_points, d). Replicas are drawn in fixed
    batches of POINT_BATCH, batch b on substream (stream, b), so runs with
    more replicas extend runs with fewer.
    """
    C = point_covariance(model, points) if cov is None else cov
    try:
        L = _cholesky_jitter(C)
    except linalg.LinAlgError:
        # tiny cells are numerically rank deficient; use a clipped square root
        w, V = np.linalg.eigh(C)
        L = V * np.sqrt(np.clip(w, 0.0, None))
    m = C.shape[0]
    n_b = -(-n_replicas // POINT_BATCH)
    z = np.concatenate([substream(seed, stream, b).standard_normal((POINT_BATCH, d, m))
                        for b in range(n_b)])[:n_replicas]
    return np.einsum("ij,rdj->rid", L, z)


# ------------------------------------------------------------- utilities
def truncation_tail(model: SpectrumModel, N: int) -> float:
    """Variance carried by modes n > N: sum_{n>N} q_n Gamma(2H+1)/2 n^{-4H}.

    Gamma(2H+1)/2 n^{-4H} is the large-time limit of the mode variance.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    H = model.H
    c = 0.5 * special.gamma(2.0 * H + 1.0)
    total = 0.0
    n = np.arange(1, N + 1, dtype=float)
    for coef, p, th in model.q_asymptotic():
        pw = p - 4.0 * H
        part = np.sum(coef * n ** pw * (np.cos(n * th) if th else 1.0))
        total += coef * cos_series(-pw, th) - part
    if model.kind == "riesz":
        # correction from the O(n^-4) gap between q_n and its expansion
        k = np.arange(N + 1, 8 * N + 1)
        approx = sum(cf * k.astype(float) ** p * (np.cos(k * th) if th else 1.0) for cf, p, th in model.q_asymptotic())
        total += np.sum((model.q(k) - approx) * k.astype(float) ** (-4.0 * H))
    return float(c * max(total, 0.0))


def write_replicas(samples, out_dir, fmt="csv"):
    """Write replicas plus a JSON manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    cfg = None
    for smp in samples:
        cfg = smp.config
        if fmt == "csv":
            p = out / f"replica_{smp.replica:06d}.csv"
            smp.to_csv(p)
        elif fmt == "npy":
            p = out / f"replica_{smp.replica:06d}.npy"
            np.save(p, np.asarray(smp.values))
        else:
            raise ValueError("fmt must be csv or npy")
        files.append({"file": p.name, "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
    manifest = {"config": cfg.to_dict() if cfg else None, "config_hash": cfg.config_hash() if cfg else None,
                "seed": cfg.seed if cfg else None, "version": __version__, "format": fmt, "files": files}
    mp = out / "manifest.json"
    mp.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return mp
