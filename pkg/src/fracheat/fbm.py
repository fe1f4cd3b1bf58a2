"""Fractional Brownian motion: covariance, exact sampling, Volterra kernel.

The kernel representation is ``B(t) = int_0^t K(t, s) W(ds)`` with

    K(t, s) = c_H (t-s)**(H-1/2) + s**(H-1/2) F(t/s),
    F(z)    = c_H (1/2-H) int_0^{z-1} r**(H-3/2) (1 - (1+r)**(H-1/2)) dr,

and the transfer operator ``K*_t`` maps a deterministic integrand on
[0, t] to its Wiener-side representative, so that
``E[(int phi dB)^2] = int_0^t (K*_t phi)(s)^2 ds``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, linalg, special

from ._numerics import QuadratureError
from .rng import substream

CHOLESKY_MIN_POINTS = 64


def fbm_covariance(H, t, s):
    """E[B(t) B(s)] = (t**2H + s**2H - |t-s|**2H) / 2."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    h2 = 2.0 * H
    out = 0.5 * (np.abs(t) ** h2 + np.abs(s) ** h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- sampling
@dataclass(frozen=True)
class FbmPath:
    H: float
    grid: np.ndarray
    values: np.ndarray
    seed: int
    index: int = 0

    def to_csv(self, path) -> None:
        write_path_csv(self, path)


class FbmSample:
    """A batch of fBm paths on a common grid (rows are paths)."""

    def __init__(self, H, grid, values, seed, method):
        self.H = H
        self.grid = grid
        self.values = values
        self.seed = seed
        self.method = method

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i) -> FbmPath:
        return FbmPath(self.H, self.grid, self.values[i], self.seed, int(i))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def _fgn_autocov(H, n, dt):
    k = np.arange(n + 1, dtype=float)
    h2 = 2.0 * H
    return 0.5 * dt ** h2 * (np.abs(k + 1) ** h2 - 2.0 * k ** h2 + np.abs(k - 1) ** h2)


def circulant_eigenvalues(H, n, dt):
    """Eigenvalues of the size-2n circulant embedding of fGn, or None if it fails."""
    g = _fgn_autocov(H, n, dt)
    row = np.concatenate([g[:n + 1], g[n - 1:0:-1]])
    lam = np.fft.fft(row).real
    tol = 1e-10 * lam.max()
    if lam.min() < -tol:
        return None
    return np.clip(lam, 0.0, None)


def _is_uniform(grid):
    d = np.diff(grid)
    return d.size > 0 and np.allclose(d, d[0], rtol=1e-10, atol=0.0)


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid needs at least two points")
    if grid[0] != 0.0:
        raise ValueError("grid must start at t = 0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    return grid


def sample_fbm(H, grid, n_paths, seed, method="auto", stream=0) -> FbmSample:
    """Exact-in-distribution fBm paths on ``grid`` (which starts at 0).

    ``method`` is ``"auto"``, ``"circulant"`` or ``"cholesky"``.  Path ``i``
    draws only from substream ``(stream, i)`` of ``seed``, so any subset of
    paths can be regenerated independently.
    """
    if not 0.0 < H < 1.0:
        raise ValueError("H must lie in (0, 1)")
    grid = _check_grid(grid)
    n = grid.size - 1
    uniform = _is_uniform(grid)
    lam = None
    if method in ("auto", "circulant") and uniform and (method == "circulant" or grid.size >= CHOLESKY_MIN_POINTS):
        lam = circulant_eigenvalues(H, n, grid[1] - grid[0])
        if lam is None and method == "circulant":
            raise np.linalg.LinAlgError("circulant embedding has negative eigenvalues")
    if lam is not None:
        values = _circulant_paths(lam, n, n_paths, seed, stream)
        used = "circulant"
    else:
        values = _cholesky_paths(H, grid, n_paths, seed, stream)
        used = "cholesky"
    return FbmSample(H, grid, values, seed, used)


def _circulant_paths(lam, n, n_paths, seed, stream, batch=256):
    m = 2 * n
    scale = np.sqrt(lam / m)
    out = np.empty((n_paths, n + 1))
    out[:, 0] = 0.0
    for start in range(0, n_paths, batch):
        stop = min(start + batch, n_paths)
        z = np.empty((stop - start, m), dtype=complex)
        for j, i in enumerate(range(start, stop)):
            g = substream(seed, stream, i)
            w = g.standard_normal((2, m))
            z[j] = w[0] + 1j * w[1]
        y = np.fft.fft(z * scale, axis=1).real[:, :n]
        np.cumsum(y, axis=1, out=out[start:stop, 1:])
    return out


def _cholesky_paths(H, grid, n_paths, seed, stream):
    t = grid[1:]
    cov = fbm_covariance(H, t[:, None], t[None, :])
    L = linalg.cholesky(cov, lower=True)
    out = np.zeros((n_paths, grid.size))
    for i in range(n_paths):
        z = substream(seed, stream, i).standard_normal(t.size)
        out[i, 1:] = L @ z
    return out


def write_path_csv(path: FbmPath, filename) -> None:
    filename = Path(filename)
    with filename.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(path.grid, path.values):
            w.writerow([repr(float(t)), repr(float(v))])


def read_path_csv(filename, H, seed=0) -> FbmPath:
    data = np.loadtxt(filename, delimiter=",", skiprows=1, ndmin=2)
    return FbmPath(H, data[:, 0], data[:, 1], seed)


# ------------------------------------------------------------------ kernel
def _F_unit(H, z):
    """F(z) / c_H."""
    if z <= 1.0:
        return 0.0
    a = H - 0.5
    top = z - 1.0

    def smooth(r):
        # (1 - (1+r)**a) / r, regular at r = 0
        return -math.expm1(a * math.log1p(r)) / r if r > 0 else -a

    first = min(top, 1.0)
    val, err = integrate.quad(smooth, 0.0, first, weight="alg", wvar=(a, 0.0), epsabs=1e-12, epsrel=1e-11)
    if top > 1.0:
        v2, e2 = integrate.quad(lambda r: r ** (a - 1.0) * (1.0 - (1.0 + r) ** a), 1.0, top,
                                epsabs=1e-12, epsrel=1e-11, limit=200)
        val += v2
        err += e2
    return (0.5 - H) * val


def _kernel_unit(H, t, s):
    a = H - 0.5
    return (t - s) ** a + s ** a * _F_unit(H, t / s)


@lru_cache(maxsize=None)
def kernel_constant(H: float) -> float:
    """c_H fixed numerically by int_0^1 K(1, s)^2 ds = 1."""
    if H == 0.5:
        return 1.0
    b = 2.0 * H - 1.0
    a = H - 0.5

    def f(s):
        # K(1, s)^2 / (1-s)**(2H-1), finite at s = 1
        if s >= 1.0:
            return 1.0
        g = 1.0 + s ** a * _F_unit(H, 1.0 / s) * (1.0 - s) ** (-a)
        return g * g
    v1, e1 = integrate.quad(lambda s: _kernel_unit(H, 1.0, s) ** 2, 0.0, 0.5, epsabs=1e-13, epsrel=1e-11, limit=200)
    v2, e2 = integrate.quad(f, 0.5, 1.0, weight="alg", wvar=(0.0, b), epsabs=1e-13, epsrel=1e-11, limit=200)
    return 1.0 / math.sqrt(v1 + v2)


def kernel_constant_reference(H: float) -> float:
    """Closed-form c_H from the Molchan-Golosov normalisation (for cross-checks)."""
    if H < 0.5:
        return math.sqrt(2.0 * H / ((1.0 - 2.0 * H) * special.beta(1.0 - 2.0 * H, H + 0.5)))
    if H > 0.5:
        return math.sqrt(H * (2.0 * H - 1.0) / special.beta(2.0 - 2.0 * H, H - 0.5)) / (H - 0.5)
    return 1.0


def _check_ts(t, s):
    if not (0.0 < s < t):
        raise ValueError(f"kernel needs 0 < s < t, got s={s}, t={t}")


def kernel_K(H, t, s):
    _check_ts(t, s)
    if H == 0.5:
        return 1.0
    return kernel_constant(H) * _kernel_unit(H, t, s)


def kernel_dK(H, t, s):
    """dK/dt (t, s) = c_H (H - 1/2) (t-s)**(H-3/2) (s/t)**(1/2-H)."""
    _check_ts(t, s)
    return kernel_constant(H) * (H - 0.5) * (t - s) ** (H - 1.5) * (s / t) ** (0.5 - H)


def kstar_apply(H, phi, t, s, breakpoints=(), epsabs=1e-11, epsrel=1e-9):
    """(K*_t phi)(s) for a deterministic integrand ``phi``.

    ``breakpoints`` lists discontinuities of ``phi`` in (s, t).
    Raises :class:`QuadratureError` if the integral misses its tolerance.
    """
    _check_ts(t, s)
    if H == 0.5:
        return float(phi(s))
    c = kernel_constant(H)
    a = H - 0.5
    span = t - s
    pts = sorted(b - s for b in breakpoints if s < b < t)
    edges = [0.0] + pts + [span]
    total, resid = 0.0, 0.0
    if H > 0.5:
        g = lambda w: phi(s + w) * (s + w) ** a
        for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
            if i == 0:
                v, e = integrate.quad(g, lo, hi, weight="alg", wvar=(a - 1.0, 0.0), epsabs=epsabs, epsrel=epsrel, limit=200)
            else:
                v, e = integrate.quad(lambda w: g(w) * w ** (a - 1.0), lo, hi, epsabs=epsabs, epsrel=epsrel, limit=200)
            total += v
            resid += e
        val = c * a * s ** (-a) * total
        resid *= abs(c * a * s ** (-a))
    else:
        ps = phi(s)
        eps = 1e-7 * span

        def g(w):
            # difference quotient; the endpoint w = 0 is evaluated by QAWS
            w = max(w, eps) if w < eps else w
            return (phi(s + w) - ps) / w * (s + w) ** a
        for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
            if i == 0:
                v, e = integrate.quad(g, lo, hi, weight="alg", wvar=(a, 0.0), epsabs=epsabs, epsrel=epsrel, limit=200)
            else:
                v, e = integrate.quad(lambda w: g(w) * w ** a, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=200)
            total += v
            resid += e
        val = kernel_K(H, t, s) * ps + c * a * s ** (-a) * total
        resid *= abs(c * a * s ** (-a))
    if not math.isfinite(val) or resid > max(10 * epsabs, 1e3 * epsrel * abs(val)):
        raise QuadratureError(f"K* quadrature at s={s} missed tolerance", residual=resid)
    return val
