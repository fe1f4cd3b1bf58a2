"""Second moments of the solution field: canonical metrics, sigma^2, density bound.

The field is ``u(t, x) = sum_n sqrt(q_n) (cos(nx) X_n(t) + sin(nx) X'_n(t))``
with independent mode pairs, so every second moment is a series over modes.
Series are evaluated as

    sum_{n<=N} (q_n S_n - A_n) + sum_{n>=1} A_n,

where ``A_n`` is the leading asymptotic of ``q_n S_n`` (a finite sum of
``c n**p cos(n theta)`` terms, summed in closed form through polylogarithms).
N is doubled until two successive estimates agree to ``rtol``.
"""
from __future__ import annotations

import csv
import json
import math
from functools import lru_cache
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, special

from ._numerics import QuadratureError, cos_series, pairwise_sum
from .fbm import fbm_covariance
from .modes import mode_cross_many, mode_var_closed
from .spectrum import SpectrumModel, exponents

N_DEFAULT = 2 ** 10
N_MAX = 2 ** 18
RTOL = 1e-9


class TruncationError(QuadratureError):
    """A mode series did not settle before the truncation cap."""


@dataclass
class SeriesResult:
    value: float
    N: int
    tail: float          # analytic contribution of modes n > N
    error: float         # change observed when doubling N


def circle_distance(x, y):
    d = np.mod(np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)), 2.0 * np.pi)
    out = np.minimum(d, 2.0 * np.pi - d)
    return float(out) if np.ndim(out) == 0 else out


# ------------------------------------------------------------------ series
def _multiply(qa, sa):
    out = []
    for cq, pq, tq in qa:
        for cs, ps, ts in sa:
            c, p = cq * cs, pq + ps
            if tq == 0.0:
                out.append((c, p, ts))
            elif ts == 0.0:
                out.append((c, p, tq))
            else:
                out.append((0.5 * c, p, tq + ts))
                out.append((0.5 * c, p, tq - ts))
    return out


def _asym_values(terms, n):
    nf = n.astype(float)
    out = np.zeros_like(nf)
    for c, p, th in terms:
        out += c * nf ** p * (np.cos(nf * th) if th != 0.0 else 1.0)
    return out


def _asym_total(terms):
    return sum(c * cos_series(-p, th) for c, p, th in terms)


def mode_series(model: SpectrumModel, summand, asym, N0=N_DEFAULT, rtol=RTOL, atol=0.0, n_max=N_MAX):
    """Evaluate ``sum_{n>=1} q_n summand(n)``.

    ``summand(n_array)`` gives the exact per-mode factor; ``asym`` lists its
    large-n expansion as ``(coef, power, theta)`` triples.
    """
    terms = _multiply(model.q_asymptotic(), asym)
    full = _asym_total(terms)
    done = [0, 0.0]      # modes summed so far, running residual sum

    def total(N):
        lo = done[0] + 1
        if N >= lo:
            blk = np.arange(lo, N + 1)
            vals = model.q(blk) * summand(blk) - _asym_values(terms, blk)
            done[1] += pairwise_sum(vals)
            done[0] = N
        return done[1] + full

    N = max(int(N0), 1)
    prev = total(N)
    while True:
        N2 = 2 * N
        cur = total(N2)
        err = abs(cur - prev)
        if err <= rtol * abs(cur) + atol:
            n = np.arange(1, N2 + 1)
            tail = full - pairwise_sum(_asym_values(terms, n))
            return SeriesResult(float(cur), N2, float(tail), float(err))
        if N2 >= n_max:
            raise TruncationError(f"mode series not settled at N={N2} (change {err:.3e})", residual=err)
        N, prev = N2, cur


def _gamma_h(H):
    return special.gamma(2.0 * H + 1.0)


def _n_start(h, N0):
    # beyond n ~ sqrt(60/h) the exp(-n^2 h) corrections are below 1e-26
    if h <= 0:
        return N0
    need = math.sqrt(60.0 / h)
    return max(N0, 1 << max(0, math.ceil(math.log2(need))))


@lru_cache(maxsize=512)
def _mode_moments(H, s, h, lo, hi):
    """Per-mode increment second moment and covariance for modes lo..hi.

    Independent of the spatial lag, so grids of lags at one time pair
    share the quadrature.
    """
    lam = np.arange(lo, hi + 1, dtype=float) ** 2
    d = -np.expm1(-lam * h)
    vs = mode_var_closed(H, lam, s)
    vh = mode_var_closed(H, lam, h)
    cr = mode_cross_many(H, lam, s, h)
    inc = d * d * vs - 2.0 * d * cr + vh
    cov = np.exp(-lam * h) * vs + cr
    inc.flags.writeable = False
    cov.flags.writeable = False
    return inc, cov


def _gamma_parts(model, s, t, r, N0, rtol):
    """Series part (n >= 1) of E[(u(t,x) - u(s,y))^2] with |x - y| = r, s <= t."""
    H = model.H
    h = t - s
    G = _gamma_h(H)

    def summand(n):
        if h == 0:
            return 2.0 * (1.0 - np.cos(n * r)) * mode_var_closed(H, n.astype(float) ** 2, t)
        inc, cov = _mode_moments(H, s, h, int(n[0]), int(n[-1]))
        if r == 0.0:
            return inc
        return inc + 2.0 * (1.0 - np.cos(n * r)) * cov

    if h == 0:
        asym = [(G, -4.0 * H, 0.0), (-G, -4.0 * H, r)]
    else:
        asym = [(G, -4.0 * H, 0.0)]
        if H != 0.5:
            asym.append((-2.0 * H * (2.0 * H - 1.0) * h ** (2.0 * H - 2.0), -4.0, r))
    return mode_series(model, summand, asym, N0=_n_start(h, N0), rtol=rtol)


def _ordered(t, s):
    return (s, t) if s <= t else (t, s)


# --------------------------------------------------------------- metrics
def gamma_sq(model: SpectrumModel, p1, p2, N0=N_DEFAULT, rtol=RTOL, detail=False):
    """E[(u(t,x) - u(s,y))^2] for p1 = (t, x), p2 = (s, y)."""
    (t, x), (s, y) = p1, p2
    if t <= 0 or s <= 0:
        raise ValueError("times must be positive")
    s, t = _ordered(t, s)
    r = circle_distance(x, y)
    if t == s and r == 0.0:
        res = SeriesResult(0.0, 0, 0.0, 0.0)
        return res if detail else 0.0
    head = model.q_zero * (t - s) ** (2.0 * model.H)
    res = _gamma_parts(model, s, t, r, N0, rtol)
    res = SeriesResult(head + res.value, res.N, res.tail, res.error)
    return res if detail else res.value


def delta_t_sq(model, t, r, **kw):
    """Spatial canonical metric squared at time t and lag r."""
    return gamma_sq(model, (t, 0.0), (t, float(r)), **kw)


def delta_x_sq(model, s, t, **kw):
    """Temporal canonical metric squared (independent of x)."""
    return gamma_sq(model, (t, 0.0), (s, 0.0), **kw)


def sigma_sq(model: SpectrumModel, t, N0=N_DEFAULT, rtol=RTOL):
    """Var u(t, x)."""
    H = model.H
    res = mode_series(model, lambda n: mode_var_closed(H, n.astype(float) ** 2, t),
                      [(0.5 * _gamma_h(H), -4.0 * H, 0.0)], N0=N0, rtol=rtol)
    return model.q_zero * t ** (2.0 * H) + res.value


def field_covariance(model: SpectrumModel, p1, p2, N0=N_DEFAULT, rtol=RTOL):
    """Cov(u(t,x), u(s,y)) summed directly over modes."""
    (t, x), (s, y) = p1, p2
    s, t = _ordered(t, s)
    H = model.H
    h = t - s
    r = circle_distance(x, y)

    def summand(n):
        lam = n.astype(float) ** 2
        vs = mode_var_closed(H, lam, s)
        if h == 0:
            return np.cos(n * r) * vs
        cr = mode_cross_many(H, lam, s, h)
        return np.cos(n * r) * (np.exp(-lam * h) * vs + cr)

    if h == 0:
        asym = [(0.5 * _gamma_h(H), -4.0 * H, r)]
    elif H == 0.5:
        asym = []
    else:
        asym = [(H * (2.0 * H - 1.0) * h ** (2.0 * H - 2.0), -4.0, r)]
    res = mode_series(model, summand, asym, N0=_n_start(h, N0), rtol=rtol)
    return model.q_zero * fbm_covariance(H, t, s) + res.value


def delta_metric(p1, p2, alpha, H):
    """|x - y|**(2 alpha) + |t - s|**(alpha ^ 2H) with circle distance in x."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    (t, x), (s, y) = p1, p2
    r = circle_distance(x, y)
    return r ** (2.0 * alpha) + abs(t - s) ** min(alpha, 2.0 * H)


# ------------------------------------------------------- density bound
def _bivariate_pdf(z1, z2, v1, v2, c):
    det = v1 * v2 - c * c
    if det <= 0:
        raise ValueError("degenerate covariance")
    q = (v2 * z1 * z1 - 2.0 * c * z1 * z2 + v1 * z2 * z2) / det
    return np.exp(-0.5 * q) / (2.0 * np.pi * np.sqrt(det))


def pair_covariance(model, p1, p2, **kw):
    """(sigma_t^2, sigma_s^2, covariance) with the covariance by polarization."""
    v1 = sigma_sq(model, p1[0], **kw)
    v2 = v1 if p2[0] == p1[0] else sigma_sq(model, p2[0], **kw)
    g = gamma_sq(model, p1, p2, **kw)
    return v1, v2, 0.5 * (v1 + v2 - g)


def bivariate_bound(model, p1, p2, z1, z2, c_fit, moments=None):
    """Gaussian-type bound on the joint density of (u(p1), u(p2)) at (z1, z2).

    ``moments`` may carry a precomputed ``pair_covariance`` triple.
    """
    if p1[0] == p2[0] and circle_distance(p1[1], p2[1]) == 0.0:
        raise ValueError("coincident points: the bivariate density is degenerate")
    z1 = np.atleast_1d(np.asarray(z1, dtype=float))
    z2 = np.atleast_1d(np.asarray(z2, dtype=float))
    if z1.shape != z2.shape:
        raise ValueError("z1 and z2 must have the same dimension")
    d = z1.size
    a = exponents(model).alpha
    D = delta_metric(p1, p2, a, model.H)
    v1, v2, c = moments if moments is not None else pair_covariance(model, p1, p2)
    dens = float(np.prod(_bivariate_pdf(z1, z2, v1, v2, c)))
    dist2 = float(np.sum((z1 - z2) ** 2))
    bound = c_fit * D ** (-d / 2.0) * math.exp(-dist2 / (c_fit * D))
    return {"bound": bound, "exact_density": dens, "delta": D, "covariance": (v1, v2, c)}


def min_bound_constant(density, D, dist2, d):
    """Smallest c with density <= c D^{-d/2} exp(-dist2 / (c D))."""
    if density <= 0:
        return 0.0
    f = lambda lc: lc - dist2 / (math.exp(lc) * D) - (math.log(density) + 0.5 * d * math.log(D))
    # f is increasing in log c
    lo, hi = -50.0, 1.0
    while f(hi) < 0:
        hi *= 2.0
    if f(lo) > 0:
        return math.exp(lo)
    return math.exp(optimize.brentq(f, lo, hi, xtol=1e-12))


# -------------------------------------------------------------- reports
def loglog_slope(x, y):
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    slope, icpt = np.polyfit(x, y, 1)
    return float(slope), float(icpt)


@dataclass
class MetricReport:
    model: SpectrumModel
    kind: str                       # "delta_t", "delta_x" or "gamma"
    grid: np.ndarray                # lags (1-d) or rows (t, x, s, y)
    values: np.ndarray
    params: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)

    _HEADERS = {"delta_t": ["r", "delta_t_sq"], "delta_x": ["dt", "delta_x_sq"],
                "gamma": ["t", "x", "s", "y", "gamma_sq"], "sigma": ["t", "sigma_sq"]}

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self._HEADERS[self.kind])
            g = np.asarray(self.grid)
            for row, v in zip(g.reshape(len(self.values), -1), self.values):
                w.writerow([repr(float(c)) for c in row] + [repr(float(v))])

    def summary(self):
        return {"model": self.model.spec_string(), "H": self.model.H, "kind": self.kind,
                "params": self.params, "fits": self.fits, "n_points": int(len(self.values))}

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True))


def metric_report(model, kind, grid, t=1.0, s=None, **kw):
    """Evaluate a metric over ``grid`` and fit the log-log slope.

    ``delta_t``: grid of spatial lags at time ``t``.
    ``delta_x``: grid of time lags measured back from ``t``.
    ``sigma``:   grid of times.
    """
    grid = np.asarray(grid, dtype=float)
    if kind == "delta_t":
        vals = np.array([delta_t_sq(model, t, r, **kw) for r in grid])
    elif kind == "delta_x":
        vals = np.array([delta_x_sq(model, t - h, t, **kw) for h in grid])
    elif kind == "sigma":
        vals = np.array([sigma_sq(model, tt, **kw) for tt in grid])
    else:
        raise ValueError(f"unknown report kind {kind!r}")
    fits = {}
    pos = (grid > 0) & (vals > 0)
    if pos.sum() >= 2 and kind != "sigma":
        fits["slope"], fits["intercept"] = loglog_slope(grid[pos], vals[pos])
    return MetricReport(model, kind, grid, vals, {"t": t}, fits)
