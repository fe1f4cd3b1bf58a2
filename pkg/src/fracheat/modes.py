"""Second moments of one Fourier mode of the solution.

A mode is the fractional Ornstein-Uhlenbeck convolution

    X(t) = int_0^t exp(-lam (t - r)) dB(r),     lam = n**2,

driven by fBm B of index H.  Everything here is a function of ``(H, lam)``
and one or two times.  The default ``closed`` route uses

    V(a)   = E[X(a)^2]
           = Gamma(2H+1)/2 lam**(-2H) P(2H+1, lam a)
             + exp(-lam a) (a**2H - lam/2 int_0^a w**2H exp(-lam (a-w)) dw),

(integration by parts against B, then the fBm covariance), and for the
disjoint piece ``Y = int_s^{s+h} exp(-lam (s+h-r)) dB(r)``

    E[X(s) Y] = H (2H-1) lam**(-2H) G(lam s, lam h),
    G(S, L)   = 1/2 int_0^{S+L} z**(2H-2) g(z) dz,

with ``g(z) = exp(-|z-L|) - exp(-(z+L))`` for ``z <= S`` and
``g(z) = exp(-|z-L|) - exp(-(2S+L-z))`` beyond.  ``g >= 0`` and
``g(z) = O(z)`` at 0, so G is evaluated by panelled Gauss quadrature with
a Jacobi panel at the origin.

The ``kstar``, ``isometry`` and ``mc_oracle`` routes are independent
cross-checks.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from ._numerics import (QuadratureError, exp_weighted_power_int, gauss_jacobi_left, gauss_legendre,
                        panel_edges)
from .fbm import kstar_apply, sample_fbm

METHODS = ("closed", "kstar", "isometry", "mc_oracle")

_CUT = 45.0        # exp(-45) ~ 3e-20: integrand mass beyond this is dropped
_ORDER = 20


def _check_H(H):
    if not 0.0 < H < 1.0:
        raise ValueError("H must lie in (0, 1)")


# ------------------------------------------------------------------ closed
def mode_var_closed(H, lam, a):
    """E[X(a)^2] for scalar ``a >= 0`` and array-like ``lam >= 0``."""
    _check_H(H)
    lam = np.asarray(lam, dtype=float)
    if a <= 0:
        return np.zeros_like(lam) if lam.ndim else 0.0
    p = 2.0 * H
    la = lam * a
    out = np.empty(np.broadcast(lam).shape)
    zero = lam == 0
    out[zero] = a ** p
    nz = ~zero
    lz, laz = lam[nz], la[nz]
    head = 0.5 * special.gamma(p + 1.0) * lz ** (-p) * special.gammainc(p + 1.0, laz)
    tail = np.zeros_like(lz)
    live = laz < 750.0
    if np.any(live):
        ll = lz[live]
        tail[live] = np.exp(-laz[live]) * (a ** p - 0.5 * ll * exp_weighted_power_int(p, ll, a))
    out[nz] = head + tail
    return float(out) if out.ndim == 0 else out


def _G_integrand(H, S, L):
    b = 2.0 * H - 2.0

    def f(z):
        near = np.exp(-np.abs(z - L))
        far = np.where(z <= S, np.exp(-(z + L)), np.exp(-(2.0 * S + L - z)))
        return z ** b * (near - far)
    return f


def _G_over_z(H, S, L):
    # g(z)/z on z <= min(S, L): 2 exp(-L) sinh(z)/z
    def f(z):
        return 2.0 * math.exp(-L) * np.where(z > 0, np.sinh(z) / np.where(z > 0, z, 1.0), 1.0)
    return f


def cross_G(H, S, L, order=_ORDER):
    """G(S, L) defined in the module docstring (S, L >= 0)."""
    if S <= 0 or L <= 0:
        return 0.0
    top = S + L
    lo_cut = max(0.0, L - _CUT)
    hi_cut = min(top, L + _CUT)
    knots = sorted({0.0, min(S, L), max(S, L), top})
    knots = [k for k in knots if lo_cut <= k <= hi_cut]
    knots = sorted(set([lo_cut] + knots + [hi_cut]))
    f = _G_integrand(H, S, L)
    xg, wg = gauss_legendre(order)
    total = 0.0
    for p, q in zip(knots[:-1], knots[1:]):
        if q <= p:
            continue
        if p == 0.0:
            # Jacobi panel: z**(2H-1) weight times the smooth g(z)/z
            w0 = min(q, 1.0)
            zj, wj = gauss_jacobi_left(order, 2.0 * H - 1.0)
            total += w0 ** (2.0 * H - 1.0) * w0 * float(np.sum(wj * _G_over_z(H, S, L)(w0 * zj)))
            p = w0
            if q <= p:
                continue
            edges = panel_edges(p, q, grade_from=p, max_width=2.0)
        else:
            edges = panel_edges(p, q, grade_from=p, max_width=2.0)
        lo = edges[:-1, None]
        half = 0.5 * (edges[1:, None] - lo)
        nodes = lo + half * (xg[None, :] + 1.0)
        total += float(np.sum(f(nodes) * half * wg[None, :]))
    return 0.5 * total


def _G_asymptotic(H, L, kmax=12):
    # G ~ sum_k p(p-1)...(p-2k+1) L**(p-2k), p = 2H-2, once S, L >> 1
    p = 2.0 * H - 2.0
    L = np.asarray(L, dtype=float)
    inv2 = L ** -2.0
    term = L ** p
    total = term.copy()
    coef = 1.0
    for k in range(1, kmax + 1):
        coef *= (p - 2 * k + 2) * (p - 2 * k + 1)
        term = term * inv2
        total += coef * term
    return total


_ASYM_S, _ASYM_L = 50.0, 60.0


def cross_G_many(H, S, L):
    """Vectorized G(S, L); large arguments use the asymptotic series."""
    S, L = np.broadcast_arrays(np.asarray(S, dtype=float), np.asarray(L, dtype=float))
    out = np.zeros(S.shape)
    big = (S >= _ASYM_S) & (L >= _ASYM_L)
    if np.any(big):
        out[big] = _G_asymptotic(H, L[big])
    for idx in zip(*np.nonzero(~big)):
        out[idx] = cross_G(H, S[idx], L[idx])
    return out


def mode_cross_many(H, lam, s, h):
    """Vectorized mode_cross over arrays lam, s, h."""
    lam, s, h = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (lam, s, h)))
    if H == 0.5:
        return np.zeros(lam.shape)
    out = np.zeros(lam.shape)
    ok = (h > 0) & (s > 0)
    out[ok] = H * (2.0 * H - 1.0) * lam[ok] ** (-2.0 * H) * cross_G_many(H, lam[ok] * s[ok], lam[ok] * h[ok])
    return out


def mode_cross(H, lam, s, h):
    """E[X(s) Y] with Y the convolution over (s, s+h]; scalar lam > 0."""
    if H == 0.5 or h <= 0 or s <= 0:
        return 0.0
    return H * (2.0 * H - 1.0) * lam ** (-2.0 * H) * cross_G(H, lam * s, lam * h)


def mode_cov(H, lam, s, t):
    """E[X(s) X(t)] for s <= t."""
    if t < s:
        s, t = t, s
    h = t - s
    return math.exp(-lam * h) * mode_var_closed(H, lam, s) + mode_cross(H, lam, s, h)


def mode_increment_closed(H, lam, s, t):
    """E[(X(t) - X(s))^2] for 0 < s <= t."""
    if t < s:
        s, t = t, s
    h = t - s
    if h == 0:
        return 0.0
    d = -math.expm1(-lam * h)
    return d * d * mode_var_closed(H, lam, s) - 2.0 * d * mode_cross(H, lam, s, h) + mode_var_closed(H, lam, h)


# ------------------------------------------------------- quadrature routes
def kstar_second_moment(H, phi, t, breakpoints=(), layer=None):
    """int_0^t (K*_t phi)(s)^2 ds by nested adaptive quadrature."""
    pts = sorted(set(b for b in breakpoints if 0 < b < t))
    if layer:
        pts = sorted(set(pts) | {t - k * layer for k in (1, 4, 16) if 0 < t - k * layer < t})
    edges = [0.0] + pts + [t]
    total, resid = 0.0, 0.0
    bps = tuple(breakpoints)
    f = lambda s: kstar_apply(H, phi, t, s, breakpoints=bps) ** 2
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = integrate.quad(f, lo, hi, epsabs=1e-12, epsrel=1e-8, limit=200)
        total += v
        resid += e
    if resid > 1e-6 * max(abs(total), 1e-300) + 1e-12:
        raise QuadratureError("K* second moment missed tolerance", residual=resid)
    return total


def mode_var_kstar(H, lam, t):
    phi = lambda r: math.exp(-lam * (t - r))
    return kstar_second_moment(H, phi, t, layer=1.0 / lam if lam > 0 else None)


def mode_increment_kstar(H, lam, s, t):
    if s == t:
        return 0.0
    phi = lambda r: math.exp(-lam * (t - r)) - (math.exp(-lam * (s - r)) if r <= s else 0.0)
    return kstar_second_moment(H, phi, t, breakpoints=(s,), layer=1.0 / lam if lam > 0 else None)


def mode_var_isometry(H, lam, t):
    """H(2H-1) double integral, reduced to one dimension (H > 1/2 only)."""
    if H <= 0.5:
        raise ValueError("isometry route needs H > 1/2")
    top = min(t, _CUT / lam) if lam > 0 else t
    f = lambda w: math.exp(-lam * w) * (-math.expm1(-2.0 * lam * (t - w))) / (2.0 * lam) if lam > 0 else (t - w)
    v, e = integrate.quad(f, 0.0, top, weight="alg", wvar=(2.0 * H - 2.0, 0.0), epsabs=1e-14, epsrel=1e-11, limit=200)
    return 2.0 * H * (2.0 * H - 1.0) * v


def rs_oracle(H, integrand, t, n_paths=20_000, n_grid=2 ** 12, seed=0):
    """Monte Carlo E[(int_0^t integrand dB)^2] by midpoint Riemann-Stieltjes sums.

    Returns ``(mean, standard_error)``.  A list of integrands is evaluated on
    the same paths and gives arrays.
    """
    grid = np.linspace(0.0, t, n_grid + 1)
    mid = 0.5 * (grid[1:] + grid[:-1])
    many = isinstance(integrand, (list, tuple))
    w = np.stack([f(mid) for f in integrand], axis=1) if many else integrand(mid)
    acc, acc2, done = 0.0, 0.0, 0
    batch = 500
    for start in range(0, n_paths, batch):
        m = min(batch, n_paths - start)
        paths = sample_fbm(H, grid, m, seed, stream=1 + start // batch).values
        x = np.diff(paths, axis=1) @ w
        x2 = x * x
        acc += x2.sum(axis=0)
        acc2 += (x2 * x2).sum(axis=0)
        done += m
    mean = acc / done
    se = np.sqrt(np.maximum(acc2 / done - mean * mean, 0.0) / done)
    return (mean, se) if many else (float(mean), float(se))


# ------------------------------------------------------------ public entry
def mode_variance(H, n, t, method="closed", **kw):
    """E[(int_0^t exp(-n^2 (t-r)) dB(r))^2]."""
    _check_H(H)
    if n < 1 or int(n) != n:
        raise ValueError("mode index must be a positive integer")
    if t <= 0:
        raise ValueError("t must be positive")
    lam = float(n) ** 2
    if method == "closed":
        return mode_var_closed(H, lam, t)
    if method == "kstar":
        return mode_var_kstar(H, lam, t)
    if method == "isometry":
        return mode_var_isometry(H, lam, t)
    if method == "mc_oracle":
        return rs_oracle(H, lambda r: np.exp(-lam * (t - r)), t, **kw)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def mode_increment_moment(H, n, s, t, method="closed", **kw):
    """E[(X_n(t) - X_n(s))^2] for 0 < s <= t."""
    _check_H(H)
    if not 0.0 < s <= t:
        raise ValueError("need 0 < s <= t")
    lam = float(n) ** 2
    if method == "closed":
        return mode_increment_closed(H, lam, s, t)
    if method == "kstar":
        return mode_increment_kstar(H, lam, s, t)
    if method == "mc_oracle":
        f = lambda r: np.exp(-lam * (t - r)) - np.where(r <= s, np.exp(-lam * (s - r)), 0.0)
        return rs_oracle(H, f, t, **kw)
    raise ValueError(f"unknown method {method!r}")
