"""Low-level numerical helpers shared by the moment and metric engines."""
from __future__ import annotations

import threading
from functools import lru_cache

import mpmath
import numpy as np
from scipy import special


class QuadratureError(RuntimeError):
    """Quadrature or series evaluation did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


@lru_cache(maxsize=None)
def gauss_jacobi_left(n: int, b: float):
    """Nodes/weights on [0, 1] for the weight ``z**b``."""
    x, w = special.roots_jacobi(n, 0.0, b)
    # map [-1, 1] -> [0, 1]; (1 + x)^b -> (2z)^b
    z = 0.5 * (x + 1.0)
    return z, w * 0.5 ** (b + 1.0)


def panel_edges(a: float, b: float, grade_from: float | None = None, max_width: float = 2.0,
                ratio: float = 2.0) -> np.ndarray:
    """Panel edges on [a, b].

    Widths grow geometrically away from ``grade_from`` (which must be ``a``
    when given, and positive) and are capped at ``max_width``.
    """
    if b <= a:
        return np.array([a, b])
    edges = [a]
    x = a
    if grade_from is not None and grade_from > 0:
        w = grade_from * (ratio - 1.0)
    else:
        w = max_width
    while x < b:
        step = min(w, max_width)
        x = min(x + step, b)
        edges.append(x)
        w *= ratio
    return np.asarray(edges)


def integrate_panels(f, edges: np.ndarray, order: int = 16) -> float:
    """Composite Gauss-Legendre quadrature over consecutive panels."""
    if len(edges) < 2:
        return 0.0
    x, w = gauss_legendre(order)
    lo = edges[:-1, None]
    half = 0.5 * (edges[1:, None] - lo)
    nodes = lo + half * (x[None, :] + 1.0)
    return float(np.sum(f(nodes) * (half * w[None, :])))


def lower_gamma_int(p: float, lam, a):
    """``int_0^a w**p exp(-lam w) dw`` for ``p > -1``."""
    lam = np.asarray(lam, dtype=float)
    return lam ** (-p - 1.0) * special.gamma(p + 1.0) * special.gammainc(p + 1.0, lam * a)


def exp_weighted_power_int(p: float, lam, a):
    """``int_0^a w**p exp(-lam (a - w)) dw`` for ``p > -1``."""
    lam = np.asarray(lam, dtype=float)
    return a ** (p + 1.0) / (p + 1.0) * special.hyp1f1(1.0, p + 2.0, -lam * a)


_POLYLOG_LOCK = threading.Lock()


@lru_cache(maxsize=4096)
def _cos_series(p: float, theta: float) -> float:
    theta = float(np.mod(theta, 2.0 * np.pi))
    with _POLYLOG_LOCK:
        if theta == 0.0:
            return float(mpmath.zeta(p))
        return float(mpmath.re(mpmath.polylog(p, mpmath.expj(theta))))


def cos_series(p: float, theta: float) -> float:
    """``sum_{n>=1} n**(-p) cos(n theta)``.

    Requires ``p > 1`` when ``theta`` is a multiple of 2 pi, ``p > 0``
    otherwise.
    """
    if p <= 0:
        raise ValueError("series diverges for p <= 0")
    t = float(np.mod(theta, 2.0 * np.pi))
    if t == 0.0 and p <= 1:
        raise ValueError("series diverges at theta = 0 for p <= 1")
    return _cos_series(round(float(p), 15), t)


def pairwise_sum(values: np.ndarray) -> float:
    """Order-fixed pairwise summation (reproducible across runs)."""
    v = np.asarray(values, dtype=float).ravel()
    while v.size > 1:
        if v.size % 2:
            v = np.append(v, 0.0)
        v = v[0::2] + v[1::2]
    return float(v[0]) if v.size else 0.0
