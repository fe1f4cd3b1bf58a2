"""Energies, capacities and Hausdorff cover sums for finite point clouds.

Kernel convention:  K_b(r) = r**-b (b > 0),  log(N_0 / r) (b = 0),  1 (b < 0).
Infinite energies are returned as ``math.inf`` and the matching capacity
is 0 (1/inf := 0).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, special
from scipy.spatial.distance import pdist, squareform

from ._numerics import QuadratureError, gauss_legendre

INF = math.inf


@dataclass(frozen=True)
class EnergyKernelSpec:
    beta: float
    N0: float = math.e * 4.0

    def __post_init__(self):
        if self.N0 <= 0:
            raise ValueError("N_0 must be positive")


@dataclass
class PointCloud:
    points: np.ndarray
    h: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.shape[0] == 0:
            raise ValueError("point cloud is empty")
        if self.h < 0:
            raise ValueError("resolution h must be >= 0")
        if np.unique(p, axis=0).shape[0] != p.shape[0]:
            raise ValueError("points must be distinct")
        self.points = p

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def diameter(self):
        if len(self.points) < 2:
            return 2.0 * self.h
        return float(pdist(self.points).max()) + 2.0 * self.h

    @classmethod
    def from_csv(cls, path, h=0.0):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data, h)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x_{i + 1}" for i in range(self.d)])
            for row in self.points:
                w.writerow([repr(float(v)) for v in row])


@dataclass
class DiscreteMeasure:
    support: PointCloud
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.support.points),):
            raise ValueError("one weight per support point")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        self.weights = w


def default_N0(*lengths):
    """N_0 = e * max(lengths); keeps the log kernel positive."""
    return math.e * max(max(lengths), 1e-300)


def k_beta(spec: EnergyKernelSpec, r):
    r = np.asarray(r, dtype=float)
    b = spec.beta
    if b < 0:
        out = np.ones_like(r)
    else:
        with np.errstate(divide="ignore"):
            if b > 0:
                out = np.where(r > 0, np.where(r > 0, r, 1.0) ** -b, INF)
            else:
                out = np.where(r > 0, np.log(spec.N0 / np.where(r > 0, r, 1.0)), INF)
    return float(out) if out.ndim == 0 else out


def ball_pair_distance_pdf(r, h, d):
    """Density of |X - Y| for X, Y independent uniform in one d-ball of radius h."""
    r = np.asarray(r, dtype=float)
    x = np.clip(1.0 - r * r / (4.0 * h * h), 0.0, 1.0)
    return d * r ** (d - 1) / h ** d * special.betainc((d + 1) / 2.0, 0.5, x)


def self_energy(spec: EnergyKernelSpec, h, d):
    """Mean kernel over a uniform ball pair of radius h (diagonal of the energy matrix)."""
    b = spec.beta
    if b < 0:
        return 1.0
    if h <= 0 or b >= d:
        return INF
    f = lambda r: k_beta(spec, r) * ball_pair_distance_pdf(r, h, d) if r > 0 else 0.0
    v, e = integrate.quad(f, 0.0, 2.0 * h, epsabs=1e-13, epsrel=1e-11, limit=200)
    if e > 1e-8 * max(abs(v), 1.0):
        raise QuadratureError("self-energy quadrature missed tolerance", residual=e)
    return v


def energy_matrix(cloud: PointCloud, spec: EnergyKernelSpec):
    D = squareform(pdist(cloud.points)) if len(cloud.points) > 1 else np.zeros((1, 1))
    K = k_beta(spec, np.where(D > 0, D, 1.0))
    K = np.array(K, dtype=float, ndmin=2)
    np.fill_diagonal(K, self_energy(spec, cloud.h, cloud.d))
    return K


def energy(mu: DiscreteMeasure, spec: EnergyKernelSpec):
    """I(mu) = sum_ij w_i w_j Kbar_ij (inf when a weighted atom has infinite self-energy)."""
    if spec.beta < 0:
        return 1.0
    K = energy_matrix(mu.support, spec)
    w = mu.weights
    if np.isinf(K[0, 0]):
        return INF if np.any(w > 0) else 0.0
    return float(w @ K @ w)


@dataclass
class CapacityResult:
    cap: float
    energy: float
    minimizer: DiscreteMeasure | None
    iterations: int = 0
    gap: float = 0.0
    solver: str = "closed"
    conditioning: float | None = None

    def to_json(self, path=None):
        out = {"cap": self.cap, "energy": self.energy, "iterations": self.iterations,
               "gap": self.gap, "solver": self.solver}
        s = json.dumps(out, indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(s)
        return s


def frank_wolfe(K, tol=1e-8, max_iter=200_000, w0=None):
    """min w^T K w over the probability simplex, Frank-Wolfe with away steps.

    Returns (w, value, iterations, gap) where gap = g.(w - e_s) with g = 2Kw.
    Ties in the linear minimization go to the lowest index.
    """
    n = K.shape[0]
    w = np.full(n, 1.0 / n) if w0 is None else np.asarray(w0, dtype=float).copy()
    Kw = K @ w
    gap = INF
    it = 0
    for it in range(1, max_iter + 1):
        g = 2.0 * Kw
        s = int(np.argmin(g))
        fw_gap = float(g @ w - g[s])
        gap = fw_gap
        if fw_gap <= tol:
            break
        supp = np.nonzero(w > 0)[0]
        a = int(supp[np.argmax(g[supp])])
        away_gap = float(g[a] - g @ w)
        if fw_gap >= away_gap:
            # toward vertex s: d = e_s - w
            gd = -fw_gap
            dKd = K[s, s] - 2.0 * Kw[s] + w @ Kw
            gmax = 1.0
            idx, sign = s, 1.0
        else:
            # away from vertex a: d = w - e_a
            gd = -away_gap
            dKd = w @ Kw - 2.0 * Kw[a] + K[a, a]
            gmax = w[a] / (1.0 - w[a]) if w[a] < 1.0 else INF
            idx, sign = a, -1.0
        step = gmax if dKd <= 0 else min(gmax, -gd / (2.0 * dKd))
        if sign > 0:
            w *= 1.0 - step
            w[idx] += step
            Kw = (1.0 - step) * Kw + step * K[:, idx]
        else:
            w *= 1.0 + step
            w[idx] -= step
            Kw = (1.0 + step) * Kw - step * K[:, idx]
            if w[idx] < 1e-15:
                w[idx] = 0.0
        w = np.clip(w, 0.0, None)
        w /= w.sum()
        if it % 200 == 0:
            Kw = K @ w
    val = float(w @ K @ w)
    return w, val, it, gap


def _simplex_projection(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.nonzero(u - css / np.arange(1, v.size + 1) > 0)[0][-1]
    return np.maximum(v - css[k] / (k + 1.0), 0.0)


def projected_gradient(K, tol=1e-8, max_iter=20_000):
    n = K.shape[0]
    w = np.full(n, 1.0 / n)
    L = 2.0 * np.abs(np.linalg.eigvalsh(K)).max()
    val = w @ K @ w
    for it in range(1, max_iter + 1):
        g = 2.0 * K @ w
        new = _simplex_projection(w - g / L)
        nv = new @ K @ new
        if abs(val - nv) <= tol * max(1.0, abs(val)):
            w, val = new, nv
            break
        w, val = new, nv
    g = 2.0 * K @ w
    return w, float(val), it, float(g @ w - g.min())


def capacity(cloud: PointCloud, spec: EnergyKernelSpec, tol=1e-8, max_iter=200_000) -> CapacityResult:
    """Cap = 1 / min energy over probability measures on the cloud."""
    n = len(cloud.points)
    if spec.beta < 0:
        w = np.zeros(n)
        w[0] = 1.0
        return CapacityResult(1.0, 1.0, DiscreteMeasure(cloud, w))
    if cloud.h == 0.0 or spec.beta >= cloud.d:
        return CapacityResult(0.0, INF, None)
    K = energy_matrix(cloud, spec)
    if spec.beta == 0 and np.any(K <= 0):
        raise ValueError("N_0 too small: the log kernel is not positive on this cloud")
    ev = np.linalg.eigvalsh(K)
    cond = float(ev.max() / ev.min()) if ev.min() > 0 else INF
    if ev.min() < -1e-12 * ev.max():
        w, val, it, gap = projected_gradient(K, tol=tol)
        solver = "projected_gradient"
    else:
        w, val, it, gap = frank_wolfe(K, tol=tol, max_iter=max_iter)
        solver = "frank_wolfe"
    mu = DiscreteMeasure(cloud, w / w.sum())
    return CapacityResult(1.0 / val, val, mu, it, gap, solver, cond)


def optimality_certificate(K, w, tol=1e-8):
    """min_i (Kw)_i >= w^T K w - tol."""
    Kw = K @ w
    return bool(Kw.min() >= w @ Kw - tol)


# ---------------------------------------------------------------- Hausdorff
@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValueError("box needs lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


def greedy_cover(points, eps):
    """Farthest-point centers until every point is within eps; returns (centers, radii)."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    centers = [0]
    dist = np.linalg.norm(P - P[0], axis=1)
    owner = np.zeros(len(P), dtype=int)
    while dist.max() > eps:
        c = int(np.argmax(dist))
        centers.append(c)
        nd = np.linalg.norm(P - P[c], axis=1)
        closer = nd < dist
        owner[closer] = len(centers) - 1
        dist = np.minimum(dist, nd)
    radii = np.empty(len(centers))
    C = P[centers].copy()
    for k in range(len(centers)):
        pts = P[owner == k]
        r0 = np.linalg.norm(pts - C[k], axis=1).max()
        # recentre on the bounding-box midpoint when that gives a smaller ball
        mid = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
        r1 = np.linalg.norm(pts - mid, axis=1).max()
        if r1 < r0:
            C[k] = mid
        radii[k] = min(r0, r1)
    return C, radii


def cover_sum(radii, beta, floor=0.0):
    r = np.maximum(np.asarray(radii, dtype=float), floor)
    if beta == 0:
        return float(len(r))
    with np.errstate(divide="ignore"):
        return float(np.sum((2.0 * r) ** beta))


def _box_cover_sum(box: Box, beta, eps):
    side = 2.0 * eps / math.sqrt(box.lo.size)
    counts = np.maximum(np.ceil((box.hi - box.lo) / side), 1.0)
    return float(np.prod(counts)) * (2.0 * eps) ** beta if beta != 0 else float(np.prod(counts))


def hausdorff_estimate(obj, beta, eps_schedule):
    """Cover sums sum (2 r_i)^beta with r_i <= eps along a decreasing eps schedule.

    ``obj`` is a PointCloud (greedy farthest-point covers; each point is a
    ball of radius h, so radii never drop below h), a Box (regular cube
    cover), or a list of boxes.  beta < 0 gives the infinite sentinel.
    """
    eps = np.asarray(eps_schedule, dtype=float)
    if np.any(np.diff(eps) >= 0):
        raise ValueError("eps_schedule must be strictly decreasing")
    if beta < 0:
        return [INF] * eps.size
    out = []
    for e in eps:
        if isinstance(obj, Box):
            out.append(_box_cover_sum(obj, beta, e))
        elif isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], Box):
            out.append(sum(_box_cover_sum(b, beta, e) for b in obj))
        else:
            cloud = obj if isinstance(obj, PointCloud) else PointCloud(obj)
            if cloud.h > e:
                raise ValueError("eps below the cloud resolution h")
            _, radii = greedy_cover(cloud.points, e - cloud.h)
            out.append(cover_sum(radii + cloud.h, beta))
    return out


# ------------------------------------------------------ pair-density integral
def _log_panels(top, depth=60.0, width=0.5, order=16):
    x, w = gauss_legendre(order)
    edges = np.arange(math.log(top) - depth, math.log(top) + 1e-12, width)
    if edges[-1] < math.log(top):
        edges = np.append(edges, math.log(top))
    lo = edges[:-1, None]
    half = 0.5 * (edges[1:, None] - lo)
    p = (lo + half * (x[None, :] + 1.0)).ravel()
    wt = (half * w[None, :]).ravel()
    # integration variable e^p, with Jacobian e^p
    return np.exp(p), wt * np.exp(p)


def prel_lhs(a, I, J, alpha, H, d, width=0.5):
    """int_I int_I int_J int_J Delta^{-d/2} exp(-a^2 / Delta), reduced to two lags."""
    LI = I[1] - I[0]
    LJ = J[1] - J[0]
    if LI <= 0 or LJ <= 0:
        raise ValueError("I and J must be non-trivial intervals")
    if LJ > math.pi:
        raise ValueError("J longer than pi would need the wrapped circle distance")
    a1, a2 = 2.0 * alpha, min(alpha, 2.0 * H)
    u, wu = _log_panels(LI, width=width)      # time lag
    v, wv = _log_panels(LJ, width=width)      # space lag
    D = v[None, :] ** a1 + u[:, None] ** a2
    with np.errstate(over="ignore", under="ignore"):
        f = D ** (-d / 2.0) * np.exp(-a * a / D)
    f *= (LI - u)[:, None] * (LJ - v)[None, :]
    return 4.0 * float(wu @ f @ wv)


def prel_integral_check(a, I, J, alpha, H, d, N0=None, normalize="raw"):
    """LHS of the quadruple integral against K_{d - beta'}(a).

    beta' = 1/alpha + 2/(alpha ^ 2H).  ``normalize="reduced"`` divides the LHS
    by 4|I||J| B(1/a1, 1/a2)/(a1 a2), which makes the log-regime growth
    exactly 2 ln(1/a).
    """
    lhs = prel_lhs(a, I, J, alpha, H, d)
    check = prel_lhs(a, I, J, alpha, H, d, width=0.25)
    if abs(lhs - check) > 1e-6 * abs(check):
        raise QuadratureError("pair-density integral not converged", residual=abs(lhs - check))
    lhs = check
    a1, a2 = 2.0 * alpha, min(alpha, 2.0 * H)
    if normalize == "reduced":
        LI, LJ = I[1] - I[0], J[1] - J[0]
        lhs /= 4.0 * LI * LJ * special.beta(1.0 / a1, 1.0 / a2) / (a1 * a2)
    bprime = 1.0 / alpha + 2.0 / a2
    if N0 is None:
        N0 = default_N0(1.0, a)
    rhs = k_beta(EnergyKernelSpec(d - bprime, N0), a)
    return {"lhs": lhs, "rhs_kernel": float(rhs), "ratio": lhs / float(rhs), "beta_prime": bprime}


class CapacityEstimator:
    """sklearn-flavoured wrapper: fit(X) computes the capacity of the point set X."""

    def __init__(self, beta=1.0, h=0.0, N0=None, tol=1e-8):
        self.beta = beta
        self.h = h
        self.N0 = N0
        self.tol = tol

    def get_params(self, deep=True):
        return {"beta": self.beta, "h": self.h, "N0": self.N0, "tol": self.tol}

    def set_params(self, **params):
        for k, v in params.items():
            setattr(self, k, v)
        return self

    def fit(self, X, y=None):
        cloud = PointCloud(np.asarray(X, dtype=float), self.h)
        N0 = self.N0 if self.N0 is not None else default_N0(cloud.diameter, 1.0)
        self.result_ = capacity(cloud, EnergyKernelSpec(self.beta, N0), tol=self.tol)
        self.capacity_ = self.result_.cap
        self.weights_ = None if self.result_.minimizer is None else self.result_.minimizer.weights
        return self

    def transform(self, X=None):
        return self.weights_
