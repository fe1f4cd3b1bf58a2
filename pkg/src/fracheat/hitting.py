"""Monte Carlo hitting probabilities, small-ball curves and range dimension."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .potential import EnergyKernelSpec, PointCloud, capacity, default_N0, hausdorff_estimate
from .regularity import fit_power_law, modulus_statistic
from .simulate import SimConfig, iter_simulate, point_covariance, sample_points
from .spectrum import exponents

RESULT_HEADER = ["target_id", "eps", "p_hat_lo", "p_hat_hi", "ci_lo", "ci_hi", "cap", "hausdorff_sum"]


class ResolutionError(ValueError):
    """Dilation slack exceeds half the target feature size."""


def wilson_interval(k, n, conf=0.95):
    if n <= 0:
        return 0.0, 1.0
    z = stats.norm.ppf(0.5 + conf / 2.0)
    p = k / n
    den = 1.0 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, mid - half)
    hi = 1.0 if k == n else min(1.0, mid + half)     # exact endpoints, no rounding below p
    return float(lo), float(hi)


# ----------------------------------------------------------------- targets
def _vec(text):
    return np.array([float(v) for v in text.split(",")], dtype=float)


@dataclass
class TargetSet:
    """Finite union of closed balls and boxes in R^d.

    Text form: parts joined by ';', each ``ball:<c1,..,cd>:<radius>`` or
    ``box:<lo1,..,lod>:<hi1,..,hid>``.
    """

    balls: list = field(default_factory=list)    # (center, radius)
    boxes: list = field(default_factory=list)    # (lo, hi)
    name: str = ""
    d: int | None = None                          # needed only for the empty set

    def __post_init__(self):
        self.balls = [(np.atleast_1d(np.asarray(c, float)), float(r)) for c, r in self.balls]
        self.boxes = [(np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float)))
                      for lo, hi in self.boxes]
        dims = {c.size for c, _ in self.balls} | {lo.size for lo, _ in self.boxes} \
            | {hi.size for _, hi in self.boxes}
        if self.d is not None:
            dims.add(int(self.d))
        if len(dims) != 1:
            raise ValueError("target parts must share one dimension (give d for the empty set)")
        if any(r < 0 for _, r in self.balls):
            raise ValueError("negative ball radius")
        if any(np.any(hi < lo) for lo, hi in self.boxes):
            raise ValueError("box with hi < lo")
        self.d = dims.pop()
        if not self.name:
            self.name = self.spec_string()

    @classmethod
    def parse(cls, text, name=""):
        balls, boxes = [], []
        for part in filter(None, (p.strip() for p in text.split(";"))):
            kind, a, b = part.split(":")
            if kind == "ball":
                balls.append((_vec(a), float(b)))
            elif kind == "box":
                boxes.append((_vec(a), _vec(b)))
            else:
                raise ValueError(f"unknown target part {kind!r}")
        return cls(balls, boxes, name)

    @classmethod
    def ball(cls, center, radius, name=""):
        return cls([(center, radius)], [], name)

    def spec_string(self):
        f = lambda v: ",".join(repr(float(x)) for x in v)
        parts = [f"ball:{f(c)}:{r!r}" for c, r in self.balls]
        parts += [f"box:{f(lo)}:{f(hi)}" for lo, hi in self.boxes]
        return ";".join(parts) or "empty"

    @property
    def empty(self):
        return not self.balls and not self.boxes

    def distance(self, z):
        """Euclidean distance from each row of z to the set."""
        z = np.atleast_2d(np.asarray(z, float))
        out = np.full(z.shape[0], np.inf)
        for c, r in self.balls:
            out = np.minimum(out, np.maximum(np.linalg.norm(z - c, axis=1) - r, 0.0))
        for lo, hi in self.boxes:
            gap = np.maximum(lo - z, 0.0) + np.maximum(z - hi, 0.0)
            out = np.minimum(out, np.linalg.norm(gap, axis=1))
        return out

    def contains(self, z, slack=0.0):
        return self.distance(z) <= slack

    def interval_hit(self, lo, hi, slack=0.0):
        """d = 1: does [lo - slack, hi + slack] meet the set."""
        lo, hi = lo - slack, hi + slack
        for c, r in self.balls:
            if c[0] + r >= lo and c[0] - r <= hi:
                return True
        for a, b in self.boxes:
            if b[0] >= lo and a[0] <= hi:
                return True
        return False

    @property
    def feature_size(self):
        if self.empty:
            return math.inf
        sizes = [r for _, r in self.balls] + [float(np.min(hi - lo)) / 2 for lo, hi in self.boxes]
        return min(sizes)

    def to_cloud(self, h=None):
        """Point cloud (union of radius-h balls) covering the set.

        A family of equal balls is exact; boxes are gridded with spacing
        2h/sqrt(d) so the h-balls cover them.
        """
        radii = {r for _, r in self.balls}
        if h is None:
            h = min(radii) if radii else self.feature_size / 4
        pts = []
        for c, r in self.balls:
            pts.append(c[None, :] if r == h else _ball_grid(c, r, h))
        for lo, hi in self.boxes:
            pts.append(_grid_in(lo, hi, h))
        return PointCloud(np.concatenate(pts), h=h)

    def potential_bounds(self, beta, N0=None, eps_schedule=None):
        """(Cap_beta, last Hausdorff cover sum) of the target."""
        if self.empty:
            return 0.0, 0.0
        cloud = self.to_cloud()
        if N0 is None:
            N0 = default_N0(cloud.diameter, 1.0)
        cap = capacity(cloud, EnergyKernelSpec(beta, N0)).cap
        if eps_schedule is None:
            base = max(cloud.h, 1e-12)
            eps_schedule = base * 2.0 ** np.arange(6, 0, -1)
        hs = hausdorff_estimate(cloud, beta, eps_schedule)
        return cap, hs[-1]


def _grid_in(lo, hi, h):
    step = 2.0 * h / math.sqrt(lo.size)
    axes = [np.arange(a + step / 2, max(b, a + step / 2) + 1e-15, step) if b > a else np.array([a])
            for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, lo.size)


def _ball_grid(c, r, h):
    g = _grid_in(c - r, c + r, h)
    g = g[np.linalg.norm(g - c, axis=1) <= r + h]
    return g if len(g) else c[None, :]


# ------------------------------------------------------------ experiments
@dataclass
class HitExperiment:
    """Bracketed hit counts of one target; ``eps`` is the target feature size."""

    target_id: str
    eps: float
    n: int
    hits_lo: int
    hits_hi: int
    slack_median: float
    resolved: bool
    cap: float = float("nan")
    hausdorff_sum: float = float("nan")
    beta: float = float("nan")
    I: tuple = ()
    J: tuple = ()

    @property
    def p_hat(self):
        return self.p_hat_lo

    @property
    def p_hat_lo(self):
        return self.hits_lo / self.n

    @property
    def p_hat_hi(self):
        return self.hits_hi / self.n

    @property
    def ci(self):
        return wilson_interval(self.hits_lo, self.n)[0], wilson_interval(self.hits_hi, self.n)[1]

    def row(self):
        lo, hi = self.ci
        return [self.target_id, self.eps, self.p_hat_lo, self.p_hat_hi, lo, hi, self.cap, self.hausdorff_sum]


def write_results(results, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        for r in results:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r.row()])


def _J_columns(n_x, J):
    x = 2.0 * np.pi * np.arange(n_x) / n_x
    if J is None:
        return np.arange(n_x)
    lo, hi = J
    cols = np.nonzero((x >= lo - 1e-12) & (x <= hi + 1e-12))[0]
    if cols.size == 0:
        raise ValueError("J contains no grid column")
    return cols


def grid_slack(cfg: SimConfig, C_hat, d):
    """Distance any field value on the rectangle can sit from the grid image."""
    a = exponents(cfg.model).alpha
    e = min(a / 2.0, cfg.model.H)
    dx = math.pi / cfg.x_grid.size
    dt = float(np.max(np.diff(cfg.t_grid))) / 2 if cfg.t_grid.size > 1 else 0.0
    L = lambda r: math.sqrt(math.log1p(1.0 / r)) if r > 0 else 0.0
    return math.sqrt(d) * C_hat * (dx ** a * L(dx) + (dt ** e * L(dt) if dt > 0 else 0.0))


def hit_probability_mc(config: SimConfig, targets, n_replicas, J=None, allow_unresolved=False,
                       window=None, with_potential=False):
    """Hit counts of u(I x J) for each target on shared replicas.

    I is the span of config.t_grid. The lower count uses grid points only
    (for d = 1 the grid range, which the continuous field fills); the upper
    count dilates by the per-replica slack from the modulus statistic.
    """
    single = isinstance(targets, TargetSet)
    targets = [targets] if single else list(targets)
    d = config.d
    if any(tg.d != d for tg in targets):
        raise ValueError("target dimension differs from field dimension")
    ex = exponents(config.model)
    a, beta = ex.alpha, ex.beta
    cols = _J_columns(config.x_grid.size, J)
    I = (float(config.t_grid[0]), float(config.t_grid[-1]))
    J_used = tuple(J) if J is not None else (0.0, 2 * np.pi)
    if window is None:
        span = [2 * np.pi / config.x_grid.size]
        if config.t_grid.size > 1:
            span.append(float(np.max(np.diff(config.t_grid))))
        window = 4 * max(span)
    lo = np.zeros(len(targets), int)
    hi = np.zeros(len(targets), int)
    slacks = []
    for s in iter_simulate(config, n_replicas):
        vals = s.values[:, :, cols]                                   # (d, T, |J|)
        C_hat = max(modulus_statistic(s, a, config.model.H, window, component=c) for c in range(d))
        rho = grid_slack(config, C_hat, d)
        slacks.append(rho)
        if d == 1:
            vmin, vmax = float(vals.min()), float(vals.max())
            for k, tg in enumerate(targets):
                lo[k] += tg.interval_hit(vmin, vmax)
                hi[k] += tg.interval_hit(vmin, vmax, rho)
        else:
            pts = vals.reshape(d, -1).T
            for k, tg in enumerate(targets):
                dist = tg.distance(pts)
                lo[k] += bool(np.any(dist == 0.0))
                hi[k] += bool(np.any(dist <= rho))
    med = float(np.median(slacks))
    out = []
    bad = []
    for k, tg in enumerate(targets):
        ok = tg.empty or med <= tg.feature_size / 2
        if not ok:
            bad.append(tg.name)
        r = HitExperiment(tg.name, tg.feature_size, n_replicas, int(lo[k]), int(hi[k]), med, ok,
                          beta=beta, I=I, J=J_used)
        if with_potential:
            r.cap, r.hausdorff_sum = tg.potential_bounds(d - beta)
        out.append(r)
    if bad and not allow_unresolved:
        raise ResolutionError(f"median slack {med:.3g} exceeds half the feature size of {bad}; "
                              "refine the grid or pass allow_unresolved")
    return out[0] if single else out


# -------------------------------------------------------------- small ball
def cell_partition(alpha, H, n, I=(0.0, 1.0), J=(0.0, 2 * np.pi), axes="standard"):
    """Dyadic cells at level n.

    ``standard`` spacing: time 2^-(n/alpha), space 2^-max(2n/alpha, n/H).
    ``metric`` swaps the two so each cell has metric diameter ~ 2^-n.
    """
    slow, fast = 2.0 ** (-n / alpha), 2.0 ** (-max(2 * n / alpha, n / H))
    dt, dx = (slow, fast) if axes == "standard" else (fast, slow)
    t_edges = np.arange(I[0], I[1] + dt / 2, dt)
    x_edges = np.arange(J[0], J[1] + dx / 2, dx)
    return {"t_edges": t_edges, "x_edges": x_edges, "dt": dt, "dx": dx,
            "count": (t_edges.size - 1) * (x_edges.size - 1)}


@dataclass
class SmallBallCurve:
    radii: np.ndarray
    hits: np.ndarray
    n: int
    slope: float
    used: np.ndarray

    @property
    def p_hat(self):
        return self.hits / self.n

    @property
    def censored(self):
        """Radii with no hits at all (excluded from the fit)."""
        return self.radii[self.hits == 0]

    @property
    def ci(self):
        return np.array([wilson_interval(k, self.n) for k in self.hits])


def _cell_points(a, H, n, t0, x0, m):
    cell = cell_partition(a, H, n, axes="metric")
    ts = t0 + np.linspace(0.0, cell["dt"], m)
    xs = x0 + np.linspace(0.0, cell["dx"], m)
    return [(t, x) for t in ts for x in xs]


def small_ball_curve(model, d, z, radii, n_replicas, seed=0, t0=1.0, x0=0.0, m=3, min_hits=20, level=None):
    """P(u(cell) meets B(z, eps)) over a geometric family of radii.

    By default each eps = 2^-n uses its own level-n cell (metric axes, so the
    cell has metric diameter ~ eps), sampled exactly on an m x m grid.  With
    ``level`` set, one cell and one replica stream serve every radius, so
    p_hat is monotone in eps by coupling.  The slope is fitted over radii
    with at least ``min_hits`` hits and p_hat <= 1/2; zero counts are
    reported as censored.
    """
    a = exponents(model).alpha
    z = np.asarray(z, float)
    radii = np.asarray(radii, float)
    hits = np.zeros(radii.size, int)
    shared = None
    if level is not None:
        pts = _cell_points(a, model.H, level, t0, x0, m)
        u = sample_points(model, pts, d, n_replicas, seed, stream=0)
        shared = np.min(np.linalg.norm(u - z, axis=2), axis=1)          # closest approach
    for k, eps in enumerate(radii):
        if shared is None:
            pts = _cell_points(a, model.H, -math.log2(eps), t0, x0, m)
            u = sample_points(model, pts, d, n_replicas, seed, stream=k, cov=point_covariance(model, pts))
            dist = np.min(np.linalg.norm(u - z, axis=2), axis=1)
        else:
            dist = shared
        hits[k] = int(np.sum(dist <= eps))
    used = (hits >= min_hits) & (hits <= n_replicas / 2)
    slope = fit_power_law(radii[used], hits[used] / n_replicas).slope if used.sum() >= 3 else float("nan")
    return SmallBallCurve(radii, hits, n_replicas, slope, used)


# ---------------------------------------------------------- range dimension
def range_dimension_estimate(points, min_scales=3, k_max=20):
    """Box-counting dimension of a point set (rows in R^d).

    Scales run over dyadic fractions of the diameter while the occupied box
    count stays below a quarter of the points.
    """
    p = np.atleast_2d(np.asarray(points, float))
    lo = p.min(axis=0)
    diam = float(np.max(p.max(axis=0) - lo))
    if diam == 0.0:
        return 0.0, np.array([]), np.array([])
    sides, counts = [], []
    for k in range(1, k_max + 1):
        s = diam * 2.0 ** -k
        c = np.unique(np.floor((p - lo) / s).astype(np.int64), axis=0).shape[0]
        if c > len(p) / 4:
            break
        sides.append(s)
        counts.append(c)
    if len(sides) < min_scales:
        raise ValueError(f"only {len(sides)} usable scales; need {min_scales} (more points)")
    sides, counts = np.array(sides), np.array(counts, float)
    slope = np.polyfit(-np.log(sides), np.log(counts), 1)[0]
    return float(slope), sides, counts
