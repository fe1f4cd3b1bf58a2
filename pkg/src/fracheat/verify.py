"""Acceptance runners shared by ``fracheat verify-all`` and the test suite.

Each check returns a CheckResult; nothing here asserts, so the caller
decides how to report.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .covariance import bivariate_bound, delta_metric, gamma_sq, min_bound_constant, pair_covariance, sigma_sq
from .hitting import TargetSet, hit_probability_mc, small_ball_curve, wilson_interval
from .modes import mode_variance, rs_oracle
from .potential import (Box, EnergyKernelSpec, PointCloud, capacity, energy_matrix, hausdorff_estimate,
                        optimality_certificate, prel_integral_check)
from .regularity import fit_holder_exact, fit_power_law
from .rng import substream
from .simulate import SimConfig, simulate
from .spectrum import SpectrumModel, exponents


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number:2d} {self.name}: {self.detail}"


def _white(H):
    return SpectrumModel.parse("white", H)


# ---------------------------------------------------------------- 1
def check_mode_variance(seed=0, n_paths=20_000, n_grid=2 ** 12):
    ns = (1, 2, 4, 8)
    worst, rows, ok = 0.0, [], True
    for H in (0.3, 0.5, 0.7):
        for t in (0.5, 1.0):
            fs = [lambda r, lam=float(n * n), t=t: np.exp(-lam * (t - r)) for n in ns]
            mean, se = rs_oracle(H, fs, t, n_paths=n_paths, n_grid=n_grid, seed=seed)
            for k, n in enumerate(ns):
                v = mode_variance(H, n, t, method="kstar")
                slack = 3.0 * se[k] + 0.01 * mean[k]
                good = abs(v - mean[k]) <= slack
                ok &= bool(good)
                worst = max(worst, abs(v - mean[k]) / slack)
                rows.append((H, n, t, v, float(mean[k]), float(se[k])))
    ito = max(abs(mode_variance(0.5, n, t, method="kstar") + math.expm1(-2 * n * n * t) / (2 * n * n))
              for n in ns for t in (0.5, 1.0))
    ok &= ito <= 1e-8
    return CheckResult(1, "mode-variance oracle", ok,
                       f"max |kstar - MC| / (3SE + 1%) = {worst:.2f}, H=0.5 Ito error {ito:.1e}",
                       {"rows": rows, "ito_error": ito})


# ---------------------------------------------------------------- 2
def check_mode_scaling():
    ns = np.unique(np.geomspace(8, 64, 12).round().astype(int))
    slopes = {}
    for H in (0.3, 0.7):
        v = [mode_variance(H, int(n), 1.0) for n in ns]
        slopes[H] = fit_power_law(ns, v).slope
    ok = all(abs(s + 4 * H) <= 0.1 for H, s in slopes.items())
    return CheckResult(2, "n^-4H scaling", ok,
                       ", ".join(f"H={H}: slope {s:.3f} (want {-4 * H:.1f})" for H, s in slopes.items()),
                       {"slopes": slopes})


# ---------------------------------------------------------------- 3
def check_space_regularity():
    models = [SpectrumModel.parse(s, 0.5) for s in ("white", "riesz:0.5", "fracspace:0.5")]
    fits = [fit_holder_exact(m, "space", (1e-3, 1e-1), fixed=1.0, tol=0.05) for m in models]
    ok = all(f.verdict for f in fits)
    return CheckResult(3, "space regularity", ok,
                       ", ".join(f"{m.spec_string()}: {f.slope:.3f} (want {f.expected:.2f})"
                                 for m, f in zip(models, fits)),
                       {"slopes": [f.slope for f in fits]})


# ---------------------------------------------------------------- 4
def check_time_regularity():
    fits = {H: fit_holder_exact(_white(H), "time", (1e-3, 1e-1), fixed=1.0, tol=0.05) for H in (0.4, 0.7)}
    ok = all(f.verdict for f in fits.values())
    return CheckResult(4, "time regularity", ok,
                       ", ".join(f"H={H}: {f.slope:.3f} (want {f.expected:.2f})" for H, f in fits.items()),
                       {"slopes": {H: f.slope for H, f in fits.items()}})


# ---------------------------------------------------------------- 5
def _sandwich_c(model, n, t0=0.5, T=1.0, J=(0.0, 1.0)):
    a = exponents(model).alpha
    ts = np.linspace(t0, T, n)
    xs = np.linspace(J[0], J[1], n)
    lags = np.unique(np.abs(xs[:, None] - xs[None, :]).round(14))
    lo, hi = np.inf, 0.0
    for i in range(n):
        for j in range(i, n):
            for r in lags:
                if i == j and r == 0.0:
                    continue
                p1, p2 = (ts[j], 0.0), (ts[i], float(r))
                ratio = gamma_sq(model, p1, p2) / delta_metric(p1, p2, a, model.H)
                lo, hi = min(lo, ratio), max(hi, ratio)
    return max(hi, 1.0 / lo), lo, hi


def check_joint_sandwich(n=20):
    m = _white(0.4)
    c1, lo1, hi1 = _sandwich_c(m, n)
    c2, lo2, hi2 = _sandwich_c(m, 2 * n - 1)
    ok = bool(np.isfinite(c1) and abs(c2 / c1 - 1.0) <= 0.2)
    return CheckResult(5, "joint sandwich", ok,
                       f"ratio in [{lo1:.3f}, {hi1:.3f}] -> c={c1:.3f}; refined [{lo2:.3f}, {hi2:.3f}] -> c={c2:.3f}",
                       {"c": c1, "c_refined": c2})


# ---------------------------------------------------------------- 6
def _bivariate_probes(model, n, seed, d=2):
    rng = substream(seed, 6, int(round(1000 * model.H)))
    out = []
    while len(out) < n:
        t = rng.uniform(0.5, 1.0, 2)
        x = rng.uniform(0.0, 2 * np.pi, 2)
        p1, p2 = (t[0], x[0]), (t[1], x[1])
        z1, z2 = rng.uniform(-1.5, 1.5, (2, d))
        mom = pair_covariance(model, p1, p2)
        res = bivariate_bound(model, p1, p2, z1, z2, 1.0, moments=mom)
        out.append((res["exact_density"], res["delta"], float(np.sum((z1 - z2) ** 2)), p1, p2, z1, z2, mom))
    return out


def check_bivariate_bound(n_probes=1000, seed=0, d=2):
    fitted, ok = {}, True
    for H in (0.4, 0.7):
        m = _white(H)
        probes = _bivariate_probes(m, n_probes, seed, d)
        c = max(min_bound_constant(dens, D, dist2, d) for dens, D, dist2, *_ in probes)
        # re-evaluate every probe with the single fitted constant
        held = all(bivariate_bound(m, p1, p2, z1, z2, c * (1 + 1e-9), moments=mom)["bound"] >= dens
                   for dens, _, _, p1, p2, z1, z2, mom in probes)
        fitted[H] = c
        ok &= bool(np.isfinite(c) and held)
    return CheckResult(6, "bivariate density bound", ok,
                       ", ".join(f"H={H}: c_fit={c:.3f}" for H, c in fitted.items()) + f" over {n_probes} probes",
                       {"c_fit": fitted})


# ---------------------------------------------------------------- 7
def _mesh_energy(K, x, n_mesh=100_000):
    """Minimum energy over a 2-parameter weight family w ~ (x(1-x) + delta)^-a."""
    side = int(round(math.sqrt(n_mesh)))
    best = np.inf
    u = x * (1.0 - x)
    for a in np.linspace(0.0, 1.0, side):
        deltas = np.geomspace(1e-5, 1.0, side)
        W = (u[None, :] + deltas[:, None]) ** (-a)
        W /= W.sum(axis=1, keepdims=True)
        best = min(best, float(np.min(np.einsum("ki,ij,kj->k", W, K, W))))
    return best


def check_capacity():
    notes, ok = [], True
    cloud = PointCloud(np.linspace(0, 1, 64)[:, None], h=1 / 128)
    neg = capacity(cloud, EnergyKernelSpec(-1.0, 4.0)).cap
    one = PointCloud(np.zeros((1, 1)), h=0.0)
    s_pos = capacity(one, EnergyKernelSpec(1.0, 4.0)).cap
    s_neg = capacity(one, EnergyKernelSpec(-0.5, 4.0)).cap
    ok &= neg == 1.0 and s_pos == 0.0 and s_neg == 1.0
    notes.append(f"beta<0 cap {neg}, singleton caps {s_pos}/{s_neg}")
    spec = EnergyKernelSpec(0.0, 4.0)
    res = capacity(cloud, spec)
    K = energy_matrix(cloud, spec)
    mesh_cap = 1.0 / _mesh_energy(K, cloud.points[:, 0])
    rel = abs(res.cap - mesh_cap) / mesh_cap
    cert = optimality_certificate(K, res.minimizer.weights)
    ok &= rel <= 0.02 and res.gap <= 1e-8 and cert
    notes.append(f"FW cap {res.cap:.6f} vs mesh {mesh_cap:.6f} ({100 * rel:.2f}%), gap {res.gap:.1e}")
    return CheckResult(7, "capacity solver", ok, "; ".join(notes),
                       {"cap": res.cap, "mesh_cap": mesh_cap, "gap": res.gap})


# ---------------------------------------------------------------- 8
def check_hausdorff(L=3.0):
    eps = 2.0 ** -np.arange(1, 13)
    box = hausdorff_estimate(Box([0.0], [L]), 1.0, eps)
    n = 2 ** 14
    pts = np.linspace(0.0, L, n)[:, None]
    h = L / (n - 1) / 2
    cloud = hausdorff_estimate(PointCloud(pts, h=h), 1.0, eps)
    neg = hausdorff_estimate(Box([0.0], [L]), -0.5, eps)
    ok = abs(box[-1] - L) <= 0.02 * L and abs(cloud[-1] - L) <= 0.02 * L and all(math.isinf(v) for v in neg)
    return CheckResult(8, "Hausdorff estimate", ok,
                       f"L={L}: box cover {box[-1]:.4f}, point cloud {cloud[-1]:.4f} at eps=2^-12; beta<0 infinite",
                       {"box": box, "cloud": cloud})


# ---------------------------------------------------------------- 9
def check_prel(alpha=0.5, H=0.5):
    a_grid = np.geomspace(1e-3, 1.0, 7)
    I, J = (0.5, 1.0), (0.0, 1.0)
    a1, a2 = 2 * alpha, min(alpha, 2 * H)
    crit = 2 / a1 + 2 / a2
    ok, notes, drift = True, [], {}
    for d, tag in ((int(crit) + 2, "above"), (int(crit) - 2, "below"), (int(crit), "equal")):
        r = np.array([prel_integral_check(a, I, J, alpha, H, d)["ratio"] for a in a_grid])
        good = bool(np.all(np.isfinite(r)) and np.all(r > 0))
        # the bound is one-sided: the ratio must not grow as a -> 0; a wrong
        # kernel index would drift by >= 10^2 over the first decade
        drift[tag] = float(r[0] / r[2]) if good else math.inf
        ok &= good and 0.8 <= drift[tag] <= 1.25
        notes.append(f"d={d} ({tag}) max ratio {r.max():.3f}, r(1e-3)/r(1e-2) {drift[tag]:.3f}")
    small = np.geomspace(1e-3, 1e-2, 3)
    lhs = [prel_integral_check(a, I, J, alpha, H, int(crit), normalize="reduced")["lhs"] for a in small]
    slope = -np.polyfit(np.log(small), lhs, 1)[0]
    ok &= abs(slope - 2.0) <= 0.2
    notes.append(f"log-regime slope {slope:.3f}")
    return CheckResult(9, "pair-density integral", ok, "; ".join(notes), {"drift": drift, "slope": slope})


# ---------------------------------------------------------------- 10
def check_hitting_sandwich(n_replicas=1000, seed=0, n_small=200_000):
    m = _white(0.5)
    d = 2
    beta = exponents(m).beta
    cfg = SimConfig(m, 255, np.linspace(0.5, 1.0, 65), 512, d=d, seed=seed)
    targets = [TargetSet.ball(np.zeros(d), 2.0 ** -k) for k in range(1, 6)]
    res = hit_probability_mc(cfg, targets, n_replicas, J=(0.0, 2.0), allow_unresolved=True, with_potential=True)
    ratios = []
    for r in res:
        lower = r.cap / r.p_hat_lo if r.p_hat_lo > 0 else math.inf
        upper = r.p_hat_hi / r.hausdorff_sum if r.hausdorff_sum > 0 else math.inf
        ratios.append(max(lower, upper if math.isfinite(r.hausdorff_sum) else 0.0))
    c = max(ratios)
    curve = small_ball_curve(m, d, np.zeros(d), 2.0 ** -np.arange(1, 7), n_small, seed=seed)
    ok = bool(math.isfinite(c) and abs(curve.slope - d) <= 0.5)
    p = ", ".join(f"{r.p_hat_lo:.3f}" for r in res)
    return CheckResult(10, "hitting sandwich", ok,
                       f"d-beta={d - beta:.0f}: Cap={res[0].cap:g}, cover sum={res[0].hausdorff_sum:g}, "
                       f"p_hat_lo=[{p}] -> c={c:.3f}; small-ball slope {curve.slope:.3f} (want {d})",
                       {"c": c, "p_hat_lo": [r.p_hat_lo for r in res], "small_ball_slope": curve.slope})


# ---------------------------------------------------------------- 11
def check_polarity(n_replicas=1000, seed=0):
    m = _white(0.5)
    beta = exponents(m).beta
    cfg1 = SimConfig(m, 64, np.linspace(0.5, 1.0, 17), 129, d=1, seed=seed)
    r1 = hit_probability_mc(cfg1, TargetSet.ball([0.0], 1e-3), n_replicas, J=(0.0, 1.0), allow_unresolved=True)
    lo1 = r1.ci[0]
    radii = [2.0, 1.5, 1.0, 0.5, 0.25]
    cfg8 = SimConfig(m, 64, np.linspace(0.5, 1.0, 17), 129, d=8, seed=seed)
    r8 = hit_probability_mc(cfg8, [TargetSet.ball(np.zeros(8), r) for r in radii], n_replicas,
                            allow_unresolved=True)
    p8 = [r.p_hat_lo for r in r8]
    finest_hi = wilson_interval(r8[-1].hits_lo, n_replicas)[1]
    # no plateau: monotone decay, and the finest radius is below what the
    # eps^(d - beta) trend from the coarsest radius would allow
    trend = p8[0] * (radii[-1] / radii[0]) ** (8 - beta)
    ok = bool(lo1 > 0 and all(np.diff(p8) <= 0) and finest_hi < max(trend, 0.01))
    return CheckResult(11, "polarity contrast", ok,
                       f"d=1: p_hat {r1.p_hat_lo:.3f} CI [{lo1:.3f}, {r1.ci[1]:.3f}]; "
                       f"d=8: p_hat {['%.3f' % p for p in p8]} over radii {radii}, finest CI upper {finest_hi:.4f}",
                       {"d1": r1.p_hat_lo, "d8": p8})


# ---------------------------------------------------------------- 12
def check_riesz(n_max=10_000):
    n = np.arange(1, n_max + 1)
    bands, ok = {}, True
    for g in (0.25, 0.5, 0.75):
        c = SpectrumModel.parse(f"riesz:{g}", 0.5).q(n) * n ** (1.0 - g)
        # band fixed on n <= 100, then checked out to n_max
        lo, hi = c[:100].min(), c[:100].max()
        inside = bool(np.all(c > 0) and c.min() >= 0.5 * lo and c.max() <= 2.0 * hi)
        bands[g] = (float(c.min()), float(c.max()))
        ok &= inside
    return CheckResult(12, "Riesz coefficients", ok,
                       ", ".join(f"gamma={g}: c(n) in [{a:.4f}, {b:.4f}]" for g, (a, b) in bands.items()),
                       {"bands": bands})


# ---------------------------------------------------------------- 13
def check_simulator(n_var=5000, n_ks=2000, seed=0):
    m = _white(0.5)
    cfg = SimConfig(m, 128, [1.0], 257, seed=seed)
    u = np.array([s.values[0, 0, 0] for s in simulate(cfg, n_var)])
    var = float(u.var(ddof=1))
    se = var * math.sqrt(2.0 / (n_var - 1))
    exact = sigma_sq(m, 1.0)
    var_ok = abs(var - exact) <= 3 * se
    m7 = _white(0.7)
    grid = np.array([0.5, 1.0])
    ex = SimConfig(m7, 16, grid, 33, seed=seed)
    pw = SimConfig(m7, 16, grid, 33, seed=seed + 1, mode_sampler="pathwise")
    A = np.stack([s.values[0] for s in simulate(ex, n_ks)])
    B = np.stack([s.values[0] for s in simulate(pw, n_ks)])
    probes = [(0, 0), (0, 8), (1, 3), (1, 16), (1, 30)]
    pvals = [stats.ks_2samp(A[:, i, j], B[:, i, j]).pvalue for i, j in probes]
    ks_ok = min(pvals) > 0.05 / len(probes)
    a1 = simulate(ex, 3)
    a2 = simulate(ex, 3)
    same = all(np.array_equal(x.values, y.values) for x, y in zip(a1, a2))
    ok = bool(var_ok and ks_ok and same)
    return CheckResult(13, "simulator self-consistency", ok,
                       f"Var {var:.4f} vs {exact:.4f} (3SE {3 * se:.4f}); KS p-values "
                       f"{['%.3f' % p for p in pvals]}; reproducible {same}",
                       {"var": var, "exact": exact, "pvalues": pvals, "identical": same})


CHECKS = {1: check_mode_variance, 2: check_mode_scaling, 3: check_space_regularity,
          4: check_time_regularity, 5: check_joint_sandwich, 6: check_bivariate_bound,
          7: check_capacity, 8: check_hausdorff, 9: check_prel, 10: check_hitting_sandwich,
          11: check_polarity, 12: check_riesz, 13: check_simulator}


def run_check(number, **kw):
    t = time.perf_counter()
    try:
        res = CHECKS[number](**kw)
    except Exception as exc:       # a crash is a failed check, reported not raised
        res = CheckResult(number, CHECKS[number].__name__, False, f"error: {exc!r}")
    res.seconds = time.perf_counter() - t
    return res


def run_all(selected=None, log=print):
    out = []
    for k in selected or sorted(CHECKS):
        res = run_check(k)
        if log:
            log(res.line())
        out.append(res)
    return out
