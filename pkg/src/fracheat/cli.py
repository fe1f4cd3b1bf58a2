"""``fracheat <subcommand> --config FILE [--seed S] [--threads N] [--out DIR]``.

Exit codes: 0 all requested checks pass, 2 model-domain or config errors,
1 numerical or tolerance failures.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from ._numerics import QuadratureError
from .config import ConfigError, RunConfig, get_list, merge_flags
from .spectrum import ModelDomainError, existence_margin, exponents

SUBCOMMANDS = ("spectrum", "simulate", "metric", "holder", "capacity", "hausdorff", "hit", "verify-all")
EXIT_OK, EXIT_NUMERIC, EXIT_DOMAIN = 0, 1, 2


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, cfg, subcommand, files, verdicts, started, exit_code):
    """Atomic JSON manifest listing every output with its checksum."""
    out = Path(out)
    body = {
        "subcommand": subcommand, "config_hash": cfg.config_hash(), "config": cfg.to_string(),
        "seed": cfg.seed, "version": __version__, "started": started, "finished": _now(),
        "files": [{"file": str(Path(f).relative_to(out)), "sha256": _sha256(f)} for f in files],
        "verdicts": verdicts, "exit_code": exit_code,
    }
    fd, tmp = tempfile.mkstemp(dir=out, prefix=".manifest", suffix=".json")
    with os.fdopen(fd, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
    os.replace(tmp, out / "manifest.json")
    return out / "manifest.json"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _threshold(model):
    # sum q_n n^-4H converges iff H > (1 + growth) / 4
    return str(Fraction((1.0 + model.growth) / 4.0).limit_denominator(64))


def _require_existence(model):
    if not existence_margin(model, cap=2)["convergent"]:
        raise ModelDomainError(f"nonexistent: H ≤ {_threshold(model)}")


# ------------------------------------------------------------ subcommands
def cmd_spectrum(cfg, out):
    m = cfg.model()
    _require_existence(m)
    ex = exponents(m)
    n = np.arange(1, int(cfg.section("spectrum").get("n_max", 64)) + 1)
    f = _write_csv(out / "spectrum.csv", ["n", "q_n"], zip(n.tolist(), m.q(n)))
    info = {"model": m.spec_string(), "H": m.H, "q_0": m.q_zero, "alpha": ex.alpha, "beta": ex.beta}
    j = out / "spectrum.json"
    j.write_text(json.dumps(info, indent=2, sort_keys=True))
    print(f"{m.spec_string()} H={m.H}: alpha={ex.alpha:.6g} beta={ex.beta:.6g}")
    return [f, j], {}


def cmd_simulate(cfg, out):
    from .simulate import simulate, write_replicas
    sec = cfg.section("simulate")
    _require_existence(cfg.model())
    n = int(sec.get("n_replicas", 1))
    sim, chunk = cfg.sim_config(), 4 * cfg.threads

    def replicas():
        # bounded memory; replica r always uses substream r, so threads do not change output
        for s in range(0, n, chunk):
            yield from simulate(sim, min(chunk, n - s), threads=cfg.threads, start=s)

    mp = write_replicas(replicas(), out / "replicas", fmt=sec.get("format", "csv"))
    files = [mp] + [mp.parent / e["file"] for e in json.loads(mp.read_text())["files"]]
    print(f"wrote {n} replicas to {mp.parent}")
    return files, {}


def _lag_grid(sec, lo, hi, n):
    grid = get_list(sec, "grid")
    if grid is None:
        grid = np.geomspace(float(sec.get("lag_lo", lo)), float(sec.get("lag_hi", hi)), int(sec.get("n_lags", n)))
    return np.asarray(grid, float)


def cmd_metric(cfg, out):
    from .covariance import metric_report
    sec = cfg.section("metric")
    m = cfg.model()
    _require_existence(m)
    kind = sec.get("kind", "delta_t")
    rep = metric_report(m, kind, _lag_grid(sec, 1e-3, 1e-1, 12), t=float(sec.get("t", cfg.T)))
    f = out / f"metric_{kind}.csv"
    rep.to_csv(f)
    j = out / f"metric_{kind}.json"
    rep.to_json(j)
    print(json.dumps(rep.fits, sort_keys=True))
    return [f, j], {}


def cmd_holder(cfg, out):
    from .regularity import fit_holder_exact
    sec = cfg.section("holder")
    m = cfg.model()
    _require_existence(m)
    axis = sec.get("axis", "space")
    fit = fit_holder_exact(m, axis, (float(sec.get("lag_lo", 1e-3)), float(sec.get("lag_hi", 1e-1))),
                           fixed=float(sec.get("fixed", cfg.T)), n_lags=int(sec.get("n_lags", 12)),
                           tol=float(sec.get("tol", 0.05)))
    f = out / f"holder_{axis}.csv"
    fit.to_csv(f)
    print(f"{axis}: slope {fit.slope:.4f} expected {fit.expected:.4f} verdict {fit.verdict}")
    return [f], {f"holder_{axis}": bool(fit.verdict)}


def _geometry(sec):
    from .hitting import TargetSet
    from .potential import Box, PointCloud
    if "points" in sec:
        return PointCloud.from_csv(sec["points"], h=float(sec.get("h", 0.0)))
    if "box" in sec:
        lo, hi = sec["box"].split(":")
        box = Box(np.array(lo.split(","), float), np.array(hi.split(","), float))
        return box
    if "target" in sec:
        return TargetSet.parse(sec["target"]).to_cloud(float(sec["h"]) if "h" in sec else None)
    raise ConfigError("geometry needs one of points=, box= or target=")


def _box_cloud(box, h):
    from .potential import PointCloud
    from .hitting import _grid_in
    return PointCloud(_grid_in(np.asarray(box.lo, float), np.asarray(box.hi, float), h), h=h)


def cmd_capacity(cfg, out):
    from .potential import Box, EnergyKernelSpec, capacity, default_N0
    sec = cfg.section("capacity")
    geo = _geometry(sec)
    if isinstance(geo, Box):
        geo = _box_cloud(geo, float(sec.get("h", 0.01)))
    N0 = float(sec["N0"]) if "N0" in sec else default_N0(geo.diameter, 1.0)
    res = capacity(geo, EnergyKernelSpec(float(sec.get("beta", 0.0)), N0), tol=float(sec.get("tol", 1e-8)))
    j = out / "capacity.json"
    j.write_text(res.to_json())
    print(f"cap={res.cap:.10g} energy={res.energy:.10g} solver={res.solver} N0={N0:.6g}")
    return [j], {}


def cmd_hausdorff(cfg, out):
    from .potential import hausdorff_estimate
    sec = cfg.section("hausdorff")
    geo = _geometry(sec)
    eps = get_list(sec, "eps") or list(2.0 ** -np.arange(1, 11))
    sums = hausdorff_estimate(geo, float(sec.get("beta", 1.0)), eps)
    f = _write_csv(out / "hausdorff.csv", ["eps", "cover_sum"], zip(eps, sums))
    print(f"cover sum at eps={eps[-1]:.3g}: {sums[-1]:.6g}")
    return [f], {}


def cmd_hit(cfg, out):
    from .hitting import TargetSet, hit_probability_mc, write_results
    sec = cfg.section("hit")
    _require_existence(cfg.model())
    keys = sorted(k for k in sec if k.startswith("target"))
    if not keys:
        raise ConfigError("[hit] needs at least one target = ball:<c>:<r> or box:<lo>:<hi>")
    targets = [TargetSet.parse(sec[k], name=k) for k in keys]
    J = get_list(sec, "J")
    res = hit_probability_mc(cfg.sim_config(), targets, int(sec.get("n_replicas", 100)),
                             J=tuple(J) if J else None,
                             allow_unresolved=sec.get("allow_unresolved", "false").lower() == "true",
                             with_potential=sec.get("with_potential", "false").lower() == "true")
    f = out / "hits.csv"
    write_results(res, f)
    for r in res:
        flag = "" if r.resolved else " (unresolved: grid slack exceeds target feature)"
        print(f"{r.target_id}: p_hat in [{r.p_hat_lo:.4f}, {r.p_hat_hi:.4f}] CI {r.ci[0]:.4f}..{r.ci[1]:.4f}{flag}")
    return [f], {}


def cmd_verify_all(cfg, out):
    from .verify import run_all
    sel = get_list(cfg.section("verify"), "checks", conv=int)
    results = run_all(sel)
    rows = [(r.number, r.name, "pass" if r.passed else "fail", round(r.seconds, 3), r.detail) for r in results]
    f = _write_csv(out / "verify.csv", ["criterion", "name", "verdict", "seconds", "detail"], rows)
    return [f], {f"criterion_{r.number:02d}": bool(r.passed) for r in results}


COMMANDS = {"spectrum": cmd_spectrum, "simulate": cmd_simulate, "metric": cmd_metric, "holder": cmd_holder,
            "capacity": cmd_capacity, "hausdorff": cmd_hausdorff, "hit": cmd_hit, "verify-all": cmd_verify_all}


def build_parser():
    p = argparse.ArgumentParser(prog="fracheat", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fracheat {__version__}")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="INI run configuration (env FRACHEAT_CONFIG)")
    p.add_argument("--seed", type=int, help="master seed (env FRACHEAT_SEED)")
    p.add_argument("--threads", type=int, help="worker cap (env FRACHEAT_THREADS)")
    p.add_argument("--out", help="output directory (env FRACHEAT_OUT)")
    p.add_argument("--mode", choices=("exact", "pathwise"), help="mode sampler (env FRACHEAT_MODE)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    started = _now()
    flags = merge_flags(vars(args))
    try:
        cfg = RunConfig.from_file(flags["config"]) if flags["config"] else RunConfig()
        cfg.with_overrides(**flags)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        files, verdicts = COMMANDS[args.subcommand](cfg, out)
        code = EXIT_OK if all(verdicts.values()) else EXIT_NUMERIC
    except (ModelDomainError, ConfigError) as exc:
        print(str(exc))
        return EXIT_DOMAIN
    except (QuadratureError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"{args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    write_manifest(out, cfg, args.subcommand, files, verdicts, started, code)
    if verdicts:
        for k, v in verdicts.items():
            print(f"{k}: {'pass' if v else 'FAIL'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
