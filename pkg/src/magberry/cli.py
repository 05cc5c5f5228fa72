"""Command-line interface: ``magberry run|sweep|check|print-config``.

Exit codes: 0 success, 2 invalid configuration (including containment
violations), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from magberry import __version__, adiabatic, berry, hannay, invariants, svg
from magberry.eigen import (
    ConvergenceError,
    DegenerateLevelError,
    SolverConfig,
    dense_reference,
    gap_check,
    lowest_eigenpairs,
)
from magberry.hamiltonian import (
    DEFAULT_CONTAINMENT_FACTOR,
    POTENTIAL_KINDS,
    ContainmentError,
    FluxDensity,
    GridSpec,
    Tabulated,
    build_hamiltonian,
    check_containment,
    minimal_grid,
)
from magberry.mtrans import TransportError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
NUMERICAL_ERRORS = (ConvergenceError, DegenerateLevelError, berry.DiscretizationError,
                    TransportError, adiabatic.InnerSolveError, ArithmeticError,
                    np.linalg.LinAlgError)
CSV_DIGITS = 12

log = logging.getLogger("magberry")


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "grid": {"h": 0.25},
    "flux": {"xi": 0.05},
    "potential": {"kind": "gaussian", "depth": 2.0, "sigma": 0.8, "center": [0.0, 0.0]},
    "loop": {"kind": "square", "side": 2.0, "center": [0.0, 0.0], "samples": 32,
             "orientation": 1, "turns": 1},
    "solver": {"k": 2, "tol": 1e-8, "max_iterations": 20000, "basis_size": 64,
               "dense_check": False},
    "berry": {"methods": ["translated"], "level": 0, "gap_threshold": None},
    "curvature": {"corner": [-1.0, -1.0], "counts": [5, 5], "delta": None,
                  "method": "translated"},
    "schedule": {"Ts": [50.0, 100.0, 200.0], "checkpoints": 8},
    "hannay": {"omega0": 1.0, "adiabaticity": [1e4], "n_side": 8, "amplitudes": [1.0, 1.0],
               "step_fraction": 0.05},
    "containment_factor": DEFAULT_CONTAINMENT_FACTOR,
    "seed": SolverConfig().seed,
}


def load_schema():
    return json.loads(resources.files("magberry").joinpath("schema.json").read_text())


def deep_merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_document(path):
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        try:
            import yaml
        except ImportError as exc:
            raise ConfigError("YAML configs need the optional 'pyyaml' package") from exc
        return yaml.safe_load(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def validate(cfg):
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc


def resolve(cfg):
    """Schema-check ``cfg`` and fill in defaults."""
    validate(cfg)
    full = deep_merge(DEFAULTS, cfg)
    if "potential" in cfg:  # a new kind replaces, not merges, the default well
        full["potential"] = copy.deepcopy(cfg["potential"])
    if "loop" in cfg:
        full["loop"] = deep_merge({k: DEFAULTS["loop"][k] for k in ("samples", "orientation", "turns")},
                                  cfg["loop"])
    return full


def config_digest(cfg):
    core = {k: v for k, v in cfg.items() if k not in ("workers", "output")}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# -- building domain objects --------------------------------------------------


def build_flux(cfg):
    return FluxDensity(float(cfg["flux"]["xi"]))


def build_potential(cfg, base_dir="."):
    p = cfg["potential"]
    kind = p["kind"]
    if kind == "none":
        return None
    if kind == "tabulated":
        if "path" not in p:
            raise ConfigError("tabulated potential needs 'path'")
        return Tabulated.from_csv(Path(base_dir) / p["path"])
    required = {"gaussian": ("depth", "sigma"), "circular": ("depth", "radius"),
                "harmonic": ("omega0",)}[kind]
    missing = [k for k in required if k not in p]
    if missing:
        raise ConfigError(f"{kind} potential needs {', '.join(missing)}")
    args = {k: p[k] for k in required}
    return POTENTIAL_KINDS[kind](**args, center=tuple(p.get("center", (0.0, 0.0))))


def build_loop(cfg):
    lp = cfg["loop"]
    common = {"samples": lp["samples"], "orientation": lp["orientation"], "turns": lp["turns"]}
    kind = lp["kind"]
    try:
        if kind == "square":
            return berry.Rectangle.square(lp["side"], tuple(lp.get("center", (0.0, 0.0))), **common)
        if kind == "rectangle":
            return berry.Rectangle(corner=tuple(lp["corner"]), widths=tuple(lp["widths"]), **common)
        if kind == "circle":
            return berry.Circle(center=tuple(lp.get("center", (0.0, 0.0))), radius=lp["radius"],
                                **common)
        return berry.Polygon(vertices=tuple(map(tuple, lp["vertices"])), **common)
    except KeyError as exc:
        raise ConfigError(f"{kind} loop needs '{exc.args[0]}'") from exc


def build_solver(cfg):
    s = cfg["solver"]
    return SolverConfig(k=s["k"], tol=s["tol"], max_iterations=s["max_iterations"],
                        seed=cfg["seed"], basis_size=s["basis_size"])


def positions_for(cfg):
    kind = cfg["experiment"]
    if kind in ("berry", "adiabatic"):
        return build_loop(cfg).points()
    if kind == "curvature":
        c = cfg["curvature"]
        h = cfg["grid"]["h"]
        d = c["delta"] if c["delta"] is not None else 2 * h
        n1, n2 = c["counts"]
        return np.array([(c["corner"][0] + i * d, c["corner"][1] + j * d)
                         for i in range(n1 + 1) for j in range(n2 + 1)])
    return np.zeros((1, 2))


def build_grid(cfg, flux, potential):
    g = cfg["grid"]
    factor = cfg["containment_factor"]
    pos = positions_for(cfg)
    if "nx" in g or "ny" in g:
        grid = GridSpec(g.get("nx", g.get("ny")), g.get("ny", g.get("nx")), g["h"])
    else:
        grid = minimal_grid(g["h"], flux, potential, pos, factor)
    check_containment(grid, flux, potential, pos, factor)
    return grid


# -- payload ------------------------------------------------------------------


@dataclass
class Payload:
    summary: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    plots: dict = field(default_factory=dict)  # name -> svg text
    data: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def _psi0(cfg, grid, flux, potential, solver, level=0, gap_threshold=None):
    k = max(solver.k, level + 2)
    pairs = lowest_eigenpairs(build_hamiltonian(grid, flux, potential),
                              SolverConfig(k=k, tol=solver.tol, max_iterations=solver.max_iterations,
                                           seed=solver.seed, basis_size=solver.basis_size))
    gap_check(pairs, gap_threshold, level)
    return pairs


def run_spectrum(cfg, ctx):
    grid, flux, V, solver = ctx["grid"], ctx["flux"], ctx["potential"], ctx["solver"]
    H = build_hamiltonian(grid, flux, V)
    pairs = lowest_eigenpairs(H, solver)
    pl = Payload()
    rows = [(p.index, p.energy, p.residual) for p in pairs]
    pl.tables["result"] = (["index", "energy", "residual"], rows)
    pl.summary = {"E0": pairs[0].energy, "max_residual": max(p.residual for p in pairs),
                  "landau_E0": flux.landau_level(0) if not flux.is_zero else 0.0}
    if len(pairs) > 1:
        pl.summary["gap"] = pairs[1].energy - pairs[0].energy
    if cfg["solver"]["dense_check"]:
        dense = dense_reference(H)
        pl.summary["dense_max_deviation"] = max(abs(p.energy - q.energy)
                                                for p, q in zip(pairs, dense))
    pl.plots["spectrum"] = svg.line_plot([("E_n", [r[0] for r in rows], [r[1] for r in rows])],
                                         "lowest eigenvalues", "n", "E")
    return pl


def run_berry(cfg, ctx):
    grid, flux, V, solver, loop = (ctx["grid"], ctx["flux"], ctx["potential"], ctx["solver"],
                                   ctx["loop"])
    b = cfg["berry"]
    level = b["level"]
    analytic = berry.analytic_phase(flux, loop)
    pl = Payload()
    pl.summary = {"xi": flux.xi, "area": berry.oriented_area(loop), "analytic": analytic,
                  "flux_quanta": flux.xi * berry.oriented_area(loop), "level": level}
    series = []
    results = {}
    for method in b["methods"]:
        if method == "translated":
            psi0 = _psi0(cfg, grid, flux, V, solver, level, b["gap_threshold"])[level]
            res = berry.berry_phase_translated(psi0, loop, flux, grid, potential=V)
        else:
            res = berry.berry_phase_resolved(loop, flux, grid, V, solver, level=level,
                                             workers=ctx["workers"],
                                             gap_threshold=b["gap_threshold"])
        results[method] = res
        pl.summary[f"gamma_{method}"] = res.gamma_accumulated
        pl.summary[f"gamma_mod_{method}"] = res.gamma_mod
        pl.summary[f"error_{method}"] = res.gamma_accumulated - analytic
        pl.summary[f"refinements_{method}"] = res.refinements
        name = "result" if not pl.tables else f"result_{method}"
        pl.tables[name] = (["k", "a1", "a2", "step_phase", "cumulative_phase"], res.rows())
        pl.data[method] = res.to_dict()
        idx = list(range(1, len(res.per_step_phases) + 1))
        series.append((method, idx, list(res.cumulative_phases)))
    if len(results) == 2:
        pl.summary["method_difference"] = (results["translated"].gamma_accumulated
                                           - results["resolved"].gamma_accumulated)
    n = len(series[0][1])
    series.append(("2 pi xi S", [1, n], [analytic, analytic]))
    pl.plots["phase"] = svg.line_plot(series, "accumulated Berry phase", "sample", "phase (rad)")
    return pl


def run_curvature(cfg, ctx):
    grid, flux, V, solver = ctx["grid"], ctx["flux"], ctx["potential"], ctx["solver"]
    c = cfg["curvature"]
    kw = {"corner": tuple(c["corner"]), "counts": tuple(c["counts"]), "delta": c["delta"]}
    if c["method"] == "translated":
        psi0 = _psi0(cfg, grid, flux, V, solver)[0]
        cmap = berry.curvature_map(flux, grid, psi0=psi0, **kw)
    else:
        cmap = berry.curvature_map(flux, grid, potential=V, cfg=solver, workers=ctx["workers"],
                                   **kw)
    pl = Payload()
    pl.tables["result"] = (["i", "j", "a1", "a2", "F"], cmap.rows())
    target = 2 * math.pi * flux.xi
    pl.summary = {"target": target, "max_deviation": float(np.max(np.abs(cmap.values - target))),
                  "mean": float(cmap.values.mean()), "delta": cmap.delta, "method": cmap.method}
    pl.plots["curvature"] = svg.heat_strip(cmap.values.tolist(), "Berry curvature per plaquette",
                                           "F")
    return pl


def run_adiabatic(cfg, ctx):
    grid, flux, V, solver, loop = (ctx["grid"], ctx["flux"], ctx["potential"], ctx["solver"],
                                   ctx["loop"])
    s = cfg["schedule"]
    rows = adiabatic.convergence_study(s["Ts"], grid, flux, V, loop, cfg=solver,
                                       workers=ctx["workers"], checkpoints=s["checkpoints"])
    pl = Payload()
    pl.tables["result"] = (["T", "gamma_ad", "error", "min_population"],
                           [(r.T, r.gamma_ad, r.error, r.min_population) for r in rows])
    errs = [r.error for r in rows]
    pl.summary = {"final_error": errs[-1], "non_increasing": adiabatic.non_increasing(errs),
                  "max_norm_drift": max(r.norm_drift for r in rows),
                  "min_population": min(r.min_population for r in rows)}
    pl.data["rows"] = [asdict(r) for r in rows]
    for r in rows:
        pl.warnings.extend(r.warnings)
    pl.plots["convergence"] = svg.line_plot([("|gamma_ad - gamma_wilson|", [r.T for r in rows], errs)],
                                            "adiabatic convergence", "T", "error (rad)", logy=True)
    return pl


def run_hannay(cfg, ctx):
    hc = cfg["hannay"]
    flux, loop = ctx["flux"], ctx["loop"]
    system = hannay.ClassicalSystem(flux, hc["omega0"])
    wp, wm = hannay.flow_frequencies(system)
    ens = hannay.Ensemble.on_torus(system, hc["n_side"], tuple(hc["amplitudes"]))
    rows = []
    for alpha in hc["adiabaticity"]:
        T = alpha / min(wp, wm)
        r = hannay.hannay_angle(system, loop, T, ens, step_fraction=hc["step_fraction"])
        rows.append((T, float(r.delta_theta[0]), float(r.delta_theta[1])))
    pl = Payload()
    pl.tables["result"] = (["T", "delta_theta_plus", "delta_theta_minus"], rows)
    pl.summary = {"omega_plus": wp, "omega_minus": wm,
                  "max_abs_delta_theta": max(max(abs(r[1]), abs(r[2])) for r in rows),
                  "ensemble_size": ens.size}
    if len(rows) > 1:
        pl.plots["hannay"] = svg.line_plot(
            [("|dtheta+|", [r[0] for r in rows], [abs(r[1]) for r in rows]),
             ("|dtheta-|", [r[0] for r in rows], [abs(r[2]) for r in rows])],
            "Hannay angle vs traversal time", "T", "angle (rad)", logy=True)
    return pl


def run_check(cfg, ctx):
    checks = invariants.run_suite(seed=cfg["seed"])
    pl = Payload()
    pl.tables["result"] = (["name", "value", "bound", "passed"],
                           [(c.name, c.value, c.bound, c.passed) for c in checks])
    pl.summary = invariants.summarize(checks)
    if pl.summary["failed"]:
        pl.warnings.append(f"{pl.summary['failed']} invariant check(s) failed")
    return pl


RUNNERS = {"spectrum": run_spectrum, "berry": run_berry, "curvature": run_curvature,
           "adiabatic": run_adiabatic, "hannay": run_hannay, "check": run_check}


# -- records and files --------------------------------------------------------


@dataclass
class RunRecord:
    digest: str
    version: str
    wall_time: float
    status: str
    exit_code: int
    payload: dict
    warnings: list
    error: dict | None = None


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{CSV_DIGITS}g}"
    return str(v)


def table_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _error_info(exc, code):
    info = {"type": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("margin", "required", "sample", "gap", "threshold", "best_residual", "step"):
        val = getattr(exc, attr, None)
        if val is not None:
            info[attr] = val
    return _clean(info)


def classify(exc):
    if isinstance(exc, (ConfigError, ContainmentError, jsonschema.ValidationError)):
        return EXIT_CONFIG
    if isinstance(exc, NUMERICAL_ERRORS):
        return EXIT_NUMERICAL
    if isinstance(exc, (ValueError, KeyError, TypeError, FileNotFoundError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def execute(raw_cfg, out_dir=None, workers=1, base_dir="."):
    """Validate, run and (optionally) write outputs. Never raises for run errors."""
    start = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else None
    handler = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").unlink(missing_ok=True)  # stale from an earlier failure
        handler = logging.FileHandler(out / "run.log", mode="w")
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        log.addHandler(handler)
        log.setLevel(logging.INFO)
    digest = ""
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                cfg = resolve(raw_cfg)
                digest = config_digest(cfg)
                log.info("experiment %s digest %s", cfg["experiment"], digest)
                ctx = {"workers": workers}
                if cfg["experiment"] not in ("check", "hannay"):
                    ctx["flux"] = build_flux(cfg)
                    ctx["potential"] = build_potential(cfg, base_dir)
                    ctx["solver"] = build_solver(cfg)
                    if cfg["experiment"] in ("berry", "adiabatic"):
                        ctx["loop"] = build_loop(cfg)
                    ctx["grid"] = build_grid(cfg, ctx["flux"], ctx["potential"])
                    log.info("grid %s", ctx["grid"])
                elif cfg["experiment"] == "hannay":
                    ctx["flux"] = build_flux(cfg)
                    ctx["loop"] = build_loop(cfg)
                payload = RUNNERS[cfg["experiment"]](cfg, ctx)
            except Exception as exc:  # mapped to exit codes below
                code = classify(exc)
                log.error("%s: %s", type(exc).__name__, exc)
                rec = RunRecord(digest, __version__, time.perf_counter() - start, "error", code,
                                {}, [str(w.message) for w in caught], _error_info(exc, code))
                if out is not None:
                    (out / "error.json").write_text(json.dumps(rec.error, indent=2) + "\n")
                    (out / "result.json").write_text(json.dumps(_clean(asdict(rec)), indent=2) + "\n")
                return rec
            warn = [str(w.message) for w in caught] + payload.warnings
        if "grid" in ctx:
            payload.summary.setdefault("grid", [ctx["grid"].nx, ctx["grid"].ny, ctx["grid"].h])
        body = {"config": cfg, "summary": payload.summary, "data": payload.data,
                "tables": {k: {"header": h, "rows": r} for k, (h, r) in payload.tables.items()}}
        failed = cfg["experiment"] == "check" and payload.summary.get("failed", 0) > 0
        code = EXIT_NUMERICAL if failed else EXIT_OK
        rec = RunRecord(digest, __version__, time.perf_counter() - start,
                        "failed" if failed else "ok", code, _clean(body), sorted(set(warn), key=warn.index))
        for w in rec.warnings:
            log.warning(w)
        if out is not None:
            (out / "result.json").write_text(json.dumps(_clean(asdict(rec)), indent=2) + "\n")
            for name, (header, rows) in payload.tables.items():
                (out / f"{name}.csv").write_text(table_csv(header, rows))
            for name, text in payload.plots.items():
                (out / f"{name}.svg").write_text(text)
        log.info("done in %.2f s, exit %d", rec.wall_time, rec.exit_code)
        return rec
    finally:
        if handler is not None:
            log.removeHandler(handler)
            handler.close()


def _sweep_task(args):
    cfg, out, base_dir = args
    return execute(cfg, out, 1, base_dir)


def sweep(base, overrides, out_dir=None, workers=1, base_dir="."):
    """Run ``base`` merged with each override; records come back in input order."""
    tasks = []
    for i, ov in enumerate(overrides):
        sub = None if out_dir is None else str(Path(out_dir) / f"entry_{i:03d}")
        tasks.append((deep_merge(base, ov), sub, base_dir))
    if not tasks:
        return []
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_task, tasks))
    return [_sweep_task(t) for t in tasks]


def sweep_table(records):
    keys = []
    for r in records:
        for k, v in r.payload.get("summary", {}).items():
            if k not in keys and isinstance(v, (int, float, bool, str)):
                keys.append(k)
    header = ["entry", "status", "exit_code"] + keys
    rows = []
    for i, r in enumerate(records):
        s = r.payload.get("summary", {})
        rows.append([i, r.status, r.exit_code] + [s.get(k, "") for k in keys])
    return header, rows


# -- argument parsing ---------------------------------------------------------


def _workers(flag, cfg):
    if flag is not None:
        return flag
    if cfg.get("workers"):
        return cfg["workers"]
    env = os.environ.get("MAGBERRY_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MAGBERRY_WORKERS must be an integer, got {env!r}") from None
    return 1


def _report(rec, out):
    summary = rec.payload.get("summary", {})
    line = {"status": rec.status, "exit_code": rec.exit_code, "output": str(out)}
    if rec.error:
        line["error"] = rec.error
    else:
        line["summary"] = summary
    print(json.dumps(_clean(line), indent=2))


def main(argv=None):
    ap = argparse.ArgumentParser(prog="magberry", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out")
    p_run.add_argument("--workers", type=int)
    p_run.add_argument("--seed", type=int)
    p_sw = sub.add_parser("sweep", help="run base config with a list of overrides")
    p_sw.add_argument("--config", required=True)
    p_sw.add_argument("--out")
    p_sw.add_argument("--workers", type=int)
    p_ck = sub.add_parser("check", help="run the invariant suite")
    p_ck.add_argument("--out")
    p_ck.add_argument("--seed", type=int)
    p_pc = sub.add_parser("print-config", help="print a config with every default filled in")
    p_pc.add_argument("--experiment", default="berry", choices=sorted(RUNNERS))
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["--print-config"]:
        argv[0] = "print-config"
    args = ap.parse_args(argv)

    if args.command == "print-config":
        cfg = deep_merge(DEFAULTS, {"experiment": args.experiment})
        cfg["grid"] = {"h": DEFAULTS["grid"]["h"]}
        print(json.dumps(cfg, indent=2))
        return EXIT_OK

    if args.command == "check":
        cfg = {"experiment": "check"}
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = args.out or "magberry-check"
        rec = execute(cfg, out)
        for row in rec.payload.get("tables", {}).get("result", {}).get("rows", []):
            print(f"{'PASS' if row[3] else 'FAIL'}  {row[0]}: {row[1]:.3g} (bound {row[2]:.3g})")
        _report(rec, out)
        return rec.exit_code

    base_dir = str(Path(args.config).resolve().parent)
    try:
        doc = load_document(args.config)
    except (ConfigError, OSError) as exc:
        print(json.dumps({"status": "error", "exit_code": EXIT_CONFIG, "error": str(exc)}))
        return EXIT_CONFIG

    if args.command == "run":
        if not isinstance(doc, dict):
            print(json.dumps({"status": "error", "exit_code": EXIT_CONFIG,
                              "error": "config must be a mapping"}))
            return EXIT_CONFIG
        if args.seed is not None:
            doc["seed"] = args.seed
        out = args.out or doc.get("output") or "magberry-out"
        try:
            workers = _workers(args.workers, doc)
        except ConfigError as exc:
            print(json.dumps({"status": "error", "exit_code": EXIT_CONFIG, "error": str(exc)}))
            return EXIT_CONFIG
        rec = execute(doc, out, workers, base_dir)
        _report(rec, out)
        return rec.exit_code

    # sweep
    if isinstance(doc, list):
        doc = {"base": {}, "overrides": doc}
    if not isinstance(doc, dict) or "overrides" not in doc:
        print(json.dumps({"status": "error", "exit_code": EXIT_CONFIG,
                          "error": "sweep file needs 'base' and 'overrides'"}))
        return EXIT_CONFIG
    out = args.out or doc.get("output") or "magberry-sweep"
    try:
        workers = _workers(args.workers, doc.get("base", {}))
    except ConfigError as exc:
        print(json.dumps({"status": "error", "exit_code": EXIT_CONFIG, "error": str(exc)}))
        return EXIT_CONFIG
    records = sweep(doc.get("base", {}), doc["overrides"], out, workers, base_dir)
    Path(out).mkdir(parents=True, exist_ok=True)
    header, rows = sweep_table(records)
    (Path(out) / "sweep.csv").write_text(table_csv(header, rows))
    (Path(out) / "sweep.json").write_text(
        json.dumps(_clean([asdict(r) for r in records]), indent=2) + "\n")
    ok = sum(r.exit_code == EXIT_OK for r in records)
    print(json.dumps({"entries": len(records), "succeeded": ok, "failed": len(records) - ok,
                      "output": out}))
    return EXIT_OK if ok == len(records) else EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
