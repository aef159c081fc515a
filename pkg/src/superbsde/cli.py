"""Command-line entry point: ``superbsde <subcommand> [config] [flags]``.

Exit codes: 0 success, 1 claim failure, 2 configuration or usage error.
Every run writes its CSV outputs plus ``manifest.json`` into ``--out-dir``.
Flags win over ``SUPERBSDE_*`` environment variables, which win over the
config file's ``[run]`` table.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bounds import RecursionState, check_assumption, recursion_fixed_point, verify_claims
from .config import (canonical_text, config_digest, load_config, plan_from_mapping,
                     problem_from_mapping, run_settings)
from .csvio import read_rows, write_rows
from .errors import (ConfigError, ContractError, DominanceError, IterationError, ManifestError,
                     SuperBsdeError)
from .forward import TimeGrid, simulate
from .mcsolver import RegressionBasis, solve_mc
from .pde import PdeConfig, solve_pde
from .problem import ASSUMPTIONS
from .supconv import SupConvConfig, sup_convolve
from .verify import Resolution, pilot_calibrate, precondition_failure, run_plan

ENV_PREFIX = "SUPERBSDE_"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class _Run:
    """Collects outputs, summary numbers and plot series for one subcommand run."""

    def __init__(self, command, out_dir, seed, threads, config=None, config_path=None, argv=()):
        self.command = command
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.threads = threads
        self.config = config
        self.config_path = config_path
        self.argv = list(argv)
        self.outputs = []
        self.summary = {}
        self.series = []
        self.resolutions = {}
        self.constants = {}
        self.passed = None
        self.t0 = time.perf_counter()

    def csv(self, name, header, rows):
        write_rows(self.out / name, header, rows)
        self.outputs.append(name)
        return name

    def note(self, key, value, artifact):
        self.summary[key] = {"value": value, "artifact": artifact}

    def finish(self):
        if self.series:
            self.csv("series.csv", ["series", "x", "y"], self.series)
        config_name = None
        if self.config is not None:
            config_name = "config.json"
            (self.out / config_name).write_text(canonical_text(self.config) + "\n", encoding="utf-8")
        manifest = {
            "command": self.command,
            "config_digest": config_digest(self.config) if self.config is not None else None,
            "config_file": config_name,
            "config_source": self.config_path,
            "master_seed": self.seed,
            "threads": self.threads,
            "argv": self.argv,
            "versions": {"superbsde": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
            "resolutions": self.resolutions,
            "calibrated_constants": self.constants,
            "outputs": self.outputs,
            "summary": self.summary,
            "passed": self.passed,
            "wall_clock_s": round(time.perf_counter() - self.t0, 6),
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                                encoding="utf-8")
        return EXIT_OK if self.passed in (None, True) else EXIT_FAIL


def load_manifest(run_dir) -> dict:
    """Read and validate a run manifest: digest recomputation and listed outputs."""
    path = Path(run_dir) / "manifest.json"
    try:
        m = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ManifestError(f"missing or corrupt manifest: {path}") from exc
    for key in ("command", "outputs", "summary", "passed"):
        if key not in m:
            raise ManifestError(f"manifest lacks {key!r}: {path}")
    if m.get("config_file"):
        try:
            cfg = json.loads((Path(run_dir) / m["config_file"]).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ManifestError(f"manifest config copy unreadable: {path}") from exc
        if config_digest(cfg) != m.get("config_digest"):
            raise ManifestError(f"config digest mismatch: {path}")
    for name in m["outputs"]:
        if not (Path(run_dir) / name).is_file():
            raise ManifestError(f"listed output {name} is missing: {path}")
    return m


def replay_argv(run_dir, out_dir) -> list:
    """Arguments that repeat a recorded run into ``out_dir``."""
    m = load_manifest(run_dir)
    argv = [m["command"]]
    if m.get("config_file"):
        argv.append(str(Path(run_dir) / m["config_file"]))
    argv += list(m.get("argv", []))
    if m.get("master_seed") is not None:
        argv += ["--seed", str(m["master_seed"])]
    return argv + ["--out-dir", str(out_dir)]


# -- settings ------------------------------------------------------------------


def _env(name):
    return os.environ.get(ENV_PREFIX + name)


def _resolve(args, run):
    seed = args.seed if args.seed is not None else _env("SEED")
    seed = int(seed) if seed is not None else int(run.get("seed", 0))
    threads = args.threads if args.threads is not None else _env("THREADS")
    threads = int(threads) if threads is not None else int(run.get("threads", 1))
    out = args.out_dir or _env("OUT_DIR") or os.path.join("runs", args.command)
    if threads < 1:
        raise ConfigError("threads must be at least 1", path="--threads")
    return seed, threads, out


def _config_path(args):
    path = getattr(args, "config_file", None) or args.config or _env("CONFIG")
    if path is None:
        raise ConfigError(f"{args.command} needs a config file")
    return path


def _problem_run(args, command):
    path = _config_path(args)
    data = load_config(path)
    if not isinstance(data.get("problem"), dict):
        raise ConfigError("missing section", path="problem")
    problem = problem_from_mapping(data["problem"])
    run = run_settings(data)
    seed, threads, out = _resolve(args, run)
    return problem, run, _Run(command, out, seed, threads, data, str(path)), data


# -- subcommands -----------------------------------------------------------------


def cmd_simulate(args):
    p, run, r, _ = _problem_run(args, "simulate")
    grid = TimeGrid(p.T, run.get("N", 50))
    ens = simulate(p.forward, grid, run.get("n_paths", 10000), r.seed, r.threads)
    r.resolutions = {"N": grid.N, "n_paths": ens.n_paths}
    X = ens.paths
    rows = [(grid.knots[i], X[:, i].mean(), X[:, i].std(ddof=1) if ens.n_paths > 1 else 0.0,
             X[:, i].min(), X[:, i].max()) for i in range(grid.N + 1)]
    name = r.csv("ensemble_stats.csv", ["t", "mean", "std", "min", "max"], rows)
    ens.save(r.out / "ensemble.bin")
    r.outputs.append("ensemble.bin")
    r.note("X_T_mean", float(X[:, -1].mean()), name)
    r.note("X_T_std", float(rows[-1][2]), name)
    r.series += [("mean_X", t, m) for t, m, *_ in rows]
    return r.finish()


def _pde_cfg(run):
    keys = ("N_x", "N_t", "k_sigma", "x_min", "x_max")
    return PdeConfig(**{k: run[k] for k in keys if k in run})


def cmd_solve_pde(args):
    p, run, r, _ = _problem_run(args, "solve-pde")
    fld = solve_pde(p, _pde_cfg(run))
    r.resolutions = {"N_x": fld.metadata["N_x"], "N_t": fld.metadata["N_t"]}
    fld.write_csv(r.out / "value_t0.csv", levels=[0])
    r.outputs.append("value_t0.csv")
    step = max(1, (len(fld.t) - 1) // 20)
    levels = sorted(set(range(0, len(fld.t), step)) | {len(fld.t) - 1})
    fld.write_csv(r.out / "value_field.csv", levels=levels)
    r.outputs.append("value_field.csv")
    u0 = float(fld.value_at(p.x0))
    name = r.csv("summary.csv", ["key", "value"],
                 [("x0", p.x0), ("u0", u0), ("ux0", float(fld.gradient_at(p.x0))),
                  ("N_x", fld.metadata["N_x"]), ("N_t", fld.metadata["N_t"]),
                  ("clip_events", fld.clip_events)])
    r.note("u0", u0, name)
    r.series += [("u_t0", x, u) for x, u in zip(fld.x, fld.u[0])]
    return r.finish()


def cmd_solve_mc(args):
    p, run, r, _ = _problem_run(args, "solve-mc")
    grid = TimeGrid(p.T, run.get("N", 50))
    ens = simulate(p.forward, grid, run.get("n_paths", 100000), r.seed, r.threads)
    basis = RegressionBasis(bins=run.get("bins", 40), min_paths_per_bin=run.get("min_paths_per_bin", 50))
    trunc = None
    if run.get("truncate", False):
        trunc = pilot_calibrate(p, "z_temporal", Resolution(N_x=run.get("N_x", 400)))
        r.constants["z_temporal_C"] = {"value": trunc.C, "calibration": trunc.calibration,
                                       "timestamp": trunc.timestamp}
    sol = solve_mc(p, ens, basis, trunc=trunc)
    r.resolutions = {"N": grid.N, "n_paths": ens.n_paths, "bins": basis.bins}
    rows = []
    for i in range(grid.N):
        c, y, z, clip, cnt = sol.bin_table(i)
        rows += [(grid.knots[i], c[b], y[b], z[b], clip[b]) for b in range(c.size)]
    r.csv("mc_bins.csv", ["t", "bin_center", "Y_hat", "Z_hat", "clip_fraction"], rows)
    name = r.csv("summary.csv", ["key", "value"],
                 [("y0", sol.y0), ("y0_se", sol.y0_se), ("N", grid.N), ("n_paths", ens.n_paths),
                  ("bins", basis.bins), ("max_clip_fraction", float(sol.clip_fraction.max()))])
    r.note("y0", sol.y0, name)
    r.note("y0_se", sol.y0_se, name)
    return r.finish()


def cmd_supconv(args):
    p, run, r, _ = _problem_run(args, "supconv")
    g = p.terminal
    cfg = SupConvConfig(n=run.get("n", 2.0), h_u=run.get("h_u", 1e-3), refine=run.get("refine", False))
    pts = run.get("points")
    x = np.asarray(pts, dtype=float) if pts is not None else np.linspace(p.x0 - 3, p.x0 + 3, 121)
    res = sup_convolve(g, cfg, x, p.growth)
    gx = g(x)
    rows = list(zip(x, gx, res.value, res.gap, res.local_slope))
    name = r.csv("supconv.csv", ["x", "g", "g_n", "gap", "local_slope"], rows)
    r.resolutions = {"n": cfg.n, "h_u": cfg.h_u, "points": int(x.size)}
    r.note("max_gap", float(res.gap.max()), name)
    r.series += [(f"g_n[n={cfg.n:g}]", a, b) for a, b in zip(x, res.value)]
    return r.finish()


def cmd_check_assumptions(args):
    p, run, r, _ = _problem_run(args, "check-assumptions")
    which = args.which or sorted(p.generator.claimed_assumptions)
    bad = set(which) - set(ASSUMPTIONS)
    if bad:
        raise ConfigError(f"unknown assumptions {sorted(bad)}", path="--which")
    n = args.samples
    reports = ({w: check_assumption(p, w, n_samples=n, seed=r.seed) for w in which}
               if args.which else verify_claims(p, n_samples=n, seed=r.seed))
    rows = []
    for w, rep in sorted(reports.items()):
        wit = rep.witness
        rows.append((w, int(rep.passed), rep.worst_margin, rep.excluded, rep.n_samples,
                     wit["t"], wit["x"], wit["y"], wit["z"], wit["lhs"]))
    name = r.csv("assumptions.csv", ["assumption", "passed", "worst_margin", "excluded", "n_samples",
                                     "witness_t", "witness_x", "witness_y", "witness_z", "witness_lhs"], rows)
    for w, rep in reports.items():
        r.note(f"{w}.passed", bool(rep.passed), name)
    r.passed = all(rep.passed for rep in reports.values())
    return r.finish()


def cmd_fixed_point(args):
    seed, threads, out = _resolve(args, {})
    r = _Run("fixed-point", out, None, threads,
             argv=["--C", repr(args.C), "--al", repr(args.al), "--p", repr(args.p), "--pbar", repr(args.pbar),
                   "--tol", repr(args.tol), "--A0", repr(args.A0), "--B0", repr(args.B0),
                   "--D0", repr(args.D0), "--max-iter", str(args.max_iter)])
    init = RecursionState.from_al(args.al, args.C, A=args.A0, B=args.B0, D=args.D0, p=args.p, p_bar=args.pbar)
    try:
        res = recursion_fixed_point(init, tol=args.tol, max_iter=args.max_iter)
        trace, passed = res.trace, True
    except IterationError as exc:
        trace, passed = [exc.best], False
        print(f"fixed-point: {exc}", file=sys.stderr)
    for k, a in enumerate(trace):
        print(f"{k:4d}  {a:.12f}")
    name = r.csv("trace.csv", ["iteration", "A"], list(enumerate(trace)))
    r.note("A_inf", float(trace[-1]), name)
    r.series += [("A", k, a) for k, a in enumerate(trace)]
    r.resolutions = {"tol": args.tol, "max_iter": args.max_iter}
    r.passed = passed
    return r.finish()


def cmd_verify(args):
    path = _config_path(args)
    data = load_config(path)
    plan = plan_from_mapping(data)
    seed, threads, out = _resolve(args, {"seed": plan.seed, "threads": plan.threads})
    plan = replace(plan, seed=seed, threads=threads)
    r = _Run("verify", out, seed, threads, data, str(path))
    try:
        report = run_plan(plan)
    except DominanceError as exc:
        print(f"verify: precondition failed: {exc}", file=sys.stderr)
        report = precondition_failure(plan, exc)
    report = report.write(r.out)
    r.outputs += [Path(a).name for a in report.artifacts]
    r.resolutions = {"resolutions": [asdict(x) for x in plan.resolutions]}
    if plan.bound is not None:
        r.constants["bound"] = {"kind": plan.bound.kind, "A": plan.bound.A, "C": plan.bound.C,
                                "calibration": plan.bound.calibration}
    for key, value in sorted(report.statistics.items()):
        r.note(key, value, "report.json")
    for key, value in sorted(report.statistics.items()):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            r.series.append((key, 0, value))
    r.passed = report.passed
    print(f"{plan.claim}: {'PASS' if report.passed else 'FAIL'}")
    return r.finish()


def cmd_report(args):
    out = Path(args.out_dir or _env("OUT_DIR") or "report")
    out.mkdir(parents=True, exist_ok=True)
    rows, series, lines = [], [], []
    status = EXIT_OK
    for d in args.run_dirs:
        m = load_manifest(d)
        run = Path(d).name
        verdict = {None: "ok", True: "pass", False: "fail"}[m["passed"]]
        if m["passed"] is False:
            status = EXIT_FAIL
        lines.append(f"{run:<32} {m['command']:<18} {verdict}")
        for key, entry in sorted(m["summary"].items()):
            rows.append((run, m["command"], verdict, key, entry["value"], entry["artifact"]))
            lines.append(f"    {key} = {entry['value']}  [{entry['artifact']}]")
        if "series.csv" in m["outputs"]:
            _, srows = read_rows(Path(d) / "series.csv")
            series += [(f"{run}/{s}", x, y) for s, x, y in srows]
    write_rows(out / "summary.csv", ["run", "command", "status", "key", "value", "artifact"], rows)
    write_rows(out / "series_long.csv", ["series", "x", "y"], series)
    (out / "summary.txt").write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    print("\n".join(lines))
    return status


# -- parser ------------------------------------------------------------------------


def _common(sp):
    sp.add_argument("--seed", type=int, default=None, help="master seed")
    sp.add_argument("--out-dir", default=None, help="output directory")
    sp.add_argument("--threads", type=int, default=None, help="worker threads")
    sp.add_argument("--config", default=None, help="config file (alternative to the positional)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="superbsde", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name, fn, helptext in (
        ("simulate", cmd_simulate, "simulate the forward SDE"),
        ("solve-pde", cmd_solve_pde, "finite-difference oracle"),
        ("solve-mc", cmd_solve_mc, "regression Monte Carlo solver"),
        ("supconv", cmd_supconv, "sup-convolution of the terminal condition"),
        ("check-assumptions", cmd_check_assumptions, "sampled assumption checks"),
        ("verify", cmd_verify, "run an experiment plan"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config_file", nargs="?", help="TOML (.cfg/.toml) or JSON config")
        _common(sp)
        sp.set_defaults(func=fn)
        if name == "check-assumptions":
            sp.add_argument("--which", nargs="+", default=None, help="assumptions to check")
            sp.add_argument("--samples", type=int, default=4000)
    sp = sub.add_parser("fixed-point", help="iterate the coefficient recursion")
    _common(sp)
    sp.add_argument("--C", type=float, required=True)
    sp.add_argument("--al", type=float, required=True)
    sp.add_argument("--p", type=float, default=1.0)
    sp.add_argument("--pbar", type=float, default=2.0)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--A0", type=float, default=0.0)
    sp.add_argument("--B0", type=float, default=1.0)
    sp.add_argument("--D0", type=float, default=1.0)
    sp.add_argument("--max-iter", type=int, default=200)
    sp.set_defaults(func=cmd_fixed_point)
    sp = sub.add_parser("report", help="aggregate run directories")
    sp.add_argument("run_dirs", nargs="*")
    sp.add_argument("--out-dir", default=None)
    sp.set_defaults(func=cmd_report)
    return ap


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ContractError) as exc:
        print(f"{args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ManifestError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SuperBsdeError as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
