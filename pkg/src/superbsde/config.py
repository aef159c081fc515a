"""Config ingestion: TOML or JSON files into ProblemSpec, ExperimentPlan and run settings.

Problem layout (TOML shown; JSON mirrors it)::

    [problem]
    label = "linear_kpz"
    [problem.forward]      # x0, T, drift, sigma, K_b, lambda_F2
    [problem.generator]    # family, params, claimed_assumptions, projection_M
    [problem.terminal]     # family, params, lsc_flag, projection_M
    [problem.growth]       # GrowthParams fields
    [run]                  # seed, n_paths, N, bins, N_x, N_t, threads, ...

A plan file holds ``[plan]`` (claim, seed, label, n_list, resolutions,
``[plan.tolerance]``, optional ``[plan.bound]``) and either one ``[problem]``
or a ``[[problems]]`` array.  Every error names the offending key path.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .bounds import BoundParams
from .errors import ConfigError, SuperBsdeError
from .problem import ForwardModel, GeneratorSpec, GrowthParams, ProblemSpec, TerminalSpec
from .verify import ExperimentPlan, Resolution, TolerancePolicy


def parse_text(text: str, fmt: str, source: str = "<config>") -> dict:
    try:
        if fmt == "json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {fmt}: {exc}", path=source) from exc
    if not isinstance(data, dict):
        raise ConfigError("top level must be a table", path=source)
    return data


def load_config(path) -> dict:
    """Parse a .json file as JSON and anything else (.toml, .cfg) as TOML."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=str(path)) from exc
    fmt = "json" if path.suffix.lower() == ".json" else "toml"
    return parse_text(text, fmt, str(path))


def canonical_text(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_digest(data: dict) -> str:
    return hashlib.sha256(canonical_text(data).encode("utf-8")).hexdigest()


def _table(m, key, path, required=True):
    if key not in m:
        if required:
            raise ConfigError("missing section", path=f"{path}.{key}")
        return {}
    v = m[key]
    if not isinstance(v, dict):
        raise ConfigError("expected a table", path=f"{path}.{key}")
    return v


def _build(cls, kwargs, path, allowed=None):
    allowed = allowed or {f.name for f in fields(cls)}
    unknown = set(kwargs) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", path=path)
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        if exc.path:
            raise
        raise ConfigError(str(exc), path=path) from exc
    except SuperBsdeError as exc:
        raise ConfigError(str(exc), path=path) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path=path) from exc


def terminal_from_mapping(m: dict, path: str, growth: GrowthParams | None = None) -> TerminalSpec:
    m = dict(m)
    params = dict(_table(m, "params", path, required=False))
    if m.get("family") == "supconv":
        if not isinstance(params.get("base"), dict):
            raise ConfigError("supconv needs a base terminal table", path=f"{path}.params.base")
        params["base"] = terminal_from_mapping(params["base"], f"{path}.params.base", growth)
        if growth is not None:
            for key in ("C_growth", "alpha_bar", "p_g"):
                params.setdefault(key, getattr(growth, key))
    m["params"] = params
    return _build(TerminalSpec, m, path)


def problem_from_mapping(m: dict, path: str = "problem") -> ProblemSpec:
    fwd = _build(ForwardModel, _table(m, "forward", path), f"{path}.forward")
    growth = _build(GrowthParams, _table(m, "growth", path, required=False), f"{path}.growth")
    gen = dict(_table(m, "generator", path))
    if "claimed_assumptions" in gen:
        gen["claimed_assumptions"] = frozenset(gen["claimed_assumptions"])
    generator = _build(GeneratorSpec, gen, f"{path}.generator")
    terminal = terminal_from_mapping(_table(m, "terminal", path), f"{path}.terminal", growth)
    unknown = set(m) - {"forward", "growth", "generator", "terminal", "label"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", path=path)
    try:
        return ProblemSpec(fwd, generator, terminal, growth, str(m.get("label", "")))
    except ConfigError as exc:
        where = path if exc.path is None else path + exc.path[len("problem"):]
        raise ConfigError(str(exc).split(": ", 1)[-1], path=where) from exc


def bound_from_mapping(m: dict, growth: GrowthParams, T: float, path: str) -> BoundParams:
    m = dict(m)
    kind = m.pop("kind", None)
    if kind is None:
        raise ConfigError("missing bound kind", path=f"{path}.kind")
    allowed = {"A", "B", "C", "D", "calibration", "note"}
    unknown = set(m) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", path=path)
    try:
        return BoundParams.from_growth(kind, growth, T, **m)
    except SuperBsdeError as exc:
        raise ConfigError(str(exc), path=path) from exc


def plan_from_mapping(data: dict) -> ExperimentPlan:
    plan = _table(data, "plan", "")
    if "problems" in data:
        if not isinstance(data["problems"], list):
            raise ConfigError("expected an array of tables", path="problems")
        problems = [problem_from_mapping(m, f"problems[{i}]") for i, m in enumerate(data["problems"])]
    else:
        problems = [problem_from_mapping(_table(data, "problem", ""))]
    res_list = plan.get("resolutions", [{}])
    if not isinstance(res_list, list):
        raise ConfigError("expected an array", path="plan.resolutions")
    resolutions = []
    for i, r in enumerate(res_list):
        try:
            resolutions.append(Resolution.from_mapping(r))
        except (ConfigError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), path=f"plan.resolutions[{i}]") from exc
    try:
        tol = TolerancePolicy.from_mapping(plan.get("tolerance", {}))
    except (ConfigError, ValueError) as exc:
        raise ConfigError(str(exc), path="plan.tolerance") from exc
    bound = None
    if "bound" in plan:
        bound = bound_from_mapping(plan["bound"], problems[0].growth, problems[0].T, "plan.bound")
    unknown = set(plan) - {"claim", "seed", "label", "n_list", "resolutions", "tolerance", "bound", "threads"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", path="plan")
    kw = dict(claim=plan.get("claim"), problems=tuple(problems), resolutions=tuple(resolutions),
              tolerance=tol, seed=int(plan.get("seed", 0)), n_list=tuple(plan.get("n_list", ())),
              bound=bound, threads=int(plan.get("threads", 1)), label=str(plan.get("label", "")))
    try:
        return ExperimentPlan(**kw)
    except ConfigError as exc:
        raise ConfigError(str(exc), path=exc.path or "plan") from exc


RUN_KEYS = {"seed": int, "n_paths": int, "N": int, "bins": int, "min_paths_per_bin": int,
            "N_x": int, "N_t": int, "threads": int, "k_sigma": float, "x_min": float, "x_max": float,
            "n": float, "h_u": float, "refine": bool, "truncate": bool, "points": list}


def run_settings(data: dict) -> dict:
    """The optional ``[run]`` table, type-checked."""
    run = _table(data, "run", "", required=False)
    out = {}
    for key, value in run.items():
        if key not in RUN_KEYS:
            raise ConfigError("unknown run setting", path=f"run.{key}")
        typ = RUN_KEYS[key]
        if typ is bool:
            ok = isinstance(value, bool)
        elif typ is list:
            ok = isinstance(value, list)
        elif typ is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        else:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if not ok:
            raise ConfigError(f"expected {typ.__name__}", path=f"run.{key}")
        out[key] = typ(value) if typ in (int, float) else value
    return out
