"""Experiment harness: each claim becomes a plan, each plan a report with CSV evidence.

Every report is a list of checks.  A check names one CSV table and a rule over
the table's ``ok`` column ("all" rows ok, or the failing share at most a
threshold), so a stored report can be re-judged from its artifacts alone with
``recheck_report``.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .bounds import BoundParams, SamplingBox, calibrate, y_bound
from .csvio import read_rows, write_rows
from .errors import ConfigError, DominanceError, GrowthError, ManifestError
from .forward import TimeGrid, simulate
from .mcsolver import RegressionBasis, solve_mc, terminal_continuity_probe
from .pde import (PdeConfig, _steps, conditional_power_integral, extract_rate_near_T,
                  solve_pde, spatial_domain)
from .problem import ProblemSpec
from .supconv import admissible_n0, supconv_terminal

CLAIMS = ("comparison", "y_envelope", "z_envelope", "z_integral", "supconv_monotone",
          "blowup_rate", "terminal_continuity", "truncation_inertness")
ENVELOPE_KIND = {"y_envelope": "y_growth", "z_envelope": "z_temporal", "z_integral": "z_integral"}


@dataclass(frozen=True)
class Resolution:
    """One point of a resolution sweep: MC steps, paths and bins, PDE grid."""

    N: int = 50
    n_paths: int = 20000
    bins: int = 20
    N_x: int = 400
    N_t: Optional[int] = None

    @classmethod
    def from_mapping(cls, m) -> "Resolution":
        unknown = set(m) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown resolution keys {sorted(unknown)}")
        return cls(**{k: int(v) if v is not None else None for k, v in m.items()})

    def basis(self) -> RegressionBasis:
        return RegressionBasis(bins=self.bins)

    def pde(self) -> PdeConfig:
        return PdeConfig(N_x=self.N_x, N_t=self.N_t)


@dataclass(frozen=True)
class TolerancePolicy:
    se_mult: float = 3.0
    rel: float = 0.02
    grid_C: float = 1.0  # PDE slack is grid_C (dx^2 + dt)
    mc_bin_violation: float = 0.01
    calibration_drift: float = 0.25
    rate_slack: float = 0.15
    interior: float = 0.5  # audited |x - x0| as a fraction of the domain half-width
    terminal_layer: int = 2
    clip_fraction: float = 1e-3

    @classmethod
    def from_mapping(cls, m) -> "TolerancePolicy":
        unknown = set(m) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown tolerance keys {sorted(unknown)}")
        kw = {k: (int(v) if k == "terminal_layer" else float(v)) for k, v in m.items()}
        return cls(**kw)


@dataclass(frozen=True)
class ExperimentPlan:
    claim: str
    problems: tuple
    resolutions: tuple = (Resolution(),)
    tolerance: TolerancePolicy = TolerancePolicy()
    seed: int = 0
    n_list: tuple = ()
    bound: Optional[BoundParams] = None
    threads: int = 1
    label: str = ""

    def __post_init__(self):
        if self.claim not in CLAIMS:
            raise ConfigError(f"unknown claim {self.claim!r}")
        object.__setattr__(self, "problems", tuple(self.problems))
        object.__setattr__(self, "resolutions", tuple(self.resolutions))
        object.__setattr__(self, "n_list", tuple(float(n) for n in self.n_list))
        want = 2 if self.claim == "comparison" else 1
        if len(self.problems) != want:
            raise ConfigError(f"claim {self.claim} needs {want} problem(s), got {len(self.problems)}")
        if not self.resolutions:
            raise ConfigError("resolutions must be nonempty")
        if self.claim == "supconv_monotone":
            if not self.n_list or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
                raise ConfigError("n_list must be nonempty and strictly increasing")
        if self.claim in ENVELOPE_KIND:
            # the a priori envelopes are stated for admissible exponents only
            self.problems[0].growth.require_admissible()


@dataclass(frozen=True)
class Check:
    name: str
    table: str
    rule: str  # "all" or "fraction"
    threshold: float = 0.0
    value: float = 0.0
    passed: bool = False


def _judge(rule: str, threshold: float, ok) -> tuple[float, bool]:
    ok = np.asarray(ok, dtype=float)
    fail = float(1.0 - ok.mean()) if ok.size else 0.0
    if rule == "all":
        return fail, fail == 0.0
    if rule == "fraction":
        return fail, fail <= threshold
    raise ConfigError(f"unknown check rule {rule!r}")


@dataclass(frozen=True, eq=False)
class VerificationReport:
    claim: str
    passed: bool
    statistics: dict
    tolerances: dict
    checks: tuple
    tables: dict = field(default_factory=dict, repr=False)
    artifacts: tuple = ()
    label: str = ""

    def write(self, out_dir) -> "VerificationReport":
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, (header, rows) in sorted(self.tables.items()):
            paths.append(str(write_rows(out / f"{name}.csv", header, rows)))
        doc = {"claim": self.claim, "label": self.label, "passed": self.passed,
               "statistics": self.statistics, "tolerances": self.tolerances,
               "checks": [asdict(c) for c in self.checks],
               "artifacts": [Path(p).name for p in paths]}
        rp = out / "report.json"
        rp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return replace(self, artifacts=tuple(paths + [str(rp)]))


def recheck_report(out_dir) -> bool:
    """Re-judge a written report from its CSV tables; raises if they disagree with it."""
    out = Path(out_dir)
    try:
        doc = json.loads((out / "report.json").read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ManifestError(f"unreadable report in {out}: {exc}") from exc
    verdict = True
    for c in doc["checks"]:
        header, rows = read_rows(out / f"{c['table']}.csv")
        col = header.index("ok")
        _, ok = _judge(c["rule"], c["threshold"], [int(r[col]) for r in rows])
        if ok != c["passed"]:
            raise ManifestError(f"check {c['name']} does not reproduce from {c['table']}.csv")
        verdict &= ok
    if verdict != doc["passed"]:
        raise ManifestError("report verdict does not match its checks")
    return verdict


def _finish(plan: ExperimentPlan, stats: dict, tables: dict, specs) -> VerificationReport:
    checks = []
    for name, table, rule, threshold in specs:
        value, ok = _judge(rule, threshold, [r[-1] for r in tables[table][1]])
        checks.append(Check(name, table, rule, threshold, value, ok))
    passed = all(c.passed for c in checks)
    return VerificationReport(plan.claim, passed, stats, asdict(plan.tolerance), tuple(checks),
                              tables, (), plan.label)


def _ensemble(p: ProblemSpec, res: Resolution, plan: ExperimentPlan):
    return simulate(p.forward, TimeGrid(p.T, res.N), res.n_paths, plan.seed, plan.threads)


def _bin_means(labels, *arrays):
    nb = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=nb)
    return [np.bincount(labels, a, nb) / counts for a in arrays]


def _interior(fld, x0: float, frac: float) -> np.ndarray:
    half = 0.5 * (fld.x[-1] - fld.x[0])
    keep = np.abs(fld.x - x0) <= frac * half
    keep[:2] = keep[-2:] = False
    return keep


# -- comparison -------------------------------------------------------------


def dominance_witness(p1: ProblemSpec, p2: ProblemSpec, box: Optional[SamplingBox] = None,
                      n_samples: int = 4000, seed: int = 0) -> Optional[dict]:
    """First sampled point where g1 <= g2 or f1 <= f2 fails, or None."""
    box = box or SamplingBox.for_problem(p1)
    rng = np.random.default_rng(seed)
    s = {k: rng.uniform(*getattr(box, k), n_samples) for k in ("t", "x", "y", "z")}
    g1, g2 = p1.terminal(s["x"]), p2.terminal(s["x"])
    bad = g1 > g2 + 1e-12 * (1 + np.abs(g2))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        return {"term": "g", "x": float(s["x"][i]), "g1": float(g1[i]), "g2": float(g2[i])}
    f1 = p1.generator(s["t"], s["x"], s["y"], s["z"], p1.forward)
    f2 = p2.generator(s["t"], s["x"], s["y"], s["z"], p2.forward)
    bad = f1 > f2 + 1e-12 * (1 + np.abs(f2))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        w = {k: float(v[i]) for k, v in s.items()}
        w.update(term="f", f1=float(f1[i]), f2=float(f2[i]))
        return w
    return None


def run_comparison(p1: ProblemSpec, p2: ProblemSpec, plan: ExperimentPlan) -> VerificationReport:
    if p1.forward != p2.forward:
        raise ConfigError("coupled comparison runs need one forward model")
    witness = dominance_witness(p1, p2, seed=plan.seed)
    if witness is not None:
        err = DominanceError(f"dominance precondition fails at {witness}")
        err.witness = witness
        raise err
    k = plan.tolerance.se_mult
    mc_rows, pde_rows, stats = [], [], {}
    for r, res in enumerate(plan.resolutions):
        ens = _ensemble(p1, res, plan)
        s1 = solve_mc(p1, ens, res.basis())
        s2 = solve_mc(p2, ens, res.basis())
        for i in range(ens.grid.N):
            y1, y2, e1, e2 = _bin_means(s1.labels[:, i], s1.Y[:, i], s2.Y[:, i], s1.se[:, i], s2.se[:, i])
            se = np.sqrt(e1**2 + e2**2)
            margin = y2 + k * se - y1
            for b in range(y1.size):
                mc_rows.append((r, i, b, y1[b], y2[b], se[b], margin[b], int(margin[b] >= 0)))
        gap_T = float(np.min(s2.Y[:, -1] - s1.Y[:, -1]))
        mc_rows.append((r, ens.grid.N, -1, float("nan"), float("nan"), 0.0, gap_T, int(gap_T >= 0)))

        cfg = res.pde()
        if cfg.N_t is None:
            lo, hi = spatial_domain(p1, cfg)
            x = np.linspace(lo, hi, cfg.N_x + 1)
            cfg = replace(cfg, N_t=max(_steps(p1, cfg, x), _steps(p2, cfg, x)))
        u1, u2 = solve_pde(p1, cfg), solve_pde(p2, cfg)
        tol = plan.tolerance.grid_C * (u1.metadata["dx"] ** 2 + u1.metadata["dt"])
        margin = u2.u + tol - u1.u
        for lvl in range(len(u1.t)):
            m = float(margin[lvl].min())
            pde_rows.append((r, lvl, u1.t[lvl], m, int(m >= 0)))
        stats[f"res{r}.y0_1"] = s1.y0
        stats[f"res{r}.y0_2"] = s2.y0
        stats[f"res{r}.y0_gap_mc"] = s2.y0 - s1.y0
        stats[f"res{r}.y0_gap_se"] = math.hypot(s1.y0_se, s2.y0_se)
        stats[f"res{r}.u0_gap_pde"] = float(u2.value_at(p1.x0) - u1.value_at(p1.x0))
        stats[f"res{r}.pde_tol"] = tol
    tables = {
        "mc_knots": (["res", "knot", "bin", "y1", "y2", "se", "margin", "ok"], mc_rows),
        "pde_levels": (["res", "level", "t", "min_margin", "ok"], pde_rows),
    }
    return _finish(plan, stats, tables, [("mc_dominance", "mc_knots", "all", 0.0),
                                         ("pde_dominance", "pde_levels", "all", 0.0)])


# -- envelopes --------------------------------------------------------------


def _pde_envelope_values(p: ProblemSpec, fld, kind: str, layer: int):
    """(levels, values) audited for a bound kind on a PDE field."""
    n_lvl = len(fld.t)
    if kind == "y_growth":
        vals = np.abs(fld.u)
    elif kind in ("z_temporal", "z_lipschitz"):
        vals = np.abs(fld.z)
    else:
        vals = conditional_power_integral(p, fld, p.growth.l + 1)
    last = n_lvl - 1 - layer if kind == "z_temporal" else n_lvl
    return np.arange(0, max(last, 0)), vals


def _mc_estimates(p: ProblemSpec, sol, kind: str):
    if kind == "y_growth":
        return np.abs(sol.Y[:, :-1])
    if kind in ("z_temporal", "z_lipschitz"):
        return np.abs(sol.Z)
    inc = np.abs(sol.Z) ** (p.growth.l + 1) * sol.grid.dt
    return np.cumsum(inc[:, ::-1], axis=1)[:, ::-1]


def pilot_calibrate(p: ProblemSpec, kind: str, res: Resolution = Resolution(), safety: float = 1.5,
                    tolerance: TolerancePolicy = TolerancePolicy()) -> BoundParams:
    """Calibrate a bound's constant from one PDE run on the audited interior."""
    fld = solve_pde(p, res.pde())
    levels, vals = _pde_envelope_values(p, fld, kind, tolerance.terminal_layer)
    keep = _interior(fld, p.x0, tolerance.interior)
    v = vals[levels][:, keep]
    base = BoundParams.from_growth(kind, p.growth, p.T)
    if kind == "z_lipschitz":
        A = safety * float(v.max())
        return replace(base, A=A, calibration="pilot-pde", timestamp=_stamp())
    tt = np.repeat(fld.t[levels], keep.sum())
    xx = np.tile(fld.x[keep], len(levels))
    return calibrate(base, tt, xx, v.ravel(), safety=safety, source="pilot-pde")


def _stamp():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def run_envelope_audit(p: ProblemSpec, bp: BoundParams, plan: ExperimentPlan) -> VerificationReport:
    """Count envelope violations on PDE grids and MC bins across the resolution sweep.

    The calibration-stability check compares, per resolution, the largest
    ratio of the audited quantity to the supplied envelope.
    """
    bp.require_calibrated()
    if not bp.consistent_with(p.growth):
        raise ConfigError("bound exponents differ from the problem's growth parameters")
    p.growth.require_admissible()
    tol = plan.tolerance
    kind = bp.kind
    pde_rows, mc_rows, cal_rows, stats = [], [], [], {}
    scales = []
    for r, res in enumerate(plan.resolutions):
        fld = solve_pde(p, res.pde())
        levels, vals = _pde_envelope_values(p, fld, kind, tol.terminal_layer)
        keep = _interior(fld, p.x0, tol.interior)
        worst = 0.0
        for lvl in levels:
            env = bp.evaluate(fld.t[lvl], fld.x[keep])
            ratio = vals[lvl, keep] / env
            nviol = int(np.sum(ratio > 1.0))
            worst = max(worst, float(ratio.max()))
            pde_rows.append((r, int(lvl), fld.t[lvl], float(ratio.max()), nviol, int(nviol == 0)))
        scales.append(worst)

        ens = _ensemble(p, res, plan)
        sol = solve_mc(p, ens, res.basis())
        est = _mc_estimates(p, sol, kind)
        N = ens.grid.N
        last = N - tol.terminal_layer if kind == "z_temporal" else N
        n_bins = n_bad = 0
        for i in range(last):
            c, e = _bin_means(sol.labels[:, i], ens.paths[:, i], est[:, i])
            env = bp.evaluate(ens.grid.knots[i], c)
            for b in range(c.size):
                ok = int(e[b] <= env[b])
                mc_rows.append((r, i, b, c[b], e[b], env[b], ok))
                n_bins += 1
                n_bad += 1 - ok
        stats[f"res{r}.pde_max_ratio"] = worst
        stats[f"res{r}.mc_violation_fraction"] = n_bad / max(n_bins, 1)
        stats[f"res{r}.y0"] = sol.y0
    for r, s in enumerate(scales):
        rel = s / scales[0] - 1.0 if scales[0] > 0 else 0.0
        cal_rows.append((r, s, rel, int(abs(rel) <= tol.calibration_drift)))
    stats["calibrated_constant"] = bp.C if kind != "z_lipschitz" else bp.A
    stats["calibration"] = bp.calibration
    tables = {
        "pde_interior": (["res", "level", "t", "max_ratio", "violations", "ok"], pde_rows),
        "mc_bins": (["res", "knot", "bin", "center", "estimate", "envelope", "ok"], mc_rows),
        "calibration": (["res", "scale", "rel_change", "ok"], cal_rows),
    }
    return _finish(plan, stats, tables, [
        ("pde_zero_violations", "pde_interior", "all", 0.0),
        ("mc_bin_violations", "mc_bins", "fraction", tol.mc_bin_violation),
        ("calibration_stable", "calibration", "all", 0.0),
    ])


# -- sup-convolution ladder ---------------------------------------------------


def run_supconv_ladder(p: ProblemSpec, n_list, plan: ExperimentPlan) -> VerificationReport:
    """Solve with terminal g_n for each n on one coupled ensemble per resolution.

    Each rung is also solved by the PDE oracle with g_n as terminal data.
    When g itself is Lipschitz the direct solution is the ladder's limit and is
    compared with the last rung.
    """
    base = p.terminal
    if not base.lower_semicontinuous:
        raise ConfigError("the ladder needs a lower semi-continuous terminal condition")
    g = p.growth
    if g.p_g * g.l >= 1:
        raise GrowthError(f"p_g*l = {g.p_g * g.l:g} >= 1")
    n_list = [float(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigError("n_list must be strictly increasing")
    n0 = admissible_n0(base, g)
    if n_list[0] < n0:
        raise GrowthError(f"n = {n_list[0]:g} is below the admissible threshold n0 = {n0:g}")
    tol = plan.tolerance
    k = tol.se_mult
    rung_rows, mono_rows, env_rows, direct_rows, stats = [], [], [], [], {}
    for r, res in enumerate(plan.resolutions):
        ens = _ensemble(p, res, plan)
        y0s, ses = [], []
        for n in n_list:
            pn = p.with_terminal(supconv_terminal(base, n, g), label=f"{p.label}-n{n:g}")
            sol = solve_mc(pn, ens, res.basis())
            u0 = float(solve_pde(pn, res.pde()).value_at(p.x0))
            band = max(tol.rel * abs(u0), k * sol.y0_se)
            diff = abs(sol.y0 - u0)
            rung_rows.append((r, n, sol.y0, sol.y0_se, u0, diff, band, int(diff <= band)))
            y0s.append(sol.y0)
            ses.append(sol.y0_se)
            stats[f"res{r}.y0[n={n:g}]"] = sol.y0
            stats[f"res{r}.u0[n={n:g}]"] = u0
            if plan.bound is not None:
                env = float(y_bound(plan.bound, 0.0, p.x0))
                env_rows.append((r, n, abs(sol.y0), env, int(abs(sol.y0) <= env)))
        for j in range(len(n_list) - 1):
            band = k * math.hypot(ses[j], ses[j + 1])
            ok = y0s[j + 1] <= y0s[j] + band
            mono_rows.append((r, n_list[j], n_list[j + 1], y0s[j], y0s[j + 1], band, int(ok)))
        if base.lipschitz_constant() is not None:
            direct = solve_mc(p, ens, res.basis())
            band = max(tol.rel * abs(direct.y0), k * math.hypot(direct.y0_se, ses[-1]))
            diff = abs(y0s[-1] - direct.y0)
            direct_rows.append((r, direct.y0, y0s[-1], diff, band, int(diff <= band)))
            stats[f"res{r}.y0_direct"] = direct.y0
    tables = {
        "rungs": (["res", "n", "y0", "se", "pde_u0", "abs_diff", "band", "ok"], rung_rows),
        "monotone": (["res", "n", "n_next", "y0", "y0_next", "band", "ok"], mono_rows),
    }
    specs = [("rungs_match_oracle", "rungs", "all", 0.0), ("non_increasing", "monotone", "all", 0.0)]
    if env_rows:
        tables["envelope"] = (["res", "n", "abs_y0", "bound", "ok"], env_rows)
        specs.append(("within_envelope", "envelope", "all", 0.0))
    if direct_rows:
        tables["direct"] = (["res", "y0_direct", "y0_last", "abs_diff", "band", "ok"], direct_rows)
        specs.append(("limit_matches_direct", "direct", "all", 0.0))
    return _finish(plan, stats, tables, specs)


# -- blow-up rate ------------------------------------------------------------


def _kinks(terminal) -> tuple:
    prm = terminal.params
    if terminal.family == "lipschitz":
        return (float(prm["center"]),)
    if terminal.family == "step":
        return (float(prm["jump"]),)
    return (0.0,)


def run_blowup_rate(p: ProblemSpec, plan: ExperimentPlan) -> VerificationReport:
    if p.terminal.lipschitz_constant() is not None:
        raise ConfigError("the rate experiment needs a non-Lipschitz terminal condition")
    l = p.growth.l
    threshold = -1.0 / (l + 1) - plan.tolerance.rate_slack
    rows, stats = [], {}
    for r, res in enumerate(plan.resolutions):
        fld = solve_pde(p, res.pde())
        fit = extract_rate_near_T(fld, kink_points=_kinks(p.terminal))
        rows.append((r, res.N_x, fld.metadata["N_t"], fit.exponent, fit.r2, fit.n_samples,
                     threshold, int(fit.exponent >= threshold)))
        stats[f"res{r}.exponent"] = fit.exponent
        stats[f"res{r}.r2"] = fit.r2
    stats["envelope_exponent"] = -1.0 / (l + 1)
    # a driver without z-dependence is a heat-equation reference, not a superquadratic claim
    stats["linear_reference_only"] = p.generator.z_exponent is None
    tables = {"rates": (["res", "N_x", "N_t", "exponent", "r2", "n_samples", "threshold", "ok"], rows)}
    return _finish(plan, stats, tables, [("rate_not_faster", "rates", "all", 0.0)])


# -- terminal continuity and truncation ---------------------------------------


def run_terminal_continuity(p: ProblemSpec, plan: ExperimentPlan) -> VerificationReport:
    rows, stats = [], {}
    for r, res in enumerate(plan.resolutions):
        sol = solve_mc(p, _ensemble(p, res, plan), res.basis())
        rep = terminal_continuity_probe(p, sol)
        m = len(rep.gap)
        for j in range(m):
            ok = j < m - 3 or rep.gap[j] < rep.gap[j - 1]
            rows.append((r, rep.tau[j], rep.gap[j], int(ok)))
        stats[f"res{r}.decay_exponent"] = rep.decay_exponent
        if rep.fit_error:
            stats[f"res{r}.fit_error"] = rep.fit_error
    tables = {"gaps": (["res", "tau", "mean_gap", "ok"], rows)}
    return _finish(plan, stats, tables, [("monotone_last4", "gaps", "all", 0.0)])


def run_truncation_inertness(p: ProblemSpec, plan: ExperimentPlan) -> VerificationReport:
    """Z-truncation with a calibrated envelope must not move y0 on bounded-Z problems."""
    bp = plan.bound or pilot_calibrate(p, "z_temporal", plan.resolutions[0], tolerance=plan.tolerance)
    if bp.kind != "z_temporal":
        raise ConfigError("truncation needs a z_temporal bound")
    bp.require_calibrated()
    rows, stats = [], {"C": bp.C}
    for r, res in enumerate(plan.resolutions):
        ens = _ensemble(p, res, plan)
        plain = solve_mc(p, ens, res.basis())
        trunc = solve_mc(p, ens, res.basis(), trunc=bp)
        dy = abs(trunc.y0 - plain.y0)
        clip = float(trunc.clip_fraction.max())
        ok = dy < plain.y0_se or dy == 0.0
        rows.append((r, plain.y0, trunc.y0, plain.y0_se, dy, clip,
                     int(ok and clip < plan.tolerance.clip_fraction)))
        stats[f"res{r}.dy0"] = dy
        stats[f"res{r}.max_clip_fraction"] = clip
    tables = {"truncation": (["res", "y0", "y0_trunc", "se", "abs_dy0", "max_clip_fraction", "ok"], rows)}
    return _finish(plan, stats, tables, [("inert", "truncation", "all", 0.0)])


# -- dispatch ----------------------------------------------------------------


def run_plan(plan: ExperimentPlan) -> VerificationReport:
    p = plan.problems[0]
    if plan.claim == "comparison":
        return run_comparison(p, plan.problems[1], plan)
    if plan.claim in ENVELOPE_KIND:
        kind = ENVELOPE_KIND[plan.claim]
        bp = plan.bound
        if bp is None:
            bp = pilot_calibrate(p, kind, plan.resolutions[0], tolerance=plan.tolerance)
        elif bp.kind != kind and not (plan.claim == "z_envelope" and bp.kind == "z_lipschitz"):
            raise ConfigError(f"claim {plan.claim} needs a {kind} bound, got {bp.kind}")
        return run_envelope_audit(p, bp, plan)
    if plan.claim == "supconv_monotone":
        return run_supconv_ladder(p, plan.n_list, plan)
    if plan.claim == "blowup_rate":
        return run_blowup_rate(p, plan)
    if plan.claim == "terminal_continuity":
        return run_terminal_continuity(p, plan)
    return run_truncation_inertness(p, plan)


def precondition_failure(plan: ExperimentPlan, err: DominanceError) -> VerificationReport:
    """A failing report whose only check is the violated dominance precondition."""
    w = getattr(err, "witness", {}) or {}
    rows = [(w.get("term", ""), json.dumps(w, sort_keys=True), 0)]
    tables = {"precondition": (["term", "witness", "ok"], rows)}
    stats = {"precondition": "dominance failed", "witness_term": w.get("term", "")}
    return _finish(plan, stats, tables, [("dominance_precondition", "precondition", "all", 0.0)])


def run_plans(plans, workers: int = 1) -> list:
    """Run independent plans, possibly concurrently; reports come back in input order."""
    if workers <= 1:
        return [run_plan(pl) for pl in plans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_plan, plans))


__all__ = [
    "CLAIMS", "Check", "ExperimentPlan", "Resolution", "TolerancePolicy", "VerificationReport",
    "dominance_witness", "pilot_calibrate", "precondition_failure", "recheck_report", "run_blowup_rate", "run_comparison",
    "run_envelope_audit", "run_plan", "run_plans", "run_supconv_ladder", "run_terminal_continuity",
    "run_truncation_inertness",
]
