"""A priori envelopes, the coefficient recursion, and sampled assumption checkers."""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (CalibrationError, ConfigError, ContractError, GradientError,
                     IterationError, KindError, TerminalTimeError)
from .problem import ASSUMPTIONS, GrowthParams, ProblemSpec, spow

KINDS = ("z_lipschitz", "y_growth", "z_integral", "z_temporal")
CALIBRATIONS = ("analytic", "pilot-pde", "pilot-mc")


@dataclass(frozen=True)
class BoundParams:
    kind: str
    T: float
    A: float = 0.0
    B: float = 0.0
    C: float = 0.0
    D: float = 0.0
    l: float = 2.0
    r_f: float = 0.0
    r_g: float = 0.0
    p_g: float = 0.0
    calibration: Optional[str] = None
    timestamp: Optional[str] = None
    note: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KindError(f"unknown bound kind {self.kind!r}")
        for name in ("A", "B", "C", "D"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"bound constant {name} must be nonnegative")
        if self.calibration is not None and self.calibration not in CALIBRATIONS:
            raise ConfigError(f"unknown calibration provenance {self.calibration!r}")

    @classmethod
    def from_growth(cls, kind: str, growth: GrowthParams, T: float, calibration=None, **constants):
        stamp = _dt.datetime.now(_dt.timezone.utc).isoformat() if calibration else None
        return cls(kind=kind, T=T, l=growth.l, r_f=growth.r_f, r_g=growth.r_g, p_g=growth.p_g,
                   calibration=calibration, timestamp=stamp, **constants)

    def consistent_with(self, growth: GrowthParams) -> bool:
        return all(math.isclose(getattr(self, k), getattr(growth, k)) for k in ("l", "r_f", "r_g", "p_g"))

    def require_calibrated(self):
        if self.calibration is None:
            raise CalibrationError(f"{self.kind} bound has no calibration provenance")

    def evaluate(self, t, x):
        return {"z_lipschitz": z_bound_lipschitz, "y_growth": y_bound,
                "z_integral": z_integral_bound, "z_temporal": z_temporal_bound}[self.kind](self, t, x)


def _need(bp: BoundParams, kind: str):
    if bp.kind != kind:
        raise KindError(f"expected a {kind} bound, got {bp.kind}")


def _tau(bp, t):
    return np.maximum(bp.T - np.asarray(t, dtype=float), 0.0)


def z_bound_lipschitz(bp: BoundParams, t, x):
    """A + B (|x|^r_g + (T - t) |x|^r_f)."""
    _need(bp, "z_lipschitz")
    ax = np.abs(np.asarray(x, dtype=float))
    return bp.A + bp.B * (spow(ax, bp.r_g) + _tau(bp, t) * spow(ax, bp.r_f))


def _growth_shape(bp, t, x):
    ax = np.abs(np.asarray(x, dtype=float))
    return 1.0 + spow(ax, bp.p_g) + _tau(bp, t) * spow(ax, bp.r_f + 1)


def y_bound(bp: BoundParams, t, x):
    """C (1 + |x|^p_g + (T - t) |x|^(r_f + 1))."""
    _need(bp, "y_growth")
    return bp.C * _growth_shape(bp, t, x)


def z_integral_bound(bp: BoundParams, t, x):
    """Envelope for E_t[int_t^T |Z|^(l+1) ds]; same shape as the Y envelope."""
    _need(bp, "z_integral")
    return bp.C * _growth_shape(bp, t, x)


def z_temporal_shape(bp: BoundParams, t, x):
    t = np.asarray(t, dtype=float)
    if np.any(t >= bp.T):
        raise TerminalTimeError("the time-singular Z bound is defined for t < T only")
    ax = np.abs(np.asarray(x, dtype=float))
    k = bp.l + 1
    return (1.0 + spow(ax, bp.p_g / k)) / (bp.T - t) ** (1.0 / k) + spow(ax, (bp.r_f + 1) / k)


def z_temporal_bound(bp: BoundParams, t, x):
    """C (1 + |x|^(p_g/(l+1))) / (T - t)^(1/(l+1)) + C |x|^((r_f+1)/(l+1))."""
    _need(bp, "z_temporal")
    return bp.C * z_temporal_shape(bp, t, x)


def envelope_shape(bp: BoundParams, t, x):
    """The envelope with its multiplicative constant set to one."""
    if bp.kind == "z_temporal":
        return z_temporal_shape(bp, t, x)
    if bp.kind in ("y_growth", "z_integral"):
        return _growth_shape(bp, t, x)
    raise KindError("z_lipschitz has two constants; calibrate A and B directly")


def calibrate(bp: BoundParams, t, x, values, safety: float = 1.5, source: str = "pilot-pde") -> BoundParams:
    """Set C to ``safety`` times the largest ratio |values| / shape over the samples."""
    shape = envelope_shape(bp, t, x)
    ratio = np.abs(values) / shape
    C = safety * float(np.max(ratio)) if ratio.size else 0.0
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat()
    return replace(bp, C=C, calibration=source, timestamp=stamp)


# -- coefficient recursion ---------------------------------------------------


@dataclass(frozen=True)
class RecursionState:
    A: float
    B: float
    D: float
    C_rec: float
    a: float
    l: float
    p: float = 1.0
    p_bar: float = 2.0
    n: int = 0

    def __post_init__(self):
        if min(self.A, self.B, self.D) < 0 or not self.C_rec > 0:
            raise ConfigError("A, B, D must be nonnegative and C_rec positive")
        if self.p < 1 or self.p_bar < 1:
            raise ConfigError("p and p_bar must be at least 1")

    @property
    def al(self) -> float:
        return self.a * self.l

    @classmethod
    def from_al(cls, al: float, C_rec: float, A: float = 0.0, B: float = 0.0, D: float = 0.0,
                p: float = 1.0, p_bar: float = 2.0) -> "RecursionState":
        return cls(A=A, B=B, D=D, C_rec=C_rec, a=al, l=1.0, p=p, p_bar=p_bar)

    @classmethod
    def from_growth(cls, growth: GrowthParams, C_rec: float, C0: float, T: float,
                    p_bar: float = 2.0) -> "RecursionState":
        """Seed A_0 = C0 T^(1/(l+1)), B_0 = D_0 = 0, with p taken from the Young step."""
        l = growth.l
        a = max(growth.p_g, growth.r_f + 1) / (l + 1)
        p = 1.0 / (1.0 - l * growth.p_g / (l + 1))
        return cls(A=C0 * T ** (1 / (l + 1)), B=0.0, D=0.0, C_rec=C_rec, a=a, l=l, p=p, p_bar=p_bar)


def recursion_map(A, B, D, C, al, p, p_bar):
    return C * (1.0 + spow(A, al) + spow(B, al * p) + spow(D, al * p_bar))


@dataclass(frozen=True)
class FixedPointResult:
    A_inf: float
    iterations: int
    trace: list

    def __iter__(self):
        return iter((self.A_inf, self.iterations, self.trace))


def recursion_fixed_point(init: RecursionState, tol: float = 1e-10, max_iter: int = 200) -> FixedPointResult:
    """Iterate A <- C(1 + A^(al) + B^(alp) + D^(al pbar)) with B = D = C after the first step."""
    al = init.al
    if al >= 1:
        raise ContractError(f"a*l = {al:g} >= 1: the recursion need not contract")
    if not tol > 0:
        raise ConfigError("tol must be positive")
    A, B, D = init.A, init.B, init.D
    trace = [A]
    for n in range(1, max_iter + 1):
        A_next = float(recursion_map(A, B, D, init.C_rec, al, init.p, init.p_bar))
        B = D = init.C_rec
        trace.append(A_next)
        if abs(A_next - A) <= tol:
            return FixedPointResult(A_next, n, trace)
        A = A_next
    raise IterationError(f"no convergence in {max_iter} iterations", best=A)


# -- assumption checkers -----------------------------------------------------


@dataclass(frozen=True)
class SamplingBox:
    t: tuple = (0.0, 1.0)
    x: tuple = (-5.0, 5.0)
    y: tuple = (-5.0, 5.0)
    z: tuple = (-5.0, 5.0)

    @classmethod
    def for_problem(cls, p: ProblemSpec, half_width: float = 5.0) -> "SamplingBox":
        return cls(t=(0.0, p.T), x=(p.x0 - half_width, p.x0 + half_width),
                   y=(-half_width, half_width), z=(-half_width, half_width))


@dataclass(frozen=True, eq=False)
class AssumptionReport:
    which: str
    passed: bool
    worst_margin: float
    witness: dict
    excluded: int
    n_samples: int
    samples: dict = field(repr=False)
    margins: np.ndarray = field(repr=False)
    lhs: np.ndarray = field(repr=False)
    rtol: float = 1e-7


KINK_RADIUS = 1e-6


def _fd_step(v):
    return 1e-5 * (1.0 + np.abs(v))


def _sample(rng, box: SamplingBox, n: int) -> dict:
    u = lambda lo_hi: rng.uniform(lo_hi[0], lo_hi[1], n)  # noqa: E731
    pts = {"t": u(box.t), "x": u(box.x), "y": u(box.y), "z": u(box.z)}
    # half of the partner points are near neighbours to probe local slopes
    near = np.arange(n) < n // 2
    for key in ("x", "y", "z"):
        lo, hi = getattr(box, key)
        jitter = rng.normal(0.0, 1e-2 * (hi - lo), n)
        pts[key + "2"] = np.where(near, np.clip(pts[key] + jitter, lo, hi), u((lo, hi)))
    return pts


def _need_const(value, name, which):
    if value is None:
        raise ConfigError(f"{which} needs the Lipschitz-type constant {name} in growth")
    return value


def _margins(p: ProblemSpec, which: str, s: dict):
    """Per-sample (margin, lhs, scale, excluded mask); margin >= 0 means the inequality holds."""
    g = p.growth
    fwd = p.forward
    C = g.C_growth
    f = lambda t, x, y, z: p.generator(t, x, y, z, fwd)  # noqa: E731
    t, x, y, z = s["t"], s["x"], s["y"], s["z"]
    x2, y2, z2 = s["x2"], s["y2"], s["z2"]
    excl = np.zeros(t.shape, dtype=bool)
    ax, az = np.abs(x), np.abs(z)

    if which == "F1":
        b0 = np.abs(fwd.b(t, np.zeros_like(x)))
        db = np.abs(fwd.b(t, x) - fwd.b(t, x2))
        rhs = fwd.K_b * np.abs(x - x2) * (1 + 1e-9)
        margin = np.minimum(C - b0, rhs - db)
        return margin, db, 1 + db + rhs, excl
    if which == "F2":
        hx, ht = _fd_step(x), 1e-5 * max(p.T, 1.0)
        bx = (fwd.b(t, x + hx) - fwd.b(t, x - hx)) / (2 * hx)
        lo, hi = np.maximum(t - ht, 0.0), np.minimum(t + ht, p.T)
        dsig = (fwd.sig(hi) - fwd.sig(lo)) / (hi - lo)
        sig = fwd.sig(t)
        lhs = np.abs(sig * (sig * bx - dsig))
        rhs = fwd.lambda_F2 * sig**2
        return rhs - lhs, lhs, 1 + lhs + rhs, excl
    if which == "B1":
        delta = _need_const(g.delta, "delta", which)
        gamma = _need_const(g.gamma, "gamma", which)
        beta = _need_const(g.beta, "beta", which)
        dfy = np.abs(f(t, x, y, z) - f(t, x, y2, z))
        ma = delta * np.abs(y - y2) - dfy
        dfz = np.abs(f(t, x, y, z) - f(t, x, y, z2))
        rz = (C + gamma / 2 * (az**g.l + np.abs(z2) ** g.l)) * np.abs(z - z2)
        mb = rz - dfz
        dfx = np.abs(f(t, x, y, z) - f(t, x2, y, z))
        rx = (C + beta / 2 * (spow(ax, g.r_f) + spow(np.abs(x2), g.r_f))) * np.abs(x - x2)
        mc = rx - dfx
        margin = np.minimum(np.minimum(ma, mb), mc)
        scale = 1 + dfy + dfz + dfx + rz + rx
        return margin, np.maximum(np.maximum(dfy, dfz), dfx), scale, excl
    fv = f(t, x, y, z)
    upper = C + g.beta_bar * spow(ax, g.r_f + 1) + g.delta_bar * np.abs(y) + g.gamma_bar * az ** (g.l + 1)
    base_lower = -C - g.beta_bar * spow(ax, g.r_f + 1) - g.delta_bar * np.abs(y)
    if which == "B2a":
        return upper - np.abs(fv), fv, 1 + np.abs(fv) + np.abs(upper), excl
    if which == "B2b":
        lower = base_lower - g.gamma_bar * spow(az, g.eta)
        return np.minimum(fv - lower, upper - fv), fv, 1 + np.abs(fv) + np.abs(upper) + np.abs(lower), excl
    if which == "B2c":
        if g.epsilon <= 0:
            raise ConfigError("B2c needs epsilon > 0")
        lower = base_lower + g.epsilon * az ** (g.l + 1)
        return np.minimum(fv - lower, upper - fv), fv, 1 + np.abs(fv) + np.abs(upper) + np.abs(lower), excl
    if which == "B3":
        excl = az < KINK_RADIUS
        h = _fd_step(z)
        with np.errstate(all="ignore"):
            dfz = (f(t, x, y, z + h) - f(t, x, y, z - h)) / (2 * h)
        lhs = fv - z * dfz
        bad = ~np.isfinite(lhs) & ~excl
        if np.any(bad):
            raise GradientError(f"non-finite z-derivative at z={z[bad][0]:g}")
        rhs = C - g.epsilon * az ** (g.l + 1)
        return rhs - lhs, lhs, 1 + np.abs(lhs) + np.abs(rhs) + np.abs(z * dfz), excl
    gx = p.terminal(x)
    if which == "TC1":
        alpha = _need_const(g.alpha, "alpha", which)
        dg = np.abs(gx - p.terminal(x2))
        rhs = (C + alpha / 2 * (spow(ax, g.r_g) + spow(np.abs(x2), g.r_g))) * np.abs(x - x2)
        return rhs - dg, dg, 1 + dg + rhs, excl
    if which == "TC2":
        rhs = C + g.alpha_bar * spow(ax, g.p_g)
        return rhs - np.abs(gx), gx, 1 + np.abs(gx) + rhs, excl
    raise ConfigError(f"unknown assumption {which!r}")


def _evaluate(p, which, samples, rtol):
    margin, lhs, scale, excl = _margins(p, which, samples)
    slack = margin + rtol * scale
    return margin, lhs, slack, excl


def check_assumption(p: ProblemSpec, which: str, box: Optional[SamplingBox] = None,
                     n_samples: int = 4000, seed: int = 0, rtol: float = 1e-7) -> AssumptionReport:
    """Sample the box and test one assumption with the problem's declared constants.

    A sample passes when ``margin >= -rtol * scale``, the scale being the size
    of the terms compared.  Samples inside the kink ball around ``z = 0`` are
    excluded from derivative-based checks and counted in ``excluded``.
    """
    if which not in ASSUMPTIONS:
        raise ConfigError(f"unknown assumption {which!r}")
    if n_samples < 1000:
        raise ConfigError("n_samples must be at least 1000")
    box = box or SamplingBox.for_problem(p)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(ASSUMPTIONS.index(which),)))
    samples = _sample(rng, box, n_samples)
    margin, lhs, slack, excl = _evaluate(p, which, samples, rtol)
    live = ~excl
    if not np.any(live):
        raise GradientError("every sample fell inside the kink exclusion ball")
    masked = np.where(live, slack, np.inf)
    worst = int(np.argmin(masked))
    witness = {k: float(v[worst]) for k, v in samples.items()}
    witness["lhs"] = float(lhs[worst])
    return AssumptionReport(
        which=which, passed=bool(masked[worst] >= 0), worst_margin=float(margin[worst]),
        witness=witness, excluded=int(excl.sum()), n_samples=n_samples, samples=samples,
        margins=np.where(live, margin, np.nan), lhs=lhs, rtol=rtol)


def recheck(p: ProblemSpec, report: AssumptionReport) -> bool:
    """Recompute the inequality on the stored samples; True iff it reproduces the verdict."""
    margin, _, slack, excl = _evaluate(p, report.which, report.samples, report.rtol)
    live = ~excl
    verdict = bool(np.all(slack[live] >= 0))
    return verdict == report.passed and np.allclose(margin[live], report.margins[live])


def verify_claims(p: ProblemSpec, box: Optional[SamplingBox] = None, n_samples: int = 4000,
                  seed: int = 0) -> dict:
    """Run the checker for every assumption the generator claims."""
    return {w: check_assumption(p, w, box, n_samples, seed) for w in sorted(p.generator.claimed_assumptions)}
