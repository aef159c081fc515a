"""Finite-difference oracle for the semilinear terminal-value problem

    -u_t = 1/2 sigma(t)^2 u_xx + b(t, x) u_x + f(t, x, u, sigma(t) u_x),   u(T, .) = g,

so that Y_t = u(t, X_t) and Z_t = sigma(t) u_x(t, X_t).

The sweep runs backward from T.  Diffusion is fully implicit (one tridiagonal
solve per step); drift and nonlinearity are explicit in the previous level.
The outer nodes are eliminated by linear extrapolation (zero second
difference), which keeps the system tridiagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from .bounds import BoundParams, z_temporal_bound, y_bound
from .csvio import write_rows
from .errors import BlowUpError, CflError, ConfigError, FitError
from .problem import ProblemSpec

MIN_FIT_SAMPLES = 8
MIN_R2 = 0.9
FLAT_RMS = 1e-2


@dataclass(frozen=True)
class PdeConfig:
    N_x: int = 400
    N_t: Optional[int] = None
    x_min: Optional[float] = None
    x_max: Optional[float] = None
    k_sigma: float = 6.0
    boundary: str = "linear-extrapolation"
    gradient_clip: Optional[BoundParams] = None
    y_envelope: Optional[BoundParams] = None
    theta: float = 1.0
    cfl_factor: float = 0.5
    max_steps: int = 200_000

    def __post_init__(self):
        if self.N_x < 32:
            raise ConfigError("N_x must be at least 32")
        if self.N_t is not None and self.N_t < 1:
            raise ConfigError("N_t must be positive")
        if self.boundary != "linear-extrapolation":
            raise ConfigError("only the linear-extrapolation boundary is supported")
        if self.theta != 1.0:
            raise ConfigError("theta is fixed to 1 (fully implicit diffusion)")
        if self.gradient_clip is not None and self.gradient_clip.kind != "z_temporal":
            raise ConfigError("gradient_clip must be a z_temporal bound")
        if self.y_envelope is not None and self.y_envelope.kind != "y_growth":
            raise ConfigError("y_envelope must be a y_growth bound")


@dataclass(frozen=True, eq=False)
class ValueField:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray  # (N_t + 1, N_x + 1)
    ux: np.ndarray
    sigma: np.ndarray  # sigma(t) per time level
    clipped: np.ndarray  # bool mask, same shape as u
    metadata: dict = field(default_factory=dict)

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def z(self) -> np.ndarray:
        return self.sigma[:, None] * self.ux

    @property
    def clip_events(self) -> int:
        return int(self.clipped.sum())

    def value_at(self, x, k: int = 0):
        """Linear interpolation of u at time level ``k``."""
        return np.interp(x, self.x, self.u[k])

    def gradient_at(self, x, k: int = 0):
        return np.interp(x, self.x, self.ux[k])

    def write_csv(self, path, levels=None):
        levels = range(len(self.t)) if levels is None else levels
        rows = ((self.t[k], self.x[j], self.u[k, j], self.ux[k, j], bool(self.clipped[k, j]))
                for k in levels for j in range(len(self.x)))
        return write_rows(path, ["t", "x", "u", "ux", "clipped"], rows)


def gradient(u: np.ndarray, dx: float) -> np.ndarray:
    """Central differences inside, one-sided at both ends."""
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - u[:-2]) / (2 * dx)
    out[0] = (u[1] - u[0]) / dx
    out[-1] = (u[-1] - u[-2]) / dx
    return out


def spatial_domain(p: ProblemSpec, cfg: PdeConfig) -> tuple[float, float]:
    if cfg.x_min is not None and cfg.x_max is not None:
        lo, hi = cfg.x_min, cfg.x_max
    else:
        fwd = p.forward
        half = cfg.k_sigma * fwd.sigma_max() * math.sqrt(p.T)
        for _ in range(2):
            half = cfg.k_sigma * fwd.sigma_max() * math.sqrt(p.T) + fwd.drift_max(p.x0 - half, p.x0 + half) * p.T
        lo = p.x0 - half if cfg.x_min is None else cfg.x_min
        hi = p.x0 + half if cfg.x_max is None else cfg.x_max
    if not lo < p.x0 < hi:
        raise ConfigError("spatial domain must contain x0 strictly inside")
    return lo, hi


def _clip_bound(cfg: PdeConfig, T: float, t: float, dt: float, x: np.ndarray):
    t_eff = min(t, T - dt)
    return z_temporal_bound(cfg.gradient_clip, t_eff, x)


def max_z_slope(p: ProblemSpec, x: np.ndarray, z_max: float, y_range: tuple) -> float:
    """Largest |df/dz| over a coarse (t, x, y) lattice and |z| <= z_max."""
    ts = np.linspace(0.0, p.T, 5)
    xs = x[:: max(1, len(x) // 32)]
    ys = np.linspace(y_range[0], y_range[1], 5)
    zs = np.linspace(-z_max, z_max, 65)
    tt, xx, yy, zz = np.meshgrid(ts, xs, ys, zs, indexing="ij")
    h = 1e-6 * (1.0 + np.abs(zz))
    with np.errstate(all="ignore"):
        df = (p.generator(tt, xx, yy, zz + h, p.forward) - p.generator(tt, xx, yy, zz - h, p.forward)) / (2 * h)
    return float(np.nanmax(np.abs(df)))


def stable_dt(p: ProblemSpec, cfg: PdeConfig, x: np.ndarray, dt_guess: float) -> tuple[float, float]:
    """(maximal admissible dt, transport speed) under dt <= cfl_factor * dx / L."""
    dx = x[1] - x[0]
    g = p.terminal(x)
    sig = p.forward.sigma_max()
    z_term = float(np.max(np.abs(sig * gradient(g, dx))))
    if cfg.gradient_clip is not None:
        z_term = min(z_term, float(np.max(_clip_bound(cfg, p.T, p.T, dt_guess, x))))
    z_max = 1.25 * max(z_term, 1.0)
    y_range = (float(g.min()) - 1.0, float(g.max()) + 1.0)
    speed = sig * max_z_slope(p, x, z_max, y_range) + p.forward.drift_max(x[0], x[-1])
    if speed == 0:
        return math.inf, 0.0
    return cfg.cfl_factor * dx / speed, speed


def _steps(p: ProblemSpec, cfg: PdeConfig, x: np.ndarray) -> int:
    if cfg.N_t is not None:
        dt = p.T / cfg.N_t
        dt_max, speed = stable_dt(p, cfg, x, dt)
        if dt > dt_max * (1 + 1e-12):
            raise CflError(f"dt = {dt:.3g} exceeds the stability limit {dt_max:.3g} "
                           f"(transport speed {speed:.3g}); need N_t >= {math.ceil(p.T / dt_max)}")
        return cfg.N_t
    N = 100
    for _ in range(20):
        dt_max, _ = stable_dt(p, cfg, x, p.T / N)
        need = math.ceil(p.T / dt_max) if math.isfinite(dt_max) else N
        if need <= N:
            return N
        N = need
    if N > cfg.max_steps:
        raise CflError(f"stability requires {N} steps, above max_steps")
    return N


def _implicit_bands(a: np.ndarray) -> np.ndarray:
    """Banded matrix of I - a D2 on the nodes 1..n-2, with the outer rows reduced to identity."""
    m = a.size
    ab = np.zeros((3, m))
    ab[0, 1:] = -a[:-1]
    ab[1, :] = 1.0 + 2.0 * a
    ab[2, :-1] = -a[1:]
    # u_0 = 2u_1 - u_2 (and symmetric) collapses the first and last rows to u_j = rhs_j
    ab[1, 0] = 1.0
    ab[0, 1] = 0.0
    ab[1, -1] = 1.0
    ab[2, -2] = 0.0
    return ab


def _sweep(p: ProblemSpec, x: np.ndarray, N_t: int, terminal: np.ndarray,
           explicit: Callable, check: Optional[Callable] = None):
    T = p.T
    dx = x[1] - x[0]
    dt = T / N_t
    t = np.linspace(0.0, T, N_t + 1)
    sig = p.forward.sig(t)
    U = np.empty((N_t + 1, x.size))
    UX = np.empty_like(U)
    clipped = np.zeros(U.shape, dtype=bool)
    U[-1] = terminal
    UX[-1] = gradient(terminal, dx)
    for n in range(N_t, 0, -1):
        un, uxn = U[n], UX[n]
        source, clip_mask = explicit(n, t[n], un, uxn)
        clipped[n] = clip_mask
        rhs = un + dt * (p.forward.b(t[n], x) * uxn + source)
        a = np.full(x.size - 2, 0.5 * sig[n - 1] ** 2 * dt / dx**2)
        inner = solve_banded((1, 1), _implicit_bands(a), rhs[1:-1], check_finite=False)
        new = np.empty_like(un)
        new[1:-1] = inner
        new[0] = 2 * inner[0] - inner[1]
        new[-1] = 2 * inner[-1] - inner[-2]
        if not np.all(np.isfinite(new)):
            raise BlowUpError(f"non-finite values at t={t[n - 1]:g}")
        if check is not None:
            check(t[n - 1], new)
        U[n - 1] = new
        UX[n - 1] = gradient(new, dx)
    return t, sig, U, UX, clipped


def solve_pde(p: ProblemSpec, cfg: PdeConfig = PdeConfig()) -> ValueField:
    """Backward IMEX sweep returning u and u_x on the full (t, x) grid."""
    if p.forward.dimension != 1:
        raise ConfigError("the PDE oracle is one-dimensional")
    lo, hi = spatial_domain(p, cfg)
    x = np.linspace(lo, hi, cfg.N_x + 1)
    N_t = _steps(p, cfg, x)
    dt = p.T / N_t
    fwd = p.forward

    def explicit(n, tn, un, uxn):
        z = fwd.sig(tn) * uxn
        mask = np.zeros(z.shape, dtype=bool)
        if cfg.gradient_clip is not None:
            bound = _clip_bound(cfg, p.T, tn, dt, x)
            mask = np.abs(z) > bound
            z = np.clip(z, -bound, bound)
        return p.generator(tn, x, un, z, fwd), mask

    def check(tk, u):
        env = y_bound(cfg.y_envelope, tk, x)
        if np.any(np.abs(u) > 10 * env):
            raise BlowUpError(f"|u| exceeds 10x the growth envelope at t={tk:g}")

    guard = check if cfg.y_envelope is not None else None
    t, sig, U, UX, clipped = _sweep(p, x, N_t, p.terminal(x), explicit, guard)
    meta = {"scheme": "imex-implicit-diffusion", "N_x": cfg.N_x, "N_t": N_t, "dt": dt,
            "dx": float(x[1] - x[0]), "x_min": lo, "x_max": hi,
            "clip_events": int(clipped.sum()), "problem": p.label}
    return ValueField(t, x, U, UX, sig, clipped, meta)


def conditional_power_integral(p: ProblemSpec, fld: ValueField, power: float) -> np.ndarray:
    """w(t, x) = E[int_t^T |Z_s|^power ds | X_t = x] from the linear backward equation."""
    x = fld.x
    N_t = len(fld.t) - 1
    zpow = np.abs(fld.z) ** power

    def explicit(n, tn, un, uxn):
        return zpow[n], np.zeros(x.shape, dtype=bool)

    _, _, W, _, _ = _sweep(p, x, N_t, np.zeros_like(x), explicit)
    return W


@dataclass(frozen=True)
class RateFit:
    exponent: float
    r2: float
    intercept: float
    n_samples: int
    tau: np.ndarray
    max_grad: np.ndarray


def extract_rate_near_T(fld: ValueField, window: Optional[tuple] = None, kink_points=(0.0,),
                        n_points: int = 30, boundary_nodes: int = 2) -> RateFit:
    """Slope of log max_x |u_x(t, x)| against log(T - t) over a window of T - t.

    The two time levels closest to T, the cells touching each kink and
    ``boundary_nodes`` nodes at each end are excluded.  Nearly flat data
    (residual rms below 1e-2 in log space) is accepted regardless of R^2.
    """
    T = fld.T
    tau_all = T - fld.t
    dt = fld.t[1] - fld.t[0]
    dx = fld.x[1] - fld.x[0]
    lo, hi = window if window is not None else (max(3 * dt, 10 * dx * dx), 0.1 * T)
    lo = max(lo, 2.5 * dt)
    eligible = np.flatnonzero((tau_all >= lo) & (tau_all <= hi))
    eligible = eligible[eligible <= len(fld.t) - 3]
    if eligible.size < MIN_FIT_SAMPLES:
        raise FitError(f"only {eligible.size} time levels in the window")
    targets = np.geomspace(tau_all[eligible].min(), tau_all[eligible].max(), n_points)
    picks = np.unique([eligible[np.argmin(np.abs(tau_all[eligible] - s))] for s in targets])
    if picks.size < MIN_FIT_SAMPLES:
        raise FitError(f"only {picks.size} distinct samples in the window")
    keep = np.ones(fld.x.size, dtype=bool)
    keep[:boundary_nodes] = False
    keep[fld.x.size - boundary_nodes:] = False
    for k in kink_points:
        keep &= np.abs(fld.x - k) > dx * (1 + 1e-9)
    grad = np.max(np.abs(fld.ux[picks][:, keep]), axis=1)
    tau = tau_all[picks]
    lx, ly = np.log(tau), np.log(grad)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    rms = math.sqrt(ss_res / picks.size)
    if r2 < MIN_R2 and rms > FLAT_RMS:
        raise FitError(f"poor fit: R^2 = {r2:.3f}")
    return RateFit(float(slope), r2, float(intercept), int(picks.size), tau, grad)
