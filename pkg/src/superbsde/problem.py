"""Forward-backward problem definitions and pointwise evaluation of b, sigma, f, g.

Everything here is vectorised: state, y and z arguments may be numpy arrays of
any broadcast-compatible shapes.  Only one-dimensional problems are solved, so
``x`` and ``z`` are scalars per sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Any, Mapping, Optional

import numpy as np

from .errors import ConfigError, EvaluationError
from .expr import Expression

ASSUMPTIONS = ("F1", "F2", "B1", "B2a", "B2b", "B2c", "B3", "TC1", "TC2")

GENERATOR_FAMILIES = ("power", "kpz", "manufactured", "expr")
TERMINAL_FAMILIES = ("power", "lipschitz", "linear", "step", "expr", "supconv")


def _freeze(mapping):
    return MappingProxyType(dict(mapping or {}))


def spow(base, exponent):
    """``base**exponent`` for ``base >= 0`` with 0**0 = 1 and 0**positive = 0."""
    base = np.asarray(base, dtype=float)
    if exponent == 0:
        return np.ones_like(base)
    return np.power(base, exponent)


@dataclass(frozen=True)
class GrowthParams:
    l: float = 2.0
    r_f: float = 0.0
    r_g: float = 0.0
    p_g: float = 0.0
    alpha_bar: float = 0.0
    beta_bar: float = 0.0
    gamma_bar: float = 0.0
    delta_bar: float = 0.0
    epsilon: float = 0.0
    eta: float = 0.0
    C_growth: float = 1.0
    alpha: Optional[float] = None
    beta: Optional[float] = None
    gamma: Optional[float] = None
    delta: Optional[float] = None

    def __post_init__(self):
        if not self.l > 1:
            raise ConfigError(f"l must exceed 1 (superquadratic regime), got {self.l}")
        for name in ("r_f", "r_g", "p_g", "alpha_bar", "beta_bar", "gamma_bar",
                     "delta_bar", "epsilon", "C_growth"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be nonnegative")
        for name in ("alpha", "beta", "gamma", "delta"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not 0 <= self.eta < self.l + 1:
            raise ConfigError(f"eta must lie in [0, l+1), got {self.eta}")

    def violations(self, theorem: bool = False, need_epsilon: bool = False) -> list[str]:
        """Exponent-range conditions that fail; empty when admissible."""
        out = []
        if self.r_f * self.l >= 1:
            out.append(f"r_f*l = {self.r_f * self.l:g} >= 1")
        if self.r_g * self.l >= 1:
            out.append(f"r_g*l = {self.r_g * self.l:g} >= 1")
        if self.p_g >= 1 + 1 / self.l:
            out.append(f"p_g = {self.p_g:g} >= 1 + 1/l = {1 + 1 / self.l:g}")
        if theorem and self.p_g * self.l >= 1:
            out.append(f"p_g*l = {self.p_g * self.l:g} >= 1")
        if need_epsilon and self.epsilon <= 0:
            out.append("epsilon must be positive")
        return out

    def require_admissible(self, theorem: bool = False, need_epsilon: bool = False):
        bad = self.violations(theorem, need_epsilon)
        if bad:
            raise ConfigError("inadmissible growth parameters: " + "; ".join(bad))


def _expr_or_const(value, allowed):
    if isinstance(value, Expression):
        expr = value
    elif isinstance(value, str):
        expr = Expression(value)
    else:
        return float(value)
    if not expr.variables <= set(allowed):
        raise ConfigError(f"expression {expr.text!r} may only use {sorted(allowed)}")
    return expr


@dataclass(frozen=True)
class ForwardModel:
    """dX = b(t, X) dt + sigma(t) dW on [0, T]."""

    x0: float = 0.0
    T: float = 1.0
    drift: Any = 0.0
    sigma: Any = 1.0
    K_b: Optional[float] = None
    lambda_F2: float = 0.0
    dimension: int = 1

    def __post_init__(self):
        if self.dimension != 1:
            raise ConfigError("only dimension 1 is supported by the solvers")
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if not math.isfinite(self.x0):
            raise ConfigError("x0 must be finite")
        object.__setattr__(self, "drift", _expr_or_const(self.drift, ("t", "x")))
        object.__setattr__(self, "sigma", _expr_or_const(self.sigma, ("t",)))
        if self.K_b is None:
            if isinstance(self.drift, Expression) and "x" in self.drift.variables:
                raise ConfigError("a state-dependent drift must declare K_b")
            object.__setattr__(self, "K_b", 0.0)
        if self.K_b < 0 or self.lambda_F2 < 0:
            raise ConfigError("K_b and lambda_F2 must be nonnegative")

    def b(self, t, x):
        if isinstance(self.drift, Expression):
            return self.drift(t=t, x=x)
        return np.full(np.broadcast_shapes(np.shape(t), np.shape(x)), self.drift)

    def sig(self, t):
        if isinstance(self.sigma, Expression):
            return self.sigma(t=t)
        return np.full(np.shape(t), self.sigma)

    def sigma_max(self, n=257):
        return float(np.max(np.abs(self.sig(np.linspace(0.0, self.T, n)))))

    def drift_max(self, x_lo, x_hi, n=257):
        tt, xx = np.meshgrid(np.linspace(0.0, self.T, 33), np.linspace(x_lo, x_hi, n))
        return float(np.max(np.abs(self.b(tt, xx))))


def _project(M, x):
    # local import: supconv depends on this module
    from .supconv import SmoothProjection, smooth_project

    return smooth_project(SmoothProjection(M), x)


@dataclass(frozen=True)
class GeneratorSpec:
    """Driver f(t, x, y, z).

    Families and their parameters:

    ``power``
        ``c0 + c_x |x|^(r_f+1) + c_y y + c_z |z|^q + source(t, x)``
    ``kpz``
        ``lam |z|^q``
    ``manufactured``
        ``h(t, x) + c_z |z|^q`` with ``h`` chosen so that
        ``u(t, x) = exp(-t) sin(x)`` solves the associated PDE exactly.
    ``expr``
        arbitrary expression in t, x, y, z.
    """

    family: str = "power"
    params: Mapping[str, Any] = field(default_factory=dict)
    claimed_assumptions: frozenset = frozenset()
    projection_M: Optional[float] = None

    def __post_init__(self):
        if self.family not in GENERATOR_FAMILIES:
            raise ConfigError(f"unknown generator family {self.family!r}")
        params = dict(self.params)
        if self.family == "power":
            params = {"c0": 0.0, "c_x": 0.0, "c_y": 0.0, "c_z": 0.0, "q": 2.0,
                      "r_f": 0.0, "source": None, **params}
            if params["source"] is not None:
                params["source"] = _expr_or_const(params["source"], ("t", "x"))
        elif self.family == "kpz":
            params = {"lam": 1.0, "q": 3.0, **params}
        elif self.family == "manufactured":
            params = {"c_z": 1.0, "q": 3.0, **params}
        else:
            if "expr" not in params:
                raise ConfigError("expr generator needs an 'expr' parameter")
            params["expr"] = _expr_or_const(params["expr"], ("t", "x", "y", "z"))
            if not isinstance(params["expr"], Expression):
                params["expr"] = Expression(repr(params["expr"]))
        claims = frozenset(self.claimed_assumptions)
        unknown = claims - set(ASSUMPTIONS)
        if unknown:
            raise ConfigError(f"unknown assumptions {sorted(unknown)}")
        object.__setattr__(self, "params", _freeze(params))
        object.__setattr__(self, "claimed_assumptions", claims)

    @property
    def z_exponent(self) -> Optional[float]:
        p = self.params
        if self.family == "power" and p["c_z"] != 0:
            return float(p["q"])
        if self.family == "kpz" and p["lam"] != 0:
            return float(p["q"])
        if self.family == "manufactured" and p["c_z"] != 0:
            return float(p["q"])
        return None

    def terms(self, t, x, y, z, forward: ForwardModel) -> dict:
        """Named additive terms of f; their sum is f."""
        p = self.params
        if self.projection_M is not None:
            x = _project(self.projection_M, x)
        az = np.abs(z)
        if self.family == "power":
            out = {
                "c0": np.full(np.shape(az), float(p["c0"])),
                "c_x|x|^(r_f+1)": p["c_x"] * spow(np.abs(x), p["r_f"] + 1),
                "c_y*y": p["c_y"] * np.asarray(y, dtype=float),
                "c_z|z|^q": p["c_z"] * spow(az, p["q"]),
            }
            src = p["source"]
            if src is not None:
                out["source"] = src(t=t, x=x) if isinstance(src, Expression) else np.full(np.shape(x), src)
            return out
        if self.family == "kpz":
            return {"lam|z|^q": p["lam"] * spow(az, p["q"])}
        if self.family == "manufactured":
            return {"h(t,x)": manufactured_source(forward, p["c_z"], p["q"], t, x),
                    "c_z|z|^q": p["c_z"] * spow(az, p["q"])}
        return {p["expr"].text: p["expr"](t=t, x=x, y=y, z=z)}

    def __call__(self, t, x, y, z, forward: ForwardModel):
        with np.errstate(all="ignore"):
            terms = self.terms(t, x, y, z, forward)
            total = 0.0
            for value in terms.values():
                total = total + value
        total = np.asarray(total, dtype=float)
        if not np.all(np.isfinite(total)):
            for name, value in terms.items():
                if not np.all(np.isfinite(value)):
                    raise EvaluationError("non-finite generator value", term=name)
            raise EvaluationError("non-finite generator value", term="sum")
        shape = np.broadcast_shapes(np.shape(t), np.shape(x), np.shape(y), np.shape(z))
        return np.broadcast_to(total, shape).copy()


def manufactured_target(t, x):
    """u*(t, x) = exp(-t) sin(x) and its derivatives (u, u_t, u_x, u_xx)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    u = np.exp(-t) * np.sin(x)
    ux = np.exp(-t) * np.cos(x)
    return u, -u, ux, -u


def manufactured_source(forward: ForwardModel, c_z, q, t, x):
    # h = -u_t - sigma^2/2 u_xx - b u_x - c_z |sigma u_x|^q
    u, ut, ux, uxx = manufactured_target(t, x)
    s = forward.sig(t)
    return -ut - 0.5 * s * s * uxx - forward.b(t, x) * ux - c_z * spow(np.abs(s * ux), q)


@dataclass(frozen=True)
class TerminalSpec:
    """Terminal condition g(x).

    ``power``: ``coef |x|^p + offset``; ``lipschitz``: ``slope |x - center| + offset``;
    ``linear``: ``c x + d``; ``step``: ``low`` for x < jump, ``high`` for x >= jump;
    ``expr``: expression in x; ``supconv``: sup-convolution of ``params['base']``.
    """

    family: str = "linear"
    params: Mapping[str, Any] = field(default_factory=dict)
    lsc_flag: bool = False
    projection_M: Optional[float] = None

    def __post_init__(self):
        if self.family not in TERMINAL_FAMILIES:
            raise ConfigError(f"unknown terminal family {self.family!r}")
        defaults = {
            "power": {"coef": 1.0, "p": 0.5, "offset": 0.0},
            "lipschitz": {"slope": 1.0, "center": 0.0, "offset": 0.0},
            "linear": {"c": 1.0, "d": 0.0},
            "step": {"jump": 0.0, "low": 0.0, "high": 1.0},
            "expr": {},
            "supconv": {"refine": False, "h_u": 1e-3, "search_radius_factor": 1.0},
        }[self.family]
        params = {**defaults, **dict(self.params)}
        if self.family == "expr":
            if "expr" not in params:
                raise ConfigError("expr terminal needs an 'expr' parameter")
            params["expr"] = _expr_or_const(params["expr"], ("x",))
            if not isinstance(params["expr"], Expression):
                params["expr"] = Expression(repr(params["expr"]))
        if self.family == "supconv":
            for key in ("base", "n", "C_growth", "alpha_bar", "p_g"):
                if key not in params:
                    raise ConfigError(f"supconv terminal needs {key!r}")
            if not isinstance(params["base"], TerminalSpec):
                raise ConfigError("supconv base must be a TerminalSpec")
        object.__setattr__(self, "params", _freeze(params))

    @property
    def lower_semicontinuous(self) -> bool:
        """Continuous families and the step (by its jump convention) qualify; expressions must declare it."""
        if self.family == "supconv":
            return self.params["base"].lower_semicontinuous
        return self.lsc_flag or self.family != "expr"

    def lipschitz_constant(self) -> Optional[float]:
        """Global Lipschitz constant when the family has a closed form, else None."""
        p = self.params
        if self.projection_M is not None:
            base = replace(self, projection_M=None).lipschitz_constant()
            return base
        if self.family == "linear":
            return abs(p["c"])
        if self.family == "lipschitz":
            return abs(p["slope"])
        if self.family == "supconv":
            return float(p["n"])
        if self.family == "power" and p["p"] == 1:
            return abs(p["coef"])
        if self.family == "power" and (p["p"] == 0 or p["coef"] == 0):
            return 0.0
        if self.family == "step" and p["low"] == p["high"]:
            return 0.0
        return None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.projection_M is not None:
            x = _project(self.projection_M, x)
        p = self.params
        with np.errstate(all="ignore"):
            if self.family == "power":
                out = p["coef"] * spow(np.abs(x), p["p"]) + p["offset"]
            elif self.family == "lipschitz":
                out = p["slope"] * np.abs(x - p["center"]) + p["offset"]
            elif self.family == "linear":
                out = p["c"] * x + p["d"]
            elif self.family == "step":
                out = np.where(x < p["jump"], float(p["low"]), float(p["high"]))
            elif self.family == "expr":
                out = p["expr"](x=x)
            else:
                from .supconv import SupConvConfig, sup_convolve

                cfg = SupConvConfig(n=p["n"], h_u=p["h_u"], refine=p["refine"],
                                    search_radius_factor=p["search_radius_factor"])
                out = sup_convolve(p["base"], cfg, x, C_growth=p["C_growth"],
                                   alpha_bar=p["alpha_bar"], p_g=p["p_g"]).value
        out = np.asarray(out, dtype=float)
        if not np.all(np.isfinite(out)):
            raise EvaluationError("non-finite terminal value", term=self.family)
        return out


@dataclass(frozen=True)
class ProblemSpec:
    forward: ForwardModel
    generator: GeneratorSpec
    terminal: TerminalSpec
    growth: GrowthParams
    label: str = ""

    def __post_init__(self):
        q = self.generator.z_exponent
        if q is not None and q > 2 and not math.isclose(q, self.growth.l + 1):
            raise ConfigError(
                f"generator z-exponent {q:g} disagrees with l+1 = {self.growth.l + 1:g}",
                path="problem.generator.params.q")
        if self.generator.family == "power" and self.generator.params["c_x"] != 0:
            if not math.isclose(self.generator.params["r_f"], self.growth.r_f):
                raise ConfigError("generator r_f disagrees with growth.r_f",
                                  path="problem.generator.params.r_f")

    @property
    def T(self) -> float:
        return self.forward.T

    @property
    def x0(self) -> float:
        return self.forward.x0

    def with_terminal(self, terminal: TerminalSpec, label=None) -> "ProblemSpec":
        return replace(self, terminal=terminal, label=label or self.label)

    def with_generator(self, generator: GeneratorSpec, label=None) -> "ProblemSpec":
        return replace(self, generator=generator, label=label or self.label)


def eval_generator(p: ProblemSpec, t, x, y, z):
    """f(t, x, y, z) for the problem's driver."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > p.T * (1 + 1e-12)):
        raise ValueError("t outside [0, T]")
    for name, value in (("x", x), ("y", y), ("z", z)):
        if not np.all(np.isfinite(value)):
            raise EvaluationError("non-finite argument", term=name)
    return p.generator(t, x, y, z, p.forward)


def eval_terminal(p: ProblemSpec, x):
    if not np.all(np.isfinite(x)):
        raise EvaluationError("non-finite argument", term="x")
    return p.terminal(x)


def truncated_problem(p: ProblemSpec, M: float) -> ProblemSpec:
    """The problem with g and f composed with the smooth projection of radius M."""
    return replace(
        p,
        generator=replace(p.generator, projection_M=M),
        terminal=replace(p.terminal, projection_M=M),
        label=f"{p.label}[M={M:g}]",
    )
