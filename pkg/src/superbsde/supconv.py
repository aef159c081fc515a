"""Sup-convolution of terminal data and the smooth radial projection.

``sup_convolve`` approximates ``g_n(x) = sup_u g(u) - n|x - u|`` by a maximum
over a finite candidate set: the points of the fixed lattice ``h_u * Z`` that
lie inside a certified search radius, plus ``u = x`` itself.  The lattice part
is evaluated for many ``x`` at once with running prefix/suffix maxima, so the
cost is linear in the number of lattice points plus the number of queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, GrowthError

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_MAX_RADIUS_DOUBLINGS = 30


@dataclass(frozen=True)
class SupConvConfig:
    n: float
    h_u: float = 1e-3
    search_radius_factor: float = 1.0
    refine: bool = False

    def __post_init__(self):
        if not self.n > 0:
            raise ConfigError("n must be positive")
        if not self.h_u > 0:
            raise ConfigError("h_u must be positive")
        if not self.search_radius_factor > 0:
            raise ConfigError("search_radius_factor must be positive")


@dataclass(frozen=True)
class SmoothProjection:
    M: float
    transition_width: float = 1.0

    def __post_init__(self):
        if self.transition_width != 1.0:
            raise ConfigError("transition_width is fixed to 1")
        if not self.M >= 2:
            raise ConfigError("M must be at least 2")


class SupConvResult(NamedTuple):
    value: np.ndarray
    gap: np.ndarray
    grid_value: np.ndarray
    local_slope: np.ndarray
    radius: np.ndarray


def smooth_project(rho: SmoothProjection, x):
    """Radial C^1 map equal to x on |x| <= M-1 and saturating at |x| = M beyond M+1.

    On the transition shell the radius follows the cubic Hermite interpolant
    from (M-1, M-1, slope 1) to (M+1, M, slope 0), which reduces to
    ``s = M - 1 + 2 tau - tau^2`` with ``tau = (|x| - M + 1) / 2``.
    """
    x = np.asarray(x, dtype=float)
    r = np.abs(x)
    M = rho.M
    tau = np.clip((r - (M - 1.0)) / 2.0, 0.0, 1.0)
    s = np.where(r <= M - 1.0, r, (M - 1.0) + 2.0 * tau - tau * tau)
    return np.sign(x) * s


def _growth_constants(growth, C_growth, alpha_bar, p_g):
    if growth is not None:
        C_growth = growth.C_growth if C_growth is None else C_growth
        alpha_bar = growth.alpha_bar if alpha_bar is None else alpha_bar
        p_g = growth.p_g if p_g is None else p_g
    if C_growth is None or alpha_bar is None or p_g is None:
        raise ConfigError("sup-convolution needs C_growth, alpha_bar and p_g")
    return float(C_growth), float(alpha_bar), float(p_g)


def admissible_n0(g, growth=None, box: float = 10.0, *, C_growth=None, alpha_bar=None, p_g=None) -> float:
    """Smallest stiffness for which the supremum is attained in a certified radius.

    The returned value is the supremum slope of the growth envelope
    ``C + alpha_bar |u|^p_g`` plus one.  Near the origin the envelope slope is
    unbounded for ``p_g < 1``; the unit cell containing 0 is handled by its
    secant slope.  Terminal families with a known Lipschitz constant ``L`` are
    also admissible for any ``n >= L + 1``.
    """
    C, a, pg = _growth_constants(growth, C_growth, alpha_bar, p_g)
    lip = g.lipschitz_constant()
    if pg >= 1:
        if lip is not None:
            return lip + 1.0
        raise GrowthError(f"p_g = {pg:g} >= 1: sup-convolution radius cannot be certified")
    if a == 0 or pg == 0:
        slope = 0.0
    else:
        cell = min(1.0, box)
        slope = a * cell**pg / cell
        if box >= 1.0:
            slope = max(slope, a * pg)
    n0 = slope + 1.0
    if lip is not None:
        n0 = min(n0, lip + 1.0)
    return n0


def search_radius(x, n, C, alpha_bar, p_g, factor=1.0):
    """Bracketing radius with one self-consistent update on the offset R0."""
    ax = np.maximum(1.0, np.abs(np.asarray(x, dtype=float)))
    R = (2 * C + 2 * alpha_bar * ax**p_g) / n + 1.0
    R = (2 * C + 2 * alpha_bar * (ax + R) ** p_g) / n + 1.0
    return factor * R


def _certified(x, R, n, C, alpha_bar, p_g):
    ax = np.abs(x)
    return n * R > 2 * C + alpha_bar * ((ax + R) ** p_g + ax**p_g)


def _local_slope(g, u_star, h):
    offsets = np.array([0.001, 0.25, 0.5, 0.75, 0.999])
    pts = np.concatenate([-offsets[::-1], offsets]) * h
    u = u_star[..., None] + pts
    vals = g(u)
    left = np.abs(np.diff(vals[..., :5], axis=-1)) / np.diff(pts[:5])
    right = np.abs(np.diff(vals[..., 5:], axis=-1)) / np.diff(pts[5:])
    return np.maximum(left.max(axis=-1), right.max(axis=-1))


def _golden_refine(g, x, n, lo, hi, iters=40):
    phi = lambda u: g(u) - n * np.abs(x - u)  # noqa: E731
    a, b = lo.copy(), hi.copy()
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = phi(c), phi(d)
    best = np.maximum(fc, fd)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = b - _GOLDEN * (b - a)
        d_new = a + _GOLDEN * (b - a)
        c, d = c_new, d_new
        fc, fd = phi(c), phi(d)
        best = np.maximum(best, np.maximum(fc, fd))
    return best


def sup_convolve(g, cfg: SupConvConfig, x, growth=None, *, C_growth=None, alpha_bar=None,
                 p_g=None, check_n0: bool = True) -> SupConvResult:
    """Certified grid approximation of the sup-convolution of ``g`` at ``x``.

    Returns the value together with its error bound: the true sup-convolution
    lies in ``[value, value + gap]`` where ``gap = (n + L_loc) h_u / 2``.
    """
    C, a, pg = _growth_constants(growth, C_growth, alpha_bar, p_g)
    n, h = float(cfg.n), float(cfg.h_u)
    x = np.asarray(x, dtype=float)
    shape = x.shape
    xf = x.ravel()
    lip = g.lipschitz_constant()
    if check_n0:
        n0 = admissible_n0(g, C_growth=C, alpha_bar=a, p_g=pg)
        if n < n0:
            raise ConfigError(f"n = {n:g} is below the admissible threshold n0 = {n0:g}")

    gx = g(xf)
    if lip is not None and n >= lip:
        # g(u) - n|x-u| <= g(x) - (n - L)|x-u|: the supremum sits at u = x
        zero = np.zeros_like(xf)
        res = SupConvResult(gx, zero, gx, np.full_like(xf, lip), zero)
        return SupConvResult(*(np.reshape(v, shape) for v in res))

    if pg >= 1:
        raise GrowthError(f"p_g = {pg:g} >= 1: g may be superlinear, radius not certifiable")
    R = search_radius(xf, n, C, a, pg, cfg.search_radius_factor)
    for _ in range(_MAX_RADIUS_DOUBLINGS):
        ok = _certified(xf, R, n, C, a, pg)
        if np.all(ok):
            break
        R = np.where(ok, R, 2 * R)
    else:
        raise GrowthError("could not certify a bracketing radius")
    if np.any(h >= R):
        raise ConfigError(f"grid step h_u = {h:g} must be smaller than the search radius")

    k_lo = int(math.floor((xf.min() - R.max()) / h)) if xf.size else 0
    k_hi = int(math.ceil((xf.max() + R.max()) / h)) if xf.size else 0
    u = np.arange(k_lo, k_hi + 1) * h
    gu = g(u)
    idx = np.arange(u.size)

    fwd = gu + n * u
    pre = np.maximum.accumulate(fwd)
    pre_arg = np.maximum.accumulate(np.where(fwd == pre, idx, 0))
    bwd = gu - n * u
    suf = np.maximum.accumulate(bwd[::-1])[::-1]
    last = u.size - 1
    suf_arg = last - np.maximum.accumulate(np.where(bwd[::-1] == suf[::-1], idx, 0))[::-1]

    i_left = np.clip(np.searchsorted(u, xf, side="right") - 1, 0, last)
    i_right = np.clip(np.searchsorted(u, xf, side="left"), 0, last)
    left = pre[i_left] - n * xf
    right = suf[i_right] + n * xf
    use_left = left >= right
    grid_value = np.where(use_left, left, right)
    arg = np.where(use_left, pre_arg[i_left], suf_arg[i_right])
    u_star = u[arg]

    value = np.maximum(grid_value, gx)
    if cfg.refine:
        refined = _golden_refine(g, xf, n, u_star - h, u_star + h)
        value = np.maximum(value, refined)
    slope = _local_slope(g, u_star, h)
    gap = (n + slope) * h / 2.0
    res = SupConvResult(value, gap, grid_value, slope, R)
    return SupConvResult(*(np.reshape(v, shape) for v in res))


def supconv_terminal(base, n: float, growth, h_u: float = 1e-3, refine: bool = False):
    """TerminalSpec for the sup-convolution of ``base`` with stiffness ``n``."""
    from .problem import TerminalSpec

    return TerminalSpec(
        family="supconv",
        params={"base": base, "n": float(n), "h_u": h_u, "refine": refine,
                "C_growth": growth.C_growth, "alpha_bar": growth.alpha_bar, "p_g": growth.p_g},
        lsc_flag=base.lsc_flag,
    )
