"""Least-squares Monte Carlo backward solver with piecewise-constant regression.

At each knot the paths are split into equal-count bins by the rank of X_i and
conditional expectations are replaced by bin averages:

    Z_i = clip(Cov_bin[V_{i+1}, dW_i | X_i] / Var_bin[dW_i | X_i], +-envelope(t_i, X_i))
    Y_i = E_bin[V_{i+1}] + dt f(t_i, X_i, E_bin[V_{i+1}], Z_i)

The regressand V is a pathwise value with the same conditional mean as Y,

    V_N = g(X_N),   V_i = V_{i+1} + dt f_i - Z_i dW_i,

rather than the bin-constant Y_{i+1}.  Regressing a bin-constant value again
at the next knot discards the slope inside each bin (badly so in the two
unbounded outer bins) and the loss compounds backward.  The stochastic
integral term is a control variate: it has zero conditional mean, so errors in
later Z estimates do not bias earlier ones.

The Z coefficient is the dW_i slope of a within-bin least-squares fit of
V_{i+1} on (1, dW_i, X_i).  Since dW_i is independent of X_i, its limit is
E[V_{i+1} dW_i | X_i] / dt.  The empirical variance of dW_i in the
denominator cancels the Z (dW^2 - dt) noise term.  The X_i column absorbs
the spread of V_{i+1} across the width of a bin, which otherwise dominates
the noise in the wide outer bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import BoundParams, y_bound, z_temporal_bound
from .errors import ConfigError, DivergenceError, FitError, OccupancyError
from .forward import PathEnsemble, rank_bins
from .problem import ProblemSpec


@dataclass(frozen=True)
class RegressionBasis:
    kind: str = "quantile-bins"
    bins: int = 40
    min_paths_per_bin: int = 50

    def __post_init__(self):
        if self.kind != "quantile-bins":
            raise ConfigError("only quantile-bins regression is supported")
        if self.bins < 2:
            raise ConfigError("bins must be at least 2")
        if self.min_paths_per_bin < 1:
            raise ConfigError("min_paths_per_bin must be positive")


@dataclass(frozen=True, eq=False)
class BackwardSolution:
    ensemble: PathEnsemble
    Y: np.ndarray  # (n_paths, N + 1)
    Z: np.ndarray  # (n_paths, N), Z at knots 0..N-1
    se: np.ndarray  # (n_paths, N + 1) standard error of the bin mean of Y_i
    labels: np.ndarray  # (n_paths, N) bin id per knot
    y0: float
    y0_se: float
    truncation: Optional[BoundParams]
    clip_fraction: np.ndarray  # (N,)
    residual_rms: np.ndarray  # (N,)
    basis: RegressionBasis = field(default_factory=RegressionBasis)
    clipped: Optional[np.ndarray] = None  # (n_paths, N)

    @property
    def grid(self):
        return self.ensemble.grid

    def bin_table(self, i: int):
        """(center, Y_hat, Z_hat, clip_fraction, count) per bin at knot i < N."""
        lab = self.labels[:, i]
        nb = int(lab.max()) + 1
        counts = np.bincount(lab, minlength=nb)
        mean = lambda v: np.bincount(lab, v, nb) / counts  # noqa: E731
        clip = self.clipped[:, i] if self.clipped is not None else np.zeros(lab.size)
        return (mean(self.ensemble.paths[:, i]), mean(self.Y[:, i]), mean(self.Z[:, i]),
                mean(clip.astype(float)), counts)


def _bin_labels(x: np.ndarray, bins: int) -> tuple[np.ndarray, int]:
    if np.ptp(x) == 0:
        return np.zeros(x.size, dtype=np.intp), 1
    return rank_bins(x, bins), bins


def _bin_slope(lab, nb, counts, vc, w, x):
    """Per-bin dW coefficient of the least-squares fit of vc on (1, w, x)."""
    mean = lambda a: np.bincount(lab, a, nb) / counts  # noqa: E731
    wc = w - mean(w)[lab]
    xc = x - mean(x)[lab]
    sww, sxx, swx = mean(wc * wc), mean(xc * xc), mean(wc * xc)
    svw, svx = mean(vc * wc), mean(vc * xc)
    det = sww * sxx - swx * swx
    # a bin with (numerically) constant X carries no x column
    full = det > 1e-12 * sww * sxx
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(full, (svw * sxx - svx * swx) / det, svw / sww)
    return slope


def _bin_trend(lab, nb, counts, vc, x):
    """Fitted values of the within-bin least-squares line of vc on x."""
    mean = lambda a: np.bincount(lab, a, nb) / counts  # noqa: E731
    xc = x - mean(x)[lab]
    sxx = mean(xc * xc)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(sxx > 0, mean(vc * xc) / sxx, 0.0)
    return b[lab] * xc


def solve_mc(p: ProblemSpec, ens: PathEnsemble, basis: RegressionBasis = RegressionBasis(),
             trunc: Optional[BoundParams] = None, y_envelope: Optional[BoundParams] = None) -> BackwardSolution:
    """Backward regression recursion on a path ensemble."""
    grid = ens.grid
    if abs(grid.T - p.T) > 1e-12 * p.T or np.any(ens.paths[:, 0] != p.x0):
        raise ConfigError("ensemble and problem disagree on horizon or start point")
    if trunc is not None and trunc.kind != "z_temporal":
        raise ConfigError("truncation envelope must be a z_temporal bound")
    if ens.n_paths < basis.bins * basis.min_paths_per_bin:
        raise OccupancyError(f"{ens.n_paths} paths cannot give {basis.bins} bins "
                             f"{basis.min_paths_per_bin} paths each")
    N, dt = grid.N, grid.dt
    t = grid.knots
    X, dW = ens.paths, ens.increments
    n = ens.n_paths
    Y = np.empty((n, N + 1))
    Z = np.empty((n, N))
    SE = np.zeros((n, N + 1))
    labels = np.empty((n, N), dtype=np.int32)
    clipped = np.zeros((n, N), dtype=bool)
    clip_frac = np.zeros(N)
    resid = np.zeros(N)

    Y[:, N] = p.terminal(X[:, N])
    v = Y[:, N].copy()
    for i in range(N - 1, -1, -1):
        xi = X[:, i]
        lab, nb = _bin_labels(xi, basis.bins)
        counts = np.bincount(lab, minlength=nb)
        if nb > 1 and counts.min() < basis.min_paths_per_bin:
            raise OccupancyError(f"bin occupancy {counts.min()} at knot {i}")
        cont = (np.bincount(lab, v, nb) / counts)[lab]
        centred = v - cont
        z = _bin_slope(lab, nb, counts, centred, dW[:, i], xi)[lab]
        if trunc is not None:
            env = z_temporal_bound(trunc, t[i], xi)
            clipped[:, i] = np.abs(z) > env
            z = np.clip(z, -env, env)
            clip_frac[i] = clipped[:, i].mean()
        fval = p.generator(t[i], xi, cont, z, p.forward)
        yi = cont + dt * fval
        if not np.all(np.isfinite(yi)):
            raise DivergenceError(f"non-finite Y at knot {i}")
        if y_envelope is not None and np.any(np.abs(yi) > 10 * y_bound(y_envelope, t[i], xi)):
            raise DivergenceError(f"|Y| exceeds 10x the growth envelope at knot {i}")
        Y[:, i], Z[:, i], labels[:, i] = yi, z, lab
        resid[i] = math.sqrt(float(np.mean(centred**2)))
        # noise of a bin mean of Y_i: spread of V_{i+1} about its within-bin trend in X_i
        resid_v = centred - _bin_trend(lab, nb, counts, centred, xi)
        var = np.bincount(lab, resid_v * resid_v, nb) / np.maximum(counts - 2, 1)
        SE[:, i] = np.sqrt(var / counts)[lab]
        v = v + dt * fval - z * dW[:, i]

    # the pathwise V_0 carries the control variate, so its mean and spread
    # give y0 and its standard error consistently
    y0 = float(np.mean(v))
    y0_se = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return BackwardSolution(ens, Y, Z, SE, labels, y0, y0_se, trunc, clip_frac, resid, basis, clipped)


def exponential_moment(sol: BackwardSolution, gamma: float, l: float, eta: float = 0.1) -> float:
    """Empirical E[exp((1/2 + eta) gamma^2 / 4 int_0^T |Z|^(2l) dt]; a diagnostic only."""
    integral = np.sum(np.abs(sol.Z) ** (2 * l), axis=1) * sol.grid.dt
    with np.errstate(over="ignore"):
        return float(np.mean(np.exp((0.5 + eta) * gamma**2 / 4 * integral)))


@dataclass(frozen=True)
class ContinuityReport:
    tau: np.ndarray
    gap: np.ndarray
    decay_exponent: float
    monotone: bool
    passed: bool
    fit_error: Optional[str] = None


def terminal_continuity_probe(p: ProblemSpec, sol: BackwardSolution, n_probe: int = 6) -> ContinuityReport:
    """Mean |Y_t - g(X_T)| at the last knots before T and its decay in T - t.

    Passes when the gap decreases monotonically over the four knots closest to
    T.  Fit or monotonicity failures are reported, not raised.
    """
    N = sol.grid.N
    if n_probe < 4 or n_probe > N:
        raise ConfigError("n_probe must lie in [4, N]")
    knots = np.arange(N - n_probe, N)
    gT = sol.Y[:, N]
    gap = np.array([np.mean(np.abs(sol.Y[:, k] - gT)) for k in knots])
    tau = sol.grid.T - sol.grid.knots[knots]
    last4 = gap[-4:]
    monotone = bool(np.all(np.diff(last4) < 0))
    err = None
    slope = float("nan")
    if np.all(gap > 0):
        slope = float(np.polyfit(np.log(tau), np.log(gap), 1)[0])
    else:
        err = "zero gap: no decay to fit"
    if not monotone:
        err = str(FitError("gap not monotone over the last four probe times"))
    return ContinuityReport(tau, gap, slope, monotone, monotone, err)
