"""Euler-Maruyama simulation of the forward SDE with reproducible substreams.

Brownian increments are drawn in fixed blocks of ``CHUNK`` paths, each block
from its own Philox stream keyed by ``(master_seed, block id)``.  Path ``i``
is therefore a pure function of ``(master_seed, i)``: it does not depend on
the number of paths requested or on how blocks are scheduled over threads.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InsufficientData, SimulationError
from .problem import ForwardModel

CHUNK = 1024

_MAGIC = b"SBSDEENS"
_HEADER = struct.Struct("<8sIqIQdd")  # magic, version, seed, N, n_paths, T, x0
_VERSION = 1


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError("N must be a positive integer")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def knots(self) -> np.ndarray:
        return np.arange(self.N + 1) * (self.T / self.N)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    grid: TimeGrid
    paths: np.ndarray  # (n_paths, N + 1)
    increments: np.ndarray  # (n_paths, N)
    master_seed: int
    chunk_size: int = CHUNK

    def __post_init__(self):
        for arr in (self.paths, self.increments):
            arr.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def substream_ids(self) -> np.ndarray:
        return np.arange(self.n_paths) // self.chunk_size

    def save(self, path) -> Path:
        """Write the binary cache: header then little-endian float64 payload, path-major."""
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, int(self.master_seed), self.grid.N,
                                  self.n_paths, float(self.grid.T), float(self.paths[0, 0])))
            fh.write(np.ascontiguousarray(self.paths, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.increments, dtype="<f8").tobytes())
        return path

    @classmethod
    def load(cls, path) -> "PathEnsemble":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise ConfigError("ensemble cache truncated", path=str(path))
        magic, version, seed, N, n_paths, T, _ = _HEADER.unpack_from(raw)
        if magic != _MAGIC or version != _VERSION:
            raise ConfigError("not an ensemble cache file", path=str(path))
        n_x = n_paths * (N + 1)
        n_w = n_paths * N
        payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        if payload.size != n_x + n_w:
            raise ConfigError("ensemble cache payload size mismatch", path=str(path))
        paths = payload[:n_x].reshape(n_paths, N + 1).astype(float)
        incs = payload[n_x:].reshape(n_paths, N).astype(float)
        return cls(TimeGrid(T, N), paths, incs, seed)


def _block_normals(master_seed: int, block: int, N: int) -> np.ndarray:
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(block),))
    rng = np.random.Generator(np.random.Philox(seq))
    return rng.standard_normal((CHUNK, N))


def brownian_increments(grid: TimeGrid, n_paths: int, master_seed: int, threads: int = 1) -> np.ndarray:
    n_blocks = -(-n_paths // CHUNK)
    N = grid.N
    work = lambda b: _block_normals(master_seed, b, N)  # noqa: E731
    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(work, range(n_blocks)))
    else:
        blocks = [work(b) for b in range(n_blocks)]
    normals = np.concatenate(blocks, axis=0)[:n_paths]
    return normals * np.sqrt(grid.dt)


def simulate(model: ForwardModel, grid: TimeGrid, n_paths: int, master_seed: int,
             threads: int = 1) -> PathEnsemble:
    """X_{i+1} = X_i + b(t_i, X_i) dt + sigma(t_i) dW_i for every path."""
    if n_paths < 1:
        raise ConfigError("n_paths must be at least 1")
    if abs(grid.T - model.T) > 1e-12 * model.T:
        raise ConfigError("grid horizon differs from the model horizon")
    dW = brownian_increments(grid, n_paths, master_seed, threads)
    t = grid.knots
    X = np.empty((n_paths, grid.N + 1))
    X[:, 0] = model.x0
    for i in range(grid.N):
        b = model.b(t[i], X[:, i])
        s = model.sig(t[i])
        nxt = X[:, i] + b * grid.dt + s * dW[:, i]
        if not np.all(np.isfinite(nxt)):
            bad = int(np.flatnonzero(~np.isfinite(nxt))[0])
            raise SimulationError(f"non-finite state at t={t[i]:g}, path {bad}")
        X[:, i + 1] = nxt
    return PathEnsemble(grid, X, dW, int(master_seed))


def rank_bins(values: np.ndarray, bins: int) -> np.ndarray:
    """Bin labels 0..bins-1 by rank, equal counts up to one; ties broken by index."""
    order = np.argsort(values, kind="stable")
    labels = np.empty(values.size, dtype=np.intp)
    labels[order] = (np.arange(values.size) * bins) // values.size
    return labels


@dataclass(frozen=True)
class MomentReport:
    p: float
    knot: int
    fitted_C: float
    max_ratio: float
    bin_centers: np.ndarray
    bin_sup_moment: np.ndarray
    bin_envelope: np.ndarray


def conditional_moment_check(ens: PathEnsemble, p: float, knot: int | None = None,
                             bins: int = 10, min_paths: int = 50) -> MomentReport:
    """Bin estimate of E[sup_{s>=t} |X_s|^p | X_t] against 1 + |X_t|^p.

    ``fitted_C`` is the least-squares slope through the origin of the bin means
    on the envelope; ``max_ratio`` is the largest bin ratio.
    """
    if p < 1:
        raise ConfigError("p must be at least 1")
    if ens.n_paths == 0:
        raise InsufficientData("empty ensemble")
    knot = ens.grid.N // 2 if knot is None else knot
    if ens.n_paths < bins * min_paths:
        raise InsufficientData(f"{ens.n_paths} paths cannot fill {bins} bins of {min_paths}")
    xt = ens.paths[:, knot]
    sup = np.max(np.abs(ens.paths[:, knot:]), axis=1) ** p
    env = 1.0 + np.abs(xt) ** p
    labels = rank_bins(xt, bins)
    counts = np.bincount(labels, minlength=bins)
    if counts.min() < min_paths:
        raise InsufficientData(f"bin occupancy {counts.min()} < {min_paths}")
    m = np.bincount(labels, sup, bins) / counts
    e = np.bincount(labels, env, bins) / counts
    c = np.bincount(labels, xt, bins) / counts
    fitted = float(np.dot(m, e) / np.dot(e, e))
    return MomentReport(p, knot, fitted, float(np.max(m / e)), c, m, e)
