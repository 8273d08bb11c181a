"""Seeded Brownian path ensembles on a TimeGrid.

Paths are generated in fixed blocks of 1024, each block from its own Philox
substream derived from (seed, block index). The block partition never depends
on how the work is scheduled, so regenerating with the same (seed, n_paths,
grid, dim) is bit-identical regardless of the number of workers.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import AbsdeLabError
from .model import TimeGrid

_BLOCK = 1024
_SCHEME = "philox-block1024-v1"
_MAGIC = b"ABSDEENS"


@dataclass(frozen=True)
class PathEnsemble:
    """Brownian states W_{t_i} per path, shape (n_steps + 1, n_paths, dim)."""

    grid: TimeGrid
    n_paths: int
    dim: int
    values: np.ndarray
    seed: int
    scheme: str = _SCHEME
    antithetic: bool = False

    def increments(self, i: int) -> np.ndarray:
        """Per-path increment W_{t_{i+1}} - W_{t_i}, shape (n_paths, dim)."""
        if not (0 <= i < self.grid.n_steps):
            raise IndexError(f"step index {i} out of range [0, {self.grid.n_steps})")
        return self.values[i + 1] - self.values[i]

    def states(self, i: int) -> np.ndarray:
        """Brownian state at grid index i, shape (n_paths, dim)."""
        if not (0 <= i <= self.grid.n_steps):
            raise IndexError(f"grid index {i} out of range [0, {self.grid.n_steps}]")
        return self.values[i]


def _block_increments(seed: int, block: int, n_steps: int, dim: int, dt: float):
    # Full blocks are always drawn so the content of block b is independent of
    # n_paths; callers slice off unused rows.
    ss = np.random.SeedSequence(seed, spawn_key=(block,))
    rng = np.random.default_rng(np.random.Philox(ss))
    return rng.standard_normal((n_steps, _BLOCK, dim)) * np.sqrt(dt)


def generate_ensemble(
    grid: TimeGrid,
    n_paths: int,
    dim: int,
    seed: int,
    antithetic: bool = False,
    n_workers: int = 1,
) -> PathEnsemble:
    """Generate a seeded ensemble of discretized Brownian paths.

    Increments over each step are N(0, dt) per component. With antithetic=True
    (n_paths even) odd paths carry the negated increments of their even
    partner, for variance reduction in Monte Carlo payoffs.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if antithetic and n_paths % 2 != 0:
        raise ValueError("antithetic pairing requires an even n_paths")

    n_base = n_paths // 2 if antithetic else n_paths
    n_blocks = -(-n_base // _BLOCK)

    def make(block):
        return _block_increments(seed, block, grid.n_steps, dim, grid.dt)

    if n_workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            chunks = list(pool.map(make, range(n_blocks)))
    else:
        chunks = [make(b) for b in range(n_blocks)]

    incr = np.concatenate(chunks, axis=1)[:, :n_base, :]
    if antithetic:
        paired = np.empty((grid.n_steps, n_paths, dim))
        paired[:, 0::2, :] = incr
        paired[:, 1::2, :] = -incr
        incr = paired

    values = np.zeros((grid.n_steps + 1, n_paths, dim))
    np.cumsum(incr, axis=0, out=values[1:])
    return PathEnsemble(grid, n_paths, dim, values, seed, _SCHEME, antithetic)


def increment_slice(ens: PathEnsemble, i: int) -> np.ndarray:
    """Per-path increment over step i (pure read)."""
    return ens.increments(i)


def save_ensemble(ens: PathEnsemble, path) -> None:
    """Binary dump: fixed header then row-major float64 states."""
    header = json.dumps(
        {
            "seed": ens.seed,
            "t_end": ens.grid.t_end,
            "k_extra": ens.grid.k_extra,
            "n_steps": ens.grid.n_steps,
            "n_paths": ens.n_paths,
            "dim": ens.dim,
            "scheme": ens.scheme,
            "antithetic": ens.antithetic,
        },
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(ens.values, dtype=np.float64).tobytes())


def load_ensemble(path) -> PathEnsemble:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise AbsdeLabError(f"{path} is not an ensemble dump")
        (hlen,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(hlen).decode())
        grid = TimeGrid(meta["t_end"], meta["k_extra"], meta["n_steps"])
        shape = (meta["n_steps"] + 1, meta["n_paths"], meta["dim"])
        values = np.frombuffer(fh.read(), dtype=np.float64).reshape(shape)
    return PathEnsemble(
        grid,
        meta["n_paths"],
        meta["dim"],
        values,
        meta["seed"],
        meta["scheme"],
        meta.get("antithetic", False),
    )
