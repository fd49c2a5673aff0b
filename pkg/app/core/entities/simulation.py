"""Simulation entities: time grid, seed policy, Monte Carlo config and path ensemble"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np

from app.core.entities.market import DeflatorChoice
from app.core.errors import ValidationError

GRID_EPSILON = 1e-10

# stream purposes: each draws from its own counter range
PURPOSE_ASSETS = 0
PURPOSE_DEFAULTS = 1
PURPOSE_EXTERNAL = 2
PURPOSE_CLEAN = 3


@dataclass(frozen=True)
class TimeGrid:
    """Simulation nodes t_0 = 0 < t_1 < ... < t_N = T"""

    times: Tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if len(times) < 2 or times[0] != 0.0:
            raise ValidationError("grid needs at least one step starting at 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("grid times must be strictly increasing")
        object.__setattr__(self, "times", times)

    @classmethod
    def build(cls, horizon: float, n_steps: int, extra_times: Iterable[float] = ()) -> "TimeGrid":
        """Uniform grid of n_steps cells refined to contain every extra time in (0, T)"""
        if n_steps < 1:
            raise ValidationError("n_steps must be >= 1")
        uniform = [horizon * k / n_steps for k in range(n_steps + 1)]
        merged = sorted(set(uniform) | {float(t) for t in extra_times if 0.0 < t < horizon})
        times = [merged[0]]
        for t in merged[1:]:
            if t - times[-1] > GRID_EPSILON:
                times.append(t)
            elif t in uniform:
                times[-1] = t
        times[-1] = horizon
        return cls(tuple(times))

    @property
    def horizon(self) -> float:
        return self.times[-1]

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def nodes(self) -> np.ndarray:
        return np.asarray(self.times)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    def index_of(self, t: float) -> int:
        """Node index matching t; raises when t is not a node"""
        k = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.times[k] - t) > GRID_EPSILON:
            raise ValidationError(f"time {t} is not a grid node")
        return k

    def cell_of(self, t: np.ndarray) -> np.ndarray:
        """Index k of the cell (t_k, t_{k+1}] containing t"""
        return np.clip(np.searchsorted(self.nodes, t, side="left") - 1, 0, self.n_steps - 1)


@dataclass(frozen=True)
class SeedPolicy:
    """
    Counter-based seeding: paths are cut into fixed-size blocks and block b of a given
    purpose draws from Philox(key=seed, counter=[0, 0, purpose, b]). The stream of a path
    depends only on (seed, path index) for a fixed block size.
    """

    master_seed: int
    block_size: int = 4096

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if self.block_size < 1:
            raise ValidationError("block_size must be >= 1")

    def generator(self, block: int, purpose: int) -> np.random.Generator:
        counter = np.array([0, 0, purpose, block], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=int(self.master_seed), counter=counter))

    def blocks(self, n_paths: int) -> Tuple[Tuple[int, int, int], ...]:
        """(block index, first path, block length) covering n_paths"""
        out = []
        for b, start in enumerate(range(0, n_paths, self.block_size)):
            out.append((b, start, min(self.block_size, n_paths - start)))
        return tuple(out)


@dataclass(frozen=True)
class MonteCarloConfig:
    """Monte Carlo and fixed-point settings shared by every pricer"""

    n_paths: int = 20000
    n_steps: int = 128
    seed: int = 20240601
    workers: int = 1
    basis_degree: int = 3
    picard_tolerance: float = 1e-8
    picard_max_iterations: int = 50
    damping: float = 1.0
    notional: float = 1.0
    block_size: int = 4096

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValidationError("n_paths must be >= 1")
        if self.n_steps < 1:
            raise ValidationError("n_steps must be >= 1")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if self.basis_degree < 0:
            raise ValidationError("basis_degree must be >= 0")
        if not 0.0 < self.damping <= 1.0:
            raise ValidationError("damping must lie in (0, 1]")
        if not (self.notional > 0.0 and math.isfinite(self.notional)):
            raise ValidationError("notional must be positive")

    @property
    def seeds(self) -> SeedPolicy:
        return SeedPolicy(self.seed, self.block_size)

    @property
    def absolute_tolerance(self) -> float:
        return self.picard_tolerance * self.notional


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """
    Simulated asset paths and default times under one deflator choice.

    `spots` has shape (paths, nodes, assets). Default times are continuous and may be inf.
    The deflator B^η is deterministic, so one value per node is shared by all paths.
    """

    grid: TimeGrid
    choice: DeflatorChoice
    spots: np.ndarray
    tau_trader: np.ndarray
    tau_counterparty: np.ndarray
    tau_external: Optional[np.ndarray] = None
    seed: int = 0
    deflator: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.spots.ndim != 3 or self.spots.shape[1] != self.grid.n_steps + 1:
            raise ValidationError("spots must have shape (paths, nodes, assets)")
        if self.deflator is None:
            eta = self.choice.eta
            object.__setattr__(self, "deflator", np.exp(-eta.integral(self.grid.nodes)))

    @property
    def n_paths(self) -> int:
        return self.spots.shape[0]

    @property
    def n_assets(self) -> int:
        return self.spots.shape[2]

    @property
    def tau(self) -> np.ndarray:
        return np.minimum(self.tau_trader, self.tau_counterparty)

    @property
    def tau_bar(self) -> np.ndarray:
        return np.minimum(self.tau, self.grid.horizon)

    @property
    def fingerprint(self) -> Tuple[Any, ...]:
        """Identity used to reject legs computed on different ensembles"""
        return (self.seed, self.n_paths, self.grid.times, self.choice)

    def alive(self, k: int) -> np.ndarray:
        """Paths with no default up to node k"""
        return self.tau > self.grid.times[k]

    def state(self, k: int) -> np.ndarray:
        return self.spots[:, k, :]

    def describe(self) -> Dict[str, Any]:
        return {
            "paths": self.n_paths,
            "steps": self.grid.n_steps,
            "seed": self.seed,
            "measure": self.choice.preset.value,
        }
