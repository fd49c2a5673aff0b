"""Correlated lognormal paths and default times"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, Optional, Tuple

import numpy as np

from app.core.entities.contract import Contract
from app.core.entities.curves import RateCurve
from app.core.entities.market import AssetModel, DefaultModel, DeflatorChoice
from app.core.entities.simulation import (
    PURPOSE_ASSETS,
    PURPOSE_DEFAULTS,
    PURPOSE_EXTERNAL,
    MonteCarloConfig,
    PathEnsemble,
    SeedPolicy,
    TimeGrid,
)
from app.core.errors import ValidationError
from app.core.services.market_model import drift_under

logger = logging.getLogger(__name__)


def build_grid(
    contract: Contract, n_steps: int, curves: Iterable[RateCurve] = ()
) -> TimeGrid:
    """Uniform grid over [0, T] refined with payment dates and every curve breakpoint"""
    extra = set(contract.stream.times)
    for curve in curves:
        extra.update(curve.breakpoints)
    grid = TimeGrid.build(contract.maturity, n_steps, extra)
    if grid.n_steps != n_steps:
        logger.debug("grid refined from %d to %d steps", n_steps, grid.n_steps)
    return grid


class PathSimulator:
    """
    Exact stepping of S_{k+1} = S_k exp((g − σ²/2)Δ + σ√Δ Z) with g the cell-average drift.

    Blocks of paths are drawn from their own counter-based streams and may be generated
    on a thread pool; results are concatenated in block order.
    """

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValidationError("workers must be >= 1")
        self._workers = workers

    def _map_blocks(self, fn, blocks) -> List:
        if self._workers == 1 or len(blocks) == 1:
            return [fn(b) for b in blocks]
        with ThreadPoolExecutor(max_workers=self._workers) as pool:
            return list(pool.map(fn, blocks))

    def simulate_assets(
        self,
        model: AssetModel,
        choice: DeflatorChoice,
        grid: TimeGrid,
        seeds: SeedPolicy,
        n_paths: int,
        purpose: int = PURPOSE_ASSETS,
    ) -> np.ndarray:
        """Asset values at the nodes, shape (paths, nodes, assets)"""
        if n_paths < 1:
            raise ValidationError("n_paths must be >= 1")
        m = model.n_assets
        steps = grid.steps
        nodes = grid.nodes
        vols = np.asarray(model.vols)
        factor = model.correlation_factor()

        # (cells, assets) drift integrals are exact for piecewise-constant curves
        drift_integrals = np.column_stack(
            [np.diff(drift_under(choice, i).integral(nodes)) for i in range(m)]
        )
        log_drift = drift_integrals - 0.5 * vols**2 * steps[:, None]
        scale = vols * np.sqrt(steps)[:, None]
        log_spots = np.log(np.asarray(model.spots))

        def block(spec: Tuple[int, int, int]) -> np.ndarray:
            index, _, length = spec
            rng = seeds.generator(index, purpose)
            normals = rng.standard_normal((length, grid.n_steps, m)) @ factor.T
            increments = log_drift + scale * normals
            logs = np.concatenate(
                [np.broadcast_to(log_spots, (length, 1, m)), increments], axis=1
            )
            return np.exp(np.cumsum(logs, axis=1))

        return np.concatenate(self._map_blocks(block, seeds.blocks(n_paths)), axis=0)

    def sample_default_times(
        self, defaults: DefaultModel, seeds: SeedPolicy, n_paths: int
    ) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        """
        Inverse-transform sampling τ_j = Λ_j^{-1}(E_j) with independent unit exponentials;
        τ_j = inf when the hazard never reaches E_j.
        """

        def block(spec: Tuple[int, int, int]) -> np.ndarray:
            index, _, length = spec
            draws = seeds.generator(index, PURPOSE_DEFAULTS).standard_exponential((length, 2))
            out = np.empty((length, 3))
            out[:, 0] = defaults.trader_intensity.inverse_integral(draws[:, 0])
            out[:, 1] = defaults.counterparty_intensity.inverse_integral(draws[:, 1])
            out[:, 2] = np.inf
            if defaults.external_intensity is not None:
                external = seeds.generator(index, PURPOSE_EXTERNAL).standard_exponential(length)
                out[:, 2] = defaults.external_intensity.inverse_integral(external)
            return out

        taus = np.concatenate(self._map_blocks(block, seeds.blocks(n_paths)), axis=0)
        external = taus[:, 2] if defaults.external_intensity is not None else None
        return taus[:, 0], taus[:, 1], external

    def simulate(
        self,
        model: AssetModel,
        choice: DeflatorChoice,
        grid: TimeGrid,
        config: MonteCarloConfig,
        defaults: Optional[DefaultModel] = None,
        purpose: int = PURPOSE_ASSETS,
    ) -> PathEnsemble:
        """Full ensemble: assets under the choice's drifts plus default times"""
        seeds = config.seeds
        spots = self.simulate_assets(model, choice, grid, seeds, config.n_paths, purpose)
        if defaults is None:
            never = np.full(config.n_paths, math.inf)
            tau_i, tau_c, tau_e = never, never.copy(), None
        else:
            tau_i, tau_c, tau_e = self.sample_default_times(defaults, seeds, config.n_paths)
        logger.debug(
            "simulated %d paths on %d steps under %s",
            config.n_paths,
            grid.n_steps,
            choice.preset.value,
        )
        return PathEnsemble(
            grid=grid,
            choice=choice,
            spots=spots,
            tau_trader=tau_i,
            tau_counterparty=tau_c,
            tau_external=tau_e,
            seed=config.seed,
        )
