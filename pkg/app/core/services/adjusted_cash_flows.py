"""Backward regression sweep and Picard iteration over the adjusted cash flows"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from app.core.entities.collateral import CloseoutSpec, CollateralSpec
from app.core.entities.contract import Contract
from app.core.entities.curves import RateCurve
from app.core.entities.legs import LegAccumulator
from app.core.entities.market import DeflatorChoice, Market
from app.core.entities.report import ConvergenceRecord
from app.core.entities.scenario import ExternalConvention
from app.core.entities.simulation import (
    PURPOSE_CLEAN,
    MonteCarloConfig,
    PathEnsemble,
    TimeGrid,
)
from app.core.errors import ConvergenceError
from app.core.interfaces.clean_valuer import CleanValuer
from app.core.services.clean_valuation import (
    AnalyticCleanValuer,
    CleanPricer,
    CleanValuation,
    RegressionCleanValuer,
)
from app.core.services.closeout import collateral_value, stopped_payments
from app.core.services.leg_builder import CellRates, LegBuilder
from app.core.services.path_simulator import PathSimulator, build_grid
from app.core.services.regression import PriceSurface, RegressionFit, regress

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SweepResult:
    """One backward pass: legs on the given surface and the refitted surface"""

    legs: LegAccumulator
    surface: PriceSurface
    residual: float
    funding: np.ndarray
    funding_lends: np.ndarray
    repo_lends: np.ndarray
    alive: np.ndarray

    def switches_against(self, previous: "SweepResult") -> int:
        """Alive path-nodes whose lend/borrow branch differs from `previous`"""
        changed = self.funding_lends != previous.funding_lends
        changed |= np.any(self.repo_lends != previous.repo_lends, axis=2)
        return int(changed[self.alive].sum())


@dataclass(frozen=True, eq=False)
class EngineSolution:
    """Converged sweep with its iteration history"""

    result: SweepResult
    convergence: Tuple[ConvergenceRecord, ...]

    @property
    def legs(self) -> LegAccumulator:
        return self.result.legs

    @property
    def surface(self) -> PriceSurface:
        return self.result.surface

    @property
    def samples(self) -> np.ndarray:
        return self.legs.pathwise_total()

    @property
    def price(self) -> float:
        return float(np.mean(self.samples))

    @property
    def standard_error(self) -> float:
        n = self.legs.n_paths
        if n < 2:
            return 0.0
        return float(np.std(self.samples, ddof=1) / np.sqrt(n))

    @property
    def driver_switch_fraction(self) -> float:
        if not self.convergence:
            return 0.0
        return self.convergence[-1].driver_switches / max(self.result.alive.sum(), 1)


class AdjustedCashFlowEngine:
    """
    Values the adjusted cash flows of a LegBuilder.

    Each sweep walks the grid backwards, cumulating G_k = cell_k + D_k G_{k+1} from the
    price and hedge of the previous iterate and regressing G_k on the alive states. When
    no leg depends on the price a single sweep is exact; otherwise sweeps are repeated
    until the sup-norm change of the price surface over alive paths and nodes falls below
    the absolute tolerance.
    """

    def __init__(self, builder: LegBuilder, config: MonteCarloConfig, wealth: float = 0.0):
        self._builder = builder
        self._config = config
        self._wealth = wealth

    @property
    def builder(self) -> LegBuilder:
        return self._builder

    def hedge(self, surface: PriceSurface, k: int) -> np.ndarray:
        """H^i = Z^i S^i with Z = −∂P/∂S"""
        state = self._builder.ensemble.state(k)
        return -surface.gradient(k, state) * state

    def sweep(self, surface: PriceSurface) -> SweepResult:
        builder = self._builder
        ensemble = builder.ensemble
        n, n_cells, m = ensemble.n_paths, builder.n_nodes - 1, ensemble.n_assets
        degree = self._config.basis_degree

        fits: List[Optional[RegressionFit]] = [None] * builder.n_nodes
        fits[-1] = RegressionFit.constant(0.0, m)
        funding = np.zeros((n, n_cells))
        funding_lends = np.ones((n, n_cells), dtype=bool)
        repo_lends = np.ones((n, n_cells, m), dtype=bool)
        alive_nodes = np.zeros((n, n_cells), dtype=bool)
        legs = {}
        cumulative = np.zeros(n)
        residual = 0.0

        for k in range(n_cells - 1, -1, -1):
            state = ensemble.state(k)
            price = surface.value(k, state)
            hedge = self.hedge(surface, k)
            flows = builder.cell(k, price, hedge, self._wealth)
            cumulative = flows.total + builder.step_discount(k) * cumulative

            alive = builder.alive(k)
            alive_nodes[:, k] = alive
            if alive.any():
                fits[k] = regress(cumulative[alive], state[alive], degree)
                change = np.abs(fits[k](state[alive]) - price[alive])
                residual = max(residual, float(change.max()))
            else:
                fits[k] = RegressionFit.constant(0.0, m)

            weight = builder.node_weight(k)
            for name, values in flows.legs.items():
                legs[name] = legs.get(name, 0.0) + weight * values
            funding[:, k] = builder.funding_position(k, price, hedge, self._wealth)
            funding_lends[:, k] = flows.funding_lends
            repo_lends[:, k, :] = flows.repo_lends

        accumulator = LegAccumulator(
            legs=legs,
            fingerprint=ensemble.fingerprint,
            n_assets=m,
            marginalized=builder.marginalized,
        )
        return SweepResult(
            legs=accumulator,
            surface=PriceSurface(fits),
            residual=residual,
            funding=funding,
            funding_lends=funding_lends,
            repo_lends=repo_lends,
            alive=alive_nodes,
        )

    def solve(self, start: Optional[PriceSurface] = None) -> EngineSolution:
        """Picard iteration from `start` (zero surface when omitted)"""
        config = self._config
        surface = start or PriceSurface.zero(self._builder.n_nodes)

        if self._builder.price_independent:
            result = self.sweep(surface)
            return EngineSolution(result, (ConvergenceRecord(1, 0.0, 0),))

        tolerance = config.absolute_tolerance
        records: List[ConvergenceRecord] = []
        previous: Optional[SweepResult] = None
        for iteration in range(1, config.picard_max_iterations + 1):
            result = self.sweep(surface)
            switches = 0 if previous is None else result.switches_against(previous)
            records.append(ConvergenceRecord(iteration, result.residual, switches))
            logger.info(
                "Picard iteration %d: residual %.3e, driver switches %d",
                iteration,
                result.residual,
                switches,
            )
            if result.residual < tolerance:
                return EngineSolution(result, tuple(records))
            surface = (
                result.surface
                if config.damping == 1.0
                else surface.blend(result.surface, config.damping)
            )
            previous = result

        raise ConvergenceError(config.picard_max_iterations, records[-1].residual, tolerance)


@dataclass(frozen=True, eq=False)
class Valuation:
    """Everything a sweep needs on one ensemble"""

    grid: TimeGrid
    ensemble: PathEnsemble
    valuer: CleanValuer
    clean: CleanValuation
    collateral: np.ndarray
    builder: LegBuilder

    def engine(self, config: MonteCarloConfig, wealth: float = 0.0) -> AdjustedCashFlowEngine:
        return AdjustedCashFlowEngine(self.builder, config, wealth)


class ValuationFactory:
    """Assembles grids, ensembles, clean values and leg builders for the pricers"""

    def __init__(
        self,
        simulator: Optional[PathSimulator] = None,
        clean_pricer: Optional[CleanPricer] = None,
    ):
        self._simulator = simulator or PathSimulator()
        self._clean_pricer = clean_pricer or CleanPricer()

    @property
    def simulator(self) -> PathSimulator:
        return self._simulator

    @property
    def clean_pricer(self) -> CleanPricer:
        return self._clean_pricer

    def grid(self, contract: Contract, market: Market, config: MonteCarloConfig) -> TimeGrid:
        curves = market.rates.all_curves + list(market.defaults.curves)
        return build_grid(contract, config.n_steps, curves)

    def ensemble(
        self,
        market: Market,
        choice: DeflatorChoice,
        grid: TimeGrid,
        config: MonteCarloConfig,
    ) -> PathEnsemble:
        return self._simulator.simulate(market.assets, choice, grid, config, market.defaults)

    def valuer(
        self,
        contract: Contract,
        market: Market,
        grid: TimeGrid,
        config: MonteCarloConfig,
        discount: Optional[RateCurve] = None,
        carry: Optional[RateCurve] = None,
    ) -> CleanValuer:
        """Analytic valuer for the payoff menu, regression valuer otherwise"""
        discount = discount or market.rates.r
        carry = carry or discount
        if contract.stream.has_closed_form:
            return AnalyticCleanValuer(contract, grid, market.assets, discount, carry)
        choice = DeflatorChoice(eta=discount, drifts=(carry,) * market.assets.n_assets)
        clean_paths = self._simulator.simulate(
            market.assets, choice, grid, config, purpose=PURPOSE_CLEAN
        )
        return RegressionCleanValuer(contract, clean_paths, discount, config.basis_degree)

    def prepare(
        self,
        contract: Contract,
        collateral: CollateralSpec,
        closeout: CloseoutSpec,
        market: Market,
        config: MonteCarloConfig,
        choice: DeflatorChoice,
        marginalized: bool = False,
        own_default_benefit: bool = False,
        clean_discount: Optional[RateCurve] = None,
        clean_carry: Optional[RateCurve] = None,
        grid: Optional[TimeGrid] = None,
        external: Optional[ExternalConvention] = None,
    ) -> Valuation:
        grid = grid or self.grid(contract, market, config)
        ensemble = self.ensemble(market, choice, grid, config)
        valuer = self.valuer(contract, market, grid, config, clean_discount, clean_carry)
        clean = self._clean_pricer.clean_price(valuer, ensemble)

        coll = np.empty_like(clean.ex_dividend)
        for k, t in enumerate(grid.times):
            coll[:, k] = collateral_value(collateral, t, ensemble.state(k), clean.ex_dividend[:, k])

        retained = None
        if not marginalized:
            retained = stopped_payments(contract.stream, grid, ensemble.tau)
        rates = CellRates.build(
            grid, market.rates, choice, market.assets, market.defaults, clean_discount
        )
        builder = LegBuilder(
            ensemble,
            clean,
            coll,
            rates,
            market.defaults,
            closeout,
            marginalized=marginalized,
            own_default_benefit=own_default_benefit,
            external=external,
            retained=retained,
        )
        return Valuation(grid, ensemble, valuer, clean, coll, builder)
