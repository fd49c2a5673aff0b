"""Pricing with degenerate treasury and repo rates"""

import logging
import math
from typing import Any, Dict, Iterable, Optional

import numpy as np

from app.core.entities import legs as L
from app.core.entities.bsde import BSDEState
from app.core.entities.collateral import CloseoutSpec, CollateralSpec
from app.core.entities.contract import Contract
from app.core.entities.legs import LegAccumulator
from app.core.entities.market import DeflatorChoice, Market, Preset
from app.core.entities.report import ConvergenceRecord, ValuationReport
from app.core.entities.simulation import MonteCarloConfig, TimeGrid
from app.core.errors import PricingSetupError
from app.core.services.adjusted_cash_flows import EngineSolution, ValuationFactory
from app.core.services.clean_valuation import CleanValuation
from app.core.services.closeout import collateral_value, effective_collateral_rate
from app.core.services.market_model import MeasureFactory
from app.core.services.regression import PriceSurface, regress

logger = logging.getLogger(__name__)


def decompose(
    method: str,
    legs: LegAccumulator,
    clean_price: float,
    metadata: Optional[Dict[str, Any]] = None,
    convergence: Iterable[ConvergenceRecord] = (),
    checks: Optional[Dict[str, float]] = None,
    warnings: Iterable[str] = (),
) -> ValuationReport:
    """
    Report whose terms are the means of the discounted legs.

    The price is the mean of the signed pathwise sum of the same legs, so
    price = clean_estimate + LVA + DVA − CVA + FVA^f + ΣFVA^{h^i} + carry + external terms
    holds up to floating-point summation order.
    """
    samples = legs.pathwise_total()
    n = len(samples)
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    fba_h = tuple(legs.mean(L.repo_lend(i)) for i in range(legs.n_assets))
    fca_h = tuple(legs.mean(L.repo_borrow(i)) for i in range(legs.n_assets))
    fba_f, fca_f = legs.mean(L.FUNDING_LEND), legs.mean(L.FUNDING_BORROW)
    return ValuationReport(
        method=method,
        price=float(np.mean(samples)),
        standard_error=se,
        clean=clean_price,
        clean_estimate=float(np.mean(legs.combined(L.STREAM, L.CLEAN_AT_DEFAULT))),
        lva=legs.mean(L.COLLATERAL),
        cva=legs.mean(L.CVA),
        dva=legs.mean(L.DVA),
        fva_f=fba_f - fca_f,
        fba_f=fba_f,
        fca_f=fca_f,
        fva_h=tuple(b - c for b, c in zip(fba_h, fca_h)),
        fba_h=fba_h,
        fca_h=fca_h,
        treasury_carry=legs.mean(L.TREASURY_CARRY),
        dva_f=legs.mean(L.DVA_F),
        cva_f=legs.mean(L.CVA_F),
        dva_f_minus=legs.mean(L.DVA_F_MINUS),
        dva_f_plus=legs.mean(L.DVA_F_PLUS),
        own_default_benefit=legs.mean(L.OWN_DEFAULT_BENEFIT),
        metadata=dict(metadata or {}),
        convergence=tuple(convergence),
        checks=dict(checks or {}),
        warnings=tuple(warnings),
        samples=samples,
    )


def run_metadata(
    choice: DeflatorChoice, grid: TimeGrid, config: MonteCarloConfig, **extra: Any
) -> Dict[str, Any]:
    data = {
        "measure": choice.preset.value,
        "eta": choice.eta.to_pairs(),
        "paths": config.n_paths,
        "steps": grid.n_steps,
        "seed": config.seed,
        "basis_degree": config.basis_degree,
    }
    data.update(extra)
    return data


class LinearPricer:
    """
    Funding-measure, risk-neutral and general-deflator prices of (A, C, R, τ) when the
    treasury and repo pairs are degenerate. Collateral remuneration may still be asymmetric:
    C is exogenous, so c̄ is known pathwise.
    """

    def __init__(
        self,
        factory: Optional[ValuationFactory] = None,
        measures: Optional[MeasureFactory] = None,
    ):
        self._factory = factory or ValuationFactory()
        self._measures = measures or MeasureFactory()

    @staticmethod
    def _require_linear(market: Market) -> None:
        if not market.rates.is_linear:
            flags = {k: v for k, v in market.rates.degeneracy.items() if k != "collateral"}
            raise PricingSetupError(
                f"linear pricing needs degenerate treasury and repo pairs, got {flags}"
            )

    def clean_price(
        self,
        contract: Contract,
        market: Market,
        config: MonteCarloConfig,
        grid: Optional[TimeGrid] = None,
    ) -> CleanValuation:
        """π^r₀(A) and Q at every node of a risk-neutral ensemble"""
        grid = grid or self._factory.grid(contract, market, config)
        choice = self._measures.make_choice(Preset.RISK_FREE, market.rates, market.assets)
        ensemble = self._factory.ensemble(market, choice, grid, config)
        valuer = self._factory.valuer(contract, market, grid, config)
        return self._factory.clean_pricer.clean_price(valuer, ensemble)

    def funding_measure_solution(
        self,
        contract: Contract,
        collateral: CollateralSpec,
        closeout: CloseoutSpec,
        market: Market,
        config: MonteCarloConfig,
    ):
        """(valuation, solution) under Q^{f,h,f}, where no leg depends on the price"""
        self._require_linear(market)
        choice = self._measures.make_choice(Preset.FUNDING, market.rates, market.assets)
        valuation = self._factory.prepare(contract, collateral, closeout, market, config, choice)
        return valuation, valuation.engine(config).solve()

    def price_funding_measure(
        self,
        contract: Contract,
        collateral: CollateralSpec,
        closeout: CloseoutSpec,
        market: Market,
        config: MonteCarloConfig,
    ) -> ValuationReport:
        logger.info("Pricing under the funding measure (%d paths)", config.n_paths)
        valuation, solution = self.funding_measure_solution(
            contract, collateral, closeout, market, config
        )
        return self._report("funding_measure", valuation, solution, config)

    def price_with_deflator(
        self,
        choice: DeflatorChoice,
        contract: Contract,
        collateral: CollateralSpec,
        closeout: CloseoutSpec,
        market: Market,
        config: MonteCarloConfig,
        start: Optional[PriceSurface] = None,
        method: str = "deflator",
    ) -> ValuationReport:
        """General valuation formula under an arbitrary instrumental deflator"""
        self._require_linear(market)
        if start is None:
            _, seed_solution = self.funding_measure_solution(
                contract, collateral, closeout, market, config
            )
            start = seed_solution.surface
        logger.info("Pricing under %s deflator (%d paths)", choice.preset.value, config.n_paths)
        valuation = self._factory.prepare(contract, collateral, closeout, market, config, choice)
        solution = valuation.engine(config).solve(start)
        return self._report(method, valuation, solution, config)

    def price_risk_neutral(
        self,
        contract: Contract,
        collateral: CollateralSpec,
        closeout: CloseoutSpec,
        market: Market,
        config: MonteCarloConfig,
        start: Optional[PriceSurface] = None,
    ) -> ValuationReport:
        """Risk-neutral adjusted cash flows, F from the previous iterate"""
        choice = self._measures.make_choice(Preset.RISK_FREE, market.rates, market.assets)
        return self.price_with_deflator(
            choice, contract, collateral, closeout, market, config, start, "risk_neutral"
        )

    @staticmethod
    def _report(method, valuation, solution: EngineSolution, config) -> ValuationReport:
        metadata = run_metadata(
            valuation.ensemble.choice,
            valuation.grid,
            config,
            iterations=len(solution.convergence),
        )
        return decompose(
            method,
            solution.legs,
            valuation.clean.price,
            metadata=metadata,
            convergence=solution.convergence,
            checks={"driver_switch_fraction": solution.driver_switch_fraction},
        )

    def linear_bsde_explicit(
        self,
        contract: Contract,
        collateral: CollateralSpec,
        market: Market,
        config: MonteCarloConfig,
    ) -> BSDEState:
        """
        Y_t = B^f_t E_{Q^{f,h,f}}[−(B^f_T)^{-1}X + ∫ₜᵀ (c̄ − f)C (B^f)^{-1} du] in the
        replication sign, regressed node by node; no defaults, single payoff at T.
        """
        self._require_linear(market)
        if market.defaults.has_defaults:
            raise PricingSetupError("the explicit linear BSDE covers the default-free case only")
        if not contract.is_terminal_only:
            raise PricingSetupError("the explicit linear BSDE needs a single payoff at maturity")

        rates = market.rates
        choice = self._measures.make_choice(Preset.FUNDING, rates, market.assets)
        grid = self._factory.grid(contract, market, config)
        ensemble = self._factory.ensemble(market, choice, grid, config)
        valuer = self._factory.valuer(contract, market, grid, config)

        n, nodes, m = ensemble.n_paths, grid.n_steps + 1, ensemble.n_assets
        coll = np.zeros((n, nodes))
        c_bar = np.zeros((n, nodes))
        for k, t in enumerate(grid.times):
            state = ensemble.state(k)
            coll[:, k] = collateral_value(collateral, t, state, valuer.value(k, state))
            c_bar[:, k] = effective_collateral_rate(coll[:, k], rates.collateral, t)

        f = choice.eta
        y = np.zeros((n, nodes))
        z = np.zeros((n, nodes, m))
        value = np.zeros(n)
        fits = [None] * nodes
        for k in range(nodes - 2, -1, -1):
            t0, t1 = grid.times[k], grid.times[k + 1]
            f_k = float(f.value_at(t0))
            dt = t1 - t0
            w = dt if f_k == 0.0 else -math.expm1(-f_k * dt) / f_k
            paid = valuer.payment(k + 1, ensemble.state(k + 1))
            value = (c_bar[:, k] - f_k) * coll[:, k] * w + math.exp(-f_k * dt) * (value - paid)
            fits[k] = regress(value, ensemble.state(k), config.basis_degree)
            y[:, k] = fits[k](ensemble.state(k))
        y[:, -1] = 0.0
        surface = PriceSurface([fit for fit in fits[:-1]] + [None])
        for k in range(nodes - 1):
            state = ensemble.state(k)
            z[:, k, :] = surface.gradient(k, state)

        treasury = np.asarray(market.assets.treasury_funded, dtype=bool)
        hedge_treasury = (z[:, :, treasury] * ensemble.spots[:, :, treasury]).sum(axis=2)
        portfolio = coll + y
        return BSDEState(
            times=grid.nodes,
            y=portfolio,
            z=z,
            y_hat=portfolio - hedge_treasury,
            collateral=coll,
            funding_rate=np.asarray(f.value_at(grid.nodes)) * np.ones((n, 1)),
            repo_rate=np.stack(
                [np.asarray(rates.repo[i].lend.value_at(grid.nodes)) for i in range(m)], axis=-1
            )
            * np.ones((n, 1, 1)),
            collateral_rate=c_bar,
        )
