"""Pricing under differential lend/borrow rates"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from app.core.entities.bsde import BSDEState
from app.core.entities.collateral import CloseoutSpec, CollateralSpec, Settlement
from app.core.entities.contract import Contract, SignConvention
from app.core.entities.curves import RateSystem
from app.core.entities.market import Market, Preset
from app.core.entities.report import ValuationReport
from app.core.entities.scenario import ExternalConvention
from app.core.entities.simulation import MonteCarloConfig
from app.core.errors import PricingSetupError
from app.core.services.adjusted_cash_flows import EngineSolution, Valuation, ValuationFactory
from app.core.services.closeout import closeout_legs
from app.core.services.linear_pricer import LinearPricer, decompose, run_metadata
from app.core.services.market_model import MeasureFactory
from app.core.services.regression import RegressionFit, hedge_delta, regress

logger = logging.getLogger(__name__)

# largest default probability allowed on one grid cell
MAX_CELL_DEFAULT_PROBABILITY = 0.2


@dataclass(frozen=True, eq=False)
class EffectiveRates:
    funding: np.ndarray
    repo: np.ndarray
    collateral: np.ndarray


def effective_rates(
    y_hat: np.ndarray,
    hedge: np.ndarray,
    collateral: np.ndarray,
    rates: RateSystem,
    t: float,
) -> EffectiveRates:
    """
    f̄ = f^l where Ŷ ≥ 0, f^b elsewhere; h̄^i = h^{i,l} where Z^iS^i ≤ 0 (repo account
    F^i = −Z^iS^i lends), h^{i,b} elsewhere; c̄ from the sign of C.

    A zero hedge value resolves to the lend branch.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    hedge = np.atleast_2d(np.asarray(hedge, dtype=float))
    repo = np.empty(hedge.shape)
    for i, pair in enumerate(rates.repo):
        repo[:, i] = pair.effective(t, hedge[:, i] <= 0.0)
    return EffectiveRates(
        funding=rates.funding.effective(t, y_hat >= 0.0),
        repo=repo,
        collateral=rates.collateral.effective(t, np.asarray(collateral) < 0.0),
    )


@dataclass(frozen=True, eq=False)
class BSDESolution:
    """Backward Euler solution with its origin estimate"""

    state: BSDEState
    price: float
    standard_error: float
    clean: float
    metadata: dict

    def to_report(self) -> ValuationReport:
        return ValuationReport(
            method="bsde",
            price=self.price,
            standard_error=self.standard_error,
            clean=self.clean,
            clean_estimate=self.clean,
            metadata=dict(self.metadata),
        )


def picard_report(
    method: str,
    valuation: Valuation,
    solution: EngineSolution,
    fixed_point_gap: float,
    config: MonteCarloConfig,
    warnings: Tuple[str, ...] = (),
    checks: Optional[dict] = None,
) -> ValuationReport:
    metadata = run_metadata(
        valuation.ensemble.choice,
        valuation.grid,
        config,
        iterations=len(solution.convergence),
    )
    all_checks = {
        "driver_switch_fraction": solution.driver_switch_fraction,
        "driver_fixed_point_gap": fixed_point_gap,
    }
    all_checks.update(checks or {})
    return decompose(
        method,
        solution.legs,
        valuation.clean.price,
        metadata=metadata,
        convergence=solution.convergence,
        checks=all_checks,
        warnings=warnings,
    )


class NonlinearPricer:
    """
    Two independent routes to the price under differential rates: an implicit backward
    Euler scheme for the pricing BSDE with defaults marginalized on each cell, and Picard
    iteration on the risk-neutral adjusted cash flows with pathwise defaults.
    """

    def __init__(
        self,
        factory: Optional[ValuationFactory] = None,
        measures: Optional[MeasureFactory] = None,
    ):
        self._factory = factory or ValuationFactory()
        self._measures = measures or MeasureFactory()
        self._linear = LinearPricer(self._factory, self._measures)

    def solve_bsde(
        self,
        contract: Contract,
        collateral: CollateralSpec,
        closeout: CloseoutSpec,
        market: Market,
        config: MonteCarloConfig,
    ) -> BSDESolution:
        rates = market.rates
        defaults = market.defaults
        choice = self._measures.make_choice(Preset.RISK_FREE, rates, market.assets)
        valuation = self._factory.prepare(
            contract, collateral, closeout, market, config, choice, marginalized=True
        )
        grid, ensemble = valuation.grid, valuation.ensemble
        cells = valuation.builder.rates
        times = grid.times
        n, nodes, m = ensemble.n_paths, grid.n_steps + 1, ensemble.n_assets

        intensity = cells.trader_intensity + cells.counterparty_intensity
        worst = float(np.max(intensity * grid.steps))
        if worst > MAX_CELL_DEFAULT_PROBABILITY:
            raise PricingSetupError(
                f"grid too coarse for the default intensities: λΔt = {worst:.3f} > "
                f"{MAX_CELL_DEFAULT_PROBABILITY}; increase the number of steps"
            )
        logger.info("Solving the pricing BSDE on %d paths, %d steps", n, grid.n_steps)

        treasury = cells.treasury_mask
        repo_assets = np.flatnonzero(~treasury)
        coll = valuation.collateral
        clean = valuation.clean
        loss_i, loss_c = defaults.trader_loss, defaults.counterparty_loss
        csa = closeout.settlement is Settlement.CSA
        everyone = np.ones(n, dtype=bool)

        price = np.zeros((n, nodes))
        z = np.zeros((n, nodes, m))
        f_bar = np.zeros((n, nodes))
        h_bar = np.zeros((n, nodes, m))
        c_bar = np.zeros((n, nodes))
        fits: List[Optional[RegressionFit]] = [None] * nodes
        origin_target = np.zeros(n)
        origin_denominator = 1.0

        for k in range(nodes - 2, -1, -1):
            t, dt = times[k], times[k + 1] - times[k]
            state = ensemble.state(k)
            target = price[:, k + 1] + clean.payments[:, k + 1]
            fits[k] = regress(target, state, config.basis_degree)
            continuation = fits[k](state)
            gradient_fit = fits[1] if k == 0 and nodes > 2 else fits[k]
            z[:, k, :] = -hedge_delta(gradient_fit, state)
            hedge = z[:, k, :] * state
            hedge_treasury = hedge[:, treasury].sum(axis=1)

            gamma = cells.eta[k]
            lam_i, lam_c = cells.trader_intensity[k], cells.counterparty_intensity[k]
            if csa:
                q = clean.ex_dividend[:, k]
                dva, cva = closeout_legs(q, coll[:, k], everyone, everyone, loss_i, loss_c)
                default_flow = lam_i * (q + dva) + lam_c * (q - cva)
            else:
                default_flow = np.zeros(n)

            provisional = effective_rates(np.zeros(n), hedge, coll[:, k], rates, t)
            c_bar[:, k] = provisional.collateral
            h_bar[:, k, :] = provisional.repo
            drift = -c_bar[:, k] * coll[:, k] + default_flow + gamma * hedge_treasury
            if repo_assets.size:
                drift = drift + ((gamma - h_bar[:, k, repo_assets]) * hedge[:, repo_assets]).sum(
                    axis=1
                )
            a = continuation + dt * drift

            # Ŷ = C − P − H_T has the sign of (C − H_T)(1 + λΔ) − a on either branch
            lam = lam_i + lam_c
            exposed = coll[:, k] - hedge_treasury
            lending = exposed * (1.0 + lam * dt) - a >= 0.0
            f_bar[:, k] = rates.funding.effective(t, lending)
            denominator = 1.0 + (f_bar[:, k] + lam) * dt
            price[:, k] = (a + dt * f_bar[:, k] * exposed) / denominator
            if k == 0:
                origin_target, origin_denominator = target, denominator

        f_bar[:, -1] = f_bar[:, -2]
        h_bar[:, -1, :] = h_bar[:, -2, :]
        c_bar[:, -1] = rates.collateral.effective(times[-1], coll[:, -1] < 0.0)

        hedge_treasury = (z[:, :, treasury] * ensemble.spots[:, :, treasury]).sum(axis=2)
        y = coll - price
        state = BSDEState(
            times=grid.nodes,
            y=y,
            z=z,
            y_hat=y - hedge_treasury,
            collateral=coll,
            funding_rate=f_bar,
            repo_rate=h_bar,
            collateral_rate=c_bar,
        )
        se = 0.0
        if n > 1:
            spread = np.std(origin_target, ddof=1) / math.sqrt(n)
            se = float(spread / np.mean(origin_denominator))
        logger.info("BSDE price %.6f (se %.2e)", state.canonical_price, se)
        return BSDESolution(
            state=state,
            price=state.canonical_price,
            standard_error=se,
            clean=clean.price,
            metadata=run_metadata(choice, grid, config, defaults="marginalized"),
        )

    def picard_solution(
        self,
        contract: Contract,
        collateral: CollateralSpec,
        closeout: CloseoutSpec,
        market: Market,
        config: MonteCarloConfig,
        external: Optional[ExternalConvention] = None,
    ) -> Tuple[Valuation, EngineSolution, float]:
        """
        (valuation, converged solution, fraction of path-nodes whose effective rates change
        when recomputed at the converged surface)
        """
        collapsed = market.with_rates(market.rates.collapsed_to_lend())
        _, seed = self._linear.funding_measure_solution(
            contract, collateral, closeout, collapsed, config
        )
        choice = self._measures.make_choice(Preset.RISK_FREE, market.rates, market.assets)
        valuation = self._factory.prepare(
            contract, collateral, closeout, market, config, choice, external=external
        )
        engine = valuation.engine(config)
        logger.info("Picard pricing on %d paths under differential rates", config.n_paths)
        solution = engine.solve(seed.surface)

        # one more sweep on the converged surface certifies the driver branches
        certificate = engine.sweep(solution.surface)
        changed = certificate.switches_against(solution.result)
        if changed:
            logger.warning(
                "effective rates changed on %d path-nodes at the converged solution", changed
            )
        return valuation, solution, changed / max(int(solution.result.alive.sum()), 1)

    def picard_price(
        self,
        contract: Contract,
        collateral: CollateralSpec,
        closeout: CloseoutSpec,
        market: Market,
        config: MonteCarloConfig,
    ) -> ValuationReport:
        """
        Risk-neutral adjusted cash flows with effective rates read from the previous
        iterate, started from the funding-measure surface of the lend-collapsed rates.
        """
        valuation, solution, gap = self.picard_solution(
            contract, collateral, closeout, market, config
        )
        return picard_report("picard", valuation, solution, gap, config)

    def two_sided(
        self,
        contract: Contract,
        collateral: CollateralSpec,
        closeout: CloseoutSpec,
        market: Market,
        config: MonteCarloConfig,
    ) -> Tuple[ValuationReport, ValuationReport]:
        """Prices of receiving A and of delivering A (receiving the mirrored stream)"""
        receive = self.picard_price(contract, collateral, closeout, market, config)
        deliver = self.picard_price(
            SignConvention.mirror(contract), collateral.negated(), closeout, market, config
        )
        return receive, deliver
