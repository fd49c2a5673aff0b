"""External funding adjustments and incomplete-market valuation"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from app.core.entities import legs as L
from app.core.entities.collateral import CloseoutSpec, CollateralSpec
from app.core.entities.contract import Contract
from app.core.entities.curves import RateCurve
from app.core.entities.legs import LegAccumulator
from app.core.entities.market import DefaultModel, Market, Preset
from app.core.entities.report import ValuationReport
from app.core.entities.scenario import (
    ExternalConvention,
    ExternalFundingSpec,
    IncompleteMarketSpec,
)
from app.core.entities.simulation import MonteCarloConfig, PathEnsemble
from app.core.errors import PricingSetupError, ValidationError
from app.core.services.adjusted_cash_flows import (
    AdjustedCashFlowEngine,
    Valuation,
    ValuationFactory,
)
from app.core.services.leg_builder import LegBuilder, external_leg
from app.core.services.linear_pricer import decompose, run_metadata
from app.core.services.market_model import MeasureFactory
from app.core.services.nonlinear_pricer import NonlinearPricer, picard_report
from app.core.services.path_simulator import build_grid

logger = logging.getLogger(__name__)

RECEIVABLE = "receivable"
PAYABLE = "payable"
MIXED = "mixed"

# wealth-independence tolerance relative to the notional
WEALTH_TOLERANCE = 1e-10


def _mean_and_error(samples: np.ndarray) -> Tuple[float, float]:
    n = len(samples)
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(np.mean(samples)), se


def payoff_sign(payments: np.ndarray) -> str:
    """Classify a terminal payoff sample as receivable (X ≥ 0), payable (X ≤ 0) or mixed"""
    if np.all(payments >= 0.0):
        return RECEIVABLE
    if np.all(payments <= 0.0):
        return PAYABLE
    return MIXED


@dataclass(frozen=True, eq=False)
class ExternalFundingState:
    """
    Bank-wide external position Y (deterministic, per cell) next to the trade's
    incremental funding F (paths x cells).
    """

    convention: ExternalConvention
    bank_position: np.ndarray
    funding: np.ndarray
    alive: np.ndarray

    def violations(self) -> List[str]:
        """Broken net-borrower preconditions Y ≤ 0 and Y + F ≤ 0 on alive path-nodes"""
        if self.convention is not ExternalConvention.NET_BORROWER:
            return []
        out = []
        if np.any(self.bank_position > 0.0):
            out.append("net-borrower convention: bank position Y is positive on some dates")
        combined = self.bank_position[None, :] + self.funding
        breaches = int(np.sum((combined > 0.0) & self.alive))
        if breaches:
            out.append(
                f"net-borrower convention: Y + F > 0 on {breaches} alive path-nodes"
            )
        return out


def external_adjustments(
    legs: LegAccumulator, convention: ExternalConvention
) -> Tuple[float, float]:
    """(DVA^f, CVA^f) under INDEPENDENT, (DVA^{f,−}, DVA^{f,+}) under NET_BORROWER"""
    if convention is ExternalConvention.INDEPENDENT:
        names = (L.DVA_F, L.CVA_F)
    else:
        names = (L.DVA_F_MINUS, L.DVA_F_PLUS)
    missing = [name for name in names if name not in legs]
    if missing:
        raise ValidationError(
            f"external legs {missing} missing for the {convention.value} convention"
        )
    return legs.mean(names[0]), legs.mean(names[1])


@dataclass(frozen=True)
class DefaultableAccount:
    """B^b with dB^b = f^b B^b dt − L_I B^b_− d1{t≥τ_I}"""

    borrow_rate: RateCurve
    trader_loss: float

    def __post_init__(self):
        if not 0.0 <= self.trader_loss <= 1.0:
            raise ValidationError("trader loss must lie in [0, 1]")

    @property
    def jump_factor(self) -> float:
        return 1.0 - self.trader_loss

    def around_default(self, tau_trader: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(B^b_{τ−}, B^b_τ) per path at its own default; nan where τ_I is infinite"""
        tau = np.asarray(tau_trader, dtype=float)
        finite = np.isfinite(tau)
        growth = np.exp(self.borrow_rate.integral(np.where(finite, tau, 0.0)))
        left = np.where(finite, growth, np.nan)
        return left, left * self.jump_factor


@dataclass(frozen=True, eq=False)
class JResult:
    """Net funding/default benefit: MC estimate and the marginalized integrand per cell"""

    mc: float
    standard_error: float
    integrand: np.ndarray
    marginalized: float
    benefit: float
    benefit_error: float


def net_benefit_J(
    ensemble: PathEnsemble,
    borrowing: np.ndarray,
    spread: np.ndarray,
    defaults: DefaultModel,
    account: DefaultableAccount,
) -> JResult:
    """
    J₀ = E[1{τ=τ_I≤T} L_I Y_{τ−}] − E[∫ s^f Y du], Y the deflated borrowing (paths x cells)
    read at the left node of each cell.

    The borrowing is held as a short position in the defaultable account, so the benefit at
    the own default is the account's jump on the units held.
    """
    grid = ensemble.grid
    left = grid.nodes[:-1]
    horizon = grid.horizon
    tau = ensemble.tau
    spread = np.asarray(spread, dtype=float)
    rows = np.arange(ensemble.n_paths)

    cells = grid.cell_of(np.minimum(tau, horizon))
    own = (ensemble.tau_trader <= ensemble.tau_counterparty) & (tau <= horizon)
    before, after = account.around_default(np.where(own, ensemble.tau_trader, np.inf))
    units = borrowing[rows, cells] / np.where(own, before, 1.0)
    benefit = np.where(own, units * (before - after), 0.0)
    length = np.clip(np.minimum(tau[:, None], grid.nodes[1:]) - left, 0.0, None)
    cost = (spread * borrowing * length).sum(axis=1)
    mc, se = _mean_and_error(benefit - cost)
    benefit_mean, benefit_se = _mean_and_error(benefit)

    lam = np.asarray(defaults.trader_intensity.value_at(left), dtype=float)
    integrand = account.trader_loss * lam - spread
    survival = np.exp(-defaults.total_intensity.integral(left))
    marginalized = float(np.sum(survival * integrand * borrowing.mean(axis=0) * grid.steps))
    return JResult(
        mc=mc,
        standard_error=se,
        integrand=integrand,
        marginalized=marginalized,
        benefit=benefit_mean,
        benefit_error=benefit_se,
    )


class FundingExtensions:
    """Pricers for external funding conventions and for the incomplete market"""

    def __init__(
        self,
        factory: Optional[ValuationFactory] = None,
        measures: Optional[MeasureFactory] = None,
    ):
        self._factory = factory or ValuationFactory()
        self._measures = measures or MeasureFactory()
        self._nonlinear = NonlinearPricer(self._factory, self._measures)

    def price_with_external(
        self,
        contract: Contract,
        collateral: CollateralSpec,
        closeout: CloseoutSpec,
        market: Market,
        config: MonteCarloConfig,
        spec: ExternalFundingSpec,
    ) -> ValuationReport:
        """
        Price inclusive of the external funding benefits and losses of a single payoff X
        with repo rates equal to r; the receivable and payable special cases are checked
        and stored in the report.
        """
        rates = market.rates
        if not contract.is_terminal_only:
            raise PricingSetupError("external funding pricing needs a single payoff X at maturity")
        if not all(p.degenerate and p.lend.equivalent(rates.r) for p in rates.repo):
            raise PricingSetupError("external funding pricing assumes h^l = h^b = r")
        if (
            spec.convention is ExternalConvention.NET_BORROWER
            and market.defaults.external_intensity is not None
        ):
            raise PricingSetupError("net-borrower convention has no defaultable external entity")

        valuation, solution, gap = self._nonlinear.picard_solution(
            contract, collateral, closeout, market, config, external=spec.convention
        )
        ensemble, grid = valuation.ensemble, valuation.grid
        result = solution.result
        main = solution.legs

        # the legs priced inside the iteration, read back off the converged funding path
        replay = external_leg(ensemble, result.funding, spec.convention, market.defaults)
        replay_gap = max(float(np.max(np.abs(v - main[name]))) for name, v in replay.items())
        first, second = external_adjustments(main, spec.convention)
        logger.info("External %s legs: %.6g and %.6g", spec.convention.value, first, second)

        state = ExternalFundingState(
            convention=spec.convention,
            bank_position=spec.bank_position.amount_at(grid.nodes[:-1]),
            funding=result.funding,
            alive=result.alive,
        )
        warnings = state.violations()
        checks = {"external_leg_gap": replay_gap}
        sign = payoff_sign(valuation.clean.payments[:, -1])

        if sign == RECEIVABLE:
            independent = spec.convention is ExternalConvention.INDEPENDENT
            benefit = L.DVA_F if independent else L.DVA_F_MINUS
            net = main[benefit] - main[L.FUNDING_BORROW] + main[L.FUNDING_LEND]
            checks["receivable_net_benefit"], checks["receivable_net_benefit_se"] = (
                _mean_and_error(net)
            )
        elif sign == PAYABLE and spec.convention is ExternalConvention.NET_BORROWER:
            if not rates.funding.lend.equivalent(rates.r):
                warnings.append("payable special case needs f^l = r; its checks are skipped")
            else:
                checks.update(self._payable_checks(valuation, result.funding, main))
        elif sign == MIXED:
            warnings.append("payoff takes both signs; the special-case checks are skipped")

        for message in warnings:
            logger.warning(message)
        report = picard_report(
            "external", valuation, solution, gap, config, tuple(warnings), checks
        )
        metadata = dict(report.metadata, external_convention=spec.convention.value, payoff=sign)
        return replace(report, metadata=metadata)

    @staticmethod
    def _payable_checks(valuation: Valuation, funding: np.ndarray, main: LegAccumulator) -> dict:
        """
        A payable funded at f^l = r: the trader's funding at its default tracks C − Q_τ, so
        DVA^{f,+} replicates the closeout DVA and the total is the clean price.
        """
        ensemble, grid = valuation.ensemble, valuation.grid
        rows = np.arange(ensemble.n_paths)
        cells = grid.cell_of(np.minimum(ensemble.tau, grid.horizon))
        own = (ensemble.tau_trader <= ensemble.tau_counterparty) & (ensemble.tau <= grid.horizon)
        q_tau = valuation.builder.clean_at_default()
        settled = valuation.collateral[rows, cells] - np.where(own, q_tau, 0.0)
        checks = {}
        checks["payable_funding_gap"], checks["payable_funding_gap_se"] = _mean_and_error(
            np.where(own, funding[rows, cells] - settled, 0.0)
        )
        checks["payable_dva_gap"], checks["payable_dva_gap_se"] = _mean_and_error(
            main[L.DVA] - main[L.DVA_F_PLUS]
        )
        checks["payable_total_gap"], checks["payable_total_gap_se"] = _mean_and_error(
            main.pathwise_total() - valuation.clean.price
        )
        return checks

    def price_incomplete(
        self,
        contract: Contract,
        collateral: CollateralSpec,
        closeout: CloseoutSpec,
        market: Market,
        config: MonteCarloConfig,
        spec: Optional[IncompleteMarketSpec] = None,
    ) -> ValuationReport:
        """
        Price under Q^h with η-deflation, treasury rates η when lending and η + s^f when
        borrowing, and the own-default benefit on the defaultable borrowing account.

        With the fair spread s^f = L_Iλ^I the funding and own-default legs cancel cell by
        cell, so the price does not depend on the wealth; an explicit spread keeps both
        legs in the Picard iteration.
        """
        spec = spec or IncompleteMarketSpec()
        rates, assets, defaults = market.rates, market.assets, market.defaults
        if assets.treasury_assets:
            raise PricingSetupError("incomplete-market pricing needs every hedge repo-funded")
        h = rates.repo[0].lend
        if not all(p.lend.equivalent(h) and p.borrow.equivalent(h) for p in rates.repo):
            raise PricingSetupError("incomplete-market pricing needs one shared repo rate h")
        if not spec.wealth_levels:
            raise ValidationError("at least one wealth level is required")

        explicit = spec.spread or rates.funding_spread
        fair = explicit is None
        spread_curve = defaults.trader_intensity.scaled(defaults.trader_loss) if fair else explicit

        choice = self._measures.make_choice(Preset.REPO, rates, assets, eta=spec.eta)
        curves = rates.all_curves + list(defaults.curves) + [spread_curve, choice.eta]
        grid = build_grid(contract, config.n_steps, curves)
        valuation = self._factory.prepare(
            contract,
            collateral,
            closeout,
            market,
            config,
            choice,
            marginalized=True,
            own_default_benefit=True,
            clean_discount=choice.eta,
            clean_carry=h,
            grid=grid,
        )
        spread = np.asarray(spread_curve.value_at(grid.nodes[:-1]), dtype=float)
        cell_rates = valuation.builder.rates.with_funding_spreads(np.zeros_like(spread), spread)
        builder = LegBuilder(
            valuation.ensemble,
            valuation.clean,
            valuation.collateral,
            cell_rates,
            defaults,
            closeout,
            marginalized=True,
            own_default_benefit=True,
        )
        logger.info(
            "Incomplete-market pricing with %s spread at %d wealth levels",
            "fair" if fair else "explicit",
            len(spec.wealth_levels),
        )
        solutions = [
            AdjustedCashFlowEngine(builder, config, wealth).solve() for wealth in spec.wealth_levels
        ]
        primary = solutions[0]
        prices = [s.price for s in solutions]
        wealth_gap = max(abs(p - prices[0]) for p in prices)

        warnings = []
        if fair and wealth_gap > WEALTH_TOLERANCE * config.notional:
            warnings.append(f"price moves with the wealth level by {wealth_gap:.3e}")
            logger.warning(warnings[-1])

        borrowing = valuation.ensemble.deflator[:-1] * np.maximum(-primary.result.funding, 0.0)
        account = DefaultableAccount(choice.eta + spread_curve, defaults.trader_loss)
        j = net_benefit_J(valuation.ensemble, borrowing, spread, defaults, account)
        own_leg = primary.legs.mean(L.OWN_DEFAULT_BENEFIT)
        metadata = run_metadata(
            choice,
            grid,
            config,
            iterations=len(primary.convergence),
            closeout_discount=choice.eta.to_pairs(),
            closeout_carry=h.to_pairs(),
            spread_mode="fair" if fair else "explicit",
            wealth_levels=list(spec.wealth_levels),
        )
        report = decompose(
            "incomplete",
            primary.legs,
            valuation.clean.price,
            metadata=metadata,
            convergence=primary.convergence,
            checks={
                "wealth_gap": wealth_gap,
                "j_standard_error": j.standard_error,
                "j_marginalized": j.marginalized,
                "j_integrand_max_abs": float(np.max(np.abs(j.integrand))),
                "own_default_benefit_gap": j.benefit - own_leg,
                "own_default_benefit_gap_se": j.benefit_error,
            },
            warnings=warnings,
        )
        return replace(report, net_benefit_j=j.mc)
