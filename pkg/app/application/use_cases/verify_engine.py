"""Verify Engine Use Case"""

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from app.core.entities.collateral import CloseoutSpec, CollateralSpec, Defaulter, Settlement
from app.core.entities.contract import (
    Contract,
    DividendStream,
    Payment,
    PayoffKind,
    SignConvention,
)
from app.core.entities.curves import RateCurve, RatePair, RateSystem
from app.core.entities.market import AssetModel, DefaultModel, Market, Preset
from app.core.entities.report import ValuationReport
from app.core.entities.scenario import (
    ExternalConvention,
    ExternalFundingSpec,
    IncompleteMarketSpec,
    PositionSchedule,
)
from app.core.entities.simulation import MonteCarloConfig, SeedPolicy, TimeGrid
from app.core.errors import ValidationError
from app.core.services.adjusted_cash_flows import ValuationFactory
from app.core.services.closeout import closeout_legs, closeout_payoff
from app.core.services.funding_extensions import FundingExtensions
from app.core.services.linear_pricer import LinearPricer
from app.core.services.market_model import MeasureFactory
from app.core.services.nonlinear_pricer import NonlinearPricer
from app.core.services.oracles import (
    TreeInput,
    TwoRateBSInput,
    XvaQuadratureInput,
    brute_force_reference,
    fair_flat_borrow_rate,
    lognormal_quadrature_price,
    quadrature_xva,
)

logger = logging.getLogger(__name__)

# Reference market of the acceptance matrix
SPOT = 100.0
STRIKE = 100.0
VOL = 0.2
MATURITY = 1.0
RISK_FREE = 0.02
FUNDING = 0.03
REPO = 0.025
COLLATERAL = 0.015
TRADER_INTENSITY = 0.01
COUNTERPARTY_INTENSITY = 0.02
LOSS = 0.6
ALPHAS = (0.0, 0.8, 1.0)
BORROW_SPREAD = 0.02
COLLATERAL_SPREAD = 0.01
CUSTOM_ETA = 0.05

K_SE = 3.0
K_SE_INDEPENDENT = 4.0
DEFAULT_SPLIT_PATHS = 100_000
CLOSEOUT_TUPLES = 10_000
TREE_STEPS = 250
# accuracy and cost targets, projected from the run's own size
TARGET_PATHS = 100_000
TARGET_STEPS = 128
TARGET_RELATIVE_SE = 1e-3
RUNTIME_BUDGET_SECONDS = 60.0

CHECKS = (
    "linear_oracle",
    "invariance",
    "decomposition",
    "degenerate_collapse",
    "buy_sell_symmetry",
    "nonlinear_arbitration",
    "nonlinear_degeneracy",
    "fair_spread",
    "external_special_cases",
    "simulation",
    "closeout",
)


def flat_pair(lend: float, borrow: Optional[float] = None) -> RatePair:
    return RatePair(
        lend=RateCurve.flat(lend), borrow=RateCurve.flat(lend if borrow is None else borrow)
    )


def acceptance_market(
    r: float = RISK_FREE,
    funding: Tuple[float, float] = (FUNDING, FUNDING),
    repo: Tuple[float, float] = (REPO, REPO),
    collateral: Tuple[float, float] = (COLLATERAL, COLLATERAL),
    vol: float = VOL,
    with_defaults: bool = True,
) -> Market:
    """One lognormal asset under flat curves; pairs are (lend, borrow)"""
    rates = RateSystem(
        r=RateCurve.flat(r),
        funding=flat_pair(*funding),
        collateral=flat_pair(*collateral),
        repo=(flat_pair(*repo),),
        horizon=MATURITY,
    )
    defaults = (
        DefaultModel.flat(TRADER_INTENSITY, COUNTERPARTY_INTENSITY, LOSS, LOSS)
        if with_defaults
        else DefaultModel.default_free()
    )
    return Market(rates, AssetModel.single(SPOT, vol), defaults)


def call(quantity: float = 1.0) -> Contract:
    return Contract.single(Payment(MATURITY, PayoffKind.CALL, strike=STRIKE, quantity=quantity))


@dataclass(frozen=True)
class CheckResult:
    """One row of the verification table: passed when |value| <= threshold"""

    check: str
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


@dataclass
class VerifyEngineRequest:
    """Run sizes for the verification matrix"""

    paths: int = 20000
    steps: int = 64
    seed: int = 20240601
    workers: int = 1
    checks: Optional[Tuple[str, ...]] = None  # None runs every check


@dataclass
class VerifyEngineResponse:
    """Result of a verification run"""

    success: bool
    results: List[CheckResult] = field(default_factory=list)
    error: Optional[str] = None
    error_kind: Optional[str] = None

    @property
    def all_passed(self) -> bool:
        return self.success and bool(self.results) and all(r.passed for r in self.results)


def _within(check: str, name: str, value: float, threshold: float, detail: str = "") -> CheckResult:
    value = float(value)
    return CheckResult(check, name, value, float(threshold), abs(value) <= threshold, detail)


def paired_error(a: ValuationReport, b: ValuationReport, sign: float = -1.0) -> float:
    """Standard error of a.price + sign·b.price, paired when both share the path count"""
    if a.samples is not None and b.samples is not None and len(a.samples) == len(b.samples):
        n = len(a.samples)
        return float(np.std(a.samples + sign * b.samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return math.hypot(a.standard_error, b.standard_error)


class VerifyEngineUseCase:
    """
    Use case for the acceptance matrix: oracle matches, invariance, decomposition,
    degenerate collapses, symmetry, nonlinear arbitration, funding extensions,
    simulation and closeout checks, each reported as pass/fail rows.
    """

    def __init__(
        self,
        linear_pricer: LinearPricer,
        nonlinear_pricer: NonlinearPricer,
        funding_extensions: FundingExtensions,
        factory: Optional[ValuationFactory] = None,
        measures: Optional[MeasureFactory] = None,
    ):
        self._linear = linear_pricer
        self._nonlinear = nonlinear_pricer
        self._extensions = funding_extensions
        self._factory = factory or ValuationFactory()
        self._measures = measures or MeasureFactory()
        self._reports: Dict[Tuple[str, float], ValuationReport] = {}
        self._elapsed: Dict[Tuple[str, float], float] = {}

    def execute(self, request: VerifyEngineRequest) -> VerifyEngineResponse:
        selected = request.checks or CHECKS
        unknown = [c for c in selected if c not in CHECKS]
        if unknown:
            return VerifyEngineResponse(
                success=False,
                error=f"unknown checks: {', '.join(unknown)}",
                error_kind="validation",
            )
        try:
            config = MonteCarloConfig(
                n_paths=request.paths,
                n_steps=request.steps,
                seed=request.seed,
                workers=request.workers,
                notional=SPOT,
            )
        except ValidationError as e:
            return VerifyEngineResponse(success=False, error=str(e), error_kind="validation")

        self._reports = {}
        self._elapsed = {}
        results: List[CheckResult] = []
        for name in selected:
            runner: Callable[[MonteCarloConfig], List[CheckResult]] = getattr(self, f"_{name}")
            logger.info("Verification check %s", name)
            try:
                rows = runner(config)
            except Exception as e:
                logger.exception("check %s raised", name)
                rows = [CheckResult(name, name, math.nan, 0.0, False, f"error: {e}")]
            for row in rows:
                logger.info(
                    "%s %s: %.3e (threshold %.3e)",
                    "PASS" if row.passed else "FAIL",
                    row.name,
                    row.value,
                    row.threshold,
                )
            results.extend(rows)
        return VerifyEngineResponse(success=True, results=results)

    # ------------------------------------------------------------------
    # shared runs
    # ------------------------------------------------------------------

    def _funding_report(self, alpha: float, config: MonteCarloConfig) -> ValuationReport:
        key = ("funding_measure", alpha)
        if key not in self._reports:
            started = time.perf_counter()
            self._reports[key] = self._linear.price_funding_measure(
                call(), CollateralSpec.fraction(alpha), CloseoutSpec(), acceptance_market(), config
            )
            self._elapsed[key] = time.perf_counter() - started
        return self._reports[key]

    def _risk_neutral_report(self, alpha: float, config: MonteCarloConfig) -> ValuationReport:
        key = ("risk_neutral", alpha)
        if key not in self._reports:
            self._reports[key] = self._linear.price_risk_neutral(
                call(), CollateralSpec.fraction(alpha), CloseoutSpec(), acceptance_market(), config
            )
        return self._reports[key]

    # ------------------------------------------------------------------
    # checks
    # ------------------------------------------------------------------

    def _linear_oracle(self, config: MonteCarloConfig) -> List[CheckResult]:
        rows = []
        for alpha in ALPHAS:
            report = self._funding_report(alpha, config)
            oracle = quadrature_xva(
                XvaQuadratureInput(
                    spot=SPOT,
                    strike=STRIKE,
                    vol=VOL,
                    maturity=MATURITY,
                    clean_rate=RISK_FREE,
                    discount=FUNDING,
                    drift=REPO,
                    collateral_lend=COLLATERAL,
                    collateral_borrow=COLLATERAL,
                    trader_intensity=TRADER_INTENSITY,
                    counterparty_intensity=COUNTERPARTY_INTENSITY,
                    trader_loss=LOSS,
                    counterparty_loss=LOSS,
                    alpha=alpha,
                )
            )
            rows.append(
                _within(
                    "linear_oracle",
                    f"funding measure vs quadrature (alpha={alpha:g})",
                    report.price - oracle.total,
                    K_SE * report.standard_error,
                    f"engine {report.price:.6f}, oracle {oracle.total:.6f}",
                )
            )

        report = self._funding_report(ALPHAS[1], config)
        quadrature = lognormal_quadrature_price(
            TwoRateBSInput(SPOT, STRIKE, VOL, MATURITY, carry=RISK_FREE, discount=RISK_FREE)
        )
        rows.append(
            _within(
                "linear_oracle",
                "clean price vs lognormal quadrature",
                report.clean - quadrature,
                1e-8 * SPOT,
            )
        )
        projected_se = report.standard_error * math.sqrt(config.n_paths / TARGET_PATHS)
        rows.append(
            _within(
                "linear_oracle",
                f"standard error at {TARGET_PATHS} paths",
                projected_se,
                TARGET_RELATIVE_SE * SPOT,
                f"measured {report.standard_error:.2e} at {config.n_paths} paths",
            )
        )
        elapsed = self._elapsed[("funding_measure", ALPHAS[1])]
        scale = (TARGET_PATHS / config.n_paths) * (TARGET_STEPS / config.n_steps)
        rows.append(
            _within(
                "linear_oracle",
                f"runtime at {TARGET_PATHS} paths x {TARGET_STEPS} steps (s)",
                elapsed * scale,
                RUNTIME_BUDGET_SECONDS,
                f"measured {elapsed:.2f}s",
            )
        )
        return rows

    def _invariance(self, config: MonteCarloConfig) -> List[CheckResult]:
        alpha = ALPHAS[1]
        funding = self._funding_report(alpha, config)
        neutral = self._risk_neutral_report(alpha, config)
        market = acceptance_market()
        choice = self._measures.make_choice(
            Preset.CUSTOM, market.rates, market.assets, eta=RateCurve.flat(CUSTOM_ETA)
        )
        custom = self._linear.price_with_deflator(
            choice,
            call(),
            CollateralSpec.fraction(alpha),
            CloseoutSpec(),
            market,
            config,
            method="custom",
        )
        return [
            _within(
                "invariance",
                "risk-neutral vs funding measure",
                neutral.price - funding.price,
                K_SE * paired_error(neutral, funding),
            ),
            _within(
                "invariance",
                f"eta={CUSTOM_ETA:g} vs funding measure",
                custom.price - funding.price,
                K_SE * paired_error(custom, funding),
            ),
        ]

    def _decomposition(self, config: MonteCarloConfig) -> List[CheckResult]:
        return [
            _within(
                "decomposition",
                f"price minus adjustment sum (alpha={alpha:g})",
                self._funding_report(alpha, config).identity_gap,
                1e-10 * SPOT,
            )
            for alpha in ALPHAS
        ]

    def _degenerate_collapse(self, config: MonteCarloConfig) -> List[CheckResult]:
        r = RISK_FREE
        market = acceptance_market(r, (r, r), (r, r), (r, r))
        report = self._linear.price_funding_measure(
            call(),
            CollateralSpec.fraction(ALPHAS[1]),
            CloseoutSpec(settlement=Settlement.COLLATERAL_ONLY),
            market,
            config,
        )
        return [
            _within(
                "degenerate_collapse",
                "price minus stopped clean price",
                report.price - report.clean_estimate,
                1e-12 * SPOT,
            )
        ]

    def _buy_sell_symmetry(self, config: MonteCarloConfig) -> List[CheckResult]:
        # the closeout is not odd in the trade, so the mirror is priced default-free
        alpha = ALPHAS[1]
        collateral = CollateralSpec.fraction(alpha)
        rows = []
        pairs = (("symmetric", COLLATERAL), ("asymmetric", COLLATERAL + COLLATERAL_SPREAD))
        for label, borrow in pairs:
            market = acceptance_market(collateral=(COLLATERAL, borrow), with_defaults=False)
            receive = self._linear.price_funding_measure(
                call(), collateral, CloseoutSpec(), market, config
            )
            deliver = self._linear.price_funding_measure(
                SignConvention.mirror(call()), collateral.negated(), CloseoutSpec(), market, config
            )
            gap = receive.price + deliver.price
            if label == "symmetric":
                rows.append(
                    _within("buy_sell_symmetry", "receive + deliver, c^l = c^b (exact)", gap, 0.0)
                )
            else:
                bound = K_SE * paired_error(receive, deliver, sign=1.0)
                rows.append(
                    CheckResult(
                        "buy_sell_symmetry",
                        "receive + deliver, c^b - c^l = 100bp (must exceed)",
                        gap,
                        bound,
                        abs(gap) > bound,
                    )
                )
        return rows

    def _nonlinear_arbitration(self, config: MonteCarloConfig) -> List[CheckResult]:
        r = RISK_FREE
        funding = (r, r + BORROW_SPREAD)
        contract, collateral = call(), CollateralSpec.uncollateralized()
        rows = []

        tree = TreeInput(
            spot=SPOT,
            strike=STRIKE,
            vol=VOL,
            maturity=MATURITY,
            r=r,
            funding_lend=funding[0],
            funding_borrow=funding[1],
            repo_lend=r,
            repo_borrow=r,
            collateral_lend=r,
            collateral_borrow=r,
        )
        reference = brute_force_reference(tree, TREE_STEPS)
        market = acceptance_market(r, funding, (r, r), (r, r), with_defaults=False)
        trade = (contract, collateral, CloseoutSpec(), market, config)
        bsde = self._nonlinear.solve_bsde(*trade)
        picard = self._nonlinear.picard_price(*trade)
        for label, price, se in (
            ("bsde", bsde.price, bsde.standard_error),
            ("picard", picard.price, picard.standard_error),
        ):
            rows.append(
                _within(
                    "nonlinear_arbitration",
                    f"{label} vs tree",
                    price - reference.value,
                    reference.error_bar + K_SE * se,
                    f"tree {reference.value:.6f} ± {reference.error_bar:.1e}",
                )
            )

        # refinement on a deterministic stream whose funding flips from borrowing to lending
        # at the intermediate payment; the exposure is flat in S, so the time step is the
        # only error left
        lend, borrow = funding
        flipping = Contract(
            DividendStream(
                (
                    Payment(0.5 * MATURITY, PayoffKind.FIXED, quantity=60.0),
                    Payment(MATURITY, PayoffKind.FIXED, quantity=-55.0),
                )
            ),
            maturity=MATURITY,
        )
        half = 0.5 * MATURITY
        exact = (60.0 - 55.0 * math.exp(-lend * half)) * math.exp(-borrow * half)
        coarse_config = replace(config, n_paths=min(config.n_paths, 256), n_steps=16)
        fine_config = replace(coarse_config, n_steps=32)
        coarse, fine = (
            self._nonlinear.solve_bsde(flipping, collateral, CloseoutSpec(), market, c).price
            for c in (coarse_config, fine_config)
        )
        ratio = abs(coarse - exact) / max(abs(fine - exact), 1e-300)
        rows.append(
            CheckResult(
                "nonlinear_arbitration",
                "error ratio N -> 2N (in [1.5, 3])",
                ratio,
                3.0,
                1.5 <= ratio <= 3.0,
                f"16 steps {coarse - exact:.2e}, 32 steps {fine - exact:.2e}",
            )
        )
        return rows

    def _nonlinear_degeneracy(self, config: MonteCarloConfig) -> List[CheckResult]:
        alpha = ALPHAS[1]
        collateral = CollateralSpec.fraction(alpha)
        trade = (call(), collateral, CloseoutSpec(), acceptance_market(), config)
        neutral = self._risk_neutral_report(alpha, config)
        funding = self._funding_report(alpha, config)
        picard = self._nonlinear.picard_price(*trade)
        bsde = self._nonlinear.solve_bsde(*trade)
        return [
            _within(
                "nonlinear_degeneracy",
                "picard vs linear (same ensemble)",
                picard.price - neutral.price,
                1e-8 * SPOT,
            ),
            _within(
                "nonlinear_degeneracy",
                "bsde vs linear",
                bsde.price - funding.price,
                K_SE_INDEPENDENT * math.hypot(bsde.standard_error, funding.standard_error),
            ),
        ]

    def _fair_spread(self, config: MonteCarloConfig) -> List[CheckResult]:
        report = self._extensions.price_incomplete(
            call(),
            CollateralSpec.fraction(ALPHAS[1]),
            CloseoutSpec(),
            acceptance_market(),
            config,
            spec=IncompleteMarketSpec(wealth_levels=(0.0, SPOT)),
        )
        checks = report.checks
        return [
            _within("fair_spread", "J integrand", checks["j_integrand_max_abs"], 1e-15),
            _within(
                "fair_spread",
                "J Monte Carlo",
                report.net_benefit_j,
                K_SE * checks["j_standard_error"],
            ),
            _within(
                "fair_spread", "price across wealth levels", checks["wealth_gap"], 1e-10 * SPOT
            ),
        ]

    def _external_special_cases(self, config: MonteCarloConfig) -> List[CheckResult]:
        r = RISK_FREE
        uncollateralized = CollateralSpec.uncollateralized()

        payable_market = acceptance_market(r, (r, r + BORROW_SPREAD), (r, r), (r, r))
        payable = self._extensions.price_with_external(
            call(-1.0),
            uncollateralized,
            CloseoutSpec(),
            payable_market,
            config,
            ExternalFundingSpec(
                ExternalConvention.NET_BORROWER, PositionSchedule.flat(-10.0 * SPOT)
            ),
        )
        rows = [
            _within(
                "external_special_cases",
                f"payable: {name}",
                payable.checks[name],
                K_SE * payable.checks[f"{name}_se"],
            )
            for name in ("payable_dva_gap", "payable_total_gap")
        ]

        borrow = fair_flat_borrow_rate(
            XvaQuadratureInput(
                spot=SPOT,
                strike=STRIKE,
                vol=VOL,
                maturity=MATURITY,
                clean_rate=r,
                discount=r,
                drift=r,
                collateral_lend=r,
                collateral_borrow=r,
                trader_intensity=TRADER_INTENSITY,
                counterparty_intensity=COUNTERPARTY_INTENSITY,
                trader_loss=LOSS,
                counterparty_loss=LOSS,
            ),
        )
        receivable = self._extensions.price_with_external(
            call(),
            uncollateralized,
            CloseoutSpec(),
            acceptance_market(r, (r, borrow), (r, r), (r, r)),
            config,
            ExternalFundingSpec(ExternalConvention.INDEPENDENT),
        )
        net = receivable.checks["receivable_net_benefit"]
        rows.append(
            _within(
                "external_special_cases",
                "receivable: net benefit at calibrated f^b",
                net,
                K_SE * receivable.checks["receivable_net_benefit_se"],
                f"f^b = {borrow:.6f}",
            )
        )
        for label, report in (("payable", payable), ("receivable", receivable)):
            rows.append(
                _within(
                    "external_special_cases",
                    f"{label}: external legs match the converged funding path",
                    report.checks["external_leg_gap"],
                    1e-10 * SPOT,
                )
            )
        return rows

    def _simulation(self, config: MonteCarloConfig) -> List[CheckResult]:
        market = acceptance_market()
        choice = self._measures.make_choice(Preset.RISK_FREE, market.rates, market.assets)
        grid = TimeGrid.build(MATURITY, config.n_steps)
        ensemble = self._factory.simulator.simulate(market.assets, choice, grid, config)
        deflated = ensemble.spots[:, :, 0] * ensemble.deflator[None, :]
        n = ensemble.n_paths
        errors = np.std(deflated, axis=0, ddof=1) / math.sqrt(n)
        errors[0] = 1.0
        worst = float(np.max(np.abs(deflated.mean(axis=0) - SPOT) / errors))

        tau_i, tau_c, _ = self._factory.simulator.sample_default_times(
            market.defaults, SeedPolicy(config.seed, config.block_size), DEFAULT_SPLIT_PATHS
        )
        lam = TRADER_INTENSITY + COUNTERPARTY_INTENSITY
        expected = COUNTERPARTY_INTENSITY / lam * (1.0 - math.exp(-lam * MATURITY))
        hits = (tau_c < tau_i) & (tau_c <= MATURITY)
        observed = float(hits.mean())
        se = math.sqrt(expected * (1.0 - expected) / DEFAULT_SPLIT_PATHS)
        return [
            _within(
                "simulation",
                "deflated asset martingale (worst node, in SE)",
                worst,
                K_SE,
            ),
            _within(
                "simulation",
                "P(counterparty defaults first before T)",
                observed - expected,
                K_SE * se,
                f"observed {observed:.5f}, closed form {expected:.5f}",
            ),
        ]

    def _closeout(self, config: MonteCarloConfig) -> List[CheckResult]:
        rng = np.random.default_rng(config.seed)
        clean = rng.normal(0.0, SPOT, CLOSEOUT_TUPLES)
        collateral = rng.normal(0.0, SPOT, CLOSEOUT_TUPLES)
        loss_i = rng.uniform(0.0, 1.0, CLOSEOUT_TUPLES)
        loss_c = rng.uniform(0.0, 1.0, CLOSEOUT_TUPLES)

        mismatches = {"decomposition": 0, "negation": 0, "full collateral": 0, "joint default": 0}
        everyone = np.ones(1, dtype=bool)
        for q, c, li, lc in zip(clean, collateral, loss_i, loss_c):
            q, c, li, lc = float(q), float(c), float(li), float(lc)
            for who in (Defaulter.TRADER, Defaulter.COUNTERPARTY):
                theta = closeout_payoff(q, c, who, li, lc).theta
                dva, cva = closeout_legs(
                    np.array([q]),
                    np.array([c]),
                    everyone if who is Defaulter.TRADER else ~everyone,
                    everyone if who is Defaulter.COUNTERPARTY else ~everyone,
                    li,
                    lc,
                )
                if theta != q + float(dva[0]) - float(cva[0]):
                    mismatches["decomposition"] += 1
                mirrored = closeout_payoff(-q, -c, who.other(), lc, li).theta
                if mirrored != -theta:
                    mismatches["negation"] += 1
                if closeout_payoff(q, q, who, li, lc).theta != q:
                    mismatches["full collateral"] += 1
            exposure = q - c
            joint = q + li * max(-exposure, 0.0) - lc * max(exposure, 0.0)
            if closeout_payoff(q, c, Defaulter.JOINT, li, lc).theta != joint:
                mismatches["joint default"] += 1

        return [
            _within("closeout", f"{name} mismatches in {CLOSEOUT_TUPLES} tuples", count, 0.0)
            for name, count in mismatches.items()
        ]
