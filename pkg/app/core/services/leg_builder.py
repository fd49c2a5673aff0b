"""Per-cell discounted cash-flow legs on a path ensemble"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional

import numpy as np

from app.core.entities import legs as L
from app.core.entities.collateral import CloseoutSpec, Settlement
from app.core.entities.curves import RateCurve, RateSystem
from app.core.entities.legs import LegAccumulator
from app.core.entities.market import AssetModel, DefaultModel, DeflatorChoice
from app.core.entities.scenario import ExternalConvention
from app.core.entities.simulation import PathEnsemble, TimeGrid
from app.core.errors import PricingSetupError, ValidationError
from app.core.services.clean_valuation import CleanValuation
from app.core.services.closeout import closeout_legs
from app.core.services.market_model import drift_under

logger = logging.getLogger(__name__)


def _running_weight(rate: float, length: np.ndarray) -> np.ndarray:
    """∫₀^ℓ e^{−rate·u} du"""
    if rate == 0.0:
        return np.asarray(length, dtype=float)
    return -np.expm1(-rate * length) / rate


@dataclass(frozen=True, eq=False)
class CellRates:
    """
    Rates in force on each grid cell, read at the left node (the grid contains every curve
    breakpoint, so they are constant on the cell).

    Funding, repo and treasury entries are spreads against the instrumental rates; the
    collateral entries are raw c^l and c^b.
    """

    eta: np.ndarray
    clean_rate: np.ndarray
    funding_lend: np.ndarray
    funding_borrow: np.ndarray
    collateral_lend: np.ndarray
    collateral_borrow: np.ndarray
    repo_lend: np.ndarray
    repo_borrow: np.ndarray
    treasury_carry: np.ndarray
    trader_intensity: np.ndarray
    counterparty_intensity: np.ndarray
    treasury_mask: np.ndarray

    @classmethod
    def build(
        cls,
        grid: TimeGrid,
        rates: RateSystem,
        choice: DeflatorChoice,
        assets: AssetModel,
        defaults: DefaultModel,
        clean_discount: Optional[RateCurve] = None,
    ) -> "CellRates":
        t = grid.nodes[:-1]
        m = assets.n_assets
        if len(rates.repo) != m or len(choice.drifts) != m:
            raise ValidationError("rate system, deflator choice and assets disagree on size")
        treasury = np.asarray(assets.treasury_funded, dtype=bool)

        def at(curve: RateCurve) -> np.ndarray:
            return np.asarray(curve.value_at(t), dtype=float)

        repo_lend = np.zeros((len(t), m))
        repo_borrow = np.zeros((len(t), m))
        carry = np.zeros((len(t), m))
        for i in range(m):
            drift = drift_under(choice, i)
            if treasury[i]:
                carry[:, i] = at(drift - choice.eta)
            else:
                repo_lend[:, i] = at(rates.repo[i].lend - drift)
                repo_borrow[:, i] = at(rates.repo[i].borrow - drift)

        return cls(
            eta=at(choice.eta),
            clean_rate=at(clean_discount or rates.r),
            funding_lend=at(rates.funding.lend - choice.eta),
            funding_borrow=at(rates.funding.borrow - choice.eta),
            collateral_lend=at(rates.collateral.lend),
            collateral_borrow=at(rates.collateral.borrow),
            repo_lend=repo_lend,
            repo_borrow=repo_borrow,
            treasury_carry=carry,
            trader_intensity=at(defaults.trader_intensity),
            counterparty_intensity=at(defaults.counterparty_intensity),
            treasury_mask=treasury,
        )

    def with_funding_spreads(self, lend: np.ndarray, borrow: np.ndarray) -> "CellRates":
        return replace(self, funding_lend=np.asarray(lend), funding_borrow=np.asarray(borrow))

    @property
    def price_independent(self) -> bool:
        """True when no leg depends on the price or hedge (a single sweep suffices)"""
        return not (
            np.any(self.funding_lend)
            or np.any(self.funding_borrow)
            or np.any(self.repo_lend)
            or np.any(self.repo_borrow)
            or np.any(self.treasury_carry)
        )


@dataclass(frozen=True, eq=False)
class CellFlows:
    """Legs of one cell discounted to its left node, with the account branches used"""

    legs: Dict[str, np.ndarray]
    total: np.ndarray
    funding_lends: np.ndarray
    repo_lends: np.ndarray


class LegBuilder:
    """
    Cash-flow legs of the canonical price on each grid cell.

    Pathwise mode follows the simulated default times: flows run until min(τ, t_{k+1}), the
    closeout is paid at τ with Q_τ interpolated between the bracketing nodes and
    C_{τ−} = C_k. Marginalized mode keeps every path alive and weights the cell by the
    conditional survival, paying the closeout at intensity λ^Iθ^I + λ^Cθ^C.
    """

    def __init__(
        self,
        ensemble: PathEnsemble,
        clean: CleanValuation,
        collateral: np.ndarray,
        rates: CellRates,
        defaults: DefaultModel,
        closeout: CloseoutSpec,
        marginalized: bool = False,
        own_default_benefit: bool = False,
        external: Optional[ExternalConvention] = None,
        retained: Optional[np.ndarray] = None,
    ):
        if clean.ex_dividend.shape != (ensemble.n_paths, ensemble.grid.n_steps + 1):
            raise ValidationError("clean values are missing on some nodes")
        if collateral.shape != clean.ex_dividend.shape:
            raise ValidationError("collateral must be given on every path and node")
        self.ensemble = ensemble
        self.clean = clean
        self.collateral = collateral
        self.rates = rates
        self.defaults = defaults
        self.closeout = closeout
        self.marginalized = marginalized
        self.own_default_benefit = own_default_benefit
        self.external = external
        if external is not None:
            if marginalized:
                raise ValidationError("external funding legs follow the simulated default times")
            tau_e = ensemble.tau_external
            if tau_e is None:
                tau_e = np.full(ensemble.n_paths, np.inf)
            if external is ExternalConvention.NET_BORROWER and np.any(np.isfinite(tau_e)):
                raise PricingSetupError("the net-borrower convention assumes no external default")
            self._tau_external = tau_e
        if retained is None:
            retained = ensemble.tau[:, None] > ensemble.grid.nodes[None, :]
        if retained.shape != clean.ex_dividend.shape:
            raise ValidationError("retained payments must be flagged on every path and node")
        self._retained = retained
        self._times = ensemble.grid.times
        self._repo = np.flatnonzero(~rates.treasury_mask)
        self._treasury = np.flatnonzero(rates.treasury_mask)

        hazard = defaults.total_intensity.integral(ensemble.grid.nodes)
        survival = np.exp(-hazard) if marginalized else np.ones_like(hazard)
        self._origin_discount = ensemble.deflator * survival

    @property
    def n_nodes(self) -> int:
        return len(self._times)

    @property
    def price_independent(self) -> bool:
        return (
            self.rates.price_independent
            and not self.own_default_benefit
            and self.external is None
        )

    def alive(self, k: int) -> np.ndarray:
        if self.marginalized:
            return np.ones(self.ensemble.n_paths, dtype=bool)
        return self.ensemble.alive(k)

    def node_weight(self, k: int) -> np.ndarray:
        """Discount from t_k to the origin for paths alive at t_k"""
        return self._origin_discount[k] * self.alive(k)

    def step_discount(self, k: int) -> np.ndarray:
        """Factor carrying value at t_{k+1} back to t_k, zero past a default"""
        dt = self._times[k + 1] - self._times[k]
        eta = self.rates.eta[k]
        if self.marginalized:
            lam = self.rates.trader_intensity[k] + self.rates.counterparty_intensity[k]
            return np.full(self.ensemble.n_paths, np.exp(-(eta + lam) * dt))
        return np.exp(-eta * dt) * (self.ensemble.tau > self._times[k + 1])

    def funding_position(
        self, k: int, price: np.ndarray, hedge: np.ndarray, wealth: float = 0.0
    ) -> np.ndarray:
        """F = W + C − P − Σ_treasury H^i"""
        funding = wealth + self.collateral[:, k] - price
        if self._treasury.size:
            funding = funding - hedge[:, self._treasury].sum(axis=1)
        return funding

    def _clean_between(self, k: int, when: np.ndarray) -> np.ndarray:
        """Q at times in (t_k, t_{k+1}]: clean-rate carry of the bracketing node values"""
        t0, t1 = self._times[k], self._times[k + 1]
        x = (when - t0) / (t1 - t0)
        rho = self.rates.clean_rate[k]
        return (1.0 - x) * self.clean.ex_dividend[:, k] * np.exp(rho * (when - t0)) + (
            x * self.clean.cum_dividend[:, k + 1] * np.exp(-rho * (t1 - when))
        )

    def clean_at_default(self) -> np.ndarray:
        """Q_τ per path as used by the closeout leg; nan where τ > T"""
        tau = self.ensemble.tau
        out = np.full(self.ensemble.n_paths, np.nan)
        cells = self.ensemble.grid.cell_of(np.minimum(tau, self._times[-1]))
        for k in np.unique(cells[tau <= self._times[-1]]):
            rows = (cells == k) & (tau <= self._times[-1])
            when = np.where(rows, tau, self._times[k])
            out[rows] = self._clean_between(int(k), when)[rows]
        return out

    def cell(
        self, k: int, price: np.ndarray, hedge: np.ndarray, wealth: float = 0.0
    ) -> CellFlows:
        """Legs of cell (t_k, t_{k+1}] given the pre-default price and hedge values at t_k"""
        r = self.rates
        t0, t1 = self._times[k], self._times[k + 1]
        dt = t1 - t0
        eta = r.eta[k]
        lam_i, lam_c = r.trader_intensity[k], r.counterparty_intensity[k]
        loss_i, loss_c = self.defaults.trader_loss, self.defaults.counterparty_loss
        alive = self.alive(k)
        coll = self.collateral[:, k]
        payment = self.clean.payments[:, k + 1]
        csa = self.closeout.settlement is Settlement.CSA

        funding = self.funding_position(k, price, hedge, wealth)
        f_plus, f_minus = np.maximum(funding, 0.0), np.maximum(-funding, 0.0)

        if self.marginalized:
            rate = eta + lam_i + lam_c
            w = np.full(len(alive), float(_running_weight(rate, dt)))
            stream = payment * np.exp(-rate * dt)
            q = self.clean.ex_dividend[:, k]
            weights_i = np.full(len(alive), lam_i) * w
            weights_c = np.full(len(alive), lam_c) * w
            dva, cva = closeout_legs(q, coll, alive, alive, loss_i, loss_c)
            clean_at_default = (weights_i + weights_c) * q if csa else np.zeros(len(alive))
            dva = weights_i * dva if csa else np.zeros(len(alive))
            cva = weights_c * cva if csa else np.zeros(len(alive))
            own = lam_i * loss_i * f_minus * w if self.own_default_benefit else None
            external = {}
        else:
            tau = self.ensemble.tau
            length = np.where(alive, np.clip(np.minimum(tau, t1) - t0, 0.0, dt), 0.0)
            w = _running_weight(eta, length)
            survive = tau > t1
            stream = np.where(self._retained[:, k + 1], payment * np.exp(-eta * dt), 0.0)

            here = alive & ~survive
            when = np.where(here, tau, t0)
            discount = np.exp(-eta * (when - t0))
            q = self._clean_between(k, when)
            trader = here & (self.ensemble.tau_trader <= self.ensemble.tau_counterparty)
            counterparty = here & (self.ensemble.tau_counterparty <= self.ensemble.tau_trader)
            if csa:
                clean_at_default = np.where(here, q * discount, 0.0)
                dva, cva = closeout_legs(q, coll, trader, counterparty, loss_i, loss_c)
                dva, cva = dva * discount, cva * discount
            else:
                clean_at_default = dva = cva = np.zeros(len(alive))
            own = None
            if self.own_default_benefit:
                own = np.where(trader, loss_i * f_minus * discount, 0.0)
            external = self._external_legs(k, trader, discount, f_plus, f_minus)

        c_bar = np.where(coll >= 0.0, r.collateral_borrow[k], r.collateral_lend[k])
        legs = {
            L.STREAM: stream,
            L.CLEAN_AT_DEFAULT: clean_at_default,
            L.DVA: dva,
            L.CVA: cva,
            L.COLLATERAL: (eta - c_bar) * coll * w,
            L.FUNDING_LEND: f_plus * r.funding_lend[k] * w,
            L.FUNDING_BORROW: f_minus * r.funding_borrow[k] * w,
        }
        funding_net = legs[L.FUNDING_LEND] - legs[L.FUNDING_BORROW]
        if own is not None:
            legs[L.OWN_DEFAULT_BENEFIT] = own
            funding_net = funding_net + own
        for name, values in external.items():
            legs[name] = values
            funding_net = funding_net + L.leg_sign(name) * values

        m = hedge.shape[1]
        repo_lends = np.ones((len(alive), m), dtype=bool)
        repo_net = np.zeros(len(alive))
        for i in self._repo:
            account = -hedge[:, i]
            repo_lends[:, i] = account >= 0.0
            lend = np.maximum(account, 0.0) * r.repo_lend[k, i] * w
            borrow = np.maximum(-account, 0.0) * r.repo_borrow[k, i] * w
            legs[L.repo_lend(i)] = lend
            legs[L.repo_borrow(i)] = borrow
            repo_net = repo_net + (lend - borrow)
        if self._treasury.size:
            carry = (hedge[:, self._treasury] * r.treasury_carry[k, self._treasury]).sum(axis=1)
            legs[L.TREASURY_CARRY] = carry * w
            repo_net = repo_net + legs[L.TREASURY_CARRY]

        total = (
            stream
            + clean_at_default
            + dva
            - cva
            + legs[L.COLLATERAL]
            + funding_net
            + repo_net
        )
        for name in legs:
            legs[name] = np.where(alive, legs[name], 0.0)
        total = np.where(alive, total, 0.0)
        return CellFlows(
            legs=legs, total=total, funding_lends=funding >= 0.0, repo_lends=repo_lends
        )

    def _external_legs(
        self,
        k: int,
        trader: np.ndarray,
        discount: np.ndarray,
        f_plus: np.ndarray,
        f_minus: np.ndarray,
    ) -> Dict[str, np.ndarray]:
        """External funding settlements of the cell, on F at its left node"""
        if self.external is None:
            return {}
        loss_i = self.defaults.trader_loss
        if self.external is ExternalConvention.NET_BORROWER:
            weight = np.where(trader, loss_i * discount, 0.0)
            return {L.DVA_F_MINUS: weight * f_minus, L.DVA_F_PLUS: weight * f_plus}
        t0, t1 = self._times[k], self._times[k + 1]
        tau, tau_e = self.ensemble.tau, self._tau_external
        eta = self.rates.eta[k]
        dva_f = np.where(trader & (tau <= tau_e), loss_i * f_minus * discount, 0.0)
        hit = (tau_e > t0) & (tau_e <= t1) & (tau_e < tau)
        when = np.where(hit, tau_e, t0)
        cva_f = np.where(
            hit, self.defaults.external_loss * f_plus * np.exp(-eta * (when - t0)), 0.0
        )
        return {L.DVA_F: dva_f, L.CVA_F: cva_f}

    def accumulate(
        self, price_at, hedge_at, wealth: float = 0.0
    ) -> LegAccumulator:
        """
        Per-path legs discounted to the origin, with the price and hedge at each node taken
        from the callables price_at(k) and hedge_at(k).
        """
        legs: Dict[str, np.ndarray] = {}
        for k in range(self.n_nodes - 1):
            flows = self.cell(k, price_at(k), hedge_at(k), wealth)
            weight = self.node_weight(k)
            for name, values in flows.legs.items():
                legs[name] = legs.get(name, 0.0) + weight * values
        return LegAccumulator(
            legs=legs,
            fingerprint=self.ensemble.fingerprint,
            n_assets=self.ensemble.n_assets,
            marginalized=self.marginalized,
        )


def external_leg(
    ensemble: PathEnsemble,
    funding: np.ndarray,
    convention: ExternalConvention,
    defaults: DefaultModel,
) -> Dict[str, np.ndarray]:
    """
    Discounted external funding legs per path, read off a funding path F on the grid nodes
    at the node before each default.

    INDEPENDENT: DVA^f = L_I F_τ⁻ when the trader defaults first, CVA^f = L_E F_{τ_E}⁺ when
    the external entity defaults first. NET_BORROWER: DVA^{f,−} = L_I F_τ⁻ and
    DVA^{f,+} = L_I F_τ⁺ at the trader's default.
    """
    grid = ensemble.grid
    horizon = grid.horizon
    eta = ensemble.choice.eta
    tau = ensemble.tau
    tau_e = ensemble.tau_external
    if tau_e is None:
        tau_e = np.full(ensemble.n_paths, np.inf)
    rows = np.arange(ensemble.n_paths)
    loss_i = defaults.trader_loss

    def at_node_before(times: np.ndarray) -> np.ndarray:
        return funding[rows, grid.cell_of(np.minimum(times, horizon))]

    def discount(times: np.ndarray) -> np.ndarray:
        return np.exp(-eta.integral(np.minimum(times, horizon)))

    at_default = at_node_before(tau)
    own_first = (ensemble.tau_trader <= ensemble.tau_counterparty) & (tau <= horizon)

    if convention is ExternalConvention.NET_BORROWER:
        if np.any(np.isfinite(tau_e)):
            raise PricingSetupError("the net-borrower convention assumes no external default")
        weight = np.where(own_first, loss_i * discount(tau), 0.0)
        return {
            L.DVA_F_MINUS: weight * np.maximum(-at_default, 0.0),
            L.DVA_F_PLUS: weight * np.maximum(at_default, 0.0),
        }

    trader_first = own_first & (tau <= tau_e)
    external_first = (tau_e < tau) & (tau_e <= horizon)
    dva_f = np.where(trader_first, loss_i * np.maximum(-at_default, 0.0) * discount(tau), 0.0)
    cva_f = np.where(
        external_first,
        defaults.external_loss * np.maximum(at_node_before(tau_e), 0.0) * discount(tau_e),
        0.0,
    )
    return {L.DVA_F: dva_f, L.CVA_F: cva_f}
