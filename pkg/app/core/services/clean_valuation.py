"""Risk-free clean valuation of the contract at every grid node"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.special import ndtr

from app.core.entities.contract import TIME_EPSILON, Contract, Payment, PayoffKind
from app.core.entities.curves import RateCurve
from app.core.entities.market import AssetModel
from app.core.entities.simulation import PathEnsemble, TimeGrid
from app.core.errors import UnsupportedPayoffError, ValidationError
from app.core.interfaces.clean_valuer import CleanValuer
from app.core.services.regression import RegressionFit, regress

logger = logging.getLogger(__name__)


def _density(x: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


class _PaymentsOnGrid:
    """Payment amounts keyed by grid node"""

    def __init__(self, contract: Contract, grid: TimeGrid):
        self._by_node = {}
        for p in contract.stream.payments:
            self._by_node[grid.index_of(p.time)] = p

    def payment(self, k: int, state: np.ndarray) -> np.ndarray:
        state = np.atleast_2d(state)
        p = self._by_node.get(k)
        if p is None:
            return np.zeros(state.shape[0])
        return p.amount(state)


class AnalyticCleanValuer(CleanValuer):
    """
    Closed-form lognormal values of the payoff menu.

    `discount` and `carry` default to r; the incomplete-market closeout passes (η, h).
    """

    def __init__(
        self,
        contract: Contract,
        grid: TimeGrid,
        assets: AssetModel,
        discount: RateCurve,
        carry: Optional[RateCurve] = None,
    ):
        if not contract.stream.has_closed_form:
            raise UnsupportedPayoffError("analytic clean valuation needs closed-form payoffs")
        self._contract = contract
        self._grid = grid
        self._vols = assets.vols
        self._discount = discount
        self._carry = carry or discount
        self._payments = _PaymentsOnGrid(contract, grid)

    def _remaining(self, t: float) -> List[Payment]:
        return [p for p in self._contract.stream.payments if p.time > t + TIME_EPSILON]

    def _single(self, p: Payment, t: float, s: np.ndarray):
        """(value, delta) at time t of one payment for spot vector s"""
        disc = math.exp(-self._discount.integral_between(t, p.time))
        growth = math.exp(self._carry.integral_between(t, p.time))
        fwd = s * growth
        q = p.quantity
        sd = self._vols[p.asset] * math.sqrt(p.time - t)

        if p.kind is PayoffKind.FIXED:
            return np.full(s.shape, q * disc), np.zeros(s.shape)
        if p.kind is PayoffKind.FORWARD or (p.kind is PayoffKind.CALL and p.strike <= 0.0):
            return q * disc * (fwd - p.strike), np.full(s.shape, q * disc * growth)
        if p.kind is PayoffKind.PUT and p.strike <= 0.0:
            return np.zeros(s.shape), np.zeros(s.shape)
        if p.kind is PayoffKind.CASH_OR_NOTHING and p.strike <= 0.0:
            return np.full(s.shape, q * disc), np.zeros(s.shape)

        if sd == 0.0:
            itm = (fwd > p.strike).astype(float)
            if p.kind is PayoffKind.CALL:
                return q * disc * np.maximum(fwd - p.strike, 0.0), q * disc * growth * itm
            if p.kind is PayoffKind.PUT:
                return q * disc * np.maximum(p.strike - fwd, 0.0), -q * disc * growth * (1 - itm)
            return q * disc * itm, np.zeros(s.shape)

        d1 = (np.log(fwd / p.strike) + 0.5 * sd * sd) / sd
        d2 = d1 - sd
        if p.kind is PayoffKind.CALL:
            value = q * disc * (fwd * ndtr(d1) - p.strike * ndtr(d2))
            return value, q * disc * growth * ndtr(d1)
        if p.kind is PayoffKind.PUT:
            value = q * disc * (p.strike * ndtr(-d2) - fwd * ndtr(-d1))
            return value, q * disc * growth * (ndtr(d1) - 1.0)
        # cash-or-nothing
        return q * disc * ndtr(d2), q * disc * _density(d2) / (s * sd)

    def value(self, k: int, state: np.ndarray) -> np.ndarray:
        state = np.atleast_2d(state)
        t = self._grid.times[k]
        out = np.zeros(state.shape[0])
        for p in self._remaining(t):
            out = out + self._single(p, t, state[:, p.asset])[0]
        return out

    def delta(self, k: int, state: np.ndarray) -> np.ndarray:
        state = np.atleast_2d(state)
        t = self._grid.times[k]
        out = np.zeros(state.shape)
        for p in self._remaining(t):
            out[:, p.asset] += self._single(p, t, state[:, p.asset])[1]
        return out

    def payment(self, k: int, state: np.ndarray) -> np.ndarray:
        return self._payments.payment(k, state)


class RegressionCleanValuer(CleanValuer):
    """
    Clean values by regression of r-discounted remaining payments on a risk-neutral
    ensemble; used for payoffs outside the closed-form menu.
    """

    def __init__(
        self,
        contract: Contract,
        ensemble: PathEnsemble,
        r: RateCurve,
        degree: int = 3,
    ):
        grid = ensemble.grid
        self._payments = _PaymentsOnGrid(contract, grid)
        n = grid.n_steps
        fits: List[Optional[RegressionFit]] = [None] * (n + 1)
        remaining = np.zeros(ensemble.n_paths)
        fits[n] = RegressionFit.constant(0.0, ensemble.n_assets)
        for k in range(n - 1, -1, -1):
            step = math.exp(-r.integral_between(grid.times[k], grid.times[k + 1]))
            remaining = step * (self._payments.payment(k + 1, ensemble.state(k + 1)) + remaining)
            fits[k] = regress(remaining, ensemble.state(k), degree)
        self._fits = fits
        logger.debug("regression clean valuer fitted on %d paths", ensemble.n_paths)

    def value(self, k: int, state: np.ndarray) -> np.ndarray:
        return self._fits[k](state)

    def delta(self, k: int, state: np.ndarray) -> np.ndarray:
        if k == 0 and len(self._fits) > 1:
            k = 1
        return self._fits[k].gradient(state)

    def payment(self, k: int, state: np.ndarray) -> np.ndarray:
        return self._payments.payment(k, state)


@dataclass(frozen=True, eq=False)
class CleanValuation:
    """Clean price at the origin and ex/cum-dividend clean values per path and node"""

    price: float
    ex_dividend: np.ndarray
    cum_dividend: np.ndarray
    payments: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.ex_dividend.shape[1]


class CleanPricer:
    """Evaluates a clean valuer over a path ensemble"""

    def clean_price(self, valuer: CleanValuer, ensemble: PathEnsemble) -> CleanValuation:
        n_nodes = ensemble.grid.n_steps + 1
        ex = np.empty((ensemble.n_paths, n_nodes))
        pay = np.empty((ensemble.n_paths, n_nodes))
        for k in range(n_nodes):
            state = ensemble.state(k)
            ex[:, k] = valuer.value(k, state)
            pay[:, k] = valuer.payment(k, state)
        if np.any(~np.isfinite(ex)):
            raise ValidationError("clean values are not finite on every node")
        price = float(valuer.value(0, ensemble.state(0)[:1])[0])
        return CleanValuation(price=price, ex_dividend=ex, cum_dividend=ex + pay, payments=pay)
