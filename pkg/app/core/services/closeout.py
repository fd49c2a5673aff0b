"""Stopping, collateral and closeout rules"""

from typing import Tuple

import numpy as np

from app.core.entities.collateral import (
    CloseoutOutcome,
    CollateralRule,
    CollateralSpec,
    Defaulter,
    Settlement,
)
from app.core.entities.contract import DividendStream
from app.core.entities.curves import RatePair
from app.core.entities.simulation import TimeGrid
from app.core.errors import ValidationError


def _check_loss(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value}")


def stop_stream(stream: DividendStream, tau: float) -> DividendStream:
    """Ã: the stream stopped just before the first default"""
    if tau <= 0.0:
        raise ValidationError("default time must be positive")
    return stream.stopped(tau)


def stopped_payments(stream: DividendStream, grid: TimeGrid, tau: np.ndarray) -> np.ndarray:
    """
    Per path and node, whether the payment falling on the node survives stopping the stream
    at the path's default time. Paths defaulting in the same cell keep the same payments.
    """
    retained = np.ones((len(tau), grid.n_steps + 1), dtype=bool)
    paying = [grid.index_of(t) for t in stream.times]
    defaulted = tau <= grid.horizon
    cells = grid.cell_of(np.minimum(tau, grid.horizon))
    for k in np.unique(cells[defaulted]):
        rows = defaulted & (cells == k)
        kept = {grid.index_of(t) for t in stop_stream(stream, float(tau[rows].min())).times}
        for j in paying:
            if j not in kept:
                retained[rows, j] = False
    return retained


def effective_collateral_rate(collateral, pair: RatePair, t: float = 0.0):
    """c̄ = c^b where C ≥ 0 (trader holds margin), c^l where C < 0"""
    holds = np.asarray(collateral) >= 0.0
    out = np.where(holds, pair.borrow.value_at(t), pair.lend.value_at(t))
    return float(out) if np.ndim(collateral) == 0 else out


def closeout_payoff(
    clean: float,
    collateral: float,
    defaulter: Defaulter,
    trader_loss: float,
    counterparty_loss: float,
    settlement: Settlement = Settlement.CSA,
) -> CloseoutOutcome:
    """
    θ_τ = Q_τ + 1{τ=τ_I}L_IΥ⁻ − 1{τ=τ_C}L_CΥ⁺ with Υ = Q_τ − C_{τ−}.

    A joint default applies both indicators.
    """
    _check_loss("trader loss", trader_loss)
    _check_loss("counterparty loss", counterparty_loss)
    if settlement is Settlement.COLLATERAL_ONLY:
        return CloseoutOutcome(clean, collateral, defaulter, theta=0.0)

    exposure = clean - collateral
    theta = clean
    if defaulter in (Defaulter.TRADER, Defaulter.JOINT):
        theta += trader_loss * max(-exposure, 0.0)
    if defaulter in (Defaulter.COUNTERPARTY, Defaulter.JOINT):
        theta -= counterparty_loss * max(exposure, 0.0)
    return CloseoutOutcome(clean, collateral, defaulter, theta)


def closeout_legs(
    clean: np.ndarray,
    collateral: np.ndarray,
    trader_defaults: np.ndarray,
    counterparty_defaults: np.ndarray,
    trader_loss: float,
    counterparty_loss: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized debit and credit parts of θ − Q per path, both nonnegative.

    Masks may overlap (joint default).
    """
    exposure = clean - collateral
    dva = np.where(trader_defaults, trader_loss * np.maximum(-exposure, 0.0), 0.0)
    cva = np.where(counterparty_defaults, counterparty_loss * np.maximum(exposure, 0.0), 0.0)
    return dva, cva


def collateral_value(
    spec: CollateralSpec, t: float, state: np.ndarray, clean: np.ndarray
) -> np.ndarray:
    """C_t from the collateral rule"""
    if spec.rule is CollateralRule.FRACTION:
        return spec.alpha * np.asarray(clean, dtype=float)
    values = np.asarray(spec.functional(t, state, clean), dtype=float)
    return np.broadcast_to(values, np.shape(clean)).copy()
