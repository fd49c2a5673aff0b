"""Discretized solution of the pricing BSDE"""

from dataclasses import dataclass

import numpy as np

from app.core.entities.contract import SignConvention


@dataclass(frozen=True, eq=False)
class BSDEState:
    """
    Per-path, per-node solution in the replication sign: Y is the hedge portfolio value,
    Z the asset holdings (paths x nodes x assets) and Ŷ = Y − Σ_{treasury} Z^i S^i the part
    funded at the treasury. The effective rates used by the driver are cached alongside.
    """

    times: np.ndarray
    y: np.ndarray
    z: np.ndarray
    y_hat: np.ndarray
    collateral: np.ndarray
    funding_rate: np.ndarray
    repo_rate: np.ndarray
    collateral_rate: np.ndarray

    @property
    def price_path(self) -> np.ndarray:
        """Canonical pre-default price P = C − Y per path and node"""
        return SignConvention.from_replication(self.y - self.collateral)

    @property
    def canonical_price(self) -> float:
        return float(np.mean(self.price_path[:, 0]))

    @property
    def replication_price(self) -> float:
        """π = Y − C at the origin, the amount received for taking on the position"""
        return SignConvention.to_replication(self.canonical_price)
