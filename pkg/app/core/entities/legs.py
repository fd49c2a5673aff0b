"""Discounted cash-flow legs accumulated per path"""

from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np

STREAM = "stream"
CLEAN_AT_DEFAULT = "clean_at_default"
CVA = "cva"
DVA = "dva"
COLLATERAL = "collateral"
FUNDING_LEND = "funding_lend"
FUNDING_BORROW = "funding_borrow"
TREASURY_CARRY = "treasury_carry"
DVA_F = "dva_f"
CVA_F = "cva_f"
DVA_F_MINUS = "dva_f_minus"
DVA_F_PLUS = "dva_f_plus"
OWN_DEFAULT_BENEFIT = "own_default_benefit"


def repo_lend(i: int) -> str:
    return f"repo_lend[{i}]"


def repo_borrow(i: int) -> str:
    return f"repo_borrow[{i}]"


# sign with which each leg enters the canonical price
_SIGNS = {
    STREAM: 1.0,
    CLEAN_AT_DEFAULT: 1.0,
    DVA: 1.0,
    CVA: -1.0,
    COLLATERAL: 1.0,
    FUNDING_LEND: 1.0,
    FUNDING_BORROW: -1.0,
    TREASURY_CARRY: 1.0,
    DVA_F: 1.0,
    CVA_F: -1.0,
    DVA_F_MINUS: 1.0,
    DVA_F_PLUS: -1.0,
    OWN_DEFAULT_BENEFIT: 1.0,
}


def leg_sign(name: str) -> float:
    if name.startswith("repo_lend["):
        return 1.0
    if name.startswith("repo_borrow["):
        return -1.0
    return _SIGNS[name]


@dataclass(frozen=True, eq=False)
class LegAccumulator:
    """
    Per-path values of every leg, discounted to the valuation date with the ensemble's
    deflator. Legs are stored as nonnegative-by-construction quantities where the name
    says so (CVA, DVA and the external splits); `leg_sign` gives the sign in the price.
    """

    legs: Dict[str, np.ndarray]
    fingerprint: Tuple[Any, ...]
    n_assets: int = 1
    marginalized: bool = False
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.legs[name]

    def __contains__(self, name: str) -> bool:
        return name in self.legs

    @property
    def n_paths(self) -> int:
        return len(next(iter(self.legs.values())))

    def mean(self, name: str) -> float:
        if name not in self.legs:
            return 0.0
        return float(np.mean(self.legs[name]))

    def standard_error(self, name: str) -> float:
        if name not in self.legs or self.n_paths < 2:
            return 0.0
        return float(np.std(self.legs[name], ddof=1) / np.sqrt(self.n_paths))

    def pathwise_total(self) -> np.ndarray:
        """Canonical price sample per path: signed sum of all legs"""
        total = np.zeros(self.n_paths)
        for name, values in self.legs.items():
            total = total + leg_sign(name) * values
        return total

    def combined(self, *names: str) -> np.ndarray:
        """Signed sum of selected legs"""
        total = np.zeros(self.n_paths)
        for name in names:
            if name in self.legs:
                total = total + leg_sign(name) * self.legs[name]
        return total
