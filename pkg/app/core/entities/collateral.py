"""Collateral and closeout entities"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Optional

import numpy as np

from app.core.errors import ValidationError


class CollateralRule(Enum):
    FRACTION = "fraction"
    EXOGENOUS = "exogenous"


@dataclass(frozen=True)
class CollateralSpec:
    """
    Rule producing the cash collateral C_t.

    C_t > 0 means the trader holds collateral received from the counterparty. Collateral is
    always rehypothecated and accrues at the effective collateral rate from the rate system.
    An EXOGENOUS functional receives (t, asset state, clean value) and returns C_t.
    """

    rule: CollateralRule = CollateralRule.FRACTION
    alpha: float = 0.0
    functional: Optional[Callable[[float, np.ndarray, np.ndarray], np.ndarray]] = field(
        default=None, compare=False
    )

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ValidationError("collateral fraction must be finite")
        if self.rule is CollateralRule.EXOGENOUS and self.functional is None:
            raise ValidationError("exogenous collateral requires a functional")

    @classmethod
    def uncollateralized(cls) -> "CollateralSpec":
        return cls(rule=CollateralRule.FRACTION, alpha=0.0)

    @classmethod
    def fraction(cls, alpha: float) -> "CollateralSpec":
        return cls(rule=CollateralRule.FRACTION, alpha=float(alpha))

    def negated(self) -> "CollateralSpec":
        """Collateral of the mirrored position"""
        if self.rule is CollateralRule.FRACTION:
            # C = alpha * Q already flips with the stream
            return self
        inner = self.functional
        return CollateralSpec(
            rule=CollateralRule.EXOGENOUS,
            functional=lambda t, state, clean: -np.asarray(inner(t, state, -clean)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"rule": self.rule.value, "alpha": self.alpha}


class Settlement(Enum):
    """What is exchanged at the first default"""

    CSA = "csa"
    COLLATERAL_ONLY = "collateral_only"


@dataclass(frozen=True)
class CloseoutSpec:
    """
    Risk-free closeout: Q_τ = ΔA_τ + π^r_τ(A), valued with r regardless of the pricing measure.

    COLLATERAL_ONLY settlement returns the margin and nothing else (R_τ = −C_{τ−}, θ = 0).
    """

    mode: str = "risk_free"
    settlement: Settlement = Settlement.CSA

    def __post_init__(self):
        if self.mode != "risk_free":
            raise ValidationError(f"unsupported closeout mode '{self.mode}'")

    def to_dict(self) -> Dict[str, Any]:
        return {"mode": self.mode, "settlement": self.settlement.value}


class Defaulter(Enum):
    TRADER = "trader"
    COUNTERPARTY = "counterparty"
    JOINT = "joint"

    def other(self) -> "Defaulter":
        if self is Defaulter.TRADER:
            return Defaulter.COUNTERPARTY
        if self is Defaulter.COUNTERPARTY:
            return Defaulter.TRADER
        return self


@dataclass(frozen=True)
class CloseoutOutcome:
    """Settlement at the first default"""

    clean: float
    collateral: float
    defaulter: Defaulter
    theta: float

    @property
    def exposure(self) -> float:
        """Υ = Q_τ − C_{τ−}"""
        return self.clean - self.collateral

    @property
    def exposure_positive(self) -> float:
        return max(self.exposure, 0.0)

    @property
    def exposure_negative(self) -> float:
        return max(-self.exposure, 0.0)

    @property
    def recovery(self) -> float:
        """R_τ = θ_τ − C_{τ−}"""
        return self.theta - self.collateral

    def to_dict(self) -> Dict[str, Any]:
        return {
            "clean": self.clean,
            "collateral": self.collateral,
            "defaulter": self.defaulter.value,
            "exposure": self.exposure,
            "theta": self.theta,
            "recovery": self.recovery,
        }
