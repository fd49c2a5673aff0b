"""Contract entity: dividend stream, payoff menu and sign convention"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from app.core.errors import UnsupportedPayoffError, ValidationError

# time tolerance used when matching payment dates to grid nodes
TIME_EPSILON = 1e-12


class PayoffKind(Enum):
    """Payoff menu, named by the string tags used in scenario files"""

    FORWARD = "forward"
    CALL = "call"
    PUT = "put"
    CASH_OR_NOTHING = "cash_or_nothing"
    FIXED = "fixed"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Payment:
    """
    One dated cash flow of the stream A, received by the trader when positive.

    `quantity` scales every payoff; a FIXED payment pays `quantity`, a cash-or-nothing
    payment pays `quantity` when the asset ends above the strike. A CUSTOM payment
    applies `function` to the full asset state (paths x assets).
    """

    time: float
    kind: PayoffKind
    asset: int = 0
    strike: float = 0.0
    quantity: float = 1.0
    function: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.time > 0.0 and math.isfinite(self.time)):
            raise ValidationError(f"payment time must be positive, got {self.time}")
        if self.kind is PayoffKind.CUSTOM and self.function is None:
            raise UnsupportedPayoffError("custom payoff requires a function")
        if self.kind in (PayoffKind.CALL, PayoffKind.PUT, PayoffKind.CASH_OR_NOTHING):
            if self.strike < 0.0:
                raise ValidationError("strike must be nonnegative")

    @property
    def has_closed_form(self) -> bool:
        return self.kind is not PayoffKind.CUSTOM

    def amount(self, state: np.ndarray) -> np.ndarray:
        """Payment amount for asset states of shape (paths, assets)"""
        state = np.atleast_2d(state)
        s = state[:, self.asset]
        if self.kind is PayoffKind.FORWARD:
            return self.quantity * (s - self.strike)
        if self.kind is PayoffKind.CALL:
            return self.quantity * np.maximum(s - self.strike, 0.0)
        if self.kind is PayoffKind.PUT:
            return self.quantity * np.maximum(self.strike - s, 0.0)
        if self.kind is PayoffKind.CASH_OR_NOTHING:
            return self.quantity * (s > self.strike).astype(float)
        if self.kind is PayoffKind.FIXED:
            return np.full(s.shape, self.quantity)
        return self.quantity * np.asarray(self.function(state), dtype=float)

    def negated(self) -> "Payment":
        return replace(self, quantity=-self.quantity)

    def to_dict(self) -> Dict[str, Any]:
        if self.kind is PayoffKind.CUSTOM:
            raise UnsupportedPayoffError("custom payoffs cannot be serialized")
        return {
            "time": self.time,
            "payoff": self.kind.value,
            "asset": self.asset,
            "strike": self.strike,
            "quantity": self.quantity,
        }


@dataclass(frozen=True)
class DividendStream:
    """Finite list of dated payments; A_0 = 0 by construction"""

    payments: Tuple[Payment, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.payments, key=lambda p: p.time))
        times = [p.time for p in ordered]
        if any(b - a <= TIME_EPSILON for a, b in zip(times, times[1:])):
            raise ValidationError("at most one payment per time point")
        object.__setattr__(self, "payments", ordered)

    @property
    def times(self) -> Tuple[float, ...]:
        return tuple(p.time for p in self.payments)

    @property
    def is_empty(self) -> bool:
        return not self.payments

    @property
    def has_closed_form(self) -> bool:
        return all(p.has_closed_form for p in self.payments)

    def payment_at(self, t: float) -> Optional[Payment]:
        for p in self.payments:
            if abs(p.time - t) <= TIME_EPSILON:
                return p
        return None

    def stopped(self, tau: float) -> "DividendStream":
        """Ã: payments strictly before tau"""
        return DividendStream(tuple(p for p in self.payments if p.time < tau - TIME_EPSILON))

    def negated(self) -> "DividendStream":
        return DividendStream(tuple(p.negated() for p in self.payments))

    def __add__(self, other: "DividendStream") -> "DividendStream":
        return DividendStream(self.payments + other.payments)


@dataclass(frozen=True)
class Contract:
    """Bilateral contract: dividend stream A with maturity T"""

    stream: DividendStream
    maturity: float

    def __post_init__(self):
        if not (self.maturity > 0.0 and math.isfinite(self.maturity)):
            raise ValidationError("maturity must be positive")
        late = [p.time for p in self.stream.payments if p.time > self.maturity + TIME_EPSILON]
        if late:
            raise ValidationError(f"payments after maturity: {late}")

    @classmethod
    def single(cls, payment: Payment) -> "Contract":
        return cls(stream=DividendStream((payment,)), maturity=payment.time)

    @property
    def is_terminal_only(self) -> bool:
        """At most one payment, located at maturity (a single payoff X)"""
        times = self.stream.times
        return len(times) == 0 or (
            len(times) == 1 and abs(times[0] - self.maturity) <= TIME_EPSILON
        )

    def negated(self) -> "Contract":
        return Contract(stream=self.stream.negated(), maturity=self.maturity)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "maturity": self.maturity,
            "payments": [p.to_dict() for p in self.stream.payments],
        }


class SignConvention:
    """
    Canonical orientation: the value to the trader of receiving the stream A.

    Replication-style representations return what the trader is paid to take on the
    position; the canonical value is its negative. Mirroring a position negates the stream.
    """

    @staticmethod
    def from_replication(value):
        return -value

    @staticmethod
    def to_replication(value):
        return -value

    @staticmethod
    def mirror(contract: Contract) -> Contract:
        return contract.negated()
