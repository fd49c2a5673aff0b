"""Scenario entity: everything one CLI invocation prices"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.entities.collateral import CloseoutSpec, CollateralSpec
from app.core.entities.contract import Contract
from app.core.entities.curves import RateCurve, RateSystem
from app.core.entities.market import AssetModel, DefaultModel, Market, Preset
from app.core.entities.simulation import MonteCarloConfig
from app.core.errors import ValidationError

MODES = ("linear", "nonlinear", "incomplete", "verify")


class ExternalConvention(Enum):
    INDEPENDENT = "independent"
    NET_BORROWER = "net_borrower"


@dataclass(frozen=True)
class PositionSchedule:
    """
    Piecewise-constant currency amount: `values[j]` holds from `breakpoints[j]` until the
    next breakpoint, the last value extends flat.
    """

    breakpoints: Tuple[float, ...] = (0.0,)
    values: Tuple[float, ...] = (0.0,)

    def __post_init__(self):
        times = tuple(float(t) for t in self.breakpoints)
        values = tuple(float(v) for v in self.values)
        if not times or len(times) != len(values):
            raise ValidationError("schedule needs one amount per breakpoint")
        if times[0] != 0.0:
            raise ValidationError(f"first breakpoint must be 0, got {times[0]}")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("breakpoints must be strictly increasing")
        if not all(math.isfinite(v) for v in values):
            raise ValidationError("schedule amounts must be finite")
        object.__setattr__(self, "breakpoints", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def flat(cls, amount: float) -> "PositionSchedule":
        return cls(breakpoints=(0.0,), values=(float(amount),))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "PositionSchedule":
        pairs = [tuple(p) for p in pairs]
        return cls(breakpoints=tuple(p[0] for p in pairs), values=tuple(p[1] for p in pairs))

    def to_pairs(self) -> List[List[float]]:
        return [[t, v] for t, v in zip(self.breakpoints, self.values)]

    def amount_at(self, t) -> np.ndarray:
        """Amount in force at each time"""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise ValidationError("schedules are not defined before time 0")
        segment = np.searchsorted(np.asarray(self.breakpoints), t, side="right") - 1
        return np.asarray(self.values)[segment]


@dataclass(frozen=True)
class ExternalFundingSpec:
    """
    Bank-wide external funding context of a trade.

    `bank_position` is the bank's net external position Y_t in currency (negative when
    borrowing). The external entity's default, when present, comes from the default model.
    """

    convention: ExternalConvention
    bank_position: PositionSchedule = field(default_factory=PositionSchedule)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "convention": self.convention.value,
            "bank_position": self.bank_position.to_pairs(),
        }


@dataclass(frozen=True)
class IncompleteMarketSpec:
    """Settings of the incomplete-market valuation (η deflation under Q^h)"""

    eta: Optional[RateCurve] = None
    spread: Optional[RateCurve] = None  # None means the fair spread L_I·λ^I
    wealth_levels: Tuple[float, ...] = (0.0, 100.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eta": None if self.eta is None else self.eta.to_pairs(),
            "spread": "auto" if self.spread is None else self.spread.to_pairs(),
            "wealth_levels": list(self.wealth_levels),
        }


@dataclass
class RunSettings:
    """Run block of a scenario"""

    mode: str = "linear"
    paths: int = 20000
    steps: int = 128
    seed: int = 20240601
    measure: Preset = Preset.RISK_FREE
    basis_degree: int = 3
    picard_tolerance: float = 1e-8
    picard_max_iterations: int = 50
    damping: float = 1.0
    notional: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "paths": self.paths,
            "steps": self.steps,
            "seed": self.seed,
            "measure": self.measure.value,
            "basis_degree": self.basis_degree,
            "picard_tolerance": self.picard_tolerance,
            "picard_max_iterations": self.picard_max_iterations,
            "damping": self.damping,
            "notional": self.notional,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunSettings":
        """Create RunSettings from dictionary, handling type conversions"""
        notional = data.get("notional")
        return cls(
            mode=str(data.get("mode", "linear")),
            paths=int(data.get("paths", 20000)),
            steps=int(data.get("steps", 128)),
            seed=int(data.get("seed", 20240601)),
            measure=Preset(data.get("measure", "risk_free")),
            basis_degree=int(data.get("basis_degree", 3)),
            picard_tolerance=float(data.get("picard_tolerance", 1e-8)),
            picard_max_iterations=int(data.get("picard_max_iterations", 50)),
            damping=float(data.get("damping", 1.0)),
            notional=None if notional is None else float(notional),
        )

    def monte_carlo(self, workers: int, default_notional: float) -> MonteCarloConfig:
        return MonteCarloConfig(
            n_paths=self.paths,
            n_steps=self.steps,
            seed=self.seed,
            workers=workers,
            basis_degree=self.basis_degree,
            picard_tolerance=self.picard_tolerance,
            picard_max_iterations=self.picard_max_iterations,
            damping=self.damping,
            notional=self.notional or default_notional,
        )


@dataclass(frozen=True)
class Scenario:
    """Market, contract, collateral and run blocks of one valuation"""

    rates: RateSystem
    assets: AssetModel
    defaults: DefaultModel
    contract: Contract
    collateral: CollateralSpec
    closeout: CloseoutSpec
    run: RunSettings
    external: Optional[ExternalFundingSpec] = None
    incomplete: IncompleteMarketSpec = field(default_factory=IncompleteMarketSpec)
    warnings: Tuple[str, ...] = ()
    name: str = "scenario"

    @property
    def market(self) -> Market:
        return Market(self.rates, self.assets, self.defaults)

    @property
    def notional(self) -> float:
        return self.run.notional or self.assets.spots[0]

    def with_run(self, **overrides: Any) -> "Scenario":
        """Copy with run-block fields replaced (CLI flags take precedence)"""
        changes = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, run=replace(self.run, **changes))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "rates": self.rates.to_dict(),
            "assets": self.assets.to_dict(),
            "defaults": self.defaults.to_dict(),
            "contract": self.contract.to_dict(),
            "collateral": self.collateral.to_dict(),
            "closeout": self.closeout.to_dict(),
            "external_funding": None if self.external is None else self.external.to_dict(),
            "incomplete": self.incomplete.to_dict(),
            "run": self.run.to_dict(),
        }
