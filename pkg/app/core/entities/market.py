"""Asset dynamics, default model and instrumental deflators"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import linalg

from app.core.entities.curves import RateCurve, RateSystem
from app.core.errors import ValidationError


@dataclass(frozen=True)
class AssetModel:
    """
    Lognormal risky assets dS = S(μ dt + σ dW).

    The drift μ is never part of the model: it is assigned by the deflator choice.
    """

    spots: Tuple[float, ...]
    vols: Tuple[float, ...]
    correlation: Tuple[Tuple[float, ...], ...] = ()
    treasury_funded: Tuple[bool, ...] = ()

    def __post_init__(self):
        spots = tuple(float(s) for s in self.spots)
        vols = tuple(float(v) for v in self.vols)
        n = len(spots)
        if n == 0 or len(vols) != n:
            raise ValidationError("one volatility per asset is required")
        if any(not (s > 0.0 and math.isfinite(s)) for s in spots):
            raise ValidationError("initial prices must be positive")
        if any(v < 0.0 or not math.isfinite(v) for v in vols):
            raise ValidationError("volatilities must be nonnegative")

        corr = np.eye(n) if not self.correlation else np.asarray(self.correlation, dtype=float)
        if corr.shape != (n, n):
            raise ValidationError(f"correlation must be {n}x{n}")
        if not np.allclose(corr, corr.T, atol=1e-12):
            raise ValidationError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
            raise ValidationError("correlation matrix must have unit diagonal")
        if np.linalg.eigvalsh(corr).min() < -1e-10:
            raise ValidationError("correlation matrix is not positive semi-definite")

        funded = tuple(bool(x) for x in self.treasury_funded) or (False,) * n
        if len(funded) != n:
            raise ValidationError("treasury_funded needs one flag per asset")

        object.__setattr__(self, "spots", spots)
        object.__setattr__(self, "vols", vols)
        object.__setattr__(self, "correlation", tuple(tuple(row) for row in corr.tolist()))
        object.__setattr__(self, "treasury_funded", funded)

    @classmethod
    def single(cls, spot: float, vol: float) -> "AssetModel":
        return cls(spots=(spot,), vols=(vol,))

    @property
    def n_assets(self) -> int:
        return len(self.spots)

    @property
    def repo_assets(self) -> Tuple[int, ...]:
        return tuple(i for i, t in enumerate(self.treasury_funded) if not t)

    @property
    def treasury_assets(self) -> Tuple[int, ...]:
        return tuple(i for i, t in enumerate(self.treasury_funded) if t)

    def correlation_factor(self) -> np.ndarray:
        """Lower-triangular L with L @ L.T = correlation"""
        corr = np.asarray(self.correlation)
        try:
            return linalg.cholesky(corr, lower=True)
        except linalg.LinAlgError:
            # singular but PSD: symmetric square root from the clipped spectrum
            eigvals, eigvecs = np.linalg.eigh(corr)
            return eigvecs @ np.diag(np.sqrt(np.clip(eigvals, 0.0, None)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "spots": list(self.spots),
            "vols": list(self.vols),
            "correlation": [list(r) for r in self.correlation],
            "treasury_funded": list(self.treasury_funded),
        }


@dataclass(frozen=True)
class DefaultModel:
    """Deterministic default intensities and recoveries of trader (I) and counterparty (C)"""

    trader_intensity: RateCurve
    counterparty_intensity: RateCurve
    trader_recovery: float = 0.4
    counterparty_recovery: float = 0.4
    external_intensity: Optional[RateCurve] = None
    external_loss: float = 0.0

    def __post_init__(self):
        for name in ("trader_intensity", "counterparty_intensity", "external_intensity"):
            curve = getattr(self, name)
            if curve is not None and curve.minimum < 0.0:
                raise ValidationError(f"{name} must be nonnegative")
        for name in ("trader_recovery", "counterparty_recovery", "external_loss"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def default_free(cls) -> "DefaultModel":
        return cls(RateCurve.flat(0.0), RateCurve.flat(0.0))

    @classmethod
    def flat(
        cls, trader: float, counterparty: float, trader_loss: float, counterparty_loss: float
    ) -> "DefaultModel":
        return cls(
            trader_intensity=RateCurve.flat(trader),
            counterparty_intensity=RateCurve.flat(counterparty),
            trader_recovery=1.0 - trader_loss,
            counterparty_recovery=1.0 - counterparty_loss,
        )

    @property
    def trader_loss(self) -> float:
        return 1.0 - self.trader_recovery

    @property
    def counterparty_loss(self) -> float:
        return 1.0 - self.counterparty_recovery

    @property
    def total_intensity(self) -> RateCurve:
        return self.trader_intensity + self.counterparty_intensity

    @property
    def has_defaults(self) -> bool:
        values = self.trader_intensity.values + self.counterparty_intensity.values
        return any(v > 0.0 for v in values)

    @property
    def curves(self) -> Tuple[RateCurve, ...]:
        curves = (self.trader_intensity, self.counterparty_intensity)
        return curves + ((self.external_intensity,) if self.external_intensity else ())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "trader": {
                "intensity": self.trader_intensity.to_pairs(),
                "recovery": self.trader_recovery,
            },
            "counterparty": {
                "intensity": self.counterparty_intensity.to_pairs(),
                "recovery": self.counterparty_recovery,
            },
            "external": None
            if self.external_intensity is None
            else {"intensity": self.external_intensity.to_pairs(), "loss": self.external_loss},
        }


class Preset(Enum):
    """Named instrumental measures"""

    RISK_FREE = "risk_free"
    FUNDING = "funding"
    REPO = "repo"
    CUSTOM = "custom"


@dataclass(frozen=True)
class DeflatorChoice:
    """
    Instrumental measure Q^{ζ,γ,ν} with its discounting rate η.

    `drifts[i]` is γ^i for a repo-funded asset and ν^i for a treasury-funded one; every
    asset has exactly one drift. `bond_rates` holds ζ^j and is empty while no defaultable
    bonds are traded.
    """

    eta: RateCurve
    drifts: Tuple[RateCurve, ...]
    preset: Preset = Preset.CUSTOM
    bond_rates: Tuple[RateCurve, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "drifts", tuple(self.drifts))
        object.__setattr__(self, "bond_rates", tuple(self.bond_rates))
        if not self.drifts:
            raise ValidationError("deflator choice needs one drift curve per asset")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "preset": self.preset.value,
            "eta": self.eta.to_pairs(),
            "drifts": [d.to_pairs() for d in self.drifts],
        }


@dataclass(frozen=True)
class Market:
    """Rate system, asset dynamics and default model of one valuation"""

    rates: RateSystem
    assets: AssetModel
    defaults: DefaultModel

    def __post_init__(self):
        if len(self.rates.repo) != self.assets.n_assets:
            raise ValidationError("one repo pair per asset is required")

    def with_defaults(self, defaults: DefaultModel) -> "Market":
        return Market(self.rates, self.assets, defaults)

    def with_rates(self, rates: RateSystem) -> "Market":
        return Market(rates, self.assets, self.defaults)
