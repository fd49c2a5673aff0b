"""Deflators, drifts and survival probabilities"""

import math
from typing import Optional

from app.core.entities.curves import RateCurve, RateSystem
from app.core.entities.market import AssetModel, DeflatorChoice, Preset
from app.core.errors import CurveError, ValidationError

# tolerance when comparing times with the curve horizon
HORIZON_EPSILON = 1e-12


def deflator(eta: RateCurve, t: float, s: float, horizon: Optional[float] = None) -> float:
    """D(t, s) = exp(−∫ₜˢ η_u du), exact segment sum"""
    if t < 0.0 or s < t:
        raise CurveError(f"deflator needs 0 <= t <= s, got t={t}, s={s}")
    if horizon is not None and s > horizon + HORIZON_EPSILON:
        raise CurveError(f"time {s} lies beyond the horizon {horizon}")
    return math.exp(-eta.integral_between(t, s))


def survival(intensity: RateCurve, t: float, s: float) -> float:
    """P(no default in (t, s]) = exp(−(Λ_s − Λ_t))"""
    if s < t:
        raise CurveError(f"survival needs t <= s, got t={t}, s={s}")
    return math.exp(-intensity.integral_between(t, s))


def drift_under(choice: DeflatorChoice, asset: int) -> RateCurve:
    """Drift of asset i under the instrumental measure (γ^i or ν^i)"""
    if not 0 <= asset < len(choice.drifts):
        raise ValidationError(f"asset index {asset} out of range")
    return choice.drifts[asset]


class MeasureFactory:
    """Builds deflator choices from a rate system"""

    def make_choice(
        self,
        preset: Preset,
        rates: RateSystem,
        assets: AssetModel,
        eta: Optional[RateCurve] = None,
    ) -> DeflatorChoice:
        """
        RISK_FREE: every rate r.
        FUNDING: η = ν = f^l, γ^i = h^{i,l} (Q^{f,h,f}).
        REPO: asset drifts h^i, η given or r (Q^h).
        CUSTOM: η given, drifts r.
        """
        n = assets.n_assets
        if len(rates.repo) != n:
            raise ValidationError(f"rate system has {len(rates.repo)} repo pairs for {n} assets")

        if preset is Preset.RISK_FREE:
            return DeflatorChoice(eta=rates.r, drifts=(rates.r,) * n, preset=preset)

        if preset is Preset.FUNDING:
            f = rates.funding.lend
            drifts = tuple(
                f if assets.treasury_funded[i] else rates.repo[i].lend for i in range(n)
            )
            return DeflatorChoice(eta=f, drifts=drifts, preset=preset)

        if preset is Preset.REPO:
            drifts = tuple(rates.repo[i].lend for i in range(n))
            return DeflatorChoice(eta=eta or rates.r, drifts=drifts, preset=preset)

        if eta is None:
            raise ValidationError("custom deflator choice needs an explicit eta curve")
        return DeflatorChoice(eta=eta, drifts=(rates.r,) * n, preset=Preset.CUSTOM)
