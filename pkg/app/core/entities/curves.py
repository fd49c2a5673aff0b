"""Deterministic rate curves and the rate system"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.errors import CurveError

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class RateCurve:
    """
    Right-open piecewise-constant rate curve, continuously compounded, per annum.

    `breakpoints[j]` is the start of segment j; the first breakpoint is 0 and the last
    value extends flat beyond the final breakpoint.
    """

    breakpoints: Tuple[float, ...]
    values: Tuple[float, ...]
    _cumulative: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = tuple(float(t) for t in self.breakpoints)
        values = tuple(float(v) for v in self.values)
        if not times or len(times) != len(values):
            raise CurveError("curve needs one value per breakpoint")
        if times[0] != 0.0:
            raise CurveError(f"first breakpoint must be 0, got {times[0]}")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise CurveError("breakpoints must be strictly increasing")
        if not all(math.isfinite(v) for v in values):
            raise CurveError("curve values must be finite")
        object.__setattr__(self, "breakpoints", times)
        object.__setattr__(self, "values", values)

        starts = np.asarray(times)
        rates = np.asarray(values)
        cumulative = np.zeros(len(times))
        if len(times) > 1:
            cumulative[1:] = np.cumsum(rates[:-1] * np.diff(starts))
        object.__setattr__(self, "_cumulative", cumulative)

    @classmethod
    def flat(cls, value: float) -> "RateCurve":
        return cls(breakpoints=(0.0,), values=(float(value),))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "RateCurve":
        """Build from [(time, value), ...] as serialized in scenario files"""
        pairs = [tuple(p) for p in pairs]
        return cls(breakpoints=tuple(p[0] for p in pairs), values=tuple(p[1] for p in pairs))

    def to_pairs(self) -> List[List[float]]:
        return [[t, v] for t, v in zip(self.breakpoints, self.values)]

    @property
    def is_flat(self) -> bool:
        return len(set(self.values)) == 1

    @property
    def minimum(self) -> float:
        return min(self.values)

    def _segment(self, t: ArrayLike) -> np.ndarray:
        return np.searchsorted(np.asarray(self.breakpoints), t, side="right") - 1

    def value_at(self, t: ArrayLike) -> ArrayLike:
        """Rate in force at time t (right-open segments)"""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0):
            raise CurveError("curves are not defined before time 0")
        out = np.asarray(self.values)[self._segment(t_arr)]
        return float(out) if np.ndim(t) == 0 else out

    def integral(self, t: ArrayLike) -> ArrayLike:
        """∫₀ᵗ rate(u) du, exact segment sum"""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0):
            raise CurveError("curves are not defined before time 0")
        idx = self._segment(t_arr)
        out = self._cumulative[idx] + np.asarray(self.values)[idx] * (
            t_arr - np.asarray(self.breakpoints)[idx]
        )
        return float(out) if np.ndim(t) == 0 else out

    def integral_between(self, t: ArrayLike, s: ArrayLike) -> ArrayLike:
        return self.integral(s) - self.integral(t)

    def average(self, t: float, s: float) -> float:
        """Segment-average rate over [t, s]"""
        if s <= t:
            return float(self.value_at(t))
        return float(self.integral_between(t, s)) / (s - t)

    def inverse_integral(self, level: np.ndarray) -> np.ndarray:
        """
        Smallest t with ∫₀ᵗ rate = level; inf when the curve never reaches it.

        Used for inverse-transform sampling of default times, so the curve is expected to
        be nonnegative.
        """
        level = np.asarray(level, dtype=float)
        idx = np.searchsorted(self._cumulative, level, side="right") - 1
        idx = np.clip(idx, 0, len(self.breakpoints) - 1)
        rates = np.asarray(self.values)[idx]
        starts = np.asarray(self.breakpoints)[idx]
        remaining = level - self._cumulative[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(rates > 0.0, starts + remaining / rates, np.inf)
        # zero-rate segments leave the cumulative flat, searchsorted lands past them
        return np.where(remaining <= 0.0, starts, out)

    def scaled(self, factor: float) -> "RateCurve":
        return RateCurve(self.breakpoints, tuple(v * factor for v in self.values))

    def equivalent(self, other: "RateCurve") -> bool:
        """Same rate at every time, whatever the breakpoints"""
        times = np.asarray(sorted(set(self.breakpoints) | set(other.breakpoints)))
        return bool(np.array_equal(self.value_at(times), other.value_at(times)))

    def _combine(self, other: "RateCurve", sign: float) -> "RateCurve":
        times = tuple(sorted(set(self.breakpoints) | set(other.breakpoints)))
        values = tuple(
            float(self.value_at(t)) + sign * float(other.value_at(t)) for t in times
        )
        return RateCurve(times, values)

    def __add__(self, other: "RateCurve") -> "RateCurve":
        return self._combine(other, 1.0)

    def __sub__(self, other: "RateCurve") -> "RateCurve":
        return self._combine(other, -1.0)


@dataclass(frozen=True)
class RatePair:
    """Lend/borrow pair of curves for one account"""

    lend: RateCurve
    borrow: RateCurve

    @classmethod
    def single(cls, curve: RateCurve) -> "RatePair":
        return cls(lend=curve, borrow=curve)

    @property
    def degenerate(self) -> bool:
        return self.lend.equivalent(self.borrow)

    def effective(self, t: ArrayLike, lending: np.ndarray) -> np.ndarray:
        """Lend rate where `lending` is true, borrow rate elsewhere"""
        return np.where(lending, self.lend.value_at(t), self.borrow.value_at(t))

    def to_dict(self) -> Dict[str, Any]:
        return {"lend": self.lend.to_pairs(), "borrow": self.borrow.to_pairs()}


@dataclass(frozen=True)
class RateSystem:
    """
    All deterministic rate curves of a valuation.

    Holds the risk-free rate r, the treasury pair (f^l, f^b), the collateral pair
    (c^l, c^b), one repo pair per asset and the optional funding spread s^f.
    """

    r: RateCurve
    funding: RatePair
    collateral: RatePair
    repo: Tuple[RatePair, ...]
    horizon: float
    funding_spread: Optional[RateCurve] = None

    def __post_init__(self):
        object.__setattr__(self, "repo", tuple(self.repo))
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise CurveError(f"horizon must be positive and finite, got {self.horizon}")

    @classmethod
    def flat(
        cls,
        r: float,
        n_assets: int = 1,
        horizon: float = 1.0,
        f: Optional[float] = None,
        h: Optional[float] = None,
        c: Optional[float] = None,
    ) -> "RateSystem":
        """Single-rate system with every pair degenerate; unset rates default to r"""

        def pair(x: Optional[float]) -> RatePair:
            return RatePair.single(RateCurve.flat(r if x is None else x))

        return cls(
            r=RateCurve.flat(r),
            funding=pair(f),
            collateral=pair(c),
            repo=tuple(pair(h) for _ in range(n_assets)),
            horizon=horizon,
        )

    @property
    def degeneracy(self) -> Dict[str, bool]:
        flags = {"funding": self.funding.degenerate, "collateral": self.collateral.degenerate}
        for i, pair in enumerate(self.repo):
            flags[f"repo[{i}]"] = pair.degenerate
        return flags

    @property
    def is_linear(self) -> bool:
        """Treasury and repo pairs degenerate (collateral is exogenous and may differ)"""
        return self.funding.degenerate and all(p.degenerate for p in self.repo)

    @property
    def all_curves(self) -> List[RateCurve]:
        curves = [self.r, self.funding.lend, self.funding.borrow]
        curves += [self.collateral.lend, self.collateral.borrow]
        for pair in self.repo:
            curves += [pair.lend, pair.borrow]
        if self.funding_spread is not None:
            curves.append(self.funding_spread)
        return curves

    def collapsed_to_lend(self) -> "RateSystem":
        """Linearization with every treasury and repo pair collapsed to its lend curve"""
        return RateSystem(
            r=self.r,
            funding=RatePair.single(self.funding.lend),
            collateral=self.collateral,
            repo=tuple(RatePair.single(p.lend) for p in self.repo),
            horizon=self.horizon,
            funding_spread=self.funding_spread,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "r": self.r.to_pairs(),
            "funding": self.funding.to_dict(),
            "collateral": self.collateral.to_dict(),
            "repo": [p.to_dict() for p in self.repo],
            "horizon": self.horizon,
            "funding_spread": None
            if self.funding_spread is None
            else self.funding_spread.to_pairs(),
        }
