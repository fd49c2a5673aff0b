"""
Reference values for arbitrating the pricers.

Closed forms, one-dimensional quadratures and a binomial tree written against scipy
directly; nothing here calls into the Monte Carlo machinery, curve integration or the
regression code, so a disagreement always points at one side.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy import integrate, stats

from app.core.entities.contract import PayoffKind
from app.core.errors import UnsupportedPayoffError, ValidationError

logger = logging.getLogger(__name__)

QUAD_RELATIVE_TOLERANCE = 1e-10
QUAD_ABSOLUTE_TOLERANCE = 1e-13
MAX_TREE_STEPS = 2000

_MENU = (PayoffKind.CALL, PayoffKind.PUT, PayoffKind.FORWARD)


def _check_kind(kind: PayoffKind) -> None:
    if kind not in _MENU:
        raise UnsupportedPayoffError(f"oracle supports call, put and forward, got {kind.value}")


@dataclass(frozen=True)
class TwoRateBSInput:
    """Lognormal asset with its own carry rate, discounted at a second rate"""

    spot: float
    strike: float
    vol: float
    maturity: float
    carry: float
    discount: float

    def __post_init__(self):
        if self.vol < 0.0:
            raise ValidationError("vol must be >= 0")
        if self.maturity <= 0.0:
            raise ValidationError("maturity must be > 0")
        if self.spot <= 0.0 or self.strike < 0.0:
            raise ValidationError("spot must be > 0 and strike >= 0")

    @property
    def forward(self) -> float:
        return self.spot * math.exp(self.carry * self.maturity)

    @property
    def discount_factor(self) -> float:
        return math.exp(-self.discount * self.maturity)


def bs_carry_discount(inp: TwoRateBSInput, kind: PayoffKind = PayoffKind.CALL) -> float:
    """e^{−ρT}(F N(d₁) − K N(d₂)) with F = S₀e^{qT}, and the matching put and forward"""
    _check_kind(kind)
    fwd, df, k = inp.forward, inp.discount_factor, inp.strike
    if kind is PayoffKind.FORWARD:
        return df * (fwd - k)
    if inp.vol == 0.0 or k == 0.0:
        if kind is PayoffKind.CALL:
            return df * max(fwd - k, 0.0)
        return df * max(k - fwd, 0.0)
    sd = inp.vol * math.sqrt(inp.maturity)
    d1 = (math.log(fwd / k) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    if kind is PayoffKind.CALL:
        return df * (fwd * stats.norm.cdf(d1) - k * stats.norm.cdf(d2))
    return df * (k * stats.norm.cdf(-d2) - fwd * stats.norm.cdf(-d1))


def lognormal_quadrature_price(
    inp: TwoRateBSInput,
    kind: PayoffKind = PayoffKind.CALL,
    rel_tol: float = QUAD_RELATIVE_TOLERANCE,
) -> float:
    """Discounted payoff integrated against the standard normal density of log S_T"""
    _check_kind(kind)
    fwd, df, k = inp.forward, inp.discount_factor, inp.strike
    sd = inp.vol * math.sqrt(inp.maturity)
    if sd == 0.0:
        return bs_carry_discount(inp, kind)

    def terminal(z: float) -> float:
        return fwd * math.exp(sd * z - 0.5 * sd * sd)

    def payoff(s: float) -> float:
        if kind is PayoffKind.CALL:
            return max(s - k, 0.0)
        if kind is PayoffKind.PUT:
            return max(k - s, 0.0)
        return s - k

    def integrand(z: float) -> float:
        return payoff(terminal(z)) * stats.norm.pdf(z)

    kink = (math.log(k / fwd) + 0.5 * sd * sd) / sd if k > 0.0 else -40.0
    opts = {"epsabs": QUAD_ABSOLUTE_TOLERANCE, "epsrel": rel_tol, "limit": 200}
    lower, _ = integrate.quad(integrand, -np.inf, kink, **opts)
    upper, _ = integrate.quad(integrand, kink, np.inf, **opts)
    return df * (lower + upper)


# --------------------------------------------------------------------------
# XVA by quadrature over the default time
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class XvaQuadratureInput:
    """
    One payoff on one lognormal asset with flat rates, flat intensities and collateral
    C = αQ. `discount` and `drift` describe the instrumental measure the legs are valued
    under (f and h for the funding measure); the clean value Q uses `clean_rate` for both.
    """

    spot: float
    strike: float
    vol: float
    maturity: float
    clean_rate: float
    discount: float
    drift: float
    kind: PayoffKind = PayoffKind.CALL
    quantity: float = 1.0
    collateral_lend: float = 0.0
    collateral_borrow: float = 0.0
    trader_intensity: float = 0.0
    counterparty_intensity: float = 0.0
    trader_loss: float = 0.6
    counterparty_loss: float = 0.6
    alpha: float = 0.0

    def __post_init__(self):
        _check_kind(self.kind)
        if self.trader_intensity < 0.0 or self.counterparty_intensity < 0.0:
            raise ValidationError("intensities must be >= 0")
        for loss in (self.trader_loss, self.counterparty_loss):
            if not 0.0 <= loss <= 1.0:
                raise ValidationError("losses must lie in [0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must lie in [0, 1] for the quadrature oracle")


@dataclass(frozen=True)
class XvaQuadratureResult:
    clean: float
    clean_estimate: float
    cva: float
    dva: float
    lva: float

    @property
    def total(self) -> float:
        return self.clean_estimate + self.lva + self.dva - self.cva


def _expected_parts(inp: XvaQuadratureInput, u: float) -> Tuple[float, float]:
    """
    (E[D(0,u)Q_u⁺], E[D(0,u)Q_u⁻]) under the instrumental measure.

    For options Q_u is itself a call or put value; E[e^{−r(T−u)}(value at u)] is a single
    lognormal expectation with forward S₀e^{gu + r(T−u)} and variance σ²T. Forwards are a
    call and a put on S_u struck at Ke^{−r(T−u)}.
    """
    r, g, rho = inp.clean_rate, inp.drift, inp.discount
    remaining = inp.maturity - u
    q = inp.quantity
    long_q, short_q = max(q, 0.0), max(-q, 0.0)
    if inp.kind is PayoffKind.FORWARD:
        if u <= 0.0:
            value = inp.spot - inp.strike * math.exp(-r * remaining)
            up, down = max(value, 0.0), max(-value, 0.0)
        else:
            struck = TwoRateBSInput(
                inp.spot, inp.strike * math.exp(-r * remaining), inp.vol, u, g, rho
            )
            up = bs_carry_discount(struck, PayoffKind.CALL)
            down = bs_carry_discount(struck, PayoffKind.PUT)
        return long_q * up + short_q * down, long_q * down + short_q * up

    carry = (g * u + r * remaining) / inp.maturity
    shifted = TwoRateBSInput(inp.spot, inp.strike, inp.vol, inp.maturity, carry, 0.0)
    option = math.exp(-rho * u - r * remaining) * bs_carry_discount(shifted, inp.kind)
    return long_q * option, short_q * option


def quadrature_xva(
    inp: XvaQuadratureInput, rel_tol: float = QUAD_RELATIVE_TOLERANCE
) -> XvaQuadratureResult:
    """
    Clean, CVA, DVA and LVA as time integrals over the first-default density with the
    expected deflated exposures computed in closed form at each date.
    """
    lam_i, lam_c = inp.trader_intensity, inp.counterparty_intensity
    lam = lam_i + lam_c
    alpha = inp.alpha
    opts = {"epsabs": QUAD_ABSOLUTE_TOLERANCE, "epsrel": rel_tol, "limit": 200}

    def survival(u: float) -> float:
        return math.exp(-lam * u)

    def quad(fn: Callable[[float], float]) -> float:
        value, _ = integrate.quad(fn, 0.0, inp.maturity, **opts)
        return value

    def net(u: float) -> float:
        plus, minus = _expected_parts(inp, u)
        return plus - minus

    terminal_plus, terminal_minus = _expected_parts(inp, inp.maturity)
    stream = survival(inp.maturity) * (terminal_plus - terminal_minus)
    at_default = quad(lambda u: lam * survival(u) * net(u)) if lam > 0.0 else 0.0
    clean_estimate = stream + at_default

    cva = 0.0
    if lam_c > 0.0:
        cva = inp.counterparty_loss * (1.0 - alpha) * quad(
            lambda u: lam_c * survival(u) * _expected_parts(inp, u)[0]
        )
    dva = 0.0
    if lam_i > 0.0:
        dva = inp.trader_loss * (1.0 - alpha) * quad(
            lambda u: lam_i * survival(u) * _expected_parts(inp, u)[1]
        )

    lva = 0.0
    if alpha > 0.0:

        def carry(u: float) -> float:
            plus, minus = _expected_parts(inp, u)
            return (inp.discount - inp.collateral_borrow) * plus - (
                inp.discount - inp.collateral_lend
            ) * minus

        lva = alpha * quad(lambda u: survival(u) * carry(u))

    clean = _clean_price(inp)
    return XvaQuadratureResult(
        clean=clean, clean_estimate=clean_estimate, cva=cva, dva=dva, lva=lva
    )


def _clean_price(inp: XvaQuadratureInput) -> float:
    r = inp.clean_rate
    base = TwoRateBSInput(inp.spot, inp.strike, inp.vol, inp.maturity, r, r)
    return inp.quantity * bs_carry_discount(base, inp.kind)


def fair_flat_borrow_rate(inp: XvaQuadratureInput) -> float:
    """
    Flat f^b at which FCA^f equals DVA^{f,−} for a receivable payoff.

    Both legs are carried by the same borrowed amount F⁻: FCA^f at rate f^b − r while
    alive, DVA^{f,−} at the own-default intensity with loss L_I. They cancel for any
    exposure profile once f^b − r = L_Iλ^I.
    """
    if inp.quantity < 0.0 or inp.kind is PayoffKind.FORWARD:
        raise ValidationError("fair borrow rate is defined for receivable payoffs")
    return inp.clean_rate + inp.trader_loss * inp.trader_intensity


# --------------------------------------------------------------------------
# Binomial tree for the nonlinear pricing equation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeInput:
    """
    One-asset scenario for the tree: lend/borrow treasury, repo and collateral rates,
    clean rate r for the closeout and the collateral C = αQ, optional flat intensities.
    """

    spot: float
    strike: float
    vol: float
    maturity: float
    r: float
    funding_lend: float
    funding_borrow: float
    repo_lend: float
    repo_borrow: float
    collateral_lend: float = 0.0
    collateral_borrow: float = 0.0
    kind: PayoffKind = PayoffKind.CALL
    quantity: float = 1.0
    alpha: float = 0.0
    trader_intensity: float = 0.0
    counterparty_intensity: float = 0.0
    trader_loss: float = 0.6
    counterparty_loss: float = 0.6

    def __post_init__(self):
        _check_kind(self.kind)
        if self.vol < 0.0 or self.maturity <= 0.0 or self.spot <= 0.0:
            raise ValidationError("tree needs vol >= 0, maturity > 0 and spot > 0")


def _payoff(kind: PayoffKind, quantity: float, strike: float, s: np.ndarray) -> np.ndarray:
    if kind is PayoffKind.CALL:
        return quantity * np.maximum(s - strike, 0.0)
    if kind is PayoffKind.PUT:
        return quantity * np.maximum(strike - s, 0.0)
    return quantity * (s - strike)


def _clean_values(inp: TreeInput, tau: float, s: np.ndarray) -> np.ndarray:
    """Clean value Q at time to maturity tau, vectorized over s"""
    r, k, q = inp.r, inp.strike, inp.quantity
    if tau <= 0.0:
        return _payoff(inp.kind, q, k, s)
    df = math.exp(-r * tau)
    if inp.kind is PayoffKind.FORWARD:
        return q * (s - k * df)
    sd = inp.vol * math.sqrt(tau)
    if sd == 0.0 or k == 0.0:
        fwd = s / df
        if inp.kind is PayoffKind.CALL:
            return q * df * np.maximum(fwd - k, 0.0)
        return q * df * np.maximum(k - fwd, 0.0)
    d1 = (np.log(s / k) + (r + 0.5 * inp.vol**2) * tau) / sd
    d2 = d1 - sd
    if inp.kind is PayoffKind.CALL:
        return q * (s * stats.norm.cdf(d1) - k * df * stats.norm.cdf(d2))
    return q * (k * df * stats.norm.cdf(-d2) - s * stats.norm.cdf(-d1))


def _step_back(
    inp: TreeInput,
    dt: float,
    continuation: np.ndarray,
    collateral: np.ndarray,
    clean: np.ndarray,
) -> np.ndarray:
    """
    Implicit Euler step of the price with the two-valued treasury rate: both branches are
    tried and the one whose funding sign F = C − P agrees with it is kept (F = 0 lends).
    """
    lam_i, lam_c = inp.trader_intensity, inp.counterparty_intensity
    c_bar = np.where(collateral >= 0.0, inp.collateral_borrow, inp.collateral_lend)
    exposure = clean - collateral
    theta_i = clean + inp.trader_loss * np.maximum(-exposure, 0.0)
    theta_c = clean - inp.counterparty_loss * np.maximum(exposure, 0.0)
    defaults = lam_i * theta_i + lam_c * theta_c

    def branch(f: float) -> np.ndarray:
        numerator = continuation + dt * ((f - c_bar) * collateral + defaults)
        return numerator / (1.0 + (f + lam_i + lam_c) * dt)

    lend = branch(inp.funding_lend)
    borrow = branch(inp.funding_borrow)
    lend_ok = collateral - lend >= 0.0
    borrow_ok = collateral - borrow < 0.0
    out = np.where(lend_ok, lend, borrow)
    inconsistent = ~lend_ok & ~borrow_ok
    if np.any(inconsistent):
        out = np.where(inconsistent, 0.5 * (lend + borrow), out)
    return out


def brute_force_bsde(inp: TreeInput, steps: int) -> float:
    """
    Canonical price by backward induction on a Cox–Ross–Rubinstein tree with an even number
    of steps. The up-probability uses the effective repo rate chosen by the sign of the
    hedge (Z = −∂P/∂S); with zero volatility the asset moves deterministically and the
    repo branch follows the slope of the payoff.
    """
    if steps < 2 or steps % 2:
        raise ValidationError("tree needs an even number of steps >= 2")
    if steps > MAX_TREE_STEPS:
        raise ValidationError(f"tree steps limited to {MAX_TREE_STEPS}")
    dt = inp.maturity / steps
    if inp.vol == 0.0:
        return _deterministic_tree(inp, steps, dt)

    up = math.exp(inp.vol * math.sqrt(dt))
    down = 1.0 / up
    j = np.arange(steps + 1)
    spots = inp.spot * up ** (2 * j - steps)
    value = _payoff(inp.kind, inp.quantity, inp.strike, spots)
    for i in range(steps - 1, -1, -1):
        j = np.arange(i + 1)
        spots = inp.spot * up ** (2 * j - i)
        up_value, down_value = value[1:], value[:-1]
        slope = (up_value - down_value) / (spots * (up - down))
        # hedge H = −(∂P/∂S)S lends to the repo desk when H ≤ 0
        h_bar = np.where(slope >= 0.0, inp.repo_lend, inp.repo_borrow)
        p = (np.exp(h_bar * dt) - down) / (up - down)
        if np.any((p < 0.0) | (p > 1.0)):
            raise ValidationError("tree probabilities outside [0, 1]; increase the steps")
        continuation = p * up_value + (1.0 - p) * down_value
        clean = _clean_values(inp, inp.maturity - i * dt, spots)
        value = _step_back(inp, dt, continuation, inp.alpha * clean, clean)
    return float(value[0])


def _deterministic_tree(inp: TreeInput, steps: int, dt: float) -> float:
    slope_up = inp.quantity >= 0.0
    if inp.kind is PayoffKind.PUT:
        slope_up = not slope_up
    h_bar = inp.repo_lend if slope_up else inp.repo_borrow
    times = np.arange(steps + 1) * dt
    spots = inp.spot * np.exp(h_bar * times)
    value = _payoff(inp.kind, inp.quantity, inp.strike, spots[-1:])
    for i in range(steps - 1, -1, -1):
        s = spots[i : i + 1]
        clean = _clean_values(inp, inp.maturity - times[i], s)
        value = _step_back(inp, dt, value, inp.alpha * clean, clean)
    return float(value[0])


@dataclass(frozen=True)
class TreeReference:
    value: float
    error_bar: float
    coarse: float
    fine: float
    steps: int
    meets_accuracy: bool


def brute_force_reference(
    inp: TreeInput, steps: int = 500, accuracy: float = math.inf
) -> TreeReference:
    """Richardson extrapolation 2P(2M) − P(M) with error bar |P(2M) − P(M)|"""
    coarse = brute_force_bsde(inp, steps)
    fine = brute_force_bsde(inp, 2 * steps)
    error = abs(fine - coarse)
    meets = error <= accuracy
    if not meets:
        logger.warning(
            "tree error bar %.3e above the requested %.3e at %d steps", error, accuracy, steps
        )
    return TreeReference(
        value=2.0 * fine - coarse,
        error_bar=error,
        coarse=coarse,
        fine=fine,
        steps=steps,
        meets_accuracy=meets,
    )
