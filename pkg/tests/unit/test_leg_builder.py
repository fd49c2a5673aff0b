"""
Unit tests for the per-cell leg builder and the external funding legs.

Tests cover:
- Stream, collateral and funding legs on hand-built ensembles
- Payments stopped at default and positive homogeneity in the trade
- External funding legs priced inside the cell and read off a funding path
"""

import math

import numpy as np
import pytest

from app.core.entities import legs as L
from app.core.entities.collateral import CloseoutSpec
from app.core.entities.curves import RateCurve, RateSystem
from app.core.entities.market import AssetModel, DefaultModel
from app.core.entities.scenario import ExternalConvention
from app.core.errors import PricingSetupError, ValidationError
from app.core.services.clean_valuation import CleanValuation
from app.core.services.leg_builder import CellRates, LegBuilder, external_leg
from tests.factories import (
    COUNTERPARTY_INTENSITY,
    LOSS,
    MATURITY,
    R,
    SPOT,
    TRADER_INTENSITY,
    VOL,
    make_ensemble,
)

NO_DEFAULT = [math.inf, math.inf]
DEFAULTS = DefaultModel.flat(TRADER_INTENSITY, COUNTERPARTY_INTENSITY, LOSS, LOSS)


def fixed_payment(ensemble, amount: float = 1.0) -> CleanValuation:
    """A single payment of `amount` at maturity, valued at r"""
    nodes = ensemble.grid.nodes
    ex = amount * np.exp(-R * (MATURITY - nodes))
    ex[-1] = 0.0
    pay = np.zeros_like(nodes)
    pay[-1] = amount
    shape = (ensemble.n_paths, len(nodes))
    ex, pay = np.broadcast_to(ex, shape).copy(), np.broadcast_to(pay, shape).copy()
    return CleanValuation(
        price=float(ex[0, 0]), ex_dividend=ex, cum_dividend=ex + pay, payments=pay
    )


def builder(ensemble, clean, collateral=0.0, rates=None, defaults=DEFAULTS, **options):
    rates = rates or RateSystem.flat(R)
    cell_rates = CellRates.build(
        ensemble.grid, rates, ensemble.choice, AssetModel.single(SPOT, VOL), defaults
    )
    return LegBuilder(
        ensemble,
        clean,
        np.full(clean.ex_dividend.shape, float(collateral)),
        cell_rates,
        defaults,
        CloseoutSpec(),
        **options,
    )


def run(legs: LegBuilder, price: float = 0.0, wealth: float = 0.0):
    n = legs.ensemble.n_paths
    return legs.accumulate(
        lambda k: np.full(n, price), lambda k: np.zeros((n, 1)), wealth
    )


class TestStreamLeg:
    """Tests for the payment stream."""

    def test_fixed_payment_discounts_to_origin(self):
        """A payment of 1 at T with no default is worth D(0, T)."""
        ensemble = make_ensemble(NO_DEFAULT, NO_DEFAULT)
        legs = run(builder(ensemble, fixed_payment(ensemble)))
        np.testing.assert_allclose(legs[L.STREAM], math.exp(-R * MATURITY), rtol=1e-12)

    def test_payment_stops_at_default(self):
        ensemble = make_ensemble([math.inf, math.inf], [0.5, math.inf])
        legs = run(builder(ensemble, fixed_payment(ensemble)))
        assert legs[L.STREAM][0] == 0.0
        assert legs[L.STREAM][1] == pytest.approx(math.exp(-R * MATURITY))

    def test_retained_flags_drop_payments(self):
        """A payment flagged as not retained is dropped on an alive path."""
        ensemble = make_ensemble(NO_DEFAULT, NO_DEFAULT)
        retained = np.ones((2, ensemble.grid.n_steps + 1), dtype=bool)
        retained[1, -1] = False
        legs = run(builder(ensemble, fixed_payment(ensemble), retained=retained))
        assert legs[L.STREAM][1] == 0.0
        assert legs[L.STREAM][0] > 0.0

    def test_retained_shape_checked(self):
        ensemble = make_ensemble(NO_DEFAULT, NO_DEFAULT)
        with pytest.raises(ValidationError, match="retained"):
            builder(ensemble, fixed_payment(ensemble), retained=np.ones((2, 2), dtype=bool))

    def test_legs_scale_with_the_trade(self):
        """Doubling the payment, price and collateral doubles every leg."""
        ensemble = make_ensemble([0.3, math.inf], [math.inf, 0.7])
        rates = RateSystem.flat(R, f=0.05, c=0.01)
        single = builder(ensemble, fixed_payment(ensemble), collateral=0.4, rates=rates)
        double = builder(ensemble, fixed_payment(ensemble, 2.0), collateral=0.8, rates=rates)
        one, two = run(single, price=0.9), run(double, price=1.8)
        for name in one.legs:
            np.testing.assert_allclose(two[name], 2.0 * one[name], rtol=1e-12, atol=1e-15)


class TestCollateralAndFundingLegs:
    """Tests for the collateral and treasury legs."""

    def test_collateral_at_the_deflator_rate_costs_nothing(self):
        ensemble = make_ensemble(NO_DEFAULT, NO_DEFAULT)
        legs = run(builder(ensemble, fixed_payment(ensemble), collateral=10.0))
        assert np.all(legs[L.COLLATERAL] == 0.0)

    def test_collateral_spread_accrues(self):
        """(r − c)·C accrues continuously: 10·0.005·∫₀¹ e^{−rt} dt."""
        ensemble = make_ensemble(NO_DEFAULT, NO_DEFAULT)
        rates = RateSystem.flat(R, c=R - 0.005)
        legs = run(builder(ensemble, fixed_payment(ensemble), collateral=10.0, rates=rates))
        expected = 0.05 * -math.expm1(-R * MATURITY) / R
        np.testing.assert_allclose(legs[L.COLLATERAL], expected, rtol=1e-12)

    def test_zero_funding_position_has_no_funding_legs(self):
        """Collateral equal to the price leaves F = 0 under any treasury spread."""
        ensemble = make_ensemble([0.3, math.inf], NO_DEFAULT)
        rates = RateSystem.flat(R, f=0.05)
        legs = run(builder(ensemble, fixed_payment(ensemble), collateral=0.9, rates=rates), 0.9)
        assert np.all(legs[L.FUNDING_LEND] == 0.0)
        assert np.all(legs[L.FUNDING_BORROW] == 0.0)

    def test_borrowing_pays_the_spread(self):
        """F = −1 borrowed at r + 3% over [0, T]."""
        ensemble = make_ensemble(NO_DEFAULT, NO_DEFAULT)
        rates = RateSystem.flat(R, f=R + 0.03)
        legs = run(builder(ensemble, fixed_payment(ensemble), rates=rates), price=1.0)
        expected = 0.03 * -math.expm1(-R * MATURITY) / R
        np.testing.assert_allclose(legs[L.FUNDING_BORROW], expected, rtol=1e-12)
        assert np.all(legs[L.FUNDING_LEND] == 0.0)


class TestExternalLegsInCells:
    """Tests for external funding legs priced by the builder."""

    net_borrower_defaults = DefaultModel.flat(0.1, 0.0, LOSS, LOSS)

    def test_net_borrower_on_a_borrowed_position(self):
        """F = −5 and L_I = 0.6 give DVA^{f,−} = 3·D(0, τ)."""
        ensemble = make_ensemble([0.3, math.inf], NO_DEFAULT)
        legs = run(
            builder(
                ensemble,
                fixed_payment(ensemble, 0.0),
                defaults=self.net_borrower_defaults,
                external=ExternalConvention.NET_BORROWER,
            ),
            price=5.0,
        )
        np.testing.assert_allclose(legs[L.DVA_F_MINUS], [3.0 * math.exp(-R * 0.3), 0.0])
        assert np.all(legs[L.DVA_F_PLUS] == 0.0)

    def test_external_legs_leave_independent_pricing(self):
        ensemble = make_ensemble(NO_DEFAULT, NO_DEFAULT)
        legs = builder(
            ensemble, fixed_payment(ensemble), external=ExternalConvention.INDEPENDENT
        )
        assert not legs.price_independent

    def test_marginalized_mode_rejects_external_legs(self):
        ensemble = make_ensemble(NO_DEFAULT, NO_DEFAULT)
        with pytest.raises(ValidationError, match="simulated default times"):
            builder(
                ensemble,
                fixed_payment(ensemble),
                marginalized=True,
                external=ExternalConvention.INDEPENDENT,
            )

    def test_net_borrower_rejects_external_default(self):
        ensemble = make_ensemble(NO_DEFAULT, NO_DEFAULT, tau_external=[0.4, math.inf])
        with pytest.raises(PricingSetupError, match="no external default"):
            builder(
                ensemble, fixed_payment(ensemble), external=ExternalConvention.NET_BORROWER
            )


class TestExternalLeg:
    """Tests for external_leg on a given funding path."""

    defaults = DefaultModel(
        RateCurve.flat(0.1),
        RateCurve.flat(0.0),
        trader_recovery=1.0 - LOSS,
        external_intensity=RateCurve.flat(0.2),
        external_loss=0.5,
    )

    def test_zero_funding_gives_zero_legs(self):
        ensemble = make_ensemble([0.3, math.inf], NO_DEFAULT, tau_external=[math.inf, 0.6])
        funding = np.zeros((2, ensemble.grid.n_steps + 1))
        out = external_leg(ensemble, funding, ExternalConvention.INDEPENDENT, self.defaults)
        assert np.all(out[L.DVA_F] == 0.0)
        assert np.all(out[L.CVA_F] == 0.0)

    def test_net_borrower_on_a_borrowed_position(self):
        """F = −5 and L_I = 0.6 give DVA^{f,−} = 3·D(0, τ)."""
        ensemble = make_ensemble([0.3, math.inf], NO_DEFAULT)
        funding = np.full((2, ensemble.grid.n_steps + 1), -5.0)
        defaults = DefaultModel.flat(0.1, 0.0, LOSS, LOSS)
        out = external_leg(ensemble, funding, ExternalConvention.NET_BORROWER, defaults)
        np.testing.assert_allclose(out[L.DVA_F_MINUS], [3.0 * math.exp(-R * 0.3), 0.0])
        assert np.all(out[L.DVA_F_PLUS] == 0.0)

    def test_external_default_on_a_lent_position(self):
        """F = 4 lent to an entity with L_E = 0.5 defaulting at 0.6 first."""
        ensemble = make_ensemble([math.inf, math.inf], NO_DEFAULT, tau_external=[0.6, math.inf])
        funding = np.full((2, ensemble.grid.n_steps + 1), 4.0)
        out = external_leg(ensemble, funding, ExternalConvention.INDEPENDENT, self.defaults)
        np.testing.assert_allclose(out[L.CVA_F], [2.0 * math.exp(-R * 0.6), 0.0])

    def test_lossless_external_entity(self):
        """L_E = 0 leaves no CVA^f."""
        defaults = DefaultModel(
            RateCurve.flat(0.1),
            RateCurve.flat(0.0),
            external_intensity=RateCurve.flat(0.2),
            external_loss=0.0,
        )
        ensemble = make_ensemble(NO_DEFAULT, NO_DEFAULT, tau_external=[0.2, 0.6])
        funding = np.full((2, ensemble.grid.n_steps + 1), 4.0)
        out = external_leg(ensemble, funding, ExternalConvention.INDEPENDENT, defaults)
        assert np.all(out[L.CVA_F] == 0.0)

    def test_net_borrower_rejects_external_default(self):
        ensemble = make_ensemble(NO_DEFAULT, NO_DEFAULT, tau_external=[0.4, math.inf])
        funding = np.zeros((2, ensemble.grid.n_steps + 1))
        with pytest.raises(PricingSetupError, match="no external default"):
            external_leg(ensemble, funding, ExternalConvention.NET_BORROWER, self.defaults)
