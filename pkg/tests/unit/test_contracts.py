"""
Unit tests for contracts, collateral and closeout.

Tests cover:
- Payoff menu amounts and payment validation
- Dividend stream ordering and stopping
- Sign convention and mirrored contracts
- Collateral rules and effective collateral rate
- Closeout payoff at the first default
"""

import numpy as np
import pytest

from app.core.entities.collateral import (
    CloseoutSpec,
    CollateralRule,
    CollateralSpec,
    Defaulter,
    Settlement,
)
from app.core.entities.contract import (
    Contract,
    DividendStream,
    Payment,
    PayoffKind,
    SignConvention,
)
from app.core.entities.curves import RateCurve, RatePair
from app.core.entities.simulation import TimeGrid
from app.core.errors import UnsupportedPayoffError, ValidationError
from app.core.services.closeout import (
    closeout_legs,
    closeout_payoff,
    collateral_value,
    effective_collateral_rate,
    stop_stream,
    stopped_payments,
)

STATES = np.array([[90.0], [110.0]])


class TestPayment:
    """Tests for the payoff menu."""

    @pytest.mark.parametrize(
        "kind, expected",
        [
            (PayoffKind.FORWARD, [-10.0, 10.0]),
            (PayoffKind.CALL, [0.0, 10.0]),
            (PayoffKind.PUT, [10.0, 0.0]),
            (PayoffKind.CASH_OR_NOTHING, [0.0, 1.0]),
            (PayoffKind.FIXED, [1.0, 1.0]),
        ],
    )
    def test_amounts(self, kind, expected):
        payment = Payment(1.0, kind, strike=100.0)
        np.testing.assert_allclose(payment.amount(STATES), expected)

    def test_quantity_scales(self):
        payment = Payment(1.0, PayoffKind.CALL, strike=100.0, quantity=-2.0)
        np.testing.assert_allclose(payment.amount(STATES), [0.0, -20.0])

    def test_custom_payoff(self):
        payment = Payment(1.0, PayoffKind.CUSTOM, function=lambda s: s[:, 0] ** 2)
        np.testing.assert_allclose(payment.amount(STATES), [8100.0, 12100.0])

    def test_custom_without_function(self):
        with pytest.raises(UnsupportedPayoffError):
            Payment(1.0, PayoffKind.CUSTOM)

    def test_custom_cannot_serialize(self):
        payment = Payment(1.0, PayoffKind.CUSTOM, function=lambda s: s[:, 0])
        assert not payment.has_closed_form
        with pytest.raises(UnsupportedPayoffError):
            payment.to_dict()

    def test_time_must_be_positive(self):
        with pytest.raises(ValidationError, match="positive"):
            Payment(0.0, PayoffKind.FIXED)

    def test_negative_strike(self):
        with pytest.raises(ValidationError, match="strike"):
            Payment(1.0, PayoffKind.CALL, strike=-1.0)

    def test_to_dict_uses_file_tags(self):
        data = Payment(0.5, PayoffKind.CASH_OR_NOTHING, strike=95.0).to_dict()
        assert data["payoff"] == "cash_or_nothing"
        assert data["time"] == 0.5


class TestDividendStream:
    """Tests for DividendStream and Contract."""

    def test_sorted_by_time(self):
        stream = DividendStream(
            (Payment(1.0, PayoffKind.FIXED), Payment(0.5, PayoffKind.FIXED, quantity=2.0))
        )
        assert stream.times == (0.5, 1.0)

    def test_one_payment_per_time(self):
        with pytest.raises(ValidationError, match="one payment per time"):
            DividendStream((Payment(1.0, PayoffKind.FIXED), Payment(1.0, PayoffKind.CALL)))

    def test_stopped_keeps_payments_strictly_before(self):
        stream = DividendStream(
            (Payment(0.5, PayoffKind.FIXED), Payment(1.0, PayoffKind.FIXED))
        )
        assert stream.stopped(0.5).times == ()
        assert stream.stopped(0.75).times == (0.5,)
        assert stop_stream(stream, 2.0).times == (0.5, 1.0)

    def test_stop_needs_positive_time(self):
        with pytest.raises(ValidationError):
            stop_stream(DividendStream(), 0.0)

    def test_stopped_payments_per_path(self):
        """A default at a payment date drops that payment; later defaults keep it."""
        stream = DividendStream(
            (Payment(0.5, PayoffKind.FIXED), Payment(1.0, PayoffKind.FIXED))
        )
        grid = TimeGrid.build(1.0, 4)
        tau = np.array([0.3, 0.5, 0.9, np.inf])
        retained = stopped_payments(stream, grid, tau)
        assert retained.shape == (4, 5)
        np.testing.assert_array_equal(
            retained[:, [2, 4]], [[False, False], [False, False], [True, False], [True, True]]
        )

    def test_payments_after_maturity(self):
        with pytest.raises(ValidationError, match="after maturity"):
            Contract(DividendStream((Payment(2.0, PayoffKind.FIXED),)), maturity=1.0)

    def test_terminal_only(self):
        assert Contract.single(Payment(1.0, PayoffKind.CALL, strike=100.0)).is_terminal_only
        coupons = Contract(
            DividendStream((Payment(0.5, PayoffKind.FIXED), Payment(1.0, PayoffKind.FIXED))),
            maturity=1.0,
        )
        assert not coupons.is_terminal_only

    def test_payment_at(self):
        stream = DividendStream((Payment(0.5, PayoffKind.FIXED),))
        assert stream.payment_at(0.5) is not None
        assert stream.payment_at(0.6) is None


class TestSignConvention:
    """Tests for the canonical receive-A orientation."""

    def test_replication_is_negated(self):
        assert SignConvention.from_replication(3.5) == -3.5
        assert SignConvention.to_replication(-1.25) == 1.25

    def test_mirror_negates_every_payment(self):
        contract = Contract.single(Payment(1.0, PayoffKind.CALL, strike=100.0))
        mirrored = SignConvention.mirror(contract)
        np.testing.assert_array_equal(
            mirrored.stream.payments[0].amount(STATES),
            -contract.stream.payments[0].amount(STATES),
        )


class TestCollateral:
    """Tests for collateral rules."""

    def test_fraction(self):
        spec = CollateralSpec.fraction(0.8)
        np.testing.assert_allclose(collateral_value(spec, 0.0, STATES, np.array([10.0, -5.0])),
                                   [8.0, -4.0])

    def test_uncollateralized(self):
        spec = CollateralSpec.uncollateralized()
        assert np.all(collateral_value(spec, 0.0, STATES, np.array([10.0, -5.0])) == 0.0)

    def test_exogenous_functional(self):
        spec = CollateralSpec(
            rule=CollateralRule.EXOGENOUS, functional=lambda t, s, q: np.full(len(q), 3.0)
        )
        np.testing.assert_allclose(collateral_value(spec, 0.5, STATES, np.zeros(2)), [3.0, 3.0])

    def test_exogenous_needs_functional(self):
        with pytest.raises(ValidationError, match="functional"):
            CollateralSpec(rule=CollateralRule.EXOGENOUS)

    def test_negated_exogenous(self):
        """The mirrored trade posts the opposite margin."""
        spec = CollateralSpec(
            rule=CollateralRule.EXOGENOUS, functional=lambda t, s, q: np.maximum(q, 0.0)
        )
        mirrored = spec.negated()
        np.testing.assert_allclose(
            collateral_value(mirrored, 0.0, STATES, np.array([-4.0, 2.0])), [-4.0, 0.0]
        )

    def test_effective_rate_by_holder(self):
        """c^b where the trader holds collateral, c^l where it has posted."""
        pair = RatePair(RateCurve.flat(0.01), RateCurve.flat(0.02))
        out = effective_collateral_rate(np.array([5.0, 0.0, -5.0]), pair)
        np.testing.assert_allclose(out, [0.02, 0.02, 0.01])
        assert effective_collateral_rate(-1.0, pair) == 0.01


class TestCloseoutPayoff:
    """Tests for closeout_payoff."""

    def test_counterparty_default_with_positive_exposure(self):
        """θ = Q − L_C·(Q − C)⁺."""
        outcome = closeout_payoff(10.0, 4.0, Defaulter.COUNTERPARTY, 0.6, 0.6)
        assert outcome.theta == pytest.approx(6.4)
        assert outcome.exposure == 6.0
        assert outcome.recovery == pytest.approx(2.4)

    def test_trader_default_with_positive_exposure(self):
        """The trader's own default only matters on negative exposure."""
        assert closeout_payoff(10.0, 4.0, Defaulter.TRADER, 0.6, 0.6).theta == 10.0

    def test_trader_default_with_negative_exposure(self):
        outcome = closeout_payoff(-10.0, 0.0, Defaulter.TRADER, 0.5, 0.6)
        assert outcome.theta == pytest.approx(-5.0)
        assert outcome.exposure_negative == 10.0

    def test_joint_default_applies_both(self):
        outcome = closeout_payoff(10.0, 4.0, Defaulter.JOINT, 0.6, 0.5)
        assert outcome.theta == pytest.approx(7.0)

    def test_full_collateral_is_riskless(self):
        for who in Defaulter:
            assert closeout_payoff(7.0, 7.0, who, 1.0, 1.0).theta == 7.0

    def test_collateral_only_settlement(self):
        outcome = closeout_payoff(
            10.0, 4.0, Defaulter.COUNTERPARTY, 0.6, 0.6, Settlement.COLLATERAL_ONLY
        )
        assert outcome.theta == 0.0
        assert outcome.recovery == -4.0

    def test_loss_range(self):
        with pytest.raises(ValidationError, match="trader loss"):
            closeout_payoff(1.0, 0.0, Defaulter.TRADER, 1.5, 0.6)

    def test_mirror_symmetry(self):
        """Negating the trade and swapping the parties negates θ exactly."""
        theta = closeout_payoff(3.7, -1.2, Defaulter.COUNTERPARTY, 0.35, 0.8).theta
        mirrored = closeout_payoff(-3.7, 1.2, Defaulter.TRADER, 0.8, 0.35).theta
        assert mirrored == -theta

    def test_defaulter_other(self):
        assert Defaulter.TRADER.other() is Defaulter.COUNTERPARTY
        assert Defaulter.JOINT.other() is Defaulter.JOINT


class TestCloseoutLegs:
    """Tests for the vectorized closeout legs."""

    def test_legs_match_scalar_payoff(self):
        clean = np.array([10.0, -10.0, 3.0])
        coll = np.array([4.0, 0.0, 3.0])
        dva, cva = closeout_legs(
            clean, coll, np.array([False, True, True]), np.array([True, False, True]), 0.5, 0.6
        )
        np.testing.assert_allclose(dva, [0.0, 5.0, 0.0])
        np.testing.assert_allclose(cva, [3.6, 0.0, 0.0])
        assert np.all(dva >= 0.0) and np.all(cva >= 0.0)

    def test_unknown_closeout_mode(self):
        with pytest.raises(ValidationError, match="closeout mode"):
            CloseoutSpec(mode="replacement")
