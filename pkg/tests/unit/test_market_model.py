"""
Unit tests for the market model.

Tests cover:
- Deflators and survival probabilities
- Deflator presets built by MeasureFactory
- Asset model and default model validation
"""

import math

import numpy as np
import pytest

from app.core.entities.curves import RateCurve, RatePair, RateSystem
from app.core.entities.market import AssetModel, DefaultModel, Market, Preset
from app.core.errors import CurveError, ValidationError
from app.core.services.market_model import MeasureFactory, deflator, drift_under, survival


@pytest.fixture
def rates() -> RateSystem:
    return RateSystem.flat(0.02, n_assets=2, f=0.03, h=0.025)


@pytest.fixture
def two_assets() -> AssetModel:
    """First asset repo-funded, second treasury-funded."""
    return AssetModel(
        spots=(100.0, 50.0),
        vols=(0.2, 0.3),
        correlation=((1.0, 0.5), (0.5, 1.0)),
        treasury_funded=(False, True),
    )


class TestDeflator:
    """Tests for deflator and survival."""

    def test_flat_deflator(self):
        assert deflator(RateCurve.flat(0.02), 0.0, 1.0) == pytest.approx(math.exp(-0.02))

    def test_deflator_is_multiplicative(self):
        eta = RateCurve.from_pairs([[0.0, 0.01], [0.4, 0.05]])
        whole = deflator(eta, 0.0, 1.0)
        assert whole == pytest.approx(deflator(eta, 0.0, 0.3) * deflator(eta, 0.3, 1.0))

    def test_beyond_horizon_rejected(self):
        with pytest.raises(CurveError, match="horizon"):
            deflator(RateCurve.flat(0.02), 0.0, 1.5, horizon=1.0)

    def test_reversed_times_rejected(self):
        with pytest.raises(CurveError):
            deflator(RateCurve.flat(0.02), 0.5, 0.2)

    def test_survival(self):
        assert survival(RateCurve.flat(0.03), 0.0, 2.0) == pytest.approx(math.exp(-0.06))
        assert survival(RateCurve.flat(0.03), 1.0, 1.0) == 1.0


class TestMeasureFactory:
    """Tests for MeasureFactory.make_choice."""

    def test_risk_free(self, rates, two_assets):
        choice = MeasureFactory().make_choice(Preset.RISK_FREE, rates, two_assets)
        assert choice.eta == rates.r
        assert choice.drifts == (rates.r, rates.r)

    def test_funding_measure_drifts(self, rates, two_assets):
        """Repo-funded assets drift at h, treasury-funded ones at f."""
        choice = MeasureFactory().make_choice(Preset.FUNDING, rates, two_assets)
        assert choice.eta == rates.funding.lend
        assert drift_under(choice, 0) == rates.repo[0].lend
        assert drift_under(choice, 1) == rates.funding.lend

    def test_repo_measure_defaults_eta_to_r(self, rates, two_assets):
        choice = MeasureFactory().make_choice(Preset.REPO, rates, two_assets)
        assert choice.eta == rates.r
        assert choice.drifts == (rates.repo[0].lend, rates.repo[1].lend)

    def test_custom_needs_eta(self, rates, two_assets):
        with pytest.raises(ValidationError, match="eta"):
            MeasureFactory().make_choice(Preset.CUSTOM, rates, two_assets)

    def test_custom_eta(self, rates, two_assets):
        eta = RateCurve.flat(0.05)
        choice = MeasureFactory().make_choice(Preset.CUSTOM, rates, two_assets, eta=eta)
        assert choice.eta == eta
        assert choice.preset is Preset.CUSTOM

    def test_repo_count_mismatch(self, two_assets):
        with pytest.raises(ValidationError, match="repo pairs"):
            MeasureFactory().make_choice(Preset.RISK_FREE, RateSystem.flat(0.02), two_assets)

    def test_drift_index_out_of_range(self, rates, two_assets):
        choice = MeasureFactory().make_choice(Preset.RISK_FREE, rates, two_assets)
        with pytest.raises(ValidationError):
            drift_under(choice, 2)


class TestAssetModel:
    """Tests for AssetModel validation."""

    def test_single_defaults(self):
        model = AssetModel.single(100.0, 0.2)
        assert model.n_assets == 1
        assert model.repo_assets == (0,)
        assert model.correlation == ((1.0,),)

    def test_funding_split(self, two_assets: AssetModel):
        assert two_assets.repo_assets == (0,)
        assert two_assets.treasury_assets == (1,)

    def test_nonpositive_spot(self):
        with pytest.raises(ValidationError, match="positive"):
            AssetModel.single(0.0, 0.2)

    def test_negative_vol(self):
        with pytest.raises(ValidationError):
            AssetModel.single(100.0, -0.1)

    def test_correlation_must_be_psd(self):
        with pytest.raises(ValidationError, match="positive semi-definite"):
            AssetModel(spots=(1.0, 1.0), vols=(0.1, 0.1), correlation=((1.0, 2.0), (2.0, 1.0)))

    def test_correlation_factor(self, two_assets: AssetModel):
        factor = two_assets.correlation_factor()
        np.testing.assert_allclose(factor @ factor.T, two_assets.correlation, atol=1e-12)

    def test_singular_correlation_factor(self):
        """Perfect correlation still factorizes."""
        model = AssetModel(spots=(1.0, 1.0), vols=(0.1, 0.1), correlation=((1.0, 1.0), (1.0, 1.0)))
        factor = model.correlation_factor()
        np.testing.assert_allclose(factor @ factor.T, model.correlation, atol=1e-10)


class TestDefaultModel:
    """Tests for DefaultModel."""

    def test_flat_losses(self):
        model = DefaultModel.flat(0.01, 0.02, 0.6, 0.5)
        assert model.trader_loss == pytest.approx(0.6)
        assert model.counterparty_loss == pytest.approx(0.5)
        assert model.total_intensity.value_at(0.0) == pytest.approx(0.03)
        assert model.has_defaults

    def test_default_free(self):
        assert not DefaultModel.default_free().has_defaults

    def test_recovery_range(self):
        with pytest.raises(ValidationError, match="trader_recovery"):
            DefaultModel(RateCurve.flat(0.01), RateCurve.flat(0.01), trader_recovery=1.2)

    def test_negative_intensity(self):
        with pytest.raises(ValidationError, match="nonnegative"):
            DefaultModel(RateCurve.flat(-0.01), RateCurve.flat(0.01))


class TestMarket:
    def test_repo_pair_per_asset(self, two_assets: AssetModel):
        with pytest.raises(ValidationError, match="repo pair"):
            Market(RateSystem.flat(0.02), two_assets, DefaultModel.default_free())

    def test_with_rates(self, rates, two_assets):
        market = Market(rates, two_assets, DefaultModel.default_free())
        other = RateSystem(
            r=rates.r,
            funding=RatePair.single(RateCurve.flat(0.05)),
            collateral=rates.collateral,
            repo=rates.repo,
            horizon=1.0,
        )
        assert market.with_rates(other).rates.funding.lend.value_at(0.0) == 0.05
