"""
Unit tests for least-squares regression and the price surface.

Tests cover:
- Exact recovery of functions inside the basis span
- Basis gradient used for hedge ratios
- Degree fallback and degenerate states
- PriceSurface origin gradient, damping and term merging
"""

import numpy as np
import pytest

from app.core.errors import RegressionError
from app.core.services.regression import (
    PriceSurface,
    RegressionBasis,
    RegressionFit,
    hedge_delta,
    regress,
)


@pytest.fixture
def states() -> np.ndarray:
    rng = np.random.default_rng(1)
    return 100.0 * np.exp(0.2 * rng.standard_normal((1000, 1)))


class TestRegressionBasis:
    def test_sizes(self):
        """Degree 2 in two assets: 6 polynomials plus 2 level terms."""
        basis = RegressionBasis(2, 2)
        assert len(basis.exponents) == 6
        assert basis.size == 8

    def test_constant_basis_has_no_level_terms(self):
        assert RegressionBasis(0, 1).size == 1


class TestRegress:
    """Tests for regress."""

    def test_recovers_linear_function(self, states: np.ndarray):
        """a + b·S lies in the span through the level term."""
        values = 3.0 + 0.5 * states[:, 0]
        fit = regress(values, states, 3)
        np.testing.assert_allclose(fit(states), values, atol=1e-8)
        np.testing.assert_allclose(fit.gradient(states)[:, 0], 0.5, atol=1e-6)

    def test_recovers_log_polynomial(self, states: np.ndarray):
        logs = np.log(states[:, 0])
        values = 1.0 - 2.0 * logs + 0.3 * logs**2
        fit = regress(values, states, 2)
        np.testing.assert_allclose(fit(states), values, atol=1e-7)
        expected = (-2.0 + 0.6 * logs) / states[:, 0]
        np.testing.assert_allclose(hedge_delta(fit, states)[:, 0], expected, atol=1e-7)

    def test_degree_zero_is_the_mean(self, states: np.ndarray):
        values = states[:, 0] ** 2
        fit = regress(values, states, 0)
        assert fit(states[:3]) == pytest.approx(np.full(3, values.mean()))
        assert np.all(fit.gradient(states[:3]) == 0.0)

    def test_degenerate_state_gives_constant(self):
        state = np.full((50, 1), 100.0)
        fit = regress(np.arange(50.0), state, 3)
        assert fit.active == ()
        assert fit(state)[0] == pytest.approx(24.5)

    def test_degree_lowered_for_few_paths(self, states: np.ndarray):
        """30 paths cannot support more than 3 basis functions."""
        fit = regress(states[:30, 0], states[:30], 3)
        assert fit.degree == 1

    def test_inactive_asset_has_zero_gradient(self, states: np.ndarray):
        two = np.column_stack([states[:, 0], np.full(len(states), 50.0)])
        fit = regress(2.0 * states[:, 0], two, 2)
        assert fit.active == (0,)
        grad = fit.gradient(two)
        np.testing.assert_allclose(grad[:, 0], 2.0, atol=1e-6)
        assert np.all(grad[:, 1] == 0.0)

    def test_no_paths(self):
        with pytest.raises(RegressionError):
            regress(np.zeros(0), np.zeros((0, 1)), 2)


class TestPriceSurface:
    """Tests for PriceSurface."""

    def test_zero_surface(self):
        surface = PriceSurface.zero(3)
        assert np.all(surface.value(1, np.ones((4, 1))) == 0.0)
        assert np.all(surface.gradient(1, np.ones((4, 1))) == 0.0)

    def test_origin_gradient_comes_from_next_node(self, states: np.ndarray):
        """All paths share the origin state, so its delta is read at node 1."""
        sloped = regress(0.5 * states[:, 0], states, 1)
        surface = PriceSurface([RegressionFit.constant(5.0, 1), sloped, None])
        np.testing.assert_allclose(surface.value(0, states[:2]), 5.0)
        np.testing.assert_allclose(surface.gradient(0, states[:2]), sloped.gradient(states[:2]))

    def test_blend(self):
        old = PriceSurface([RegressionFit.constant(1.0, 1)] * 2)
        new = PriceSurface([RegressionFit.constant(3.0, 1)] * 2)
        mixed = old.blend(new, 0.25)
        assert mixed.value(1, np.ones((1, 1)))[0] == pytest.approx(1.5)

    def test_full_damping_is_the_new_surface(self):
        old = PriceSurface([RegressionFit.constant(1.0, 1)] * 2)
        new = PriceSurface([RegressionFit.constant(3.0, 1)] * 2)
        assert old.blend(new, 1.0).value(0, np.ones((1, 1)))[0] == 3.0

    def test_repeated_blending_merges_terms(self, states: np.ndarray):
        """Iterates fitted on the same states collapse into one term per node."""
        surface = PriceSurface([RegressionFit.constant(1.0, 1), regress(states[:, 0], states, 1)])
        for c in (2.0, 3.0):
            newer = PriceSurface(
                [RegressionFit.constant(c, 1), regress(c * states[:, 0], states, 1)]
            )
            surface = surface.blend(newer, 0.5)
        assert len(surface.terms(0)) == 1
        assert len(surface.terms(1)) == 1
        np.testing.assert_allclose(surface.value(0, states[:3]), 2.25)
        np.testing.assert_allclose(surface.value(1, states[:5]), 2.25 * states[:5, 0], rtol=1e-8)

    def test_blend_keeps_fits_on_other_states_apart(self, states: np.ndarray):
        shifted = 1.1 * states
        old = PriceSurface([None, regress(states[:, 0], states, 1)])
        new = PriceSurface([None, regress(shifted[:, 0], shifted, 1)])
        mixed = old.blend(new, 0.5).blend(new, 0.5)
        assert len(mixed.terms(1)) == 2
        assert mixed.terms(0) == ()

    def test_combining_different_features_fails(self, states: np.ndarray):
        with pytest.raises(RegressionError, match="different features"):
            regress(states[:, 0], states, 1).combined(RegressionFit.constant(1.0, 1))
