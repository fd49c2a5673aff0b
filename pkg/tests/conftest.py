"""
Pytest configuration and shared fixtures.

Fixtures are reusable test dependencies injected by pytest.
"""

import json
from pathlib import Path

import pytest

from app.container import reset_container
from app.core.entities.collateral import CloseoutSpec, CollateralSpec
from app.core.entities.contract import Contract
from app.core.entities.market import Market
from app.core.entities.simulation import MonteCarloConfig
from app.core.services.adjusted_cash_flows import ValuationFactory
from app.core.services.funding_extensions import FundingExtensions
from app.core.services.linear_pricer import LinearPricer
from app.core.services.market_model import MeasureFactory
from app.core.services.nonlinear_pricer import NonlinearPricer
from app.core.services.path_simulator import PathSimulator
from tests.factories import C, F, H, MATURITY, R, SPOT, STRIKE, VOL, make_call, make_market

# ============================================
# Market Fixtures
# ============================================


@pytest.fixture
def market() -> Market:
    """Reference market: r=2%, f=3%, h=2.5%, c=1.5%, λ^I=1%, λ^C=2%, L=60%."""
    return make_market()


@pytest.fixture
def default_free_market() -> Market:
    """Reference rates without defaults."""
    return make_market(with_defaults=False)


@pytest.fixture
def single_rate_market() -> Market:
    """Every rate equal to r, defaults switched on."""
    return make_market(funding=(R, R), repo=(R, R), collateral=(R, R))


@pytest.fixture
def differential_market() -> Market:
    """Treasury borrows 200bp above lending, repo and collateral at r, no defaults."""
    return make_market(funding=(R, R + 0.02), repo=(R, R), collateral=(R, R), with_defaults=False)


# ============================================
# Contract Fixtures
# ============================================


@pytest.fixture
def call_contract() -> Contract:
    """At-the-money one-year call received by the trader."""
    return make_call()


@pytest.fixture
def short_call_contract() -> Contract:
    """The same call delivered by the trader."""
    return make_call(-1.0)


@pytest.fixture
def csa() -> CloseoutSpec:
    """Risk-free closeout with CSA settlement."""
    return CloseoutSpec()


@pytest.fixture
def partial_collateral() -> CollateralSpec:
    """C = 0.8·Q."""
    return CollateralSpec.fraction(0.8)


# ============================================
# Simulation Fixtures
# ============================================


@pytest.fixture
def small_config() -> MonteCarloConfig:
    """Small but regression-friendly run."""
    return MonteCarloConfig(n_paths=2000, n_steps=16, seed=20240601, notional=SPOT)


@pytest.fixture
def factory() -> ValuationFactory:
    """Single-threaded valuation factory."""
    return ValuationFactory(simulator=PathSimulator(workers=1))


@pytest.fixture
def measures() -> MeasureFactory:
    return MeasureFactory()


# ============================================
# Pricer Fixtures
# ============================================


@pytest.fixture
def linear_pricer(factory: ValuationFactory, measures: MeasureFactory) -> LinearPricer:
    return LinearPricer(factory, measures)


@pytest.fixture
def nonlinear_pricer(factory: ValuationFactory, measures: MeasureFactory) -> NonlinearPricer:
    return NonlinearPricer(factory, measures)


@pytest.fixture
def funding_extensions(factory: ValuationFactory, measures: MeasureFactory) -> FundingExtensions:
    return FundingExtensions(factory, measures)


# ============================================
# Scenario File Fixtures
# ============================================


@pytest.fixture
def scenario_data() -> dict:
    """Minimal linear scenario as it would appear in a file."""
    return {
        "schema_version": "1.0",
        "name": "unit_call",
        "market": {
            "rates": {"r": R, "funding": F, "repo": H, "collateral": C},
            "assets": [{"spot": SPOT, "vol": VOL}],
            "defaults": {
                "trader": {"intensity": 0.01, "loss": 0.6},
                "counterparty": {"intensity": 0.02, "loss": 0.6},
            },
        },
        "contract": {"payoff": "call", "maturity": MATURITY, "strike": STRIKE},
        "collateral": {"alpha": 0.8},
        "run": {"mode": "linear", "paths": 1000, "steps": 8, "seed": 11},
    }


@pytest.fixture
def write_scenario(tmp_path: Path):
    """Writes a scenario dict (or raw text) to a temporary file and returns its path."""

    def _write(data, name: str = "scenario.json") -> Path:
        path = tmp_path / name
        text = data if isinstance(data, str) else json.dumps(data, indent=2)
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture(autouse=True)
def fresh_container():
    """The CLI container is a module singleton; start each test without one."""
    reset_container()
    yield
    reset_container()
