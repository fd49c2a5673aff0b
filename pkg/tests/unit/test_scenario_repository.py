"""
Unit tests for the JSON scenario repository.

Tests cover:
- Single-payoff shorthand and explicit payment lists
- Curve and rate-pair shorthands
- Defaults for omitted blocks and the missing-collateral warning
- Field paths and line numbers in validation errors
- The scenario files shipped with the project
- Bank position schedules
"""

import json
from pathlib import Path

import numpy as np
import pytest

from app.core.entities.collateral import Settlement
from app.core.entities.contract import PayoffKind
from app.core.entities.market import Preset
from app.core.entities.scenario import ExternalConvention, PositionSchedule
from app.core.errors import ScenarioValidationError, ValidationError
from app.infrastructure.scenarios.json_scenario_repository import JSONScenarioRepository

SCENARIO_DIR = Path(__file__).parent.parent.parent / "scenarios"


@pytest.fixture
def repository() -> JSONScenarioRepository:
    return JSONScenarioRepository()


def line_of(text: str, needle: str) -> int:
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    raise AssertionError(f"{needle} not in text")


class TestLoad:
    """Tests for loading well-formed scenarios."""

    def test_shorthand_contract(self, repository, scenario_data, write_scenario):
        scenario = repository.load(write_scenario(scenario_data))
        payment = scenario.contract.stream.payments[0]
        assert payment.kind is PayoffKind.CALL
        assert payment.time == 1.0
        assert payment.strike == 100.0
        assert scenario.contract.maturity == 1.0
        assert scenario.name == "unit_call"

    def test_payment_list(self, repository, scenario_data):
        scenario_data["contract"] = {
            "payments": [
                {"time": 0.5, "payoff": "fixed", "quantity": 2.0},
                {"time": 1.0, "payoff": "put", "strike": 90.0},
            ]
        }
        scenario = repository.loads(json.dumps(scenario_data))
        assert scenario.contract.stream.times == (0.5, 1.0)
        assert scenario.contract.maturity == 1.0

    def test_flat_rates_become_degenerate_pairs(self, repository, scenario_data):
        scenario = repository.loads(json.dumps(scenario_data))
        assert scenario.rates.funding.degenerate
        assert scenario.rates.is_linear
        assert scenario.rates.repo[0].lend.value_at(0.5) == 0.025

    def test_lend_borrow_pair(self, repository, scenario_data):
        scenario_data["market"]["rates"]["funding"] = {"lend": 0.02, "borrow": [[0.0, 0.04]]}
        scenario = repository.loads(json.dumps(scenario_data))
        assert scenario.rates.funding.borrow.value_at(0.0) == 0.04
        assert not scenario.rates.is_linear

    def test_repo_list_per_asset(self, repository, scenario_data):
        scenario_data["market"]["assets"].append({"spot": 50.0, "vol": 0.3})
        scenario_data["market"]["correlation"] = [[1.0, 0.3], [0.3, 1.0]]
        scenario_data["market"]["rates"]["repo"] = [0.025, {"lend": 0.02, "borrow": 0.03}]
        scenario = repository.loads(json.dumps(scenario_data))
        assert scenario.assets.n_assets == 2
        assert scenario.rates.repo[1].borrow.value_at(0.0) == 0.03

    def test_losses_and_defaults(self, repository, scenario_data):
        scenario = repository.loads(json.dumps(scenario_data))
        assert scenario.defaults.trader_loss == pytest.approx(0.6)
        assert scenario.defaults.counterparty_intensity.value_at(0.0) == 0.02

    def test_omitted_blocks(self, repository, scenario_data):
        del scenario_data["market"]["defaults"]
        del scenario_data["run"]
        scenario = repository.loads(json.dumps(scenario_data))
        assert not scenario.defaults.has_defaults
        assert scenario.run.mode == "linear"
        assert scenario.run.measure is Preset.RISK_FREE
        assert scenario.closeout.settlement is Settlement.CSA
        assert scenario.external is None
        assert scenario.incomplete.wealth_levels == (0.0, 100.0)

    def test_missing_collateral_warns(self, repository, scenario_data):
        del scenario_data["collateral"]
        scenario = repository.loads(json.dumps(scenario_data))
        assert scenario.collateral.alpha == 0.0
        assert scenario.warnings == ("no collateral block: trade treated as uncollateralized",)

    def test_external_block(self, repository, scenario_data):
        scenario_data["external_funding"] = {
            "convention": "net_borrower",
            "bank_position": -1000.0,
        }
        scenario = repository.loads(json.dumps(scenario_data))
        assert scenario.external.convention is ExternalConvention.NET_BORROWER
        assert scenario.external.bank_position == PositionSchedule.flat(-1000.0)
        assert scenario.external.bank_position.amount_at(2.0) == -1000.0

    def test_bank_position_schedule(self, repository, scenario_data):
        """The bank position is a currency amount that may change sign."""
        scenario_data["external_funding"] = {
            "convention": "independent",
            "bank_position": [[0.0, -5000.0], [0.5, 250.0]],
        }
        position = repository.loads(json.dumps(scenario_data)).external.bank_position
        np.testing.assert_allclose(position.amount_at(np.array([0.0, 0.6])), [-5000.0, 250.0])

    def test_run_overrides(self, repository, scenario_data):
        scenario = repository.loads(json.dumps(scenario_data)).with_run(paths=64, seed=None)
        assert scenario.run.paths == 64
        assert scenario.run.seed == 11

    @pytest.mark.parametrize("path", sorted(SCENARIO_DIR.glob("*.json")), ids=lambda p: p.stem)
    def test_shipped_scenarios_load(self, repository, path):
        scenario = repository.load(path)
        assert scenario.contract.maturity > 0.0


class TestValidationErrors:
    """Tests for ScenarioValidationError reporting."""

    def test_unknown_top_level_field(self, repository, scenario_data):
        scenario_data["pricing"] = {}
        with pytest.raises(ScenarioValidationError, match="unknown top-level field") as info:
            repository.loads(json.dumps(scenario_data, indent=2))
        assert info.value.field_path == "pricing"

    def test_error_carries_line_number(self, repository, scenario_data):
        scenario_data["market"]["assets"][0]["vol"] = -0.2
        text = json.dumps(scenario_data, indent=2)
        with pytest.raises(ScenarioValidationError) as info:
            repository.loads(text)
        assert info.value.field_path == "market.assets"
        assert info.value.line == line_of(text, '"assets":')
        assert str(info.value).startswith(f"market.assets (line {info.value.line}): ")

    def test_unknown_payoff(self, repository, scenario_data):
        scenario_data["contract"]["payoff"] = "barrier"
        with pytest.raises(ScenarioValidationError, match="unknown payoff 'barrier'") as info:
            repository.loads(json.dumps(scenario_data, indent=2))
        assert info.value.field_path == "contract.payoff"

    def test_custom_payoff_not_in_files(self, repository, scenario_data):
        scenario_data["contract"]["payoff"] = "custom"
        with pytest.raises(ScenarioValidationError, match="unknown payoff"):
            repository.loads(json.dumps(scenario_data))

    def test_bad_mode(self, repository, scenario_data):
        scenario_data["run"]["mode"] = "fast"
        with pytest.raises(ScenarioValidationError, match="unknown mode") as info:
            repository.loads(json.dumps(scenario_data))
        assert info.value.field_path == "run.mode"

    def test_bad_measure(self, repository, scenario_data):
        scenario_data["run"]["measure"] = "physical"
        with pytest.raises(ScenarioValidationError) as info:
            repository.loads(json.dumps(scenario_data))
        assert info.value.field_path == "run.measure"

    def test_repo_list_length(self, repository, scenario_data):
        scenario_data["market"]["rates"]["repo"] = [0.02, 0.03]
        with pytest.raises(ScenarioValidationError, match="expected 1 repo pairs"):
            repository.loads(json.dumps(scenario_data))

    def test_missing_rate(self, repository, scenario_data):
        del scenario_data["market"]["rates"]["r"]
        with pytest.raises(ScenarioValidationError, match="required field is missing") as info:
            repository.loads(json.dumps(scenario_data))
        assert info.value.field_path == "market.rates.r"

    def test_unsorted_curve(self, repository, scenario_data):
        scenario_data["market"]["rates"]["r"] = [[0.0, 0.02], [0.0, 0.03]]
        with pytest.raises(ScenarioValidationError, match="strictly increasing"):
            repository.loads(json.dumps(scenario_data))

    def test_unsorted_bank_position(self, repository, scenario_data):
        scenario_data["external_funding"] = {
            "convention": "independent",
            "bank_position": [[0.0, -1.0], [1.0, 2.0], [0.5, 3.0]],
        }
        with pytest.raises(ScenarioValidationError, match="strictly increasing") as info:
            repository.loads(json.dumps(scenario_data))
        assert info.value.field_path == "external_funding.bank_position"

    def test_boolean_is_not_a_number(self, repository, scenario_data):
        scenario_data["collateral"]["alpha"] = True
        with pytest.raises(ScenarioValidationError, match="expected a number"):
            repository.loads(json.dumps(scenario_data))

    def test_single_wealth_level(self, repository, scenario_data):
        scenario_data["incomplete"] = {"wealth_levels": [0.0]}
        with pytest.raises(ScenarioValidationError, match="two wealth levels"):
            repository.loads(json.dumps(scenario_data))

    def test_unsupported_schema(self, repository, scenario_data):
        scenario_data["schema_version"] = "2.0"
        with pytest.raises(ScenarioValidationError, match="unsupported schema version"):
            repository.loads(json.dumps(scenario_data))

    def test_horizon_before_maturity(self, repository, scenario_data):
        scenario_data["market"]["horizon"] = 0.5
        with pytest.raises(ScenarioValidationError, match="ends before"):
            repository.loads(json.dumps(scenario_data))

    def test_json_syntax_error(self, repository):
        text = '{\n  "schema_version": "1.0",\n  "name": oops\n}'
        with pytest.raises(ScenarioValidationError) as info:
            repository.loads(text)
        assert info.value.field_path == "<document>"
        assert info.value.line == 3

    def test_missing_file(self, repository, tmp_path):
        with pytest.raises(ScenarioValidationError) as info:
            repository.load(tmp_path / "absent.json")
        assert info.value.field_path == "<file>"

    def test_not_an_object(self, repository):
        with pytest.raises(ScenarioValidationError, match="JSON object"):
            repository.loads("[1, 2]")


class TestPositionSchedule:
    """Tests for the piecewise-constant bank position."""

    def test_amount_steps_at_breakpoints(self):
        schedule = PositionSchedule.from_pairs([[0.0, -100.0], [0.5, 40.0]])
        np.testing.assert_allclose(
            schedule.amount_at(np.array([0.0, 0.49, 0.5, 3.0])), [-100.0, -100.0, 40.0, 40.0]
        )
        assert schedule.to_pairs() == [[0.0, -100.0], [0.5, 40.0]]

    def test_first_breakpoint_must_be_zero(self):
        with pytest.raises(ValidationError, match="first breakpoint"):
            PositionSchedule.from_pairs([[0.1, -1.0]])

    def test_amounts_must_be_finite(self):
        with pytest.raises(ValidationError, match="finite"):
            PositionSchedule.flat(float("-inf"))

    def test_negative_time_rejected(self):
        with pytest.raises(ValidationError, match="before time 0"):
            PositionSchedule.flat(-1.0).amount_at(-0.5)
