"""JSON Scenario Repository Implementation"""

import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from app.core.entities.collateral import CloseoutSpec, CollateralSpec, Settlement
from app.core.entities.contract import Contract, DividendStream, Payment, PayoffKind
from app.core.entities.curves import RateCurve, RatePair, RateSystem
from app.core.entities.market import AssetModel, DefaultModel, Preset
from app.core.entities.scenario import (
    MODES,
    ExternalConvention,
    ExternalFundingSpec,
    IncompleteMarketSpec,
    PositionSchedule,
    RunSettings,
    Scenario,
)
from app.core.errors import ScenarioValidationError, ValidationError
from app.core.interfaces.scenario_repository import ScenarioRepository
from app.version import SCENARIO_SCHEMA_VERSION, is_supported_schema

logger = logging.getLogger(__name__)

# payoff tags accepted in scenario files; custom payoffs exist only in-process
FILE_PAYOFFS = {k.value: k for k in PayoffKind if k is not PayoffKind.CUSTOM}

_TOP_LEVEL = {
    "schema_version",
    "name",
    "market",
    "contract",
    "collateral",
    "closeout",
    "external_funding",
    "incomplete",
    "run",
}


class _Source:
    """Raw scenario text, used to attach line numbers to field errors"""

    def __init__(self, text: str):
        self._lines = text.splitlines()

    def line_of(self, field_path: str) -> Optional[int]:
        keys = [k for k in re.split(r"[.\[\]]", field_path) if k and not k.isdigit()]
        if not keys:
            return None
        pattern = re.compile(rf'"{re.escape(keys[-1])}"\s*:')
        for number, line in enumerate(self._lines, start=1):
            if pattern.search(line):
                return number
        return None

    def error(self, field_path: str, message: str) -> ScenarioValidationError:
        return ScenarioValidationError(field_path, message, self.line_of(field_path))


class JSONScenarioRepository(ScenarioRepository):
    """
    Reads versioned JSON scenario files.

    Curves are arrays of [time, value] pairs; a bare number stands for a flat curve and
    a curve where a lend/borrow pair is expected stands for a degenerate pair.
    """

    def load(self, path: Path) -> Scenario:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ScenarioValidationError("<file>", f"cannot read {path}: {e.strerror}")
        scenario = self.loads(text, default_name=path.stem)
        logger.info("Loaded scenario '%s' from %s", scenario.name, path)
        return scenario

    def loads(self, text: str, default_name: str = "scenario") -> Scenario:
        source = _Source(text)
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ScenarioValidationError("<document>", e.msg, e.lineno)
        if not isinstance(data, dict):
            raise source.error("<document>", "scenario must be a JSON object")
        return _ScenarioParser(source).parse(data, default_name)


class _ScenarioParser:
    def __init__(self, source: _Source):
        self._source = source
        self._warnings: List[str] = []

    # ------------------------------------------------------------------
    # primitives
    # ------------------------------------------------------------------

    def _fail(self, field_path: str, message: str) -> ScenarioValidationError:
        return self._source.error(field_path, message)

    def _object(self, value: Any, field_path: str) -> Dict[str, Any]:
        if not isinstance(value, dict):
            raise self._fail(field_path, "expected an object")
        return value

    def _number(self, value: Any, field_path: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self._fail(field_path, f"expected a number, got {value!r}")
        return float(value)

    def _required(self, block: Dict[str, Any], key: str, field_path: str) -> Any:
        if key not in block:
            raise self._fail(f"{field_path}.{key}", "required field is missing")
        return block[key]

    def _pairs(self, value: Any, field_path: str) -> List[Tuple[float, float]]:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return [(0.0, float(value))]
        if not isinstance(value, list) or not value:
            raise self._fail(field_path, "expected a number or a list of [time, value] pairs")
        pairs = []
        for j, item in enumerate(value):
            if not isinstance(item, list) or len(item) != 2:
                raise self._fail(f"{field_path}[{j}]", "expected a [time, value] pair")
            pairs.append(
                (
                    self._number(item[0], f"{field_path}[{j}]"),
                    self._number(item[1], f"{field_path}[{j}]"),
                )
            )
        return pairs

    def _curve(self, value: Any, field_path: str) -> RateCurve:
        pairs = self._pairs(value, field_path)
        try:
            return RateCurve.from_pairs(pairs)
        except ValidationError as e:
            raise self._fail(field_path, str(e))

    def _schedule(self, value: Any, field_path: str) -> PositionSchedule:
        pairs = self._pairs(value, field_path)
        try:
            return PositionSchedule.from_pairs(pairs)
        except ValidationError as e:
            raise self._fail(field_path, str(e))

    def _pair(self, value: Any, field_path: str, fallback: Optional[RateCurve] = None) -> RatePair:
        if value is None:
            if fallback is None:
                raise self._fail(field_path, "required field is missing")
            return RatePair.single(fallback)
        if isinstance(value, dict):
            lend = self._curve(self._required(value, "lend", field_path), f"{field_path}.lend")
            borrow = self._curve(
                self._required(value, "borrow", field_path), f"{field_path}.borrow"
            )
            return RatePair(lend=lend, borrow=borrow)
        return RatePair.single(self._curve(value, field_path))

    def _enum(self, enum_type, value: Any, field_path: str):
        try:
            return enum_type(value)
        except ValueError:
            allowed = ", ".join(e.value for e in enum_type)
            raise self._fail(field_path, f"unknown value {value!r} (expected one of {allowed})")

    # ------------------------------------------------------------------
    # blocks
    # ------------------------------------------------------------------

    def parse(self, data: Dict[str, Any], default_name: str) -> Scenario:
        unknown = sorted(set(data) - _TOP_LEVEL)
        if unknown:
            raise self._fail(unknown[0], "unknown top-level field")

        version = self._required(data, "schema_version", "<document>")
        if not is_supported_schema(str(version)):
            raise self._fail(
                "schema_version",
                f"unsupported schema version {version!r} (reader is {SCENARIO_SCHEMA_VERSION})",
            )

        market = self._object(self._required(data, "market", "<document>"), "market")
        contract = self._contract(
            self._object(self._required(data, "contract", "<document>"), "contract")
        )
        assets = self._assets(market)
        for j, payment in enumerate(contract.stream.payments):
            if payment.asset >= assets.n_assets:
                raise self._fail(
                    f"contract.payments[{j}].asset",
                    f"asset {payment.asset} is not defined ({assets.n_assets} assets)",
                )

        horizon = contract.maturity
        if "horizon" in market:
            horizon = self._number(market["horizon"], "market.horizon")
            if horizon < contract.maturity:
                raise self._fail(
                    "market.horizon",
                    f"horizon {horizon} ends before the contract maturity {contract.maturity}",
                )
        rates = self._rates(
            self._object(self._required(market, "rates", "market"), "market.rates"),
            assets.n_assets,
            horizon,
        )
        defaults = self._defaults(market.get("defaults"))
        collateral = self._collateral(data.get("collateral"))

        for message in self._warnings:
            logger.warning(message)
        return Scenario(
            rates=rates,
            assets=assets,
            defaults=defaults,
            contract=contract,
            collateral=collateral,
            closeout=self._closeout(data.get("closeout", {})),
            run=self._run(data.get("run", {})),
            external=self._external(data.get("external_funding")),
            incomplete=self._incomplete(data.get("incomplete", {})),
            warnings=tuple(self._warnings),
            name=str(data.get("name", default_name)),
        )

    def _assets(self, market: Dict[str, Any]) -> AssetModel:
        raw = self._required(market, "assets", "market")
        if isinstance(raw, dict):
            raw = [raw]
        if not isinstance(raw, list) or not raw:
            raise self._fail("market.assets", "expected a non-empty list of assets")
        spots, vols, funded = [], [], []
        for i, item in enumerate(raw):
            where = f"market.assets[{i}]"
            item = self._object(item, where)
            spots.append(self._number(self._required(item, "spot", where), f"{where}.spot"))
            vols.append(self._number(self._required(item, "vol", where), f"{where}.vol"))
            funded.append(bool(item.get("treasury_funded", False)))
        correlation = market.get("correlation", ())
        try:
            return AssetModel(
                spots=tuple(spots),
                vols=tuple(vols),
                correlation=tuple(tuple(row) for row in correlation),
                treasury_funded=tuple(funded),
            )
        except (ValidationError, TypeError) as e:
            raise self._fail("market.assets", str(e))

    def _rates(self, block: Dict[str, Any], n_assets: int, horizon: float) -> RateSystem:
        r = self._curve(self._required(block, "r", "market.rates"), "market.rates.r")
        funding = self._pair(block.get("funding"), "market.rates.funding", fallback=r)
        collateral = self._pair(block.get("collateral"), "market.rates.collateral", fallback=r)

        # one pair shared by every asset, or a list with one pair per asset
        raw_repo = block.get("repo")
        if isinstance(raw_repo, list) and not _is_curve(raw_repo):
            if len(raw_repo) != n_assets:
                raise self._fail(
                    "market.rates.repo", f"expected {n_assets} repo pairs, got {len(raw_repo)}"
                )
            repo = tuple(self._pair(x, f"market.rates.repo[{i}]") for i, x in enumerate(raw_repo))
        else:
            repo = (self._pair(raw_repo, "market.rates.repo", fallback=r),) * n_assets

        spread = block.get("funding_spread")
        return RateSystem(
            r=r,
            funding=funding,
            collateral=collateral,
            repo=repo,
            horizon=horizon,
            funding_spread=None if spread is None else self._curve(
                spread, "market.rates.funding_spread"
            ),
        )

    def _party(self, block: Dict[str, Any], where: str) -> Tuple[RateCurve, float]:
        intensity = self._curve(self._required(block, "intensity", where), f"{where}.intensity")
        if "loss" in block:
            recovery = 1.0 - self._number(block["loss"], f"{where}.loss")
        else:
            recovery = self._number(block.get("recovery", 0.4), f"{where}.recovery")
        return intensity, recovery

    def _defaults(self, raw: Any) -> DefaultModel:
        if raw is None:
            return DefaultModel.default_free()
        block = self._object(raw, "market.defaults")
        zero = {"intensity": 0.0}
        trader, trader_recovery = self._party(
            self._object(block.get("trader", zero), "market.defaults.trader"),
            "market.defaults.trader",
        )
        counterparty, counterparty_recovery = self._party(
            self._object(block.get("counterparty", zero), "market.defaults.counterparty"),
            "market.defaults.counterparty",
        )
        external, external_loss = None, 0.0
        if block.get("external") is not None:
            where = "market.defaults.external"
            ext = self._object(block["external"], where)
            external = self._curve(self._required(ext, "intensity", where), f"{where}.intensity")
            external_loss = self._number(ext.get("loss", 0.0), f"{where}.loss")
        try:
            return DefaultModel(
                trader_intensity=trader,
                counterparty_intensity=counterparty,
                trader_recovery=trader_recovery,
                counterparty_recovery=counterparty_recovery,
                external_intensity=external,
                external_loss=external_loss,
            )
        except ValidationError as e:
            raise self._fail("market.defaults", str(e))

    def _payment(self, item: Dict[str, Any], where: str, default_time: Optional[float]) -> Payment:
        tag = self._required(item, "payoff", where)
        if tag not in FILE_PAYOFFS:
            raise self._fail(
                f"{where}.payoff",
                f"unknown payoff {tag!r} (expected one of {', '.join(sorted(FILE_PAYOFFS))})",
            )
        if "time" in item:
            time = self._number(item["time"], f"{where}.time")
        elif default_time is not None:
            time = default_time
        else:
            raise self._fail(f"{where}.time", "required field is missing")
        try:
            return Payment(
                time=time,
                kind=FILE_PAYOFFS[tag],
                asset=int(item.get("asset", 0)),
                strike=self._number(item.get("strike", 0.0), f"{where}.strike"),
                quantity=self._number(item.get("quantity", 1.0), f"{where}.quantity"),
            )
        except ValidationError as e:
            raise self._fail(where, str(e))

    def _contract(self, block: Dict[str, Any]) -> Contract:
        maturity = None
        if "maturity" in block:
            maturity = self._number(block["maturity"], "contract.maturity")
        if "payments" in block:
            raw = block["payments"]
            if not isinstance(raw, list):
                raise self._fail("contract.payments", "expected a list of payments")
            payments = [
                self._payment(self._object(p, f"contract.payments[{j}]"),
                              f"contract.payments[{j}]", maturity)
                for j, p in enumerate(raw)
            ]
        else:
            # single-payoff shorthand: the payment fields sit in the contract block
            if maturity is None:
                raise self._fail("contract.maturity", "required field is missing")
            payments = [self._payment(block, "contract", maturity)]
        if maturity is None:
            if not payments:
                raise self._fail("contract.maturity", "required for an empty payment list")
            maturity = max(p.time for p in payments)
        try:
            return Contract(stream=DividendStream(tuple(payments)), maturity=maturity)
        except ValidationError as e:
            raise self._fail("contract", str(e))

    def _collateral(self, raw: Any) -> CollateralSpec:
        if raw is None:
            self._warnings.append("no collateral block: trade treated as uncollateralized")
            return CollateralSpec.uncollateralized()
        block = self._object(raw, "collateral")
        rule = block.get("rule", "fraction")
        if rule != "fraction":
            raise self._fail(
                "collateral.rule", "only the 'fraction' rule can be expressed in a file"
            )
        return CollateralSpec.fraction(self._number(block.get("alpha", 0.0), "collateral.alpha"))

    def _closeout(self, raw: Any) -> CloseoutSpec:
        block = self._object(raw, "closeout")
        settlement = self._enum(Settlement, block.get("settlement", "csa"), "closeout.settlement")
        try:
            return CloseoutSpec(mode=str(block.get("mode", "risk_free")), settlement=settlement)
        except ValidationError as e:
            raise self._fail("closeout.mode", str(e))

    def _external(self, raw: Any) -> Optional[ExternalFundingSpec]:
        if raw is None:
            return None
        block = self._object(raw, "external_funding")
        convention = self._enum(
            ExternalConvention,
            self._required(block, "convention", "external_funding"),
            "external_funding.convention",
        )
        position = self._schedule(
            block.get("bank_position", 0.0), "external_funding.bank_position"
        )
        return ExternalFundingSpec(convention=convention, bank_position=position)

    def _incomplete(self, raw: Any) -> IncompleteMarketSpec:
        block = self._object(raw, "incomplete")
        eta = None
        if block.get("eta") is not None:
            eta = self._curve(block["eta"], "incomplete.eta")
        spread = block.get("spread", "auto")
        levels = block.get("wealth_levels", [0.0, 100.0])
        if not isinstance(levels, list) or len(levels) < 2:
            raise self._fail("incomplete.wealth_levels", "expected at least two wealth levels")
        return IncompleteMarketSpec(
            eta=eta,
            spread=None if spread == "auto" else self._curve(spread, "incomplete.spread"),
            wealth_levels=tuple(
                self._number(w, f"incomplete.wealth_levels[{j}]") for j, w in enumerate(levels)
            ),
        )

    def _run(self, raw: Any) -> RunSettings:
        block = self._object(raw, "run")
        mode = block.get("mode", "linear")
        if mode not in MODES:
            raise self._fail("run.mode", f"unknown mode {mode!r} (expected one of {MODES})")
        if "measure" in block:
            self._enum(Preset, block["measure"], "run.measure")
        try:
            return RunSettings.from_dict(block)
        except (TypeError, ValueError) as e:
            raise self._fail("run", str(e))


def _is_curve(value: List[Any]) -> bool:
    return bool(value) and all(
        isinstance(x, list)
        and len(x) == 2
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x)
        for x in value
    )
