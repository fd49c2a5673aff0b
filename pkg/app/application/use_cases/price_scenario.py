"""Price Scenario Use Case"""

import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

from app.core.entities.market import Preset
from app.core.entities.report import ValuationReport
from app.core.entities.scenario import Scenario
from app.core.entities.simulation import MonteCarloConfig
from app.core.errors import (
    ConvergenceError,
    PricingSetupError,
    UnsupportedPayoffError,
    ValidationError,
)
from app.core.interfaces.report_writer import ReportWriter
from app.core.interfaces.scenario_repository import ScenarioRepository
from app.core.services.funding_extensions import FundingExtensions
from app.core.services.linear_pricer import LinearPricer
from app.core.services.market_model import MeasureFactory
from app.core.services.nonlinear_pricer import NonlinearPricer
from app.version import REPORT_SCHEMA_VERSION, __version__

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv", "both")

# error kinds reported back to the caller
VALIDATION = "validation"
CONVERGENCE = "convergence"
INTERNAL = "internal"


@dataclass
class PriceScenarioRequest:
    """Input data for one scenario run; None keeps the scenario's own value"""

    scenario_path: Path
    out_dir: Path
    mode: Optional[str] = None
    paths: Optional[int] = None
    steps: Optional[int] = None
    seed: Optional[int] = None
    workers: int = 1
    output_format: str = "json"  # "json", "csv", or "both"


@dataclass
class PriceScenarioResponse:
    """Result of a scenario run"""

    success: bool
    reports: List[ValuationReport] = field(default_factory=list)
    files: List[Path] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    error: Optional[str] = None
    error_kind: Optional[str] = None


def report_document(scenario: Scenario, reports: List[ValuationReport]) -> Dict[str, Any]:
    """The report.json document; holds nothing that varies between identical runs"""
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "version": __version__,
        "scenario": scenario.to_dict(),
        "reports": [r.to_dict() for r in reports],
        "warnings": list(scenario.warnings) + [w for r in reports for w in r.warnings],
    }


class PriceScenarioUseCase:
    """
    Use case for pricing one scenario file.

    Orchestrates:
    1. Loading and validating the scenario
    2. Applying command-line overrides
    3. Running the pricers of the requested mode
    4. Writing report.json, adjustments.csv and run_meta.json
    """

    def __init__(
        self,
        scenario_repository: ScenarioRepository,
        json_writer: ReportWriter,
        csv_writer: ReportWriter,
        meta_writer: ReportWriter,
        linear_pricer: LinearPricer,
        nonlinear_pricer: NonlinearPricer,
        funding_extensions: FundingExtensions,
        measures: Optional[MeasureFactory] = None,
    ):
        self._scenarios = scenario_repository
        self._json_writer = json_writer
        self._csv_writer = csv_writer
        self._meta_writer = meta_writer
        self._linear = linear_pricer
        self._nonlinear = nonlinear_pricer
        self._extensions = funding_extensions
        self._measures = measures or MeasureFactory()

    def execute(self, request: PriceScenarioRequest) -> PriceScenarioResponse:
        started = time.perf_counter()
        try:
            if request.output_format not in FORMATS:
                raise ValidationError(f"unknown output format '{request.output_format}'")
            scenario = self._scenarios.load(request.scenario_path).with_run(
                mode=request.mode, paths=request.paths, steps=request.steps, seed=request.seed
            )
            if scenario.run.mode == "verify":
                raise ValidationError("verify mode is handled by the verification use case")
            config = scenario.run.monte_carlo(request.workers, scenario.assets.spots[0])

            reports = self._price(scenario, config)
            document = report_document(scenario, reports)

            files = []
            if request.output_format in ("json", "both"):
                files.append(self._json_writer.write(document, request.out_dir))
            if request.output_format in ("csv", "both"):
                files.append(self._csv_writer.write(document, request.out_dir))
            files.append(
                self._meta_writer.write(
                    {
                        "timestamp": datetime.now(timezone.utc).isoformat(),
                        "duration_seconds": time.perf_counter() - started,
                        "workers": config.workers,
                        "version": __version__,
                        "scenario": scenario.name,
                        "mode": scenario.run.mode,
                    },
                    request.out_dir,
                )
            )

            return PriceScenarioResponse(
                success=True,
                reports=reports,
                files=files,
                warnings=document["warnings"],
            )

        except ConvergenceError as e:
            logger.error("%s", e)
            return PriceScenarioResponse(success=False, error=str(e), error_kind=CONVERGENCE)
        except (ValidationError, PricingSetupError, UnsupportedPayoffError) as e:
            logger.error("%s", e)
            return PriceScenarioResponse(success=False, error=str(e), error_kind=VALIDATION)
        except Exception as e:
            logger.exception("scenario run failed")
            return PriceScenarioResponse(success=False, error=str(e), error_kind=INTERNAL)

    def _price(self, scenario: Scenario, config: MonteCarloConfig) -> List[ValuationReport]:
        market = scenario.market
        trade = (scenario.contract, scenario.collateral, scenario.closeout, market, config)
        mode = scenario.run.mode
        logger.info("Running scenario '%s' in %s mode", scenario.name, mode)

        if mode == "incomplete":
            return [self._extensions.price_incomplete(*trade, spec=scenario.incomplete)]

        if mode == "linear":
            reports = [self._linear.price_funding_measure(*trade)]
            preset = scenario.run.measure
            if preset is Preset.RISK_FREE:
                reports.append(self._linear.price_risk_neutral(*trade))
            elif preset is Preset.REPO:
                choice = self._measures.make_choice(
                    Preset.REPO, market.rates, market.assets, eta=scenario.incomplete.eta
                )
                reports.append(self._linear.price_with_deflator(choice, *trade, method="repo"))
            elif preset is Preset.CUSTOM:
                raise PricingSetupError("custom deflators are available in-process only")
        elif mode == "nonlinear":
            reports = [
                self._nonlinear.picard_price(*trade),
                self._nonlinear.solve_bsde(*trade).to_report(),
            ]
        else:
            raise ValidationError(f"unknown mode '{mode}'")

        if scenario.external is not None:
            reports.append(self._extensions.price_with_external(*trade, spec=scenario.external))
        return reports
