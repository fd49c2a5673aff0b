"""
Dependency Injection Container

Wires together all dependencies following the Dependency Inversion Principle.
Inner layers (core, application) depend on abstractions, outer layers provide implementations.
"""

from dataclasses import dataclass
from typing import Optional

# Use Cases
from app.application.use_cases.price_scenario import PriceScenarioUseCase
from app.application.use_cases.verify_engine import VerifyEngineUseCase

# Core Services
from app.core.services.adjusted_cash_flows import ValuationFactory
from app.core.services.clean_valuation import CleanPricer
from app.core.services.funding_extensions import FundingExtensions
from app.core.services.linear_pricer import LinearPricer
from app.core.services.market_model import MeasureFactory
from app.core.services.nonlinear_pricer import NonlinearPricer
from app.core.services.path_simulator import PathSimulator

# Infrastructure
from app.infrastructure.reports.csv_report_writer import CSVReportWriter
from app.infrastructure.reports.json_report_writer import JSONReportWriter
from app.infrastructure.scenarios.json_scenario_repository import JSONScenarioRepository


@dataclass
class Container:
    """
    Application dependency container.

    Holds all wired dependencies and use cases.
    """

    workers: int

    # Infrastructure
    scenario_repository: JSONScenarioRepository
    report_writer: JSONReportWriter
    csv_writer: CSVReportWriter
    meta_writer: JSONReportWriter

    # Core Services
    factory: ValuationFactory
    measures: MeasureFactory
    linear_pricer: LinearPricer
    nonlinear_pricer: NonlinearPricer
    funding_extensions: FundingExtensions

    # Use Cases
    price_scenario_use_case: PriceScenarioUseCase
    verify_engine_use_case: VerifyEngineUseCase


# Singleton container instance
_container: Optional[Container] = None


def create_container(workers: int = 1) -> Container:
    """
    Create and wire all dependencies.

    This is the composition root where all dependencies are assembled.
    """
    # Infrastructure layer
    scenario_repository = JSONScenarioRepository()
    report_writer = JSONReportWriter("report.json")
    csv_writer = CSVReportWriter("adjustments.csv")
    meta_writer = JSONReportWriter("run_meta.json")

    # Core services
    factory = ValuationFactory(simulator=PathSimulator(workers), clean_pricer=CleanPricer())
    measures = MeasureFactory()
    linear_pricer = LinearPricer(factory, measures)
    nonlinear_pricer = NonlinearPricer(factory, measures)
    funding_extensions = FundingExtensions(factory, measures)

    # Use cases
    price_scenario_use_case = PriceScenarioUseCase(
        scenario_repository=scenario_repository,
        json_writer=report_writer,
        csv_writer=csv_writer,
        meta_writer=meta_writer,
        linear_pricer=linear_pricer,
        nonlinear_pricer=nonlinear_pricer,
        funding_extensions=funding_extensions,
        measures=measures,
    )

    verify_engine_use_case = VerifyEngineUseCase(
        linear_pricer=linear_pricer,
        nonlinear_pricer=nonlinear_pricer,
        funding_extensions=funding_extensions,
        factory=factory,
        measures=measures,
    )

    return Container(
        workers=workers,
        scenario_repository=scenario_repository,
        report_writer=report_writer,
        csv_writer=csv_writer,
        meta_writer=meta_writer,
        factory=factory,
        measures=measures,
        linear_pricer=linear_pricer,
        nonlinear_pricer=nonlinear_pricer,
        funding_extensions=funding_extensions,
        price_scenario_use_case=price_scenario_use_case,
        verify_engine_use_case=verify_engine_use_case,
    )


def get_container(workers: int = 1) -> Container:
    """Get the singleton container instance, rebuilt when the worker count changes"""
    global _container
    if _container is None or _container.workers != workers:
        _container = create_container(workers)
    return _container


def reset_container() -> None:
    global _container
    _container = None
