from app.core.interfaces.clean_valuer import CleanValuer
from app.core.interfaces.report_writer import ReportWriter
from app.core.interfaces.scenario_repository import ScenarioRepository

__all__ = [
    "CleanValuer",
    "ReportWriter",
    "ScenarioRepository",
]
