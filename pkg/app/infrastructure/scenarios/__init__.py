from app.infrastructure.scenarios.json_scenario_repository import JSONScenarioRepository

__all__ = ["JSONScenarioRepository"]
