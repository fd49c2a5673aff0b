from app.application.use_cases.price_scenario import PriceScenarioUseCase
from app.application.use_cases.verify_engine import VerifyEngineUseCase

__all__ = [
    "PriceScenarioUseCase",
    "VerifyEngineUseCase",
]
