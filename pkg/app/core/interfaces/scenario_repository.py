"""Scenario repository interface (port)"""

from abc import ABC, abstractmethod
from pathlib import Path

from app.core.entities.scenario import Scenario


class ScenarioRepository(ABC):
    """Interface for loading scenarios"""

    @abstractmethod
    def load(self, path: Path) -> Scenario:
        """Parse and validate the scenario stored at path"""
        pass
