"""Report writer interface (port)"""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict


class ReportWriter(ABC):
    """Interface for persisting a report document"""

    @abstractmethod
    def write(self, document: Dict[str, Any], out_dir: Path) -> Path:
        """Write the document into out_dir and return the file path"""
        pass
