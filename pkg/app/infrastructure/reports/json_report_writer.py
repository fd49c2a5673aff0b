"""JSON report writer"""

import json
import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np

from app.core.interfaces.report_writer import ReportWriter

logger = logging.getLogger(__name__)


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (tuple, set)):
        return list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def dumps(document: Dict[str, Any]) -> str:
    """Deterministic rendering: sorted keys, fixed indentation, trailing newline"""
    return json.dumps(document, sort_keys=True, indent=2, default=_to_builtin) + "\n"


class JSONReportWriter(ReportWriter):
    """Writes one document per file; identical documents give identical bytes"""

    def __init__(self, filename: str = "report.json"):
        self._filename = filename

    def write(self, document: Dict[str, Any], out_dir: Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / self._filename
        path.write_text(dumps(document), encoding="utf-8")
        logger.info("Wrote %s", path)
        return path
