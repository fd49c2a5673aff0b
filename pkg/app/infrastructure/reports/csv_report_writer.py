"""CSV writer for the adjustment breakdown"""

import csv
import logging
from pathlib import Path
from typing import Any, Dict

from app.core.entities.report import ValuationReport
from app.core.interfaces.report_writer import ReportWriter

logger = logging.getLogger(__name__)

HEADER = ("method", "term", "value")


class CSVReportWriter(ReportWriter):
    """One row per (method, term) taken from every report of the document"""

    def __init__(self, filename: str = "adjustments.csv"):
        self._filename = filename

    def write(self, document: Dict[str, Any], out_dir: Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / self._filename
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(HEADER)
            for raw in document.get("reports", []):
                report = ValuationReport.from_dict(raw)
                for term, value in report.adjustments_table():
                    writer.writerow((report.method, term, repr(float(value))))
        logger.info("Wrote %s", path)
        return path
