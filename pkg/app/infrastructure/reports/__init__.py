from app.infrastructure.reports.csv_report_writer import CSVReportWriter
from app.infrastructure.reports.json_report_writer import JSONReportWriter, dumps

__all__ = ["CSVReportWriter", "JSONReportWriter", "dumps"]
