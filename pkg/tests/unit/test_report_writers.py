"""
Unit tests for the report writers and the report entity.

Tests cover:
- Deterministic JSON rendering
- CSV rows per (method, term)
- ValuationReport serialization and the decomposition identity
"""

import csv

import numpy as np
import pytest

from app.core.entities.report import ConvergenceRecord, ValuationReport
from app.infrastructure.reports import CSVReportWriter, JSONReportWriter, dumps


@pytest.fixture
def report() -> ValuationReport:
    return ValuationReport(
        method="funding_measure",
        price=9.5,
        standard_error=0.1,
        clean=9.0,
        clean_estimate=9.25,
        lva=0.5,
        cva=0.75,
        dva=0.25,
        fva_f=0.125,
        fba_f=0.25,
        fca_f=0.125,
        fva_h=(0.125,),
        fba_h=(0.125,),
        fca_h=(0.0,),
        metadata={"measure": "funding", "paths": 1000},
        convergence=(ConvergenceRecord(1, 0.0),),
        samples=np.array([9.4, 9.6]),
    )


@pytest.fixture
def document(report: ValuationReport) -> dict:
    return {"schema_version": "1.0", "reports": [report.to_dict()], "warnings": []}


class TestValuationReport:
    """Tests for ValuationReport."""

    def test_decomposition_sum(self, report):
        # 9.25 + 0.5 + 0.25 - 0.75 + 0.125 + 0.125
        assert report.decomposition_sum == 9.5
        assert report.identity_gap == 0.0

    def test_round_trip_keeps_terms(self, report):
        restored = ValuationReport.from_dict(report.to_dict())
        assert restored.price == report.price
        assert restored.fva_h == report.fva_h
        assert restored.convergence == report.convergence
        assert restored.samples is None

    def test_samples_not_serialized(self, report):
        assert "samples" not in report.to_dict()

    def test_adjustments_table(self, report):
        rows = dict(report.adjustments_table())
        assert rows["price"] == 9.5
        assert rows["fva_h[0]"] == 0.125
        assert "net_benefit_j" not in rows


class TestJSONReportWriter:
    """Tests for JSONReportWriter."""

    def test_identical_documents_give_identical_bytes(self, document, tmp_path):
        writer = JSONReportWriter()
        first = writer.write(document, tmp_path / "a").read_bytes()
        second = writer.write(dict(reversed(list(document.items()))), tmp_path / "b").read_bytes()
        assert first == second

    def test_numpy_values(self):
        text = dumps({"x": np.float64(1.5), "y": np.arange(2), "z": (1, 2)})
        assert '"x": 1.5' in text
        assert text.endswith("\n")

    def test_unserializable(self):
        with pytest.raises(TypeError):
            dumps({"x": object()})

    def test_creates_directory(self, document, tmp_path):
        path = JSONReportWriter("out.json").write(document, tmp_path / "nested" / "dir")
        assert path.name == "out.json"
        assert path.exists()


class TestCSVReportWriter:
    """Tests for CSVReportWriter."""

    def test_rows(self, document, tmp_path):
        path = CSVReportWriter().write(document, tmp_path)
        with open(path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["method", "term", "value"]
        assert ["funding_measure", "price", "9.5"] in rows
        assert ["funding_measure", "fca_h[0]", "0.0"] in rows

    def test_values_round_trip_exactly(self, tmp_path):
        price = 0.1 + 0.2
        document = {"reports": [ValuationReport("picard", price, 0.0).to_dict()]}
        path = CSVReportWriter().write(document, tmp_path)
        with open(path, newline="", encoding="utf-8") as handle:
            rows = {row[1]: row[2] for row in csv.reader(handle)}
        assert float(rows["price"]) == price
