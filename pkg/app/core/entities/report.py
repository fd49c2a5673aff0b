"""Valuation report entity"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class ConvergenceRecord:
    """One Picard iteration"""

    iteration: int
    residual: float
    driver_switches: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iteration": self.iteration,
            "residual": self.residual,
            "driver_switches": self.driver_switches,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ConvergenceRecord":
        return cls(
            iteration=int(data["iteration"]),
            residual=float(data["residual"]),
            driver_switches=int(data.get("driver_switches", 0)),
        )


_SCALAR_TERMS = (
    "clean",
    "clean_estimate",
    "lva",
    "cva",
    "dva",
    "fva_f",
    "fba_f",
    "fca_f",
    "treasury_carry",
    "dva_f",
    "cva_f",
    "dva_f_minus",
    "dva_f_plus",
    "own_default_benefit",
)


@dataclass(frozen=True, eq=False)
class ValuationReport:
    """
    Price at t=0 in the canonical receive-A convention with its adjustment breakdown.

    Adjustment legs are expectations under the measure named in `metadata["measure"]`;
    CVA and DVA are reported as nonnegative amounts entering the price with - and +.
    """

    method: str
    price: float
    standard_error: float
    clean: float = 0.0
    clean_estimate: float = 0.0
    lva: float = 0.0
    cva: float = 0.0
    dva: float = 0.0
    fva_f: float = 0.0
    fba_f: float = 0.0
    fca_f: float = 0.0
    fva_h: Tuple[float, ...] = ()
    fba_h: Tuple[float, ...] = ()
    fca_h: Tuple[float, ...] = ()
    treasury_carry: float = 0.0
    dva_f: float = 0.0
    cva_f: float = 0.0
    dva_f_minus: float = 0.0
    dva_f_plus: float = 0.0
    own_default_benefit: float = 0.0
    net_benefit_j: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    convergence: Tuple[ConvergenceRecord, ...] = ()
    checks: Dict[str, float] = field(default_factory=dict)
    warnings: Tuple[str, ...] = ()
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def external_net(self) -> float:
        return self.dva_f - self.cva_f + self.dva_f_minus - self.dva_f_plus

    @property
    def decomposition_sum(self) -> float:
        """clean + LVA + DVA − CVA + FVA^f + ΣFVA^{h^i} + remaining legs"""
        return (
            self.clean_estimate
            + self.lva
            + self.dva
            - self.cva
            + self.fva_f
            + sum(self.fva_h)
            + self.treasury_carry
            + self.external_net
            + self.own_default_benefit
        )

    @property
    def identity_gap(self) -> float:
        return self.price - self.decomposition_sum

    def adjustments_table(self) -> List[Tuple[str, float]]:
        """Rows (term, value) for the CSV output"""
        rows = [("price", self.price), ("standard_error", self.standard_error)]
        rows += [(name, getattr(self, name)) for name in _SCALAR_TERMS]
        for label in ("fva_h", "fba_h", "fca_h"):
            rows += [(f"{label}[{i}]", v) for i, v in enumerate(getattr(self, label))]
        if self.net_benefit_j is not None:
            rows.append(("net_benefit_j", self.net_benefit_j))
        return rows

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "method": self.method,
            "price": self.price,
            "standard_error": self.standard_error,
        }
        for name in _SCALAR_TERMS:
            data[name] = getattr(self, name)
        data["fva_h"] = list(self.fva_h)
        data["fba_h"] = list(self.fba_h)
        data["fca_h"] = list(self.fca_h)
        data["net_benefit_j"] = self.net_benefit_j
        data["metadata"] = dict(self.metadata)
        data["convergence"] = [c.to_dict() for c in self.convergence]
        data["checks"] = dict(self.checks)
        data["warnings"] = list(self.warnings)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ValuationReport":
        scalars = {name: float(data.get(name, 0.0)) for name in _SCALAR_TERMS}
        j = data.get("net_benefit_j")
        return cls(
            method=str(data["method"]),
            price=float(data["price"]),
            standard_error=float(data["standard_error"]),
            fva_h=tuple(float(x) for x in data.get("fva_h", [])),
            fba_h=tuple(float(x) for x in data.get("fba_h", [])),
            fca_h=tuple(float(x) for x in data.get("fca_h", [])),
            net_benefit_j=None if j is None else float(j),
            metadata=dict(data.get("metadata", {})),
            convergence=tuple(
                ConvergenceRecord.from_dict(c) for c in data.get("convergence", [])
            ),
            checks={k: float(v) for k, v in data.get("checks", {}).items()},
            warnings=tuple(data.get("warnings", [])),
            **scalars,
        )
