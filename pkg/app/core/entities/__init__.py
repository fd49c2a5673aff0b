from app.core.entities.bsde import BSDEState
from app.core.entities.collateral import (
    CloseoutOutcome,
    CloseoutSpec,
    CollateralRule,
    CollateralSpec,
    Defaulter,
    Settlement,
)
from app.core.entities.contract import Contract, DividendStream, Payment, PayoffKind, SignConvention
from app.core.entities.curves import RateCurve, RatePair, RateSystem
from app.core.entities.legs import LegAccumulator
from app.core.entities.market import AssetModel, DefaultModel, DeflatorChoice, Market, Preset
from app.core.entities.report import ConvergenceRecord, ValuationReport
from app.core.entities.scenario import (
    ExternalConvention,
    ExternalFundingSpec,
    IncompleteMarketSpec,
    RunSettings,
    Scenario,
)
from app.core.entities.simulation import MonteCarloConfig, PathEnsemble, SeedPolicy, TimeGrid

__all__ = [
    "AssetModel",
    "BSDEState",
    "CloseoutOutcome",
    "CloseoutSpec",
    "CollateralRule",
    "CollateralSpec",
    "Contract",
    "ConvergenceRecord",
    "DefaultModel",
    "Defaulter",
    "DeflatorChoice",
    "DividendStream",
    "ExternalConvention",
    "ExternalFundingSpec",
    "IncompleteMarketSpec",
    "LegAccumulator",
    "Market",
    "MonteCarloConfig",
    "PathEnsemble",
    "Payment",
    "PayoffKind",
    "Preset",
    "RateCurve",
    "RatePair",
    "RateSystem",
    "RunSettings",
    "Scenario",
    "SeedPolicy",
    "Settlement",
    "SignConvention",
    "TimeGrid",
    "ValuationReport",
]
