from app.core.services.adjusted_cash_flows import AdjustedCashFlowEngine, ValuationFactory
from app.core.services.funding_extensions import FundingExtensions
from app.core.services.linear_pricer import LinearPricer
from app.core.services.market_model import MeasureFactory
from app.core.services.nonlinear_pricer import NonlinearPricer
from app.core.services.path_simulator import PathSimulator

__all__ = [
    "AdjustedCashFlowEngine",
    "FundingExtensions",
    "LinearPricer",
    "MeasureFactory",
    "NonlinearPricer",
    "PathSimulator",
    "ValuationFactory",
]
