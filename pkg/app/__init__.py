"""
xvaforge

Valuation of bilateral contracts with funding, collateral and default adjustments
(CVA, DVA, FVA, LVA), priced by Monte Carlo under linear and nonlinear funding rates.

Architecture:
    - core/            Domain layer (entities, services, interfaces)
    - application/     Use cases layer
    - infrastructure/  Scenario files, report writers, environment
    - presentation/    Command-line front end
"""

from app.version import __version__

__all__ = ["__version__"]
