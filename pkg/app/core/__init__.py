# Core Layer - Domain entities, services, and interfaces
# Pure valuation logic; depends only on numpy and scipy
