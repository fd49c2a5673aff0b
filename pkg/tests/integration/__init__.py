# Monte Carlo acceptance checks
