"""Multivariate stochastic volatility of OU type: transforms, pricing, simulation, calibration."""
__version__ = "0.1.0"
