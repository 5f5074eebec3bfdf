"""Space-time assessment of daily maximum temperature change.

Fit an autoregressive Bayesian space-time model to station series, generate
posterior predictive replicates on a grid, and summarise events through
probability surfaces and spatial extents.
"""
__version__ = "0.1.0"
