"""Human-in-the-loop fairness platform for a gradient-boosted loan classifier."""

__version__ = "0.1.0"
