"""GLMs for prediction and for DAG-based causal effect estimation."""

__version__ = "0.1.0"
