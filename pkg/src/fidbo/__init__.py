"""Cost-aware Bayesian optimization over a variable-fidelity axis."""

__version__ = "0.1.0"
