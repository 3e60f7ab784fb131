"""Competitive facility location with market expansion: models, bounds and solvers."""

__version__ = "0.1.0"
