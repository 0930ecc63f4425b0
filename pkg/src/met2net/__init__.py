"""Implicit two-stage multivariate spatiotemporal forecasting on a small numpy autodiff engine."""

__version__ = "0.1.0"
