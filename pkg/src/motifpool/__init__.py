"""Motif-based hierarchical graph pooling with a small numpy autodiff engine."""

__version__ = "0.1.0"
