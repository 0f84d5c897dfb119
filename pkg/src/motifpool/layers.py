"""GCN propagation and plain dense layers."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Value, glorot
from .motifs import normalize_motif


def propagation_matrix(adj) -> np.ndarray:
    """Symmetric normalised propagation ``D^-1/2 (adj + I) D^-1/2``."""
    return normalize_motif(adj)


class GCNLayer:
    """``act(P @ h @ theta)`` with no bias; ``P`` from :func:`propagation_matrix`."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, activation: Optional[str] = "relu",
                 name: str = "gcn"):
        if activation not in ("relu", None, "none"):
            raise ValueError(f"unsupported activation {activation!r}")
        self.theta = Parameter(glorot(rng, d_in, d_out), f"{name}.theta")
        self.activation = None if activation == "none" else activation

    @property
    def d_in(self) -> int:
        return self.theta.shape[0]

    def parameters(self) -> list[Parameter]:
        return [self.theta]

    def __call__(self, prop, h: Value) -> Value:
        prop = ad.constant(prop)
        if h.shape[1] != self.d_in:
            raise ValueError(f"GCN expects {self.d_in} input features, got {h.shape[1]}")
        if prop.shape != (h.shape[0], h.shape[0]):
            raise ValueError(f"propagation matrix {prop.shape} does not match {h.shape[0]} nodes")
        out = prop @ (h @ self.theta)
        return ad.relu(out) if self.activation == "relu" else out


def gcn_forward(layer: GCNLayer, adj, h: Value) -> Value:
    return layer(propagation_matrix(adj), h)


class Linear:
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, name: str):
        self.weight = Parameter(glorot(rng, d_in, d_out), f"{name}.weight")
        self.bias = Parameter(np.zeros((1, d_out)), f"{name}.bias")

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]

    def __call__(self, x: Value) -> Value:
        return x @ self.weight + self.bias


class MLP:
    """Stack of :class:`Linear` layers with ReLU between them (none after the last)."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, name: str):
        self.layers = [Linear(a, b, rng, f"{name}.{k}") for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))]

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def __call__(self, x: Value) -> Value:
        for k, layer in enumerate(self.layers):
            x = layer(x)
            if k < len(self.layers) - 1:
                x = ad.relu(x)
        return x
