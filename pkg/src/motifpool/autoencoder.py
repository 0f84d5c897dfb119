"""Graph reconstruction from the pooled graph embedding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Parameter, Value, backward
from .graph import Graph
from .layers import MLP
from .model import Channel, Encoder, ModelConfig, cluster_schedule


class ReconModel:
    """Pooling encoder followed by an edge head and an attribute head.

    Both heads are ``embed -> 2*embed -> 4*embed -> output`` MLPs with ReLU
    on the hidden layers.
    """

    def __init__(self, cfg: ModelConfig, n_max: int, feature_dim: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.n_max = n_max
        self.feature_dim = feature_dim
        self.encoder = Encoder(cfg, feature_dim, rng, cluster_schedule(cfg, n_max))
        e = self.encoder.out_dim
        self.mlp_edge = MLP([e, 2 * e, 4 * e, n_max * n_max], rng, "edge")
        self.mlp_attr = MLP([e, 2 * e, 4 * e, n_max * feature_dim], rng, "attr")
        self._offdiag = 1.0 - np.eye(n_max)

    def parameters(self) -> list[Parameter]:
        return self.encoder.parameters() + self.mlp_edge.parameters() + self.mlp_attr.parameters()

    def reconstruct(self, g: Graph) -> tuple[Value, Value, Value]:
        """Returns edge probabilities (N x N), attributes (N x d) and the pooling aux loss."""
        if g.n != self.n_max:
            raise ValueError(f"model reconstructs {self.n_max}-node graphs, got {g.n} nodes")
        v, aux = self.encoder(g)
        u = ad.sigmoid(ad.reshape(self.mlp_edge(v), self.n_max, self.n_max))
        a_hat = ad.hadamard(ad.scalar_mul(u + u.T, 0.5), ad.constant(self._offdiag))
        x_hat = ad.reshape(self.mlp_attr(v), self.n_max, self.feature_dim)
        return a_hat, x_hat, aux


def recon_loss(a_hat: Value, x_hat: Value, g: Graph, aux: Optional[Value] = None) -> Value:
    """Mean off-diagonal BCE plus attribute MSE, plus ``aux`` (clustering losses) if given."""
    offdiag = 1.0 - np.eye(g.n)
    loss = ad.binary_cross_entropy(a_hat, g.adjacency(), mask=offdiag) + ad.mse(x_hat, g.features)
    return loss if aux is None else loss + aux


def edge_accuracy(a_hat: np.ndarray, g: Graph) -> float:
    """Share of off-diagonal entries whose 0.5-threshold matches the true adjacency."""
    pred = np.asarray(a_hat) > 0.5
    mask = ~np.eye(g.n, dtype=bool)
    return float((pred == g.adjacency().astype(bool))[mask].mean())


def threshold(a_hat: np.ndarray) -> np.ndarray:
    out = (np.asarray(a_hat) > 0.5).astype(np.int64)
    np.fill_diagonal(out, 0)
    return out


@dataclass(frozen=True)
class ReconReport:
    edge_accuracy: float
    attr_mse: float
    initial_attr_mse: float
    steps: int
    final_loss: float


def train_recon(model: ReconModel, target: Graph, steps: int = 3000, lr: float = 1e-3,
                weight_decay: float = 0.0) -> ReconReport:
    opt = Adam(model.parameters(), lr=lr, weight_decay=weight_decay)
    with_aux = model.cfg.channel != Channel.SELECTION
    _, x_hat, _ = model.reconstruct(target)
    initial_mse = float(((x_hat.data - target.features) ** 2).mean())
    value = float("nan")
    for step in range(steps):
        a_hat, x_hat, aux = model.reconstruct(target)
        loss = recon_loss(a_hat, x_hat, target, aux if with_aux else None)
        value = loss.item()
        if not np.isfinite(value):
            raise FloatingPointError(f"reconstruction loss diverged at step {step}")
        opt.zero_grad()
        backward(loss)
        opt.step()
    a_hat, x_hat, _ = model.reconstruct(target)
    return ReconReport(edge_accuracy(a_hat.data, target), float(((x_hat.data - target.features) ** 2).mean()),
                       initial_mse, steps, value)
