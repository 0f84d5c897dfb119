"""Hierarchical GCN + motif pooling classifier."""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Value
from .graph import Graph
from .layers import GCNLayer, MLP, propagation_matrix
from .motifs import MotifKind, binarize, motif_adjacency, motif_matrix, normalize_motif
from .pooling import (ClusterPool, SelectionPool, cluster_assign, cluster_coarsen, motif_attention,
                      select_topk)


class Channel(str, enum.Enum):
    SELECTION = "selection"
    CLUSTERING = "clustering"
    COMBINED = "combined"

    @classmethod
    def parse(cls, text: str) -> "Channel":
        key = text.strip().lower()
        aliases = {"s": cls.SELECTION, "c": cls.CLUSTERING, "cmb": cls.COMBINED}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown channel {text!r}; expected selection, clustering or combined") from None


@dataclass
class ModelConfig:
    channel: Channel = Channel.SELECTION
    motif: MotifKind = MotifKind.TRIANGLE
    hidden_dim: int = 128
    blocks: int = 3
    alpha: float = 0.5
    clusters: Optional[tuple[int, ...]] = None
    lr: float = 5e-4
    weight_decay: float = 1e-4
    patience: int = 50
    max_epochs: int = 2000
    seeds: tuple[int, ...] = (0,)
    dataset_dir: Optional[str] = None
    dataset_name: Optional[str] = None

    def __post_init__(self):
        self.channel = Channel.parse(self.channel) if isinstance(self.channel, str) else self.channel
        self.motif = MotifKind.parse(self.motif) if isinstance(self.motif, str) else self.motif
        if self.blocks < 1:
            raise ValueError(f"blocks must be >= 1, got {self.blocks}")
        if self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.clusters is not None:
            self.clusters = tuple(int(k) for k in self.clusters)
            if any(k < 1 for k in self.clusters):
                raise ValueError(f"cluster counts must be positive, got {self.clusters}")
        self.seeds = tuple(int(s) for s in self.seeds)


def cluster_schedule(cfg: ModelConfig, avg_nodes: float) -> tuple[int, ...]:
    """Per-block cluster counts.

    An explicit ``clusters`` entry wins (a single value is halved per block);
    otherwise the first block uses ``max(2, ceil(avg_nodes / 4))``.
    """
    if cfg.clusters and len(cfg.clusters) >= cfg.blocks:
        return cfg.clusters[:cfg.blocks]
    first = cfg.clusters[0] if cfg.clusters else max(2, math.ceil(avg_nodes / 4))
    return tuple(max(2, math.ceil(first / 2 ** b)) for b in range(cfg.blocks))


def readout(x: Value) -> Value:
    """Mean over nodes concatenated with max over nodes: N x d -> 1 x 2d."""
    return ad.concat_cols([ad.row_mean(x), ad.row_max(x)])


@functools.lru_cache(maxsize=4096)
def _first_block(g: Graph, kind: MotifKind):
    a = g.adjacency()
    m = motif_adjacency(g, kind).dense().astype(np.float64)
    return a, propagation_matrix(a), m, normalize_motif(m)


class SelectionStack:
    """GCN over the plain adjacency, then top-k by motif attention, per block."""

    def __init__(self, in_dim: int, cfg: ModelConfig, rng: np.random.Generator, name: str = "sel"):
        h = cfg.hidden_dim
        self.kind, self.alpha = cfg.motif, cfg.alpha
        self.gcns = [GCNLayer(in_dim if b == 0 else h, h, rng, name=f"{name}.gcn{b}") for b in range(cfg.blocks)]
        self.pools = [SelectionPool(h, cfg.alpha, rng, name=f"{name}.pool{b}") for b in range(cfg.blocks)]
        self.out_dim = 2 * h * cfg.blocks

    def parameters(self) -> list[Parameter]:
        return [p for b in zip(self.gcns, self.pools) for layer in b for p in layer.parameters()]

    def __call__(self, g: Graph, x: Value) -> tuple[Value, Value, list]:
        adj, prop, _, m_norm = _first_block(g, self.kind)
        outs, trace = [], []
        for b, (gcn, pool) in enumerate(zip(self.gcns, self.pools)):
            if b > 0:
                prop = propagation_matrix(adj)
                m_norm = normalize_motif(motif_matrix(binarize(adj), self.kind))
            x = gcn(prop, x)
            res = select_topk(motif_attention(pool, m_norm, x), x, adj, self.alpha)
            x, adj = res.x_out, res.adj_out
            trace.append(res)
            outs.append(readout(x))
        return ad.concat_cols(outs), Value(0.0), trace


class ClusteringStack:
    """GCN over the normalised motif matrix, then soft clustering, per block."""

    def __init__(self, in_dim: int, cfg: ModelConfig, ks: Sequence[int], rng: np.random.Generator,
                 name: str = "clu"):
        h = cfg.hidden_dim
        self.kind = cfg.motif
        self.ks = tuple(ks)
        self.gcns = [GCNLayer(in_dim if b == 0 else h, h, rng, name=f"{name}.gcn{b}") for b in range(cfg.blocks)]
        self.pools = [ClusterPool(h, h, k, rng, name=f"{name}.pool{b}") for b, k in enumerate(self.ks)]
        self.out_dim = 2 * h * cfg.blocks

    def parameters(self) -> list[Parameter]:
        return [p for b in zip(self.gcns, self.pools) for layer in b for p in layer.parameters()]

    def __call__(self, g: Graph, x: Value) -> tuple[Value, Value, list]:
        _, _, m, m_norm = _first_block(g, self.kind)
        outs, trace = [], []
        aux = Value(0.0)
        for b, (gcn, pool) in enumerate(zip(self.gcns, self.pools)):
            if b > 0:
                m = motif_matrix(binarize(adj), self.kind).astype(np.float64)
                m_norm = normalize_motif(m)
            x = gcn(m_norm, x)
            res = cluster_coarsen(cluster_assign(pool, x), m, x)
            aux = aux + res.aux_loss
            x, adj = res.x_out, res.adj_out
            trace.append(res)
            outs.append(readout(x))
        return ad.concat_cols(outs), aux, trace


class Encoder:
    """One or two pooling stacks whose graph embeddings are concatenated."""

    def __init__(self, cfg: ModelConfig, in_dim: int, rng: np.random.Generator, ks: Sequence[int] = (2, 2, 2)):
        self.cfg = cfg
        self.in_dim = in_dim
        self.stacks = []
        if cfg.channel in (Channel.SELECTION, Channel.COMBINED):
            self.stacks.append(SelectionStack(in_dim, cfg, rng))
        if cfg.channel in (Channel.CLUSTERING, Channel.COMBINED):
            self.stacks.append(ClusteringStack(in_dim, cfg, ks, rng))
        self.out_dim = sum(s.out_dim for s in self.stacks)

    def parameters(self) -> list[Parameter]:
        return [p for s in self.stacks for p in s.parameters()]

    def __call__(self, g: Graph) -> tuple[Value, Value]:
        if g.feature_dim != self.in_dim:
            raise ValueError(f"graph has {g.feature_dim} features, model expects {self.in_dim}")
        x = Value(g.features)
        parts, aux = [], Value(0.0)
        for stack in self.stacks:
            z, a, _ = stack(g, x)
            parts.append(z)
            aux = aux + a
        z = parts[0] if len(parts) == 1 else ad.concat_cols(parts)
        return z, aux


class GraphClassifier:
    def __init__(self, cfg: ModelConfig, in_dim: int, num_classes: int, seed: int = 0,
                 ks: Optional[Sequence[int]] = None):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.num_classes = num_classes
        ks = tuple(ks) if ks is not None else cluster_schedule(cfg, 8)
        self.encoder = Encoder(cfg, in_dim, rng, ks)
        h = cfg.hidden_dim
        self.head = MLP([self.encoder.out_dim, h, max(1, h // 2), num_classes], rng, "head")

    def parameters(self) -> list[Parameter]:
        return self.encoder.parameters() + self.head.parameters()

    def embed(self, g: Graph) -> tuple[Value, Value]:
        return self.encoder(g)

    def forward(self, g: Graph) -> tuple[Value, Value]:
        z, aux = self.encoder(g)
        return self.head(z), aux

    __call__ = forward

    def predict(self, g: Graph) -> int:
        logits, _ = self.forward(g)
        return int(np.argmax(logits.data[0]))


def supervised_loss(logits: Value, label: int) -> Value:
    return ad.cross_entropy(logits, label)
