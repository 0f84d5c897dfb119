"""Motif-aware pooling: top-k selection by motif attention, and soft clustering
with cut/orthogonality regularisers computed on the motif matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Value, glorot


@dataclass
class PoolResult:
    adj_out: np.ndarray
    x_out: Value
    selected: Optional[np.ndarray] = None
    assignment: Optional[Value] = None
    aux_loss: Optional[Value] = None

    def __post_init__(self):
        if self.aux_loss is None:
            self.aux_loss = Value(0.0)


def pooled_size(n: int, alpha: float) -> int:
    """``max(1, ceil(alpha * n))``, tolerant of float noise in ``alpha * n``."""
    return min(n, max(1, math.ceil(alpha * n - 1e-9)))


class SelectionPool:
    def __init__(self, d: int, ratio: float, rng: np.random.Generator, name: str = "select"):
        if not 0 < ratio <= 1:
            raise ValueError(f"pooling ratio must be in (0, 1], got {ratio}")
        self.theta_att = Parameter(glorot(rng, d, 1), f"{name}.theta_att")
        self.ratio = ratio

    def parameters(self) -> list[Parameter]:
        return [self.theta_att]


def motif_attention(pool: SelectionPool, m_norm, x: Value) -> Value:
    """Per-node score ``tanh(m_norm @ x @ theta_att)``, shape N x 1."""
    m_norm = ad.constant(m_norm)
    if m_norm.shape != (x.shape[0], x.shape[0]):
        raise ValueError(f"motif matrix {m_norm.shape} does not match {x.shape[0]} nodes")
    return ad.tanh(m_norm @ (x @ pool.theta_att))


def topk_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores, ties going to the lower index."""
    return np.argsort(-np.asarray(scores).ravel(), kind="stable")[:k]


def select_topk(scores: Value, x: Value, adj: np.ndarray, alpha: float) -> PoolResult:
    n = x.shape[0]
    idx = topk_indices(scores.data, pooled_size(n, alpha))
    x_out = ad.scale_rows(ad.take_rows(x, idx), ad.take_rows(scores, idx))
    adj = np.asarray(adj)
    return PoolResult(adj[np.ix_(idx, idx)], x_out, selected=idx)


class ClusterPool:
    def __init__(self, d: int, hidden: int, k: int, rng: np.random.Generator, name: str = "cluster"):
        self.w1 = Parameter(glorot(rng, d, hidden), f"{name}.w1")
        self.w2 = Parameter(glorot(rng, hidden, k), f"{name}.w2")
        self.k = k

    def parameters(self) -> list[Parameter]:
        return [self.w1, self.w2]


def cluster_assign(pool: ClusterPool, x: Value) -> Value:
    return ad.softmax_rows(ad.relu(x @ pool.w1) @ pool.w2)


def mincut_losses(s: Value, m) -> tuple[Value, Value]:
    """Cut loss ``-Tr(S'MS)/Tr(S'DS)`` and orthogonality loss on the assignment.

    The cut loss is defined as 0 when ``Tr(S'DS)`` vanishes (empty motif matrix).
    """
    m = np.asarray(m, dtype=np.float64)
    k = s.shape[1]
    ms = ad.constant(m) @ s
    den_mat = ad.constant(np.diag(m.sum(axis=1))) @ s
    den = ad.trace(s.T @ den_mat)
    if den.item() > 0:
        l_c = -ad.div(ad.trace(s.T @ ms), den)
    else:
        l_c = Value(0.0)
    sts = s.T @ s
    l_o = ad.frobenius_norm(ad.div(sts, ad.frobenius_norm(sts)) - ad.constant(np.eye(k) / math.sqrt(k)))
    return l_c, l_o


def cluster_coarsen(s: Value, m, x: Value) -> PoolResult:
    """Coarsened adjacency ``S'MS`` (detached) and features ``S'X``; aux = cut + ortho loss."""
    m = np.asarray(m, dtype=np.float64)
    l_c, l_o = mincut_losses(s, m)
    adj_out = s.data.T @ m @ s.data
    return PoolResult(adj_out, s.T @ x, assignment=s, aux_loss=l_c + l_o)
