"""Motif adjacency matrices: closed forms plus an enumeration oracle.

``M[i, j]`` counts motif instances whose node set contains both ``i`` and
``j``.  Instances use subgraph (non-induced) semantics: a wedge sitting
inside a triangle is still a wedge.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

from .graph import Graph

SPARSE_DENSITY = 0.25
ORACLE_MAX_NODES = 64

Matrix = Union[np.ndarray, sp.spmatrix]


class MotifKind(str, enum.Enum):
    EDGE = "edge"
    TWO_STAR = "two_star"
    TRIANGLE = "triangle"
    TWO_STAR_PLUS_TRIANGLE = "two_star+triangle"

    @classmethod
    def parse(cls, text: str) -> "MotifKind":
        key = text.strip().lower().replace("-", "_").replace(" ", "")
        aliases = {
            "edge": cls.EDGE,
            "two_star": cls.TWO_STAR, "2star": cls.TWO_STAR, "2_star": cls.TWO_STAR,
            "wedge": cls.TWO_STAR, "twostar": cls.TWO_STAR,
            "triangle": cls.TRIANGLE,
            "two_star+triangle": cls.TWO_STAR_PLUS_TRIANGLE, "2star+triangle": cls.TWO_STAR_PLUS_TRIANGLE,
            "2_star+triangle": cls.TWO_STAR_PLUS_TRIANGLE, "twostarplustriangle": cls.TWO_STAR_PLUS_TRIANGLE,
            "combined": cls.TWO_STAR_PLUS_TRIANGLE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown motif kind {text!r}; expected one of "
                             f"{', '.join(k.value for k in cls)}") from None


@dataclass(frozen=True, eq=False)
class MotifAdjacency:
    """Symmetric integer motif matrix; sparse (CSR) when below 25% density."""

    m: Matrix
    kind: MotifKind

    @property
    def n(self) -> int:
        return self.m.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.m)

    def dense(self) -> np.ndarray:
        return self.m.toarray() if sp.issparse(self.m) else np.asarray(self.m)


def _zero_diagonal(m: Matrix) -> Matrix:
    if sp.issparse(m):
        m = m.tolil()
        m.setdiag(0)
        m = m.tocsr()
        m.eliminate_zeros()
        return m
    m = np.array(m, copy=True)
    np.fill_diagonal(m, 0)
    return m


def motif_matrix(adj: Matrix, kind: MotifKind) -> Matrix:
    """Motif matrix of a 0/1 symmetric adjacency; keeps dense/sparse type."""
    kind = MotifKind(kind)
    if sp.issparse(adj):
        a = sp.csr_matrix(adj, dtype=np.int64)
        a2 = a @ a
        if kind is MotifKind.EDGE:
            return _zero_diagonal(a)
        if kind is MotifKind.TRIANGLE:
            return _zero_diagonal(a.multiply(a2).tocsr())
        deg = np.asarray(a.sum(axis=1)).ravel()
        # wedge: centre at i or j contributes d-1 each, centre elsewhere is (A^2)_ij
        rows, cols = a.nonzero()
        w = sp.csr_matrix((deg[rows] + deg[cols] - 2, (rows, cols)), shape=a.shape)
        two_star = _zero_diagonal((w + a2).tocsr())
        if kind is MotifKind.TWO_STAR:
            return two_star
        return _zero_diagonal((two_star + a.multiply(a2)).tocsr())

    a = np.asarray(adj, dtype=np.int64)
    if kind is MotifKind.EDGE:
        return _zero_diagonal(a)
    a2 = a @ a
    if kind is MotifKind.TRIANGLE:
        return _zero_diagonal(a * a2)
    deg = a.sum(axis=1)
    two_star = a * (deg[:, None] + deg[None, :] - 2) + a2
    if kind is MotifKind.TWO_STAR:
        return _zero_diagonal(two_star)
    return _zero_diagonal(two_star + a * a2)


def motif_adjacency(g: Graph, kind: MotifKind) -> MotifAdjacency:
    density = 2 * g.num_edges / max(1, g.n * g.n)
    if density < SPARSE_DENSITY and g.n > 1:
        m = motif_matrix(g.sparse_adjacency(), kind)
        if m.nnz >= SPARSE_DENSITY * g.n * g.n:
            m = m.toarray()
    else:
        m = motif_matrix(g.adjacency().astype(np.int64), kind)
    return MotifAdjacency(m, MotifKind(kind))


def binarize(adj: Matrix) -> np.ndarray:
    """0/1 simple-graph adjacency from a weighted one (entry > 0 is an edge)."""
    a = adj.toarray() if sp.issparse(adj) else np.asarray(adj)
    out = (a > 0).astype(np.int64)
    np.fill_diagonal(out, 0)
    return out


def normalize_motif(m) -> np.ndarray:
    """``D^-1/2 (M + I) D^-1/2`` with ``D`` the row sums of ``M + I``."""
    if isinstance(m, MotifAdjacency):
        m = m.dense()
    elif sp.issparse(m):
        m = m.toarray()
    mt = np.asarray(m, dtype=np.float64) + np.eye(m.shape[0])
    d = mt.sum(axis=1) ** -0.5
    return d[:, None] * mt * d[None, :]


# --- enumeration oracle -----------------------------------------------------

@dataclass(frozen=True)
class Pattern:
    """Connected pattern graph on ``k`` nodes, given as an edge list."""

    k: int
    edges: tuple[tuple[int, int], ...]


EDGE_PATTERN = Pattern(2, ((0, 1),))
WEDGE = Pattern(3, ((0, 1), (0, 2)))
TRIANGLE = Pattern(3, ((0, 1), (1, 2), (0, 2)))
PATH4 = Pattern(4, ((0, 1), (1, 2), (2, 3)))
STAR4 = Pattern(4, ((0, 1), (0, 2), (0, 3)))
CYCLE4 = Pattern(4, ((0, 1), (1, 2), (2, 3), (0, 3)))
CLIQUE4 = Pattern(4, ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)))

KIND_PATTERNS = {
    MotifKind.EDGE: (EDGE_PATTERN,),
    MotifKind.TWO_STAR: (WEDGE,),
    MotifKind.TRIANGLE: (TRIANGLE,),
    MotifKind.TWO_STAR_PLUS_TRIANGLE: (WEDGE, TRIANGLE),
}


def _is_connected(p: Pattern) -> bool:
    seen, stack = {0}, [0]
    while stack:
        u = stack.pop()
        for a, b in p.edges:
            for x, y in ((a, b), (b, a)):
                if x == u and y not in seen:
                    seen.add(y)
                    stack.append(y)
    return len(seen) == p.k


def _embeddings(p: Pattern, adj: np.ndarray, nodes: Sequence[int]) -> int:
    """Number of bijections pattern -> nodes mapping every pattern edge onto an edge."""
    count = 0
    for img in itertools.permutations(nodes):
        if all(adj[img[a], img[b]] for a, b in p.edges):
            count += 1
    return count


def motif_oracle(g: Graph, pattern: Pattern) -> MotifAdjacency:
    """Count pattern instances by brute force over all k-subsets.

    A k-subset ``U`` holds ``emb(U) / |Aut(pattern)|`` distinct copies of the
    pattern as a (not necessarily induced) subgraph.
    """
    if not 2 <= pattern.k <= 4:
        raise ValueError(f"pattern must have 2..4 nodes, got {pattern.k}")
    if not _is_connected(pattern):
        raise ValueError("pattern is disconnected")
    if g.n > ORACLE_MAX_NODES:
        raise ValueError(f"graph has {g.n} nodes; oracle is limited to {ORACLE_MAX_NODES}")
    p_adj = np.zeros((pattern.k, pattern.k), dtype=bool)
    for a, b in pattern.edges:
        p_adj[a, b] = p_adj[b, a] = True
    n_aut = _embeddings(pattern, p_adj, range(pattern.k))

    adj = g.adjacency().astype(bool)
    m = np.zeros((g.n, g.n), dtype=np.int64)
    for subset in itertools.combinations(range(g.n), pattern.k):
        copies = _embeddings(pattern, adj, subset) // n_aut
        if copies:
            for i, j in itertools.combinations(subset, 2):
                m[i, j] += copies
                m[j, i] += copies
    return MotifAdjacency(m, None)


def oracle_for_kind(g: Graph, kind: MotifKind) -> np.ndarray:
    kind = MotifKind(kind)
    return sum(motif_oracle(g, p).dense() for p in KIND_PATTERNS[kind])
