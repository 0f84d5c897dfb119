"""Graph containers, TUDataset ingestion, splits and synthetic generators."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


class DatasetFormatError(ValueError):
    """Raised when TUDataset flat files are missing or malformed."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph with dense node features.

    Edges are stored once as ``(i, j)`` with ``i < j``.  Instances hash by
    identity so they can key per-graph caches.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    features: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"graph needs at least one node, got n={self.n}")
        canon = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) outside node range [0, {self.n})")
            pair = (min(i, j), max(i, j))
            if pair in canon:
                raise ValueError(f"duplicate edge {pair}")
            canon.add(pair)
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1)
        if feats.shape[0] != self.n:
            raise ValueError(f"features have {feats.shape[0]} rows for {self.n} nodes")
        if not np.all(np.isfinite(feats)):
            raise ValueError("non-finite node features")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], features=None, label=None) -> "Graph":
        """Build a graph, merging duplicate and reversed pairs."""
        pairs = {(min(i, j), max(i, j)) for i, j in edges}
        if features is None:
            features = np.ones((n, 1))
        return cls(n, tuple(sorted(pairs)), features, label)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        if self.edges:
            e = np.asarray(self.edges)
            a[e[:, 0], e[:, 1]] = 1.0
            a[e[:, 1], e[:, 0]] = 1.0
        return a

    def sparse_adjacency(self):
        import scipy.sparse as sp

        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(len(rows), dtype=np.int64)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def with_features(self, features) -> "Graph":
        return Graph(self.n, self.edges, features, self.label)

    def with_label(self, label) -> "Graph":
        return Graph(self.n, self.edges, self.features, label)

    def permuted(self, perm: Sequence[int]) -> "Graph":
        """Relabel nodes so that old node ``perm[k]`` becomes new node ``k``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        edges = [(int(inv[i]), int(inv[j])) for i, j in self.edges]
        return Graph.from_edges(self.n, edges, self.features[perm], self.label)


@dataclass(frozen=True)
class Dataset:
    graphs: tuple[Graph, ...]
    num_classes: int
    feature_dim: int
    name: str = "dataset"

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if self.num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.num_classes}")
        for k, g in enumerate(self.graphs):
            if g.feature_dim != self.feature_dim:
                raise ValueError(f"graph {k} has feature dim {g.feature_dim}, expected {self.feature_dim}")
            if g.label is None or not 0 <= g.label < self.num_classes:
                raise ValueError(f"graph {k} label {g.label} outside [0, {self.num_classes})")

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, idx):
        return self.graphs[idx]

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    @property
    def avg_nodes(self) -> float:
        return float(np.mean([g.n for g in self.graphs]))


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise ValueError(f"fractions must be three non-negative reals, got {self.fractions}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {sum(self.fractions)}")


def degree_onehot(g: Graph, max_degree: Optional[int] = None) -> np.ndarray:
    """One-hot degree features over ``max_degree + 1`` bins, clamping at the cap."""
    deg = g.degrees()
    if max_degree is None:
        max_degree = max(1, int(deg.max(initial=0)))
    if max_degree < 1:
        raise ValueError(f"max_degree must be >= 1, got {max_degree}")
    out = np.zeros((g.n, max_degree + 1))
    out[np.arange(g.n), np.minimum(deg, max_degree)] = 1.0
    return out


def split(ds, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded train/val/test partition of ``range(len(ds))``."""
    n = ds if isinstance(ds, int) else len(ds)
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_train = math.floor(spec.fractions[0] * n + 1e-9)
    n_val = math.floor(spec.fractions[1] * n + 1e-9)
    parts = perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
    for part_name, part in zip(("train", "val", "test"), parts):
        if len(part) == 0:
            raise ValueError(f"{part_name} split is empty for {n} graphs and fractions {spec.fractions}")
    return parts


# --- TUDataset flat files ---------------------------------------------------

def _read_lines(path: Path) -> list[str]:
    with open(path, "r", newline=None) as fh:
        return [ln.strip() for ln in fh if ln.strip()]


def _read_ints(path: Path) -> list[list[int]]:
    rows = []
    for lineno, ln in enumerate(_read_lines(path), 1):
        try:
            rows.append([int(tok) for tok in ln.split(",")])
        except ValueError:
            raise DatasetFormatError(f"{path.name}:{lineno}: non-integer entry {ln!r}") from None
    return rows


def load_tudataset(dir_path, name: str) -> Dataset:
    """Load a TUDataset-format directory (``{name}_A.txt`` and friends)."""
    root = Path(dir_path)

    def req(suffix):
        p = root / f"{name}_{suffix}.txt"
        if not p.is_file():
            raise DatasetFormatError(f"missing mandatory file {p}")
        return p

    a_path, ind_path, lab_path = req("A"), req("graph_indicator"), req("graph_labels")
    indicator = np.array([r[0] for r in _read_ints(ind_path)], dtype=np.int64)
    n_total = len(indicator)
    graph_ids = np.unique(indicator)
    raw_labels = [r[0] for r in _read_ints(lab_path)]
    if len(raw_labels) != len(graph_ids):
        raise DatasetFormatError(
            f"{lab_path.name} has {len(raw_labels)} labels for {len(graph_ids)} graphs")

    # position of every node inside its own graph
    gid_index = {int(gid): k for k, gid in enumerate(graph_ids)}
    local = np.empty(n_total, dtype=np.int64)
    counts = np.zeros(len(graph_ids), dtype=np.int64)
    for v, gid in enumerate(indicator):
        k = gid_index[int(gid)]
        local[v] = counts[k]
        counts[k] += 1

    edge_sets: list[set] = [set() for _ in graph_ids]
    for lineno, row in enumerate(_read_ints(a_path), 1):
        if len(row) != 2:
            raise DatasetFormatError(f"{a_path.name}:{lineno}: expected two endpoints, got {row}")
        u, v = row[0] - 1, row[1] - 1
        if not (0 <= u < n_total and 0 <= v < n_total):
            raise DatasetFormatError(f"{a_path.name}:{lineno}: node outside indicator range 1..{n_total}")
        if indicator[u] != indicator[v]:
            raise DatasetFormatError(f"{a_path.name}:{lineno}: edge crosses graphs")
        if u == v:
            continue
        i, j = local[u], local[v]
        edge_sets[gid_index[int(indicator[u])]].add((min(i, j), max(i, j)))

    blocks = []
    attr_path = root / f"{name}_node_attributes.txt"
    if attr_path.is_file():
        attrs = []
        for lineno, ln in enumerate(_read_lines(attr_path), 1):
            try:
                attrs.append([float(tok) for tok in ln.split(",")])
            except ValueError:
                raise DatasetFormatError(f"{attr_path.name}:{lineno}: non-numeric attribute") from None
        attrs = np.array(attrs, dtype=np.float64)
        if attrs.shape[0] != n_total:
            raise DatasetFormatError(f"{attr_path.name} has {attrs.shape[0]} rows for {n_total} nodes")
        blocks.append(attrs)
    nl_path = root / f"{name}_node_labels.txt"
    if nl_path.is_file():
        node_labels = np.array([r[0] for r in _read_ints(nl_path)], dtype=np.int64)
        if len(node_labels) != n_total:
            raise DatasetFormatError(f"{nl_path.name} has {len(node_labels)} rows for {n_total} nodes")
        values, codes = np.unique(node_labels, return_inverse=True)
        onehot = np.zeros((n_total, len(values)))
        onehot[np.arange(n_total), codes] = 1.0
        blocks.append(onehot)

    classes = sorted(set(raw_labels))
    remap = {c: k for k, c in enumerate(classes)}
    graphs = []
    for k, gid in enumerate(graph_ids):
        mask = indicator == gid
        n = int(counts[k])
        feats = np.hstack([b[mask] for b in blocks]) if blocks else np.zeros((n, 0))
        graphs.append(Graph(n, tuple(sorted(edge_sets[k])), feats, remap[raw_labels[k]]))

    if not blocks:
        cap = max(1, max(int(g.degrees().max(initial=0)) for g in graphs))
        graphs = [g.with_features(degree_onehot(g, cap)) for g in graphs]
    return Dataset(tuple(graphs), max(2, len(classes)), graphs[0].feature_dim, name)


def write_tudataset(ds: Dataset, dir_path, name: Optional[str] = None) -> Path:
    """Write ``ds`` in TUDataset format; features go to ``node_attributes``."""
    name = name or ds.name
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    offset = 0
    a_lines, ind_lines, attr_lines = [], [], []
    for k, g in enumerate(ds.graphs, 1):
        for i, j in g.edges:
            a_lines.append(f"{i + offset + 1}, {j + offset + 1}")
            a_lines.append(f"{j + offset + 1}, {i + offset + 1}")
        ind_lines.extend([str(k)] * g.n)
        attr_lines.extend(", ".join(repr(float(v)) for v in row) for row in g.features)
        offset += g.n
    files = {
        "A": a_lines,
        "graph_indicator": ind_lines,
        "graph_labels": [str(g.label) for g in ds.graphs],
        "node_attributes": attr_lines,
    }
    for suffix, lines in files.items():
        (root / f"{name}_{suffix}.txt").write_text("".join(ln + "\n" for ln in lines))
    return root


# --- synthetic graphs -------------------------------------------------------

def make_ring(n: int) -> Graph:
    """Cycle graph with unit-circle coordinates as features."""
    if n < 3:
        raise ValueError(f"ring needs n >= 3, got {n}")
    t = 2 * np.pi * np.arange(n) / n
    feats = np.column_stack([np.cos(t), np.sin(t)])
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)], feats)


def make_grid(rows: int, cols: int) -> Graph:
    """4-neighbour lattice with coordinates scaled into [0, 1]."""
    if rows < 2 or cols < 2:
        raise ValueError(f"grid needs rows, cols >= 2, got {rows}x{cols}")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    rr, cc = np.divmod(np.arange(rows * cols), cols)
    feats = np.column_stack([rr / (rows - 1), cc / (cols - 1)])
    return Graph.from_edges(rows * cols, edges, feats)


def count_triangles(g: Graph) -> int:
    a = g.adjacency()
    return int(round(np.trace(a @ a @ a) / 6))


def _planted_triangle_graph(rng: np.random.Generator, n: int, n_triangles: int):
    import networkx as nx

    while True:
        G = nx.Graph()
        G.add_nodes_from(range(n))
        nodes = rng.permutation(n)
        for t in range(n_triangles):
            a, b, c = nodes[3 * t:3 * t + 3]
            G.add_edges_from([(a, b), (b, c), (a, c)])
        # random spanning tree over the remaining structure keeps it connected
        order = rng.permutation(n)
        for k in range(1, n):
            G.add_edge(int(order[k]), int(order[rng.integers(k)]))
        if nx.is_connected(G):
            return G


def _remove_triangles(G, rng: np.random.Generator, max_tries: int = 2000):
    """Degree-preserving edge swaps until the graph is triangle free, or None."""
    import networkx as nx

    H = G.copy()
    tri = sum(nx.triangles(H).values()) // 3
    for _ in range(max_tries):
        if tri == 0 and nx.is_connected(H):
            return H
        trial = H.copy()
        nx.double_edge_swap(trial, nswap=1, max_tries=100, seed=int(rng.integers(2**31)))
        t2 = sum(nx.triangles(trial).values()) // 3
        if t2 <= tri:
            H, tri = trial, t2
    return None


def make_triangle_dataset(n_per_class: int = 10, seed: int = 0, n_range=(10, 14),
                          name: str = "triangles") -> Dataset:
    """Triangle-rich (label 1) vs triangle-free (label 0) graphs.

    Every triangle-free graph is produced from a triangle-rich one by
    degree-preserving edge swaps, so the two classes share degree sequences
    and differ only in triangle structure.
    """
    rng = np.random.default_rng(seed)
    rich, free = [], []
    while len(rich) < n_per_class:
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        G = _planted_triangle_graph(rng, n, n_triangles=max(2, n // 4))
        H = _remove_triangles(G, rng)
        if H is None:
            continue
        rich.append(Graph.from_edges(n, G.edges(), label=1))
        free.append(Graph.from_edges(n, H.edges(), label=0))
    graphs = [g for pair in zip(rich, free) for g in pair]
    cap = max(int(g.degrees().max()) for g in graphs)
    graphs = [g.with_features(degree_onehot(g, cap)) for g in graphs]
    assert all((count_triangles(g) > 0) == bool(g.label) for g in graphs)
    return Dataset(tuple(graphs), 2, graphs[0].feature_dim, name)
