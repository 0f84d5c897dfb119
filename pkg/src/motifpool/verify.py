"""Self-check suites run by ``motifpool verify``.

Each suite returns a :class:`SuiteResult` holding named metrics and an
overall ``ok`` flag.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Value
from .autoencoder import ReconModel, train_recon
from .graph import Dataset, Graph, make_grid, make_ring, make_triangle_dataset
from .gradcheck import KinkError, check_gradients
from .layers import GCNLayer, propagation_matrix
from .model import Channel, GraphClassifier, ModelConfig
from .motifs import MotifKind, motif_adjacency, oracle_for_kind
from .pooling import cluster_coarsen, mincut_losses
from .train import evaluate, graph_loss, run_epoch


@dataclass
class SuiteResult:
    name: str
    ok: bool
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def lines(self) -> list[str]:
        out = [f"{self.name}: {'PASS' if self.ok else 'FAIL'}"]
        out += [f"  {k} = {v}" for k, v in self.metrics.items()]
        return out


def random_graph(rng: np.random.Generator, n: int, p: float, d: int = 1) -> Graph:
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    edges = list(zip(iu[0][keep].tolist(), iu[1][keep].tolist()))
    return Graph.from_edges(n, edges, rng.normal(size=(n, d)))


def random_simplex(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return rng.dirichlet(np.full(k, 0.5), size=n)


def motif_oracle_suite(trials: int = 200, max_n: int = 12, seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    mismatches = []
    for t in range(trials):
        n = int(rng.integers(2, max_n + 1))
        p = (0.2, 0.5, 0.8)[t % 3]
        g = random_graph(rng, n, p)
        for kind in MotifKind:
            if not np.array_equal(motif_adjacency(g, kind).dense(), oracle_for_kind(g, kind)):
                mismatches.append((t, kind.value))
    secs = time.perf_counter() - start
    return SuiteResult("motif-oracle", not mismatches,
                       {"trials": trials, "kinds": len(MotifKind), "mismatches": len(mismatches)}, secs)


def op_cases(rng: np.random.Generator) -> dict[str, tuple[Callable[[], Value], list[Value]]]:
    """One scalar-valued probe per autodiff op, on random 3x4-ish inputs."""

    def leaf(*shape, positive=False):
        data = rng.uniform(0.2, 1.0, size=shape) if positive else rng.normal(size=shape)
        return Value(data, requires_grad=True)

    def probe(out: Value) -> Value:
        # contract with fixed random weights so every output entry matters
        w = np.random.default_rng(7).normal(size=out.shape)
        return ad.sum(ad.hadamard(out, Value(w)))

    a, b, c = leaf(3, 4), leaf(3, 4), leaf(4, 3)
    row, col, sq = leaf(1, 4), leaf(3, 1), leaf(4, 4)
    s = leaf(1, 1, positive=True)
    logits = leaf(1, 5)
    probs = Value(rng.uniform(0.1, 0.9, size=(3, 4)), requires_grad=True)
    target = (rng.random((3, 4)) < 0.5).astype(float)
    idx = np.array([2, 0, 2])
    return {
        "matmul": (lambda: probe(ad.matmul(a, c)), [a, c]),
        "add": (lambda: probe(ad.add(a, b)), [a, b]),
        "add_row": (lambda: probe(ad.add(a, row)), [a, row]),
        "sub": (lambda: probe(ad.sub(a, b)), [a, b]),
        "hadamard": (lambda: probe(ad.hadamard(a, b)), [a, b]),
        "scale_rows": (lambda: probe(ad.scale_rows(a, col)), [a, col]),
        "scalar_mul": (lambda: probe(ad.scalar_mul(a, -1.7)), [a]),
        "div": (lambda: probe(ad.div(a, s)), [a, s]),
        "transpose": (lambda: probe(ad.transpose(a)), [a]),
        "reshape": (lambda: probe(ad.reshape(a, 2, 6)), [a]),
        "concat_cols": (lambda: probe(ad.concat_cols([a, b])), [a, b]),
        "take_rows": (lambda: probe(ad.take_rows(a, idx)), [a]),
        "row_mean": (lambda: probe(ad.row_mean(a)), [a]),
        "row_max": (lambda: probe(ad.row_max(a)), [a]),
        "sum": (lambda: ad.scalar_mul(ad.sum(a), 1.3), [a]),
        "trace": (lambda: ad.trace(ad.matmul(ad.transpose(a), b)), [a, b]),
        "frobenius_norm": (lambda: ad.frobenius_norm(a), [a]),
        "relu": (lambda: probe(ad.relu(a)), [a]),
        "tanh": (lambda: probe(ad.tanh(a)), [a]),
        "sigmoid": (lambda: probe(ad.sigmoid(a)), [a]),
        "softmax_rows": (lambda: probe(ad.softmax_rows(a)), [a]),
        "log_softmax_rows": (lambda: probe(ad.log_softmax_rows(a)), [a]),
        "cross_entropy": (lambda: ad.cross_entropy(logits, 3), [logits]),
        "binary_cross_entropy": (lambda: ad.binary_cross_entropy(probs, target), [probs]),
        "mse": (lambda: ad.mse(a, target), [a]),
        "square_matmul_chain": (lambda: probe(ad.matmul(sq, ad.tanh(sq))), [sq]),
    }


GRADCHECK_GRAPH_EDGES = ((0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5))


def model_gradcheck(channel: Channel, seed: int, max_resample: int = 10) -> dict[str, float]:
    """Per-tensor relative error of the full loss on a 6-node two-triangle graph.

    A draw that lands on a relu/max/top-k kink is resampled.
    """
    for attempt in range(max_resample):
        rng = np.random.default_rng([seed, attempt])
        g = Graph.from_edges(6, GRADCHECK_GRAPH_EDGES, rng.normal(size=(6, 3)), label=1)
        cfg = ModelConfig(channel=channel, hidden_dim=4, alpha=0.5, motif=MotifKind.TRIANGLE)
        model = GraphClassifier(cfg, 3, 2, seed=int(rng.integers(2**31)), ks=(3, 2, 2))
        try:
            return check_gradients(lambda: graph_loss(model, g), model.parameters())
        except KinkError:
            continue
    raise KinkError(f"no kink-free draw in {max_resample} attempts")


def gradcheck_suite(seed: int = 0, tol: float = 1e-4) -> SuiteResult:
    start = time.perf_counter()
    metrics = {}
    for name, (fn, params) in op_cases(np.random.default_rng(seed)).items():
        metrics[f"op.{name}"] = max(check_gradients(fn, params).values())
    for channel in Channel:
        metrics[f"model.{channel.value}"] = max(model_gradcheck(channel, seed).values())
    ok = all(v < tol for v in metrics.values())
    return SuiteResult("gradcheck", ok, metrics, time.perf_counter() - start)


def two_triangles() -> tuple[np.ndarray, np.ndarray]:
    """Triangle motif matrix of two disjoint triangles and the hard component assignment."""
    g = Graph.from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    m = motif_adjacency(g, MotifKind.TRIANGLE).dense().astype(float)
    s = np.zeros((6, 2))
    s[:3, 0] = 1.0
    s[3:, 1] = 1.0
    return m, s


def loss_bounds_suite(trials: int = 1000, seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    lc_min, lc_max, lo_min, lo_max = math.inf, -math.inf, math.inf, -math.inf
    for _ in range(trials):
        n, k = int(rng.integers(2, 16)), int(rng.integers(2, 6))
        w = rng.random((n, n)) * (rng.random((n, n)) < 0.5)
        m = np.triu(w, 1)
        m = m + m.T
        l_c, l_o = mincut_losses(Value(random_simplex(rng, n, k)), m)
        lc_min, lc_max = min(lc_min, l_c.item()), max(lc_max, l_c.item())
        lo_min, lo_max = min(lo_min, l_o.item()), max(lo_max, l_o.item())
    m, s = two_triangles()
    l_c, l_o = mincut_losses(Value(s), m)
    metrics = {"lc_min": lc_min, "lc_max": lc_max, "lo_min": lo_min, "lo_max": lo_max,
               "perfect_lc": l_c.item(), "perfect_lo": l_o.item()}
    ok = (lc_min >= -1 - 1e-12 and lc_max <= 1e-12 and lo_min >= -1e-12 and lo_max <= 2 + 1e-12
          and abs(l_c.item() + 1) <= 1e-12 and abs(l_o.item()) <= 1e-12)
    return SuiteResult("loss-bounds", ok, metrics, time.perf_counter() - start)


def permutation_suite(trials: int = 20, seed: int = 0) -> SuiteResult:
    """Equivariance of motif matrices and GCN, invariance of the selection-channel logits."""
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    motif_err = gcn_err = logit_err = 0.0
    for _ in range(trials):
        n = int(rng.integers(4, 11))
        g = random_graph(rng, n, 0.4, d=3)
        perm = rng.permutation(n)
        pg = g.permuted(perm)
        for kind in MotifKind:
            m = motif_adjacency(g, kind).dense()
            pm = motif_adjacency(pg, kind).dense()
            motif_err = max(motif_err, float(np.abs(pm - m[np.ix_(perm, perm)]).max()))
        layer = GCNLayer(3, 5, rng, activation="none")
        out = layer(propagation_matrix(g.adjacency()), Value(g.features)).data
        pout = layer(propagation_matrix(pg.adjacency()), Value(pg.features)).data
        gcn_err = max(gcn_err, float(np.abs(pout - out[perm]).max()))
        cfg = ModelConfig(channel=Channel.SELECTION, hidden_dim=8, alpha=1.0)
        model = GraphClassifier(cfg, 3, 2, seed=int(rng.integers(2**31)))
        a, _ = model(g)
        b, _ = model(pg)
        logit_err = max(logit_err, float(np.abs(a.data - b.data).max()))
    metrics = {"motif_max_err": motif_err, "gcn_max_err": gcn_err, "selection_logit_max_err": logit_err}
    ok = motif_err == 0 and gcn_err < 1e-12 and logit_err < 1e-9
    return SuiteResult("permutation", ok, metrics, time.perf_counter() - start)


def separable_split(seed: int = 0) -> tuple[Dataset, list[Graph]]:
    """20 training graphs (10 per class) and a disjoint 10-graph held-out set."""
    full = make_triangle_dataset(15, seed=seed)
    return Dataset(full.graphs[:20], 2, full.feature_dim, "triangles-train"), list(full.graphs[20:])


def overfit_run(channel: Channel, seed: int = 0, max_epochs: int = 500, hidden_dim: int = 128,
                lr: float = 1e-3, settle: int = 10) -> dict:
    """Train on the separable set; stop once 100% training accuracy has held for ``settle`` epochs.

    The stopping rule looks at training accuracy only; the held-out set is
    evaluated once, after training ends.
    """
    train_ds, held_out = separable_split(seed)
    cfg = ModelConfig(channel=channel, motif=MotifKind.TRIANGLE, hidden_dim=hidden_dim, alpha=0.5)
    model = GraphClassifier(cfg, train_ds.feature_dim, 2, seed=seed)
    opt = Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng([seed, 1])
    first_hit, streak, train_acc, epoch = None, 0, 0.0, 0
    for epoch in range(1, max_epochs + 1):
        run_epoch(model, opt, train_ds.graphs, rng, epoch)
        train_acc = evaluate(model, train_ds.graphs)
        streak = streak + 1 if train_acc == 1.0 else 0
        if streak and first_hit is None:
            first_hit = epoch
        if streak >= settle:
            break
    return {"epochs_to_fit": first_hit, "epochs_run": epoch, "train_accuracy": train_acc,
            "test_accuracy": evaluate(model, held_out)}


def overfit_suite(seed: int = 0) -> SuiteResult:
    start = time.perf_counter()
    metrics = {}
    for channel in Channel:
        for k, v in overfit_run(channel, seed).items():
            metrics[f"{channel.value}.{k}"] = v
    ok = all(metrics[f"{c.value}.epochs_to_fit"] is not None for c in Channel)
    ok = ok and metrics["combined.test_accuracy"] == 1.0
    return SuiteResult("overfit", ok, metrics, time.perf_counter() - start)


def recon_run(target: str, channel: Channel, steps: int = 3000, seed: int = 0, hidden_dim: int = 16,
              lr: float = 1e-3):
    g = make_ring(12) if target == "ring" else make_grid(3, 4)
    cfg = ModelConfig(channel=channel, motif=MotifKind.TRIANGLE, hidden_dim=hidden_dim, alpha=0.5)
    model = ReconModel(cfg, g.n, g.feature_dim, seed=seed)
    return train_recon(model, g, steps=steps, lr=lr)


def recon_suite(steps: int = 3000, seed: int = 0) -> SuiteResult:
    start = time.perf_counter()
    metrics = {}
    ok = True
    for target in ("ring", "grid"):
        for channel in (Channel.SELECTION, Channel.CLUSTERING):
            r = recon_run(target, channel, steps, seed)
            key = f"{target}.{channel.value}"
            metrics[f"{key}.edge_accuracy"] = r.edge_accuracy
            metrics[f"{key}.mse_improvement"] = r.initial_attr_mse / max(r.attr_mse, 1e-300)
            ok = ok and r.edge_accuracy >= 0.99 and r.initial_attr_mse >= 10 * r.attr_mse
    return SuiteResult("recon", ok, metrics, time.perf_counter() - start)


def conservation_check(trials: int = 100, seed: int = 0) -> float:
    """Worst relative gap between total coarsened weight and total motif weight."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n, k = int(rng.integers(3, 20)), int(rng.integers(1, 6))
        g = random_graph(rng, n, 0.5)
        m = motif_adjacency(g, MotifKind.TWO_STAR_PLUS_TRIANGLE).dense().astype(float)
        total = m.sum()
        if total == 0:
            continue
        res = cluster_coarsen(Value(random_simplex(rng, n, k)), m, Value(g.features))
        worst = max(worst, abs(res.adj_out.sum() - total) / total)
    return worst


SUITES = {
    "motif-oracle": motif_oracle_suite,
    "gradcheck": gradcheck_suite,
    "loss-bounds": loss_bounds_suite,
    "permutation": permutation_suite,
    "overfit": overfit_suite,
    "recon": recon_suite,
}
