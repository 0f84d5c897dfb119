"""Training loop, early stopping, evaluation and experiment config files."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .autodiff import Adam, backward
from .graph import Dataset, Graph, SplitSpec, split
from .model import GraphClassifier, ModelConfig, cluster_schedule, supervised_loss

log = logging.getLogger(__name__)

CONFIG_KEYS = ("channel", "motif", "hidden_dim", "blocks", "alpha", "clusters", "lr", "weight_decay",
               "patience", "max_epochs", "seeds", "dataset_dir", "dataset_name")


class EarlyStopping:
    """Stop once the monitored loss has not strictly improved for ``patience`` updates."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.bad_epochs = 0
        self.epoch = 0

    def update(self, loss: float) -> bool:
        """Record one epoch; returns True when it is the new best."""
        self.epoch += 1
        if loss < self.best:
            self.best, self.best_epoch, self.bad_epochs = loss, self.epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass(frozen=True)
class SeedResult:
    seed: int
    test_accuracy: float
    best_val_loss: float
    best_epoch: int
    epochs_run: int


@dataclass(frozen=True)
class TrainReport:
    results: tuple[SeedResult, ...]
    wall_clock: float = field(default=0.0, compare=False)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.test_accuracy for r in self.results])

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self) -> float:
        return float(self.accuracies.std())

    def to_tsv(self) -> str:
        """Machine-readable form; timing is left out so reruns are byte-identical."""
        lines = ["seed\ttest_accuracy\tbest_val_loss\tbest_epoch\tepochs_run"]
        for r in self.results:
            lines.append(f"{r.seed}\t{r.test_accuracy!r}\t{r.best_val_loss!r}\t{r.best_epoch}\t{r.epochs_run}")
        lines.append(f"mean\t{self.mean!r}")
        lines.append(f"std\t{self.std!r}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        rows = [f"{'seed':>6} {'test acc':>9} {'best val':>10} {'epoch':>6}"]
        for r in self.results:
            rows.append(f"{r.seed:>6} {r.test_accuracy:>9.4f} {r.best_val_loss:>10.4f} {r.best_epoch:>6}")
        rows.append(f"accuracy {100 * self.mean:.2f} +- {100 * self.std:.2f} over {len(self.results)} seeds"
                    f" ({self.wall_clock:.1f}s)")
        return "\n".join(rows)


def graph_loss(model: GraphClassifier, g: Graph):
    logits, aux = model(g)
    return supervised_loss(logits, g.label) + aux


def run_epoch(model: GraphClassifier, opt: Adam, graphs: Sequence[Graph], rng: np.random.Generator,
              epoch: int = 0) -> float:
    """One pass, one Adam step per graph in seeded shuffled order; returns mean loss."""
    total = 0.0
    for i in rng.permutation(len(graphs)):
        loss = graph_loss(model, graphs[i])
        value = loss.item()
        if not np.isfinite(value):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}, graph {i}")
        opt.zero_grad()
        backward(loss)
        opt.step()
        total += value
    return total / max(1, len(graphs))


def mean_loss(model: GraphClassifier, graphs: Sequence[Graph]) -> float:
    return float(np.mean([graph_loss(model, g).item() for g in graphs]))


def evaluate(model: GraphClassifier, graphs: Sequence[Graph]) -> float:
    """Fraction of graphs whose argmax logit (lowest index on ties) matches the label."""
    if len(graphs) == 0:
        raise ValueError("cannot evaluate on an empty set of graphs")
    return float(np.mean([model.predict(g) == g.label for g in graphs]))


def build_model(ds: Dataset, cfg: ModelConfig, seed: int) -> GraphClassifier:
    return GraphClassifier(cfg, ds.feature_dim, ds.num_classes, seed=seed,
                           ks=cluster_schedule(cfg, ds.avg_nodes))


def fit_seed(model: GraphClassifier, ds: Dataset, cfg: ModelConfig, seed: int,
             fractions=(0.8, 0.1, 0.1)) -> SeedResult:
    """Train one model on the seed's split, restore the best-validation weights, test it."""
    tr, va, te = split(ds, SplitSpec(seed, tuple(fractions)))
    train_g = [ds[i] for i in tr]
    val_g = [ds[i] for i in va]
    test_g = [ds[i] for i in te]
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng([seed, 1])
    stopper = EarlyStopping(cfg.patience)
    best = [p.data.copy() for p in params]
    for epoch in range(1, cfg.max_epochs + 1):
        train_loss = run_epoch(model, opt, train_g, rng, epoch)
        val_loss = mean_loss(model, val_g)
        if stopper.update(val_loss):
            best = [p.data.copy() for p in params]
        log.info("seed %d epoch %d train_loss %.6f val_loss %.6f", seed, epoch, train_loss, val_loss)
        if stopper.should_stop:
            break
    for p, b in zip(params, best):
        p.data[...] = b
    return SeedResult(seed, evaluate(model, test_g), stopper.best, stopper.best_epoch, stopper.epoch)


def train(ds: Dataset, cfg: ModelConfig, fractions=(0.8, 0.1, 0.1), checkpoint_dir=None) -> TrainReport:
    """Fresh model per seed; results are aggregated in seed order."""
    from .autodiff import save_parameters

    start = time.perf_counter()
    results = []
    for seed in cfg.seeds:
        model = build_model(ds, cfg, seed)
        results.append(fit_seed(model, ds, cfg, seed, fractions))
        if checkpoint_dir is not None:
            save_parameters(Path(checkpoint_dir) / f"params_seed{seed}.npz", model.parameters())
    return TrainReport(tuple(results), time.perf_counter() - start)


# --- config files -----------------------------------------------------------

def parse_config(text: str) -> ModelConfig:
    """Parse flat ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = val
    kw = {}
    for key, val in values.items():
        if key in ("hidden_dim", "blocks", "patience", "max_epochs"):
            kw[key] = int(val)
        elif key in ("alpha", "lr", "weight_decay"):
            kw[key] = _parse_float(val)
        elif key in ("clusters", "seeds"):
            kw[key] = tuple(int(v) for v in val.replace(" ", "").split(",") if v)
        else:
            kw[key] = val
    return ModelConfig(**kw)


def _parse_float(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def format_config(cfg: ModelConfig) -> str:
    lines = []
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        if isinstance(val, tuple):
            val = ",".join(str(v) for v in val)
        elif hasattr(val, "value"):
            val = val.value
        elif val is None:
            continue
        lines.append(f"{f.name}={val}")
    return "\n".join(lines) + "\n"


def read_config(path) -> ModelConfig:
    return parse_config(Path(path).read_text())
