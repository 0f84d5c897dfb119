"""``motifpool`` command line.

Exit codes: 0 success, 1 user error (bad flags or files), 2 internal
invariant violation (oracle mismatch, non-finite loss, failed suite).
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

EXIT_OK, EXIT_USER, EXIT_INVARIANT = 0, 1, 2


class UserError(Exception):
    pass


class InvariantError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def _write_matrix(path: Path, m: np.ndarray, fmt: str = "int"):
    if fmt == "int":
        lines = [" ".join(str(int(v)) for v in row) for row in m]
    else:
        lines = [" ".join(repr(float(v)) for v in row) for row in m]
    path.write_text("".join(ln + "\n" for ln in lines))


def write_manifest(out: Path, files: Sequence[Path]) -> Path:
    """``manifest.tsv`` with the sha256 of every artifact, sorted by name."""
    rows = []
    for f in sorted(files, key=lambda p: p.name):
        rows.append(f"{f.relative_to(out)}\t{hashlib.sha256(f.read_bytes()).hexdigest()}")
    path = out / "manifest.tsv"
    path.write_text("".join(r + "\n" for r in rows))
    return path


def _print_config(args: argparse.Namespace, extra: Optional[str] = None):
    print(f"# motifpool {args.command}")
    for key, val in sorted(vars(args).items()):
        if key not in ("command", "func"):
            print(f"#   {key} = {val}")
    if extra:
        for line in extra.strip().splitlines():
            print(f"#   {line}")


def _load_dataset(dir_path: str, name: Optional[str]):
    from .graph import load_tudataset

    root = Path(dir_path)
    if name is None:
        hits = sorted(root.glob("*_graph_indicator.txt"))
        if len(hits) != 1:
            raise UserError(f"cannot infer dataset name in {root}; pass --name")
        name = hits[0].name[: -len("_graph_indicator.txt")]
    return load_tudataset(root, name)


# --- subcommands ------------------------------------------------------------

def cmd_motif(args) -> int:
    from . import motifs

    _print_config(args)
    kind = motifs.MotifKind.parse(args.kind)
    ds = _load_dataset(args.input, args.name)
    out = Path(args.out) if args.out else None
    files = []
    if out:
        out.mkdir(parents=True, exist_ok=True)
    mismatches = 0
    for k, g in enumerate(ds.graphs):
        m = motifs.motif_adjacency(g, kind).dense()
        if args.oracle:
            if g.n > motifs.ORACLE_MAX_NODES:
                raise UserError(f"graph {k} has {g.n} nodes, over the oracle limit {motifs.ORACLE_MAX_NODES}")
            if not np.array_equal(m, motifs.oracle_for_kind(g, kind)):
                mismatches += 1
                print(f"graph {k}: closed form disagrees with enumeration oracle", file=sys.stderr)
        if out:
            path = out / f"graph_{k:05d}.txt"
            _write_matrix(path, m)
            files.append(path)
    if out:
        write_manifest(out, files)
    print(f"{len(ds)} graphs, motif {kind.value}" + (f", oracle mismatches {mismatches}" if args.oracle else ""))
    if mismatches:
        raise InvariantError(f"motif oracle mismatch on {mismatches} graphs")
    return EXIT_OK


def _config_from_args(args):
    from .train import read_config

    cfg = read_config(args.config)
    if args.seed is not None:
        cfg.seeds = (args.seed,)
    if cfg.dataset_dir is None:
        raise UserError("config must set dataset_dir")
    base = Path(args.config).resolve().parent
    ddir = Path(cfg.dataset_dir)
    if not ddir.is_absolute():
        ddir = base / ddir
    return cfg, _load_dataset(str(ddir), cfg.dataset_name)


def cmd_train(args) -> int:
    from .train import format_config, train

    cfg, ds = _config_from_args(args)
    _print_config(args, format_config(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = train(ds, cfg, checkpoint_dir=out)
    (out / "report.tsv").write_text(report.to_tsv())
    (out / "config.cfg").write_text(format_config(cfg))
    print(report.to_table())
    files = [out / "report.tsv", out / "config.cfg"] + [out / f"params_seed{s}.npz" for s in cfg.seeds]
    write_manifest(out, files)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .autodiff import load_parameters
    from .graph import SplitSpec, split
    from .train import build_model, evaluate, format_config

    cfg, ds = _config_from_args(args)
    _print_config(args, format_config(cfg))
    seed = cfg.seeds[0]
    model = build_model(ds, cfg, seed)
    load_parameters(args.checkpoint, model.parameters())
    if args.split == "all":
        idx = np.arange(len(ds))
    else:
        parts = dict(zip(("train", "val", "test"), split(ds, SplitSpec(seed))))
        idx = parts[args.split]
    acc = evaluate(model, [ds[i] for i in idx])
    print(f"accuracy\t{acc!r}\tgraphs\t{len(idx)}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    from .autoencoder import ReconModel, threshold, train_recon
    from .graph import make_grid, make_ring
    from .model import ModelConfig

    _print_config(args)
    g = make_ring(args.n) if args.target == "ring" else make_grid(args.rows, args.cols)
    cfg = ModelConfig(channel=args.channel, motif=args.motif, hidden_dim=args.hidden_dim, alpha=args.alpha)
    model = ReconModel(cfg, g.n, g.feature_dim, seed=args.seed)
    rep = train_recon(model, g, steps=args.steps, lr=args.lr)
    a_hat, x_hat, _ = model.reconstruct(g)
    line = (f"edge_accuracy\t{rep.edge_accuracy!r}\tattr_mse\t{rep.attr_mse!r}\t"
            f"initial_attr_mse\t{rep.initial_attr_mse!r}\tsteps\t{rep.steps}")
    print(line)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = [out / "adjacency.txt", out / "coordinates.txt", out / "metrics.tsv"]
        _write_matrix(files[0], threshold(a_hat.data))
        _write_matrix(files[1], x_hat.data, fmt="float")
        files[2].write_text(line + "\n")
        write_manifest(out, files)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .graph import Dataset, make_grid, make_ring, make_triangle_dataset, write_tudataset

    _print_config(args)
    if args.kind == "triangles":
        ds = make_triangle_dataset(args.per_class, seed=args.seed, name=args.name)
        if not args.out:
            raise UserError("synth triangles needs --out")
        out = Path(args.out)
        write_tudataset(ds, out, args.name)
        write_manifest(out, sorted(out.glob(f"{args.name}_*.txt")))
        print(f"wrote {len(ds)} graphs to {out}")
        return EXIT_OK
    g = make_ring(args.n) if args.kind == "ring" else make_grid(args.rows, args.cols)
    edges = "".join(f"{i} {j}\n" for i, j in g.edges)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = [out / "edges.txt", out / "features.txt"]
        files[0].write_text(edges)
        _write_matrix(files[1], g.features, fmt="float")
        write_manifest(out, files)
    else:
        sys.stdout.write(edges)
    print(f"# {args.kind}: {g.n} nodes, {g.num_edges} edges")
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verify

    _print_config(args)
    names = list(verify.SUITES) if args.suite == "all" else [args.suite]
    failed = []
    for name in names:
        if name == "motif-oracle":
            res = verify.motif_oracle_suite(trials=args.trials, max_n=args.max_n, seed=args.seed)
        elif name == "recon":
            res = verify.recon_suite(steps=args.steps, seed=args.seed)
        else:
            res = verify.SUITES[name](seed=args.seed)
        print("\n".join(res.lines()))
        if not res.ok:
            failed.append(name)
    if failed:
        raise InvariantError(f"suites failed: {', '.join(failed)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    from .verify import SUITES

    p = _Parser(prog="motifpool", description="Motif-based hierarchical graph pooling.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("motif", help="compute motif adjacency matrices for a TUDataset directory")
    m.add_argument("--kind", required=True, help="edge, two_star, triangle or two_star+triangle")
    m.add_argument("--in", dest="input", required=True, help="TUDataset directory")
    m.add_argument("--name", help="dataset name (inferred when the directory holds one dataset)")
    m.add_argument("--out", help="directory for one matrix file per graph")
    m.add_argument("--oracle", action="store_true", help="cross-check against brute-force enumeration")
    m.set_defaults(func=cmd_motif)

    t = sub.add_parser("train", help="train and test over the configured seeds")
    t.add_argument("--config", required=True, help="key=value experiment file")
    t.add_argument("--out", default="runs", help="output directory for report, config and checkpoints")
    t.add_argument("--seed", type=int, help="run only this seed instead of the configured list")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--config", required=True)
    e.add_argument("--checkpoint", required=True, help=".npz written by train")
    e.add_argument("--seed", type=int, help="split seed (defaults to the first configured seed)")
    e.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("reconstruct", help="fit the autoencoder to a ring or grid graph")
    r.add_argument("--target", choices=("ring", "grid"), default="ring")
    r.add_argument("--n", type=int, default=12, help="ring size")
    r.add_argument("--rows", type=int, default=3)
    r.add_argument("--cols", type=int, default=4)
    r.add_argument("--channel", default="selection", choices=("selection", "clustering", "combined"))
    r.add_argument("--motif", default="triangle")
    r.add_argument("--hidden-dim", type=int, default=16)
    r.add_argument("--alpha", type=float, default=0.5)
    r.add_argument("--steps", type=int, default=3000)
    r.add_argument("--lr", type=float, default=1e-3)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out")
    r.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("synth", help="generate synthetic graphs")
    s.add_argument("kind", choices=("ring", "grid", "triangles"))
    s.add_argument("--n", type=int, default=12)
    s.add_argument("--rows", type=int, default=3)
    s.add_argument("--cols", type=int, default=4)
    s.add_argument("--per-class", type=int, default=10, help="graphs per class for 'triangles'")
    s.add_argument("--name", default="TRIANGLES")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--suite", required=True, choices=list(SUITES) + ["all"])
    v.add_argument("--trials", type=int, default=200, help="motif-oracle: random graphs")
    v.add_argument("--max-n", type=int, default=12, help="motif-oracle: largest graph")
    v.add_argument("--steps", type=int, default=3000, help="recon: Adam steps")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    from .graph import DatasetFormatError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UserError, DatasetFormatError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (InvariantError, FloatingPointError) as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
