"""Command-line pipeline: synth | train | binarize | rules | classify | label | eval | pipeline.

Exit codes: 0 success, 1 usage error, 2 malformed input file, 3 numeric
failure (training divergence).  Every artifact file starts with a comment
header naming the tool version, subcommand, and seed, and reruns with
identical flags reproduce identical files.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .core import (
    FormatError,
    binarize,
    forward,
    load_embeddings,
    load_layer,
    load_table,
    save_embeddings,
    save_layer,
    save_table,
)
from .foldsem import FoldParams, learn
from .labeller import (
    label_neurons,
    load_heatmap,
    load_mask,
    load_name_map,
    rename_ruleset,
    save_heatmap,
    save_mask,
    save_name_map,
)
from .losses import LossConfig
from .rules import load_rules, save_rules
from .runtime import classify, evaluate, justify, render_justification, stats
from .synthdata import SynthConfig, generate, generate_label_fixtures
from .train import TrainConfig, TrainingDiverged, train


def _header(command: str, seed: int | None) -> str:
    seed_text = "-" if seed is None else str(seed)
    return f"nesyvit {__version__} | {command} | seed={seed_text}"


def _add_loss_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=2.0, help="contrastive weight")
    p.add_argument("--beta", type=float, default=1.0, help="entropy weight")
    p.add_argument("--gamma", type=float, default=1.0, help="sparsity weight")
    p.add_argument("--tau", type=float, default=0.1, help="contrastive temperature")
    p.add_argument("--epsilon", type=float, default=1e-7, help="entropy log stabilizer")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--concept-dim", type=int, default=128)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--learning-rate", type=float, default=5e-6)
    p.add_argument("--weight-decay", type=float, default=5e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--patience", type=int, default=10, help="plateau patience in epochs")
    p.add_argument("--decay-factor", type=float, default=0.5)
    p.add_argument("--scheduler", choices=("plateau", "cosine"), default="plateau")
    _add_loss_flags(p)


def _add_fold_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--tail", type=float, default=5e-3)
    p.add_argument("--max-exception-depth", type=int, default=4)


def _add_label_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--margin", type=float, default=0.8)
    p.add_argument("--max-concepts", type=int, default=4)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nesyvit", description=__doc__)
    parser.add_argument("--config", help="file of key=value lines; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic embeddings")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--fixtures-dir", help="also write heatmap/mask fixtures here")

    p = sub.add_parser("train", help="train the sparse concept layer")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.add_argument("--layer-out", required=True)
    p.add_argument("--history-out")

    p = sub.add_parser("binarize", help="embeddings + layer -> binary table")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("rules", help="learn a rule set from a binary table")
    p.add_argument("--table", required=True)
    _add_fold_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("classify", help="classify one bit vector")
    p.add_argument("--rules", required=True)
    p.add_argument("--bits", required=True, help="comma-separated 0/1 values")
    p.add_argument("--justify", action="store_true")

    p = sub.add_parser("label", help="rename rule-set predicates from rasters")
    p.add_argument("--rules", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--heatmaps", required=True, help="directory of heatmap files")
    p.add_argument("--masks", required=True, help="directory of mask files")
    _add_label_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--name-map-out")

    p = sub.add_parser("eval", help="evaluate a rule set on a table")
    p.add_argument("--rules", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--report-out")

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-frac", type=float, default=0.8)
    _add_train_flags(p)
    _add_fold_flags(p)
    _add_label_flags(p)
    p.add_argument("--outdir", required=True)
    return parser


def _loss_config(args: argparse.Namespace) -> LossConfig:
    return LossConfig(
        alpha=args.alpha,
        beta=args.beta,
        gamma=args.gamma,
        tau=args.tau,
        epsilon=args.epsilon,
    )


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        epochs=args.epochs,
        plateau_patience=args.patience,
        lr_decay_factor=args.decay_factor,
        seed=args.seed,
        concept_dim=args.concept_dim,
        scheduler=args.scheduler,
        loss=_loss_config(args),
    )


def _fold_params(args: argparse.Namespace) -> FoldParams:
    return FoldParams(
        ratio=args.ratio, tail=args.tail, max_exception_depth=args.max_exception_depth
    )


def _parse_bits(text: str) -> np.ndarray:
    tokens = [t.strip() for t in text.split(",")]
    if not tokens or any(t not in ("0", "1") for t in tokens):
        raise ValueError(f"malformed bits string {text!r}; expected comma-separated 0/1")
    return np.array([int(t) for t in tokens], dtype=np.uint8)


def _load_raster_dir(path: str, loader):
    if not os.path.isdir(path):
        raise FormatError(f"{path}: not a directory")
    out = {}
    for name in sorted(os.listdir(path)):
        item = loader(os.path.join(path, name))
        out[item.image_id] = item
    return out


def _split_dataset(data, train_frac: float, seed: int):
    """Seeded stratified split into (train, test) datasets."""
    rng = np.random.default_rng([seed, 9157])
    train_idx: list[int] = []
    test_idx: list[int] = []
    for c in range(len(data.class_names)):
        idx = np.flatnonzero(data.labels == c)
        idx = idx[rng.permutation(len(idx))]
        cut = int(round(train_frac * len(idx)))
        train_idx.extend(int(i) for i in idx[:cut])
        test_idx.extend(int(i) for i in idx[cut:])
    train_idx.sort()
    test_idx.sort()

    def subset(rows: list[int]):
        from .core import EmbeddingDataset

        return EmbeddingDataset(
            x=data.x[rows], labels=data.labels[rows], class_names=list(data.class_names)
        )

    return subset(train_idx), subset(test_idx), train_idx, test_idx


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = SynthConfig(
        classes=args.classes,
        dim=args.dim,
        per_class=args.per_class,
        separation=args.separation,
        seed=args.seed,
    )
    data = generate(cfg)
    save_embeddings(data, args.out, header_comment=_header("synth", args.seed))
    if args.fixtures_dir:
        _write_fixtures(cfg, args.fixtures_dir, args.seed)
    print(f"wrote {data.n} x {data.e} embeddings to {args.out}")
    return 0


def _write_fixtures(cfg: SynthConfig, outdir: str, seed: int) -> tuple[str, str]:
    heatmaps, masks = generate_label_fixtures(cfg)
    hm_dir = os.path.join(outdir, "heatmaps")
    mask_dir = os.path.join(outdir, "masks")
    os.makedirs(hm_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)
    for image_id, hm in heatmaps.items():
        save_heatmap(hm, os.path.join(hm_dir, f"hm_{image_id:05d}.txt"), _header("synth", seed))
    for image_id, mask in masks.items():
        save_mask(mask, os.path.join(mask_dir, f"mask_{image_id:05d}.txt"), _header("synth", seed))
    return hm_dir, mask_dir


def _cmd_train(args: argparse.Namespace) -> int:
    data = load_embeddings(args.embeddings)
    layer, history = train(data, _train_config(args))
    save_layer(layer, args.layer_out, header_comment=_header("train", args.seed))
    if args.history_out:
        history.save_csv(args.history_out, header_comment=_header("train", args.seed))
    final = history.epochs[-1].breakdown
    print(f"trained {args.epochs} epochs; final total loss {final.total:.6f}")
    return 0


def _cmd_binarize(args: argparse.Namespace) -> int:
    data = load_embeddings(args.embeddings)
    layer = load_layer(args.layer)
    table = binarize(forward(layer, data), threshold=args.threshold)
    save_table(table, args.out, header_comment=_header("binarize", None))
    print(f"wrote {table.n} x {table.d} table to {args.out}")
    return 0


def _cmd_rules(args: argparse.Namespace) -> int:
    table = load_table(args.table)
    rs = learn(table, _fold_params(args))
    save_rules(rs, args.out, header_comment=_header("rules", None))
    s = stats(rs)
    print(f"learned {s.rules} rules ({s.unique_predicates} unique predicates, size {s.size})")
    return 0


def _cmd_classify(args: argparse.Namespace) -> int:
    rs = load_rules(args.rules)
    bits = _parse_bits(args.bits)
    if args.justify:
        j = justify(rs, bits)
        sys.stdout.write(render_justification(j))
    else:
        prediction = classify(rs, bits)
        if prediction.abstained:
            print("prediction: abstain")
        else:
            print(f"prediction: {prediction.class_name} (rule {prediction.fired_rule_index + 1})")
    return 0


def _cmd_label(args: argparse.Namespace) -> int:
    rs = load_rules(args.rules)
    data = load_embeddings(args.embeddings)
    layer = load_layer(args.layer)
    acts = forward(layer, data)
    heatmaps = _load_raster_dir(args.heatmaps, load_heatmap)
    masks = _load_raster_dir(args.masks, load_mask)
    used = sorted(
        {
            rs.neuron_names.index(lit.pred)
            for rule in list(rs.rules) + [r for defs in rs.ab_rules.values() for r in defs]
            for lit in rule.body
        }
    )
    names = label_neurons(
        acts,
        heatmaps,
        masks,
        neurons=used,
        k=args.top_k,
        theta=args.theta,
        margin=args.margin,
        max_concepts=args.max_concepts,
    )
    renamed = rename_ruleset(rs, names)
    save_rules(renamed, args.out, header_comment=_header("label", None))
    if args.name_map_out:
        save_name_map(names, args.name_map_out, header_comment=_header("label", None))
    print(f"labelled {len(names)} neurons; wrote {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    rs = load_rules(args.rules)
    table = load_table(args.table)
    report = evaluate(rs, table)
    s = stats(rs)
    print(f"accuracy: {report.accuracy:.4f} over {table.n} samples")
    print(f"rules: {s.rules}  unique predicates: {s.unique_predicates}  size: {s.size}")
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as fh:
            fh.write(f"# {_header('eval', None)}\n")
            fh.write(report.to_csv())
    return 0


def _cmd_pipeline(args: argparse.Namespace) -> int:
    outdir = args.outdir
    os.makedirs(outdir, exist_ok=True)
    head = lambda cmd: _header(cmd, args.seed)  # noqa: E731 - tiny local alias

    synth_cfg = SynthConfig(
        classes=args.classes,
        dim=args.dim,
        per_class=args.per_class,
        separation=args.separation,
        seed=args.seed,
    )
    data = generate(synth_cfg)
    save_embeddings(data, os.path.join(outdir, "embeddings.txt"), head("pipeline/synth"))
    train_data, test_data, _, _ = _split_dataset(data, args.train_frac, args.seed)
    save_embeddings(train_data, os.path.join(outdir, "train.txt"), head("pipeline/split"))
    save_embeddings(test_data, os.path.join(outdir, "test.txt"), head("pipeline/split"))

    layer, history = train(train_data, _train_config(args))
    layer_path = os.path.join(outdir, "layer.txt")
    save_layer(layer, layer_path, head("pipeline/train"))
    history.save_csv(os.path.join(outdir, "history.csv"), head("pipeline/train"))

    table = binarize(forward(layer, train_data))
    save_table(table, os.path.join(outdir, "table.csv"), head("pipeline/binarize"))

    rs = learn(table, _fold_params(args))
    save_rules(rs, os.path.join(outdir, "rules.lp"), head("pipeline/rules"))

    test_table = binarize(forward(layer, test_data))
    report = evaluate(rs, test_table)
    s = stats(rs)

    heatmaps, masks = generate_label_fixtures(synth_cfg)
    acts = forward(layer, data)
    used = sorted(
        {
            rs.neuron_names.index(lit.pred)
            for rule in list(rs.rules) + [r for defs in rs.ab_rules.values() for r in defs]
            for lit in rule.body
        }
    )
    names = label_neurons(
        acts,
        heatmaps,
        masks,
        neurons=used,
        k=args.top_k,
        theta=args.theta,
        margin=args.margin,
        max_concepts=args.max_concepts,
    )
    renamed = rename_ruleset(rs, names)
    save_rules(renamed, os.path.join(outdir, "labelled_rules.lp"), head("pipeline/label"))
    save_name_map(names, os.path.join(outdir, "name_map.txt"), head("pipeline/label"))

    report_path = os.path.join(outdir, "report.txt")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(f"# {head('pipeline/report')}\n")
        fh.write(f"seed: {args.seed}\n")
        fh.write(f"train samples: {train_data.n}\n")
        fh.write(f"test samples: {test_data.n}\n")
        fh.write(f"held-out accuracy: {report.accuracy:.6f}\n")
        fh.write(f"rules: {s.rules}\n")
        fh.write(f"unique predicates: {s.unique_predicates}\n")
        fh.write(f"size: {s.size}\n")
    with open(os.path.join(outdir, "report.csv"), "w", encoding="utf-8") as fh:
        fh.write(f"# {head('pipeline/report')}\n")
        fh.write(report.to_csv())
    print(f"pipeline done: accuracy {report.accuracy:.4f}, {s.rules} rules, size {s.size}")
    print(f"report: {report_path}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "binarize": _cmd_binarize,
    "rules": _cmd_rules,
    "classify": _cmd_classify,
    "label": _cmd_label,
    "eval": _cmd_eval,
    "pipeline": _cmd_pipeline,
}


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Expand --config key=value lines into leading flags (explicit flags win)."""
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        raise ValueError("--config requires a file argument")
    path = argv[at + 1]
    rest = argv[:at] + argv[at + 2 :]
    if not os.path.exists(path):
        raise FormatError(f"{path}: config file not found")
    extra: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            flag = "--" + key.strip().replace("_", "-")
            if flag not in rest:
                extra += [flag, value.strip()]
    # Config-derived flags go right after the subcommand so explicit ones win
    # (argparse keeps the last occurrence for store options).
    if rest and rest[0] in _COMMANDS:
        return [rest[0]] + extra + rest[1:]
    return rest + extra


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return 0 if exc.code in (0, None) else 1
        return _COMMANDS[args.command](args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
