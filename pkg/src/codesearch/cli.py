"""Command-line pipeline: ingest, pretrain, train, evaluate, index, search.

Exit codes: 0 success, 1 usage error (bad flags, bad config keys, refusing
to overwrite without --force), 2 data error (missing or malformed files,
unusable corpora), 3 numeric failure (non-finite values detected).
Progress goes to stderr; data goes to stdout and output files only.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .corpus import (
    CorpusError,
    Origin,
    QCPair,
    Vocabulary,
    build_vocab,
    read_corpus,
    split_train_validation,
)
from .encoders import CodeSearchModel, ConfigError, EncoderConfig
from .evaluation import EvalError, evaluate_protocol, export_histogram
from .index import IndexError_, build_index, load_index, query, save_index
from .kernels import KernelError
from .skipgram import load_embeddings, save_embeddings, train_skipgram
from .trainer import TrainConfig, TrainError, fit


class UsageError(Exception):
    pass


class NumericError(Exception):
    pass


def _progress(message: str) -> None:
    print(message, file=sys.stderr)


def _ensure_writable(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise UsageError(f"refusing to overwrite {path} (use --force)")


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise CorpusError(f"{what} not found: {path}")
    return path


def _check_finite(what: str, *values) -> None:
    for value in values:
        if not np.all(np.isfinite(value)):
            raise NumericError(f"non-finite values detected in {what}")


def _dataclass_from_mapping(cls, mapping: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(mapping) - allowed
    if unknown:
        raise UsageError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**mapping)


def _load_run_config(path: Path):
    """Parse and fully validate a training run configuration."""
    try:
        raw = json.loads(_require_file(path, "config").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from exc
    allowed_top = {"seed", "paths", "encoder", "train"}
    unknown = set(raw) - allowed_top
    if unknown:
        raise UsageError(f"unknown keys in {path}: {sorted(unknown)}")
    paths = raw.get("paths", {})
    allowed_paths = {"corpus", "dev", "vocab", "embeddings", "out_dir"}
    unknown = set(paths) - allowed_paths
    if unknown:
        raise UsageError(f"unknown keys in {path} paths: {sorted(unknown)}")
    for key in ("corpus", "dev", "vocab", "out_dir"):
        if key not in paths:
            raise UsageError(f"{path}: paths.{key} is required")
    encoder = _dataclass_from_mapping(EncoderConfig, raw.get("encoder", {}), f"{path} encoder")
    train = _dataclass_from_mapping(TrainConfig, raw.get("train", {}), f"{path} train")
    train.seed = int(raw.get("seed", 0))
    return paths, encoder, train


def _apply_encoder_overrides(encoder: EncoderConfig, args) -> EncoderConfig:
    if args.family is not None:
        encoder.family = args.family
    if args.filters is not None:
        encoder.num_filters = args.filters
    if args.window is not None:
        encoder.window_size = args.window
    if args.margin is not None:
        encoder.margin = args.margin
    if args.shared is not None:
        encoder.shared_weights = args.shared
    if args.batch_norm is not None:
        encoder.batch_norm = args.batch_norm
    return encoder


def _load_model(checkpoint: Path, vocab_path: Path) -> CodeSearchModel:
    vocab = Vocabulary.load(_require_file(vocab_path, "vocabulary"))
    return CodeSearchModel.load(_require_file(checkpoint, "checkpoint"), vocab)


def cmd_ingest(args) -> int:
    pairs = read_corpus(_require_file(Path(args.corpus), "corpus"))
    if not pairs:
        raise CorpusError(f"{args.corpus}: no pairs")
    out = Path(args.out)
    _ensure_writable(out, args.force)
    vocab = build_vocab(pairs, min_count=args.min_count)
    vocab.save(out)
    counts = {origin.value: 0 for origin in Origin}
    for pair in pairs:
        counts[pair.origin.value] += 1
    print(
        f"pairs total={len(pairs)} "
        + " ".join(f"{name}={count}" for name, count in counts.items())
    )
    print(f"vocab tokens={len(vocab)} min_count={args.min_count}")
    return 0


def cmd_train_w2v(args) -> int:
    pairs = read_corpus(_require_file(Path(args.corpus), "corpus"))
    vocab = Vocabulary.load(_require_file(Path(args.vocab), "vocabulary"))
    out = Path(args.out)
    _ensure_writable(out, args.force)
    _progress(f"training word vectors: dim={args.dim} window={args.window} epochs={args.epochs}")
    matrix = train_skipgram(
        pairs,
        vocab,
        dim=args.dim,
        window=args.window,
        negatives=args.negatives,
        epochs=args.epochs,
        seed=args.seed,
    )
    _check_finite("word vectors", matrix.data)
    save_embeddings(matrix, out)
    print(f"wrote {out} rows={matrix.rows} dim={matrix.dim}")
    return 0


def cmd_train(args) -> int:
    paths, encoder, train_cfg = _load_run_config(Path(args.config))
    if args.seed is not None:
        train_cfg.seed = args.seed
    encoder = _apply_encoder_overrides(encoder, args)
    encoder.validate()
    train_cfg.validate()

    corpus_path = _require_file(Path(paths["corpus"]), "corpus")
    dev_path = _require_file(Path(paths["dev"]), "dev corpus")
    vocab_path = _require_file(Path(paths["vocab"]), "vocabulary")
    out_dir = Path(paths["out_dir"])
    _ensure_writable(out_dir / "best.cncm", args.force)

    pairs = read_corpus(corpus_path)
    dev = read_corpus(dev_path)
    vocab = Vocabulary.load(vocab_path)
    embeddings = None
    if "embeddings" in paths:
        embeddings = load_embeddings(_require_file(Path(paths["embeddings"]), "embeddings"))

    model = CodeSearchModel(encoder, vocab, embeddings, seed=train_cfg.seed)
    split = split_train_validation(pairs, seed=train_cfg.seed)
    _progress(
        f"training {encoder.family} shared={encoder.shared_weights} bn={encoder.batch_norm} "
        f"on {len(split.train)} pairs ({len(split.validation)} validation, {len(dev)} dev)"
    )
    report, best = fit(model, split, dev, train_cfg, out_dir=out_dir)
    for rec in report.epochs:
        _progress(
            f"epoch {rec.epoch}: train={rec.train_loss:.6f} val={rec.val_loss:.6f} dev_mrr={rec.dev_mrr:.4f}"
        )
    _check_finite(
        "training report",
        [rec.train_loss for rec in report.epochs],
        [rec.val_loss for rec in report.epochs],
        [rec.dev_mrr for rec in report.epochs],
    )
    _check_finite("model parameters", *(p.value for p in best.parameters()))
    print(
        f"stopped after epoch {report.epochs[-1].epoch} ({report.stop_reason}); "
        f"best epoch {report.best_epoch} dev_mrr={report.epochs[report.best_epoch - 1].dev_mrr:.4f}"
    )
    print(f"wrote {out_dir}/best.cncm and {out_dir}/report.jsonl")
    return 0


def cmd_eval(args) -> int:
    model = _load_model(Path(args.checkpoint), Path(args.vocab))
    eval_pairs = read_corpus(_require_file(Path(args.eval), "eval corpus"))
    pool = read_corpus(_require_file(Path(args.pool), "pool corpus"))
    summary_out = Path(args.summary_out)
    histogram_out = Path(args.histogram_out)
    _ensure_writable(summary_out, args.force)
    _ensure_writable(histogram_out, args.force)
    _progress(
        f"evaluating {len(eval_pairs)} pairs against {args.distractors} distractors "
        f"x {args.iterations} iterations"
    )
    summary = evaluate_protocol(
        model,
        eval_pairs,
        pool,
        distractor_count=args.distractors,
        iterations=args.iterations,
        seed=args.seed,
    )
    _check_finite("evaluation summary", summary.mrr_mean, summary.mrr_std)
    summary_out.write_text(summary.to_json() + "\n", encoding="utf-8")
    export_histogram(summary, histogram_out)
    print(summary.to_json())
    return 0


def cmd_index(args) -> int:
    model = _load_model(Path(args.checkpoint), Path(args.vocab))
    pairs = read_corpus(_require_file(Path(args.corpus), "corpus"))
    out = Path(args.out)
    _ensure_writable(out, args.force)
    index = build_index(model, pairs)
    if index.skipped:
        _progress(f"skipped {index.skipped} snippets with no code tokens")
    save_index(index, out)
    print(f"wrote {out} entries={len(index)} dim={index.dim}")
    return 0


def cmd_search(args) -> int:
    model = _load_model(Path(args.checkpoint), Path(args.vocab))
    index = load_index(_require_file(Path(args.index), "index"))
    hits = query(index, model, args.query, k=args.top_k)
    for rank, (pair_id, code, score) in enumerate(hits, start=1):
        print(f"{rank}. {pair_id} score={score:.4f}")
        for line in code.splitlines():
            print(f"    {line}")
    return 0


def cmd_compare(args) -> int:
    config_path = Path(args.config)
    try:
        raw = json.loads(_require_file(config_path, "config").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{config_path}: invalid JSON: {exc}") from exc
    allowed = {"seed", "paths", "train", "protocol", "models"}
    unknown = set(raw) - allowed
    if unknown:
        raise UsageError(f"unknown keys in {config_path}: {sorted(unknown)}")
    paths = raw.get("paths", {})
    unknown = set(paths) - {"corpus", "dev", "eval", "vocab", "embeddings"}
    if unknown:
        raise UsageError(f"unknown keys in {config_path} paths: {sorted(unknown)}")
    for key in ("corpus", "dev", "eval", "vocab"):
        if key not in paths:
            raise UsageError(f"{config_path}: paths.{key} is required")
    protocol = raw.get("protocol", {})
    unknown = set(protocol) - {"distractors", "iterations"}
    if unknown:
        raise UsageError(f"unknown keys in {config_path} protocol: {sorted(unknown)}")
    models = raw.get("models")
    if not models:
        raise UsageError(f"{config_path}: models list is required")

    seed = int(raw.get("seed", 0))
    out = Path(args.out)
    _ensure_writable(out, args.force)

    pairs = read_corpus(_require_file(Path(paths["corpus"]), "corpus"))
    dev = read_corpus(_require_file(Path(paths["dev"]), "dev corpus"))
    eval_pairs = read_corpus(_require_file(Path(paths["eval"]), "eval corpus"))
    vocab = Vocabulary.load(_require_file(Path(paths["vocab"]), "vocabulary"))
    embeddings = None
    if "embeddings" in paths:
        embeddings = load_embeddings(_require_file(Path(paths["embeddings"]), "embeddings"))
    split = split_train_validation(pairs, seed=seed)

    rows = []
    for spec_entry in models:
        unknown = set(spec_entry) - {"name", "encoder", "train"}
        if unknown:
            raise UsageError(f"unknown keys in model entry: {sorted(unknown)}")
        name = spec_entry.get("name")
        if not name:
            raise UsageError("every model entry needs a name")
        encoder = _dataclass_from_mapping(EncoderConfig, spec_entry.get("encoder", {}), f"model {name}")
        encoder.validate()
        train_cfg = _dataclass_from_mapping(
            TrainConfig, {**raw.get("train", {}), **spec_entry.get("train", {})}, f"model {name}"
        )
        train_cfg.seed = seed
        train_cfg.validate()
        model_embeddings = embeddings
        if embeddings is not None and embeddings.dim != encoder.embed_dim:
            raise UsageError(
                f"model {name}: embeddings dim {embeddings.dim} != embed_dim {encoder.embed_dim}"
            )
        _progress(f"[{name}] training")
        model = CodeSearchModel(encoder, vocab, model_embeddings, seed=seed)
        report, best = fit(model, split, dev, train_cfg)
        _progress(f"[{name}] best epoch {report.best_epoch}, evaluating")
        summary = evaluate_protocol(
            best,
            eval_pairs,
            pool=split.train,
            distractor_count=protocol.get("distractors", 49),
            iterations=protocol.get("iterations", 20),
            seed=seed,
        )
        _check_finite(f"results for {name}", summary.mrr_mean)
        rows.append(
            {
                "model": name,
                "mrr_mean": f"{summary.mrr_mean:.6f}",
                "mrr_std": f"{summary.mrr_std:.6f}",
                "top1_mean": f"{summary.topk_accuracy[1]:.6f}",
                "top1_std": f"{summary.topk_std[1]:.6f}",
            }
        )

    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["model", "mrr_mean", "mrr_std", "top1_mean", "top1_std"], lineterminator="\n"
        )
        writer.writeheader()
        writer.writerows(rows)
    print(out.read_text(encoding="utf-8"), end="")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="codesearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a vocabulary from a JSONL corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-count", type=int, default=5, dest="min_count")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train-w2v", help="pretrain word vectors with skip-gram")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train_w2v)

    p = sub.add_parser("train", help="train a retrieval model from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--family", choices=["embedding", "unif", "cnn"], default=None)
    p.add_argument("--filters", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--shared", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--batch-norm", action=argparse.BooleanOptionalAction, default=None, dest="batch_norm")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the distractor-ranking protocol")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--eval", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--summary-out", required=True, dest="summary_out")
    p.add_argument("--histogram-out", required=True, dest="histogram_out")
    p.add_argument("--distractors", type=int, default=49)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("index", help="precompute snippet embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="query an index with natural language")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--top-k", type=int, default=10, dest="top_k")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("compare", help="train and evaluate a grid of models")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (CorpusError, ConfigError, TrainError, EvalError, KernelError, IndexError_) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
