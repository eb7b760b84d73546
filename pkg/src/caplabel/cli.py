"""Command-line entry point.

Six batch subcommands: vocab-build, label-encode, analyze-overlap,
transfer-init, train, experiment-transfer. Every run writes a JSON manifest
recording the subcommand, resolved flags, SHA-256 of every input file read,
tool version, and wall-clock duration. Exit codes: 0 success, 2 usage error,
3 data or provenance error, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import CorpusFormatError
from .extraction import bundled_stopwords_path, load_stopwords
from .labels import (
    LabelFormatError,
    check_provenance,
    encode_corpus_file,
    load_labels,
)
from .overlap import (
    DEFAULT_THRESHOLDS,
    overlap_sweep,
    resolve_downstream_labels,
    samples_per_synset,
    synset_distribution,
    vocab_size_sweep,
    write_distribution_tsv,
    write_histogram_tsv,
    write_html_report,
    write_matches_tsv,
    write_overlap_tsv,
    write_vocab_sweep_tsv,
)
from .trainer import (
    FeatureDataset,
    FeatureFormatError,
    LinearHead,
    TrainConfig,
    TrainingDivergedError,
    evaluate,
    load_benchmark,
    load_features,
    train_linear,
    transfer_vs_random_experiment,
    write_experiment_tsv,
    write_metrics_tsv,
)
from .transfer import (
    DEFAULT_RANDOM_SCALE,
    EmbeddingFormatError,
    EmbeddingMatrix,
    build_transfer_plan,
    export_embeddings_tsv,
    load_embeddings,
    materialize,
    random_head,
    save_embeddings,
    write_plan_json,
)
from .vocab import (
    ProvenanceError,
    VocabFormatError,
    count_corpus_file,
    load_counts,
    load_vocab,
    prune,
    save_counts,
    save_vocab,
)
from .wordnet import WordNetError, load_wordnet, locate_wordnet_files

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

_DATA_ERRORS = (
    WordNetError,
    CorpusFormatError,
    VocabFormatError,
    LabelFormatError,
    ProvenanceError,
    EmbeddingFormatError,
    FeatureFormatError,
    TrainingDivergedError,
    ValueError,
    OSError,
    json.JSONDecodeError,
)


class _Manifest:
    """Collects input hashes during a run and writes the manifest JSON."""

    def __init__(self, subcommand: str, args: argparse.Namespace):
        self.subcommand = subcommand
        self.flags = {
            k: (str(v) if isinstance(v, Path) else v)
            for k, v in vars(args).items()
            if k not in ("func", "manifest_path")
        }
        self.inputs: dict[str, str] = {}
        self.started = time.monotonic()

    def add_input(self, path: str | Path) -> Path:
        path = Path(path)
        h = hashlib.sha256()
        with open(path, "rb") as fh:
            for block in iter(lambda: fh.read(1 << 20), b""):
                h.update(block)
        self.inputs[str(path)] = f"sha256:{h.hexdigest()}"
        return path

    def write(self, path: str | Path) -> None:
        doc = {
            "tool": "caplabel",
            "version": __version__,
            "subcommand": self.subcommand,
            "flags": self.flags,
            "inputs": self.inputs,
            "duration_seconds": round(time.monotonic() - self.started, 3),
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _load_db(manifest: _Manifest, wordnet_dir: str | None):
    idx, data, exc = locate_wordnet_files(wordnet_dir)
    for p in (idx, data, exc):
        manifest.add_input(p)
    return load_wordnet(idx, data, exc)


def _load_stopwords(manifest: _Manifest, path: str | None):
    resolved = Path(path) if path else bundled_stopwords_path()
    manifest.add_input(resolved)
    return load_stopwords(resolved)


def _parse_float_list(text: str, flag: str) -> list[float]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            out.append(float(part))
        except ValueError:
            raise ValueError(f"{flag}: {part!r} is not a number") from None
    return out


def _parse_int_list(text: str, flag: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            out.append(int(part))
        except ValueError:
            raise ValueError(f"{flag}: {part!r} is not an integer") from None
    return out


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {value}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def cmd_vocab_build(args: argparse.Namespace) -> int:
    manifest = _Manifest("vocab-build", args)
    db = _load_db(manifest, args.wordnet_dir)
    stopwords = _load_stopwords(manifest, args.stopwords)
    manifest.add_input(args.captions)
    counts = count_corpus_file(
        args.captions, db, stopwords, jobs=args.jobs, bigrams=not args.strict_unigram
    )
    vocab = prune(counts, args.min_count, db)
    save_vocab(vocab, args.out)
    if args.counts_out:
        save_counts(counts, args.counts_out)
    manifest.write(str(args.out) + ".manifest.json")
    print(
        f"captions\t{counts.captions_processed}\n"
        f"distinct_synsets\t{counts.distinct_synsets}\n"
        f"vocab_size\t{len(vocab)}\n"
        f"min_count\t{args.min_count}"
    )
    return EXIT_OK


def cmd_label_encode(args: argparse.Namespace) -> int:
    manifest = _Manifest("label-encode", args)
    db = _load_db(manifest, args.wordnet_dir)
    stopwords = _load_stopwords(manifest, args.stopwords)
    manifest.add_input(args.captions)
    manifest.add_input(args.vocab)
    vocab = load_vocab(args.vocab)
    summary = encode_corpus_file(
        args.captions, vocab, db, stopwords, args.out,
        jobs=args.jobs, bigrams=not args.strict_unigram,
    )
    manifest.write(str(args.out) + ".manifest.json")
    print(
        f"captions\t{summary.captions}\n"
        f"empty_captions\t{summary.empty_captions}\n"
        f"total_labels\t{summary.total_labels}\n"
        f"mean_labels\t{summary.mean_labels:.6f}"
    )
    return EXIT_OK


def cmd_analyze_overlap(args: argparse.Namespace) -> int:
    manifest = _Manifest("analyze-overlap", args)
    db = _load_db(manifest, args.wordnet_dir)
    stopwords = _load_stopwords(manifest, args.stopwords)
    manifest.add_input(args.labels_file)
    manifest.add_input(args.vocab)
    manifest.add_input(args.counts)
    vocab = load_vocab(args.vocab)
    counts = load_counts(args.counts)
    check_provenance(vocab, db, stopwords)
    if counts.wordnet_fingerprint != db.fingerprint:
        raise ProvenanceError(
            f"counts were produced against database {counts.wordnet_fingerprint}, "
            f"loaded database is {db.fingerprint}"
        )
    thresholds = (
        _parse_float_list(args.thresholds, "--thresholds")
        if args.thresholds
        else list(DEFAULT_THRESHOLDS)
    )
    if not thresholds:
        thresholds = list(DEFAULT_THRESHOLDS)
    downstream = resolve_downstream_labels(args.labels_file, db, stopwords)
    report = overlap_sweep(vocab, downstream, db, thresholds)
    hist = samples_per_synset(counts, report)
    sweep_grid = sorted({0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, vocab.prune_threshold})
    size_rows = vocab_size_sweep(counts, sweep_grid, db)
    dist_rows = synset_distribution(counts, db)
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    write_overlap_tsv(report, report_dir / "overlap_thresholds.tsv")
    write_matches_tsv(report, report_dir / "label_matches.tsv")
    write_histogram_tsv(hist, report_dir / "synset_histogram.tsv")
    write_vocab_sweep_tsv(size_rows, report_dir / "vocab_size_sweep.tsv")
    write_distribution_tsv(dist_rows, report_dir / "synset_distribution.tsv")
    if args.html:
        write_html_report(report, hist, size_rows, dist_rows, report_dir / "report.html")
    if downstream.unresolved:
        print("unresolved\t" + ",".join(downstream.unresolved))
    for alpha, matched in report.rows:
        print(f"alpha_{alpha:g}\t{matched}/{report.total_labels}")
    manifest.write(report_dir / "manifest.json")
    return EXIT_OK


def cmd_transfer_init(args: argparse.Namespace) -> int:
    manifest = _Manifest("transfer-init", args)
    db = _load_db(manifest, args.wordnet_dir)
    stopwords = _load_stopwords(manifest, args.stopwords)
    manifest.add_input(args.labels_file)
    manifest.add_input(args.vocab)
    manifest.add_input(args.embeddings)
    vocab = load_vocab(args.vocab)
    pretrained = load_embeddings(args.embeddings)
    downstream = resolve_downstream_labels(args.labels_file, db, stopwords)
    plan = build_transfer_plan(downstream, vocab, db, alpha=args.alpha)
    out = materialize(plan, pretrained, seed=args.seed, random_scale=args.random_scale)
    save_embeddings(out, args.out)
    plan_path = args.plan_out or (str(args.out) + ".plan.json")
    write_plan_json(plan, plan_path)
    if args.tsv_out:
        export_embeddings_tsv(out, args.tsv_out)
    manifest.write(str(args.out) + ".manifest.json")
    counts = plan.counts()
    print(
        f"labels\t{len(plan.rules)}\n"
        f"exact\t{counts['exact']}\n"
        f"average\t{counts['average']}\n"
        f"random\t{counts['random']}"
    )
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    manifest = _Manifest("train", args)
    manifest.add_input(args.features)
    manifest.add_input(args.labels)
    vocab = None
    if args.vocab:
        manifest.add_input(args.vocab)
        vocab = load_vocab(args.vocab)
    features = load_features(args.features)
    labels = load_labels(args.labels)
    init_spec = args.init
    if init_spec == "random":
        if args.classes:
            num_classes = args.classes
        elif vocab is not None:
            num_classes = len(vocab)
        else:
            num_classes = 1 + max(
                (lab.class_indices[-1] for lab in labels if lab.class_indices),
                default=-1,
            )
        if num_classes < 1:
            raise ValueError(
                "cannot infer class count from empty labels; pass --classes"
            )
        weights = random_head(
            num_classes, features.shape[1], seed=args.seed,
            random_scale=args.random_scale,
        )
    elif init_spec.startswith("transfer:"):
        emb_path = manifest.add_input(init_spec[len("transfer:"):])
        emb = load_embeddings(emb_path)
        weights = emb.values.copy()
        num_classes = emb.rows
        if args.classes and args.classes != num_classes:
            raise ValueError(
                f"--classes {args.classes} disagrees with transfer matrix rows {num_classes}"
            )
    else:
        raise ValueError(
            f"--init must be 'random' or 'transfer:<file>', got {init_spec!r}"
        )
    data = FeatureDataset(
        features=features, labels=tuple(labels), num_classes=num_classes
    )
    head0 = LinearHead(weights=weights, bias=np.zeros(num_classes, dtype=np.float32))
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
        empty_label_policy=args.empty_labels,
    )
    head, trace = train_linear(data, head0, cfg)
    if args.eval_features:
        manifest.add_input(args.eval_features)
        manifest.add_input(args.eval_labels)
        eval_data = FeatureDataset(
            features=load_features(args.eval_features),
            labels=tuple(load_labels(args.eval_labels)),
            num_classes=num_classes,
        )
    else:
        eval_data = data
    metrics = evaluate(head, eval_data)
    write_metrics_tsv(metrics, trace, args.metrics_out)
    if args.head_out:
        if vocab is not None:
            if len(vocab) != num_classes:
                raise ValueError(
                    f"--vocab has {len(vocab)} classes but the head has {num_classes}"
                )
            provenance = vocab.fingerprint_bytes()
        else:
            provenance = hashlib.sha256(
                f"trained:{args.seed}:{len(trace)}".encode()
            ).digest()
        head_matrix = EmbeddingMatrix(values=head.weights, provenance=provenance)
        save_embeddings(head_matrix, args.head_out)
    manifest.write(str(args.metrics_out) + ".manifest.json")
    top1 = "NA" if metrics.top1 is None else format(metrics.top1, ".6f")
    final_loss = format(trace[-1], ".6f") if trace else "NA"
    print(
        f"mean_ap\t{metrics.mean_ap:.6f}\n"
        f"top1\t{top1}\n"
        f"final_loss\t{final_loss}"
    )
    return EXIT_OK


def cmd_experiment_transfer(args: argparse.Namespace) -> int:
    manifest = _Manifest("experiment-transfer", args)
    db = _load_db(manifest, args.wordnet_dir)
    stopwords = _load_stopwords(manifest, args.stopwords)
    manifest.add_input(args.benchmark)
    bench = load_benchmark(args.benchmark)
    manifest.add_input(bench.captions)
    manifest.add_input(bench.probe_labels)
    if args.fractions:
        bench = dataclasses.replace(
            bench, fractions=tuple(_parse_float_list(args.fractions, "--fractions"))
        )
    if args.seeds:
        bench = dataclasses.replace(
            bench, seeds=tuple(_parse_int_list(args.seeds, "--seeds"))
        )
    report = transfer_vs_random_experiment(bench, db, stopwords)
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    write_experiment_tsv(
        report,
        report_dir / "experiment_cells.tsv",
        report_dir / "experiment_summary.tsv",
    )
    manifest.write(report_dir / "manifest.json")
    for fraction, arm, mean, sd in report.summary_rows():
        print(f"{fraction:g}\t{arm}\t{mean:.6f}\t{sd:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caplabel",
        description="Caption-to-synset labeling, vocabulary analysis, and "
                    "classifier transfer tools.",
    )
    parser.add_argument("--version", action="version", version=f"caplabel {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_wordnet_flags(p):
        p.add_argument(
            "--wordnet-dir",
            help="directory with index.noun/data.noun/noun.exc (or .gz); "
                 "falls back to $CATLIP_WORDNET_DIR, then the bundled copy",
        )
        p.add_argument("--stopwords", help="stopword list file (default: bundled)")

    p = sub.add_parser("vocab-build", help="count corpus synsets and prune a vocabulary")
    p.add_argument("--captions", required=True, help="caption corpus JSONL[.gz]")
    add_wordnet_flags(p)
    p.add_argument("--min-count", type=_nonnegative_int, default=500,
                   help="pruning threshold V_tau; keep synsets with count "
                        "strictly greater (default 500)")
    p.add_argument("--out", required=True, help="vocabulary TSV output")
    p.add_argument("--counts-out", help="also write full unpruned counts TSV")
    p.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)
    p.add_argument("--strict-unigram", action="store_true",
                   help="disable bigram collocation matching")
    p.set_defaults(func=cmd_vocab_build)

    p = sub.add_parser("label-encode", help="encode captions to multi-hot class indices")
    p.add_argument("--captions", required=True)
    p.add_argument("--vocab", required=True)
    add_wordnet_flags(p)
    p.add_argument("--out", required=True, help="labels JSONL[.gz] output")
    p.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)
    p.add_argument("--strict-unigram", action="store_true")
    p.set_defaults(func=cmd_label_encode)

    p = sub.add_parser("analyze-overlap", help="downstream label overlap and vocab reports")
    p.add_argument("--labels-file", required=True, help="downstream labels, one per line")
    p.add_argument("--vocab", required=True)
    p.add_argument("--counts", required=True, help="counts TSV from vocab-build --counts-out")
    add_wordnet_flags(p)
    p.add_argument("--thresholds", default="",
                   help="comma-separated similarity thresholds (default 0.5..1.0)")
    p.add_argument("--report-dir", required=True)
    p.add_argument("--html", action="store_true", help="also write report.html")
    p.set_defaults(func=cmd_analyze_overlap)

    p = sub.add_parser("transfer-init", help="build downstream init from pretrained rows")
    p.add_argument("--labels-file", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--embeddings", required=True, help="pretrained CATEMB01 matrix")
    add_wordnet_flags(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--random-scale", type=float, default=DEFAULT_RANDOM_SCALE)
    p.add_argument("--out", required=True, help="downstream CATEMB01 output")
    p.add_argument("--plan-out", help="plan JSON path (default <out>.plan.json)")
    p.add_argument("--tsv-out", help="also export the matrix as TSV")
    p.set_defaults(func=cmd_transfer_init)

    p = sub.add_parser("train", help="train a linear head on fixed features")
    p.add_argument("--features", required=True, help="CATFEA01 feature file")
    p.add_argument("--labels", required=True, help="labels JSONL[.gz]")
    p.add_argument("--init", required=True, help="'random' or 'transfer:<CATEMB01 file>'")
    p.add_argument("--vocab", help="vocabulary TSV; sets class count and stamps "
                                   "--head-out provenance for later transfer-init")
    p.add_argument("--classes", type=_positive_int,
                   help="class count for random init (default: inferred from labels)")
    p.add_argument("--epochs", type=_nonnegative_int, required=True)
    p.add_argument("--lr", type=float, required=True)
    p.add_argument("--batch", type=_positive_int, required=True)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--empty-labels", choices=("skip", "all-negative"), default="skip")
    p.add_argument("--random-scale", type=float, default=DEFAULT_RANDOM_SCALE)
    p.add_argument("--metrics-out", required=True)
    p.add_argument("--head-out", help="save trained head weights as CATEMB01")
    p.add_argument("--eval-features", help="held-out CATFEA01 for metrics")
    p.add_argument("--eval-labels", help="held-out labels for metrics")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment-transfer", help="Transfer vs Random probing experiment")
    p.add_argument("--benchmark", required=True, help="benchmark config JSON")
    add_wordnet_flags(p)
    p.add_argument("--fractions", default="", help="override benchmark fractions")
    p.add_argument("--seeds", default="", help="override benchmark seeds")
    p.add_argument("--report-dir", required=True)
    p.set_defaults(func=cmd_experiment_transfer)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "eval_features", None) and not getattr(args, "eval_labels", None):
        parser.error("--eval-features requires --eval-labels")
    try:
        return args.func(args)
    except _DATA_ERRORS as exc:
        print(f"caplabel {args.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - invariant violations
        print(
            f"caplabel {args.subcommand}: internal error: {type(exc).__name__}: {exc}",
            file=sys.stderr,
        )
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
