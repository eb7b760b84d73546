"""Desk-scale linear classifier over fixed feature vectors.

A numpy-only stand-in for the full training stack: multi-label binary
cross-entropy on a linear head, analytic gradients, deterministic
mini-batch gradient descent, and average-precision evaluation. Also hosts
the synthetic benchmark and the Transfer-vs-Random probing experiment that
exercises the classifier-transfer machinery end to end.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import iter_captions
from .extraction import StopwordList
from .labels import MultiHotLabel, encode_records
from .overlap import resolve_downstream_labels
from .transfer import (
    DEFAULT_RANDOM_SCALE,
    EmbeddingMatrix,
    TransferPlan,
    build_transfer_plan,
    materialize,
    random_head,
)
from .vocab import count_captions, prune
from .wordnet import WordNetDb

FEATURE_MAGIC = b"CATFEA01"


class TrainingDivergedError(RuntimeError):
    """Loss went non-finite during training."""


class FeatureFormatError(ValueError):
    """A feature file is not valid CATFEA01."""


@dataclass(frozen=True)
class FeatureDataset:
    """Fixed feature vectors with multi-hot labels over ``num_classes``."""

    features: np.ndarray
    labels: tuple[MultiHotLabel, ...]
    num_classes: int

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if self.features.dtype != np.float32:
            raise ValueError(f"features must be float32, got {self.features.dtype}")
        if not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite values")
        if len(self.labels) != self.features.shape[0]:
            raise ValueError(
                f"{self.features.shape[0]} feature rows but {len(self.labels)} labels"
            )
        for lab in self.labels:
            if lab.class_indices and lab.class_indices[-1] >= self.num_classes:
                raise ValueError(
                    f"label {lab.sample_id!r} cites class {lab.class_indices[-1]} "
                    f">= num_classes {self.num_classes}"
                )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class LinearHead:
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weights must be 2-D and bias 1-D")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ValueError(
                f"weights rows {self.weights.shape[0]} != bias length {self.bias.shape[0]}"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("head contains non-finite values")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    weight_decay: float = 0.0
    seed: int = 0
    empty_label_policy: str = "skip"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.empty_label_policy not in ("skip", "all-negative"):
            raise ValueError(
                f"empty_label_policy must be 'skip' or 'all-negative', "
                f"got {self.empty_label_policy!r}"
            )


@dataclass(frozen=True)
class Metrics:
    per_class_ap: tuple[float | None, ...]
    mean_ap: float
    top1: float | None


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean binary cross-entropy over classes, numerically stable form
    max(z, 0) − z·y + log(1 + exp(−|z|))."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"shape mismatch: logits {z.shape} vs targets {y.shape}")
    if not np.isfinite(z).all():
        raise ValueError("logits contain non-finite values")
    per_class = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(per_class.mean())


def bce_grad(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """d loss / d logits: (σ(z) − y) / K."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"shape mismatch: logits {z.shape} vs targets {y.shape}")
    if not np.isfinite(z).all():
        raise ValueError("logits contain non-finite values")
    return (_sigmoid(z) - y) / z.shape[-1]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def multi_hot_matrix(labels: Sequence[MultiHotLabel], num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes), dtype=np.float64)
    for i, lab in enumerate(labels):
        for k in lab.class_indices:
            out[i, k] = 1.0
    return out


def train_linear(
    data: FeatureDataset,
    init: LinearHead,
    cfg: TrainConfig,
    shards: int = 1,
) -> tuple[LinearHead, list[float]]:
    """Mini-batch gradient descent on the BCE objective.

    Deterministic given the seed: sample order comes from one seeded
    generator and batches are contiguous slices of each epoch's
    permutation (run single-threaded for bit-stable results). Weight decay
    is decoupled (applied directly to weights, not through the gradient).
    ``shards > 1`` splits each batch into contiguous slices whose gradients
    are reduced in fixed order; this changes results only through float
    summation order (within ~1e-6).
    """
    if init.num_classes != data.num_classes:
        raise ValueError(
            f"head has {init.num_classes} classes, dataset {data.num_classes}"
        )
    if init.dim != data.dim:
        raise ValueError(f"head dim {init.dim} != feature dim {data.dim}")
    if shards < 1:
        raise ValueError(f"shards must be >= 1, got {shards}")
    keep = [
        i for i, lab in enumerate(data.labels)
        if lab.class_indices or cfg.empty_label_policy == "all-negative"
    ]
    if not keep:
        raise ValueError("no training samples left after empty-label policy 'skip'")
    X = data.features[keep].astype(np.float64)
    Y = multi_hot_matrix([data.labels[i] for i in keep], data.num_classes)
    W = init.weights.astype(np.float64).copy()
    b = init.bias.astype(np.float64).copy()
    K = data.num_classes
    rng = np.random.default_rng(cfg.seed)
    trace: list[float] = []
    n = len(keep)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            xb, yb = X[idx], Y[idx]
            bsz = len(idx)
            zb = xb @ W.T + b
            per_elem = np.maximum(zb, 0.0) - zb * yb + np.log1p(np.exp(-np.abs(zb)))
            batch_loss = float(per_elem.mean())
            if not math.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size} "
                    f"(lr={cfg.learning_rate})"
                )
            loss_sum += batch_loss * bsz
            if shards == 1:
                g = (_sigmoid(zb) - yb) / (K * bsz)
                gw = g.T @ xb
                gb = g.sum(axis=0)
            else:
                gw = np.zeros_like(W)
                gb = np.zeros_like(b)
                bounds = np.linspace(0, bsz, shards + 1, dtype=int)
                for lo, hi in zip(bounds[:-1], bounds[1:]):
                    if lo == hi:
                        continue
                    gs = (_sigmoid(zb[lo:hi]) - yb[lo:hi]) / (K * bsz)
                    gw += gs.T @ xb[lo:hi]
                    gb += gs.sum(axis=0)
            if cfg.weight_decay:
                W *= 1.0 - cfg.learning_rate * cfg.weight_decay
            W -= cfg.learning_rate * gw
            b -= cfg.learning_rate * gb
        trace.append(loss_sum / n)
    return (
        LinearHead(weights=W.astype(np.float32), bias=b.astype(np.float32)),
        trace,
    )


def average_precision(scores: np.ndarray, positives: np.ndarray) -> float | None:
    """AP for one class: mean precision at each positive, ranking by score
    descending with ties broken by ascending sample index. None when the
    class has no positives."""
    pos = positives.astype(bool)
    total = int(pos.sum())
    if total == 0:
        return None
    order = np.lexsort((np.arange(len(scores)), -scores))
    hits = pos[order]
    cum = np.cumsum(hits)
    ranks = np.nonzero(hits)[0] + 1
    return float((cum[hits] / ranks).mean())


def evaluate(head: LinearHead, data: FeatureDataset) -> Metrics:
    """Per-class AP, their mean over classes that have positives, and top-1
    accuracy when every sample carries exactly one label."""
    if head.num_classes != data.num_classes or head.dim != data.dim:
        raise ValueError("head and dataset dimensions disagree")
    scores = data.features.astype(np.float64) @ head.weights.astype(np.float64).T
    scores += head.bias.astype(np.float64)
    Y = multi_hot_matrix(data.labels, data.num_classes)
    per_class = tuple(
        average_precision(scores[:, k], Y[:, k]) for k in range(data.num_classes)
    )
    present = [ap for ap in per_class if ap is not None]
    if not present:
        raise ValueError("no class has positive samples; mAP undefined")
    top1 = None
    if all(len(lab.class_indices) == 1 for lab in data.labels) and data.labels:
        pred = scores.argmax(axis=1)
        truth = np.array([lab.class_indices[0] for lab in data.labels])
        top1 = float((pred == truth).mean())
    return Metrics(
        per_class_ap=per_class,
        mean_ap=float(np.mean(present)),
        top1=top1,
    )


def save_features(features: np.ndarray, path: str | Path) -> None:
    """Write CATFEA01: magic, u64 n, u64 d, then float32 row-major data."""
    if features.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {features.shape}")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<QQ", features.shape[0], features.shape[1]))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def load_features(path: str | Path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != FEATURE_MAGIC:
        raise FeatureFormatError(f"{path}: bad magic {blob[:8]!r}")
    if len(blob) < 24:
        raise FeatureFormatError(f"{path}: truncated header")
    n, d = struct.unpack_from("<QQ", blob, 8)
    expected = 24 + n * d * 4
    if len(blob) != expected:
        raise FeatureFormatError(
            f"{path}: size {len(blob)} != expected {expected} for {n}x{d}"
        )
    data = np.frombuffer(blob, dtype="<f4", count=n * d, offset=24)
    out = np.array(data, dtype=np.float32).reshape(n, d)
    if not np.isfinite(out).all():
        raise FeatureFormatError(f"{path}: non-finite feature values")
    return out


def write_metrics_tsv(metrics: Metrics, trace: Sequence[float], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#mean_ap={metrics.mean_ap:.6f}\n")
        if metrics.top1 is not None:
            fh.write(f"#top1={metrics.top1:.6f}\n")
        if trace:
            fh.write(f"#final_loss={trace[-1]:.6f}\n")
        fh.write("class_index\tap\n")
        for k, ap in enumerate(metrics.per_class_ap):
            fh.write(f"{k}\t{'NA' if ap is None else format(ap, '.6f')}\n")


# ---------------------------------------------------------------------------
# Synthetic benchmark


@dataclass(frozen=True)
class BenchmarkSpec:
    """Parsed benchmark config; all paths resolved against the JSON file."""

    captions: Path
    probe_labels: Path
    min_count: int
    feature_dim: int
    feature_noise: float
    mixing_seed: int
    pretrain: TrainConfig
    probe_epochs: int
    probe_batch_size: int
    probe_learning_rate: float
    probe_train_per_class: int
    probe_test_per_class: int
    probe_feature_seed: int
    fractions: tuple[float, ...]
    seeds: tuple[int, ...]
    alpha: float
    random_scale: float


def load_benchmark(path: str | Path) -> BenchmarkSpec:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    base = path.parent
    pre = doc["pretrain"]
    probe = doc["probe"]
    spec = BenchmarkSpec(
        captions=base / doc["captions"],
        probe_labels=base / doc["probe_labels"],
        min_count=int(doc["min_count"]),
        feature_dim=int(doc["feature_dim"]),
        feature_noise=float(doc["feature_noise"]),
        mixing_seed=int(doc["mixing_seed"]),
        pretrain=TrainConfig(
            epochs=int(pre["epochs"]),
            batch_size=int(pre["batch_size"]),
            learning_rate=float(pre["learning_rate"]),
            weight_decay=float(pre.get("weight_decay", 0.0)),
            seed=int(pre.get("seed", 0)),
        ),
        probe_epochs=int(probe["epochs"]),
        probe_batch_size=int(probe["batch_size"]),
        probe_learning_rate=float(probe["learning_rate"]),
        probe_train_per_class=int(probe["train_per_class"]),
        probe_test_per_class=int(probe["test_per_class"]),
        probe_feature_seed=int(probe.get("feature_seed", 1)),
        fractions=tuple(float(f) for f in doc.get("fractions", (0.01, 0.1, 1.0))),
        seeds=tuple(int(s) for s in doc.get("seeds", (0, 1, 2, 3, 4))),
        alpha=float(doc.get("alpha", 1.0)),
        random_scale=float(doc.get("random_scale", DEFAULT_RANDOM_SCALE)),
    )
    for f in spec.fractions:
        if not (0.0 < f <= 1.0):
            raise ValueError(f"fractions must lie in (0, 1], got {f}")
    if not spec.seeds:
        raise ValueError("benchmark needs at least one seed")
    return spec


def mixing_matrix(num_classes: int, dim: int, seed: int) -> np.ndarray:
    """Fixed random unit-norm rows; the linear 'world model' features are
    generated through."""
    rng = np.random.default_rng(seed)
    m = rng.normal(0.0, 1.0, size=(num_classes, dim))
    m /= np.linalg.norm(m, axis=1, keepdims=True)
    return m.astype(np.float32)


def features_from_labels(
    labels: Sequence[MultiHotLabel],
    mixing: np.ndarray,
    noise: float,
    seed: int,
) -> np.ndarray:
    """Noisy linear images of multi-hot label vectors: mean of the active
    mixing rows plus isotropic noise of expected norm ``noise``."""
    rng = np.random.default_rng(seed)
    dim = mixing.shape[1]
    out = np.zeros((len(labels), dim), dtype=np.float64)
    for i, lab in enumerate(labels):
        if lab.class_indices:
            out[i] = mixing[list(lab.class_indices)].mean(axis=0)
    out += noise * rng.normal(0.0, 1.0, size=out.shape) / math.sqrt(dim)
    return out.astype(np.float32)


@dataclass(frozen=True)
class ExperimentCell:
    fraction: float
    arm: str
    seed: int
    mean_ap: float
    top1: float | None


@dataclass(frozen=True)
class ExperimentReport:
    cells: tuple[ExperimentCell, ...]
    plan: TransferPlan
    vocab_size: int

    def arm_values(self, fraction: float, arm: str) -> list[float]:
        return [
            c.mean_ap for c in self.cells if c.fraction == fraction and c.arm == arm
        ]

    def summary_rows(self) -> list[tuple[float, str, float, float]]:
        rows = []
        for fraction in sorted({c.fraction for c in self.cells}):
            for arm in ("transfer", "random"):
                vals = self.arm_values(fraction, arm)
                mean = float(np.mean(vals))
                sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
                rows.append((fraction, arm, mean, sd))
        return rows


def transfer_vs_random_experiment(
    bench: BenchmarkSpec,
    db: WordNetDb,
    stopwords: StopwordList,
) -> ExperimentReport:
    """Pre-train a head on the caption corpus, then linear-probe the probe
    task at each data fraction with Transfer Init and Random Init arms.

    Both arms share the identical data subset, shuffle order, and schedule
    per seed; only the initialization differs. Aborts listing any probe
    label that does not match the vocabulary at the benchmark's alpha.
    """
    counts = count_captions(iter_captions(bench.captions), db, stopwords)
    vocab = prune(counts, bench.min_count, db)
    if len(vocab) == 0:
        raise ValueError(f"vocabulary is empty at min_count {bench.min_count}")
    encoded = list(
        encode_records(iter_captions(bench.captions), vocab, db, stopwords)
    )
    mixing = mixing_matrix(len(vocab), bench.feature_dim, bench.mixing_seed)
    pre_X = features_from_labels(
        encoded, mixing, bench.feature_noise, bench.probe_feature_seed + 7919
    )
    pre_data = FeatureDataset(features=pre_X, labels=tuple(encoded), num_classes=len(vocab))
    init = LinearHead(
        weights=np.zeros((len(vocab), bench.feature_dim), dtype=np.float32),
        bias=np.zeros(len(vocab), dtype=np.float32),
    )
    pre_head, _ = train_linear(pre_data, init, bench.pretrain)

    downstream = resolve_downstream_labels(bench.probe_labels, db, stopwords)
    plan = build_transfer_plan(downstream, vocab, db, alpha=bench.alpha)
    unresolved = [label for label, rule in plan.rules if rule.kind == "random"]
    if unresolved:
        raise ValueError(
            "probe labels not resolvable against the vocabulary at "
            f"alpha={bench.alpha}: {', '.join(unresolved)}"
        )
    pretrained = EmbeddingMatrix(
        values=pre_head.weights, provenance=vocab.fingerprint_bytes()
    )

    probe_k = len(plan.rules)
    # ground-truth probe feature generators: each probe class sits at its
    # plan-selected vocabulary rows' mean in mixing space
    probe_rows = np.stack([
        mixing[list(rule.class_indices)].mean(axis=0) for _, rule in plan.rules
    ])
    train_labels = _single_label_block(probe_k, bench.probe_train_per_class, "train")
    test_labels = _single_label_block(probe_k, bench.probe_test_per_class, "test")
    train_X = _probe_features(
        train_labels, probe_rows, bench.feature_noise, bench.probe_feature_seed
    )
    test_X = _probe_features(
        test_labels, probe_rows, bench.feature_noise, bench.probe_feature_seed + 1
    )
    test_data = FeatureDataset(features=test_X, labels=test_labels, num_classes=probe_k)

    cells: list[ExperimentCell] = []
    for f_idx, fraction in enumerate(bench.fractions):
        for seed in bench.seeds:
            sub_idx = _stratified_subset(
                train_labels, fraction, np.random.default_rng([seed, f_idx])
            )
            sub_data = FeatureDataset(
                features=train_X[sub_idx],
                labels=tuple(train_labels[i] for i in sub_idx),
                num_classes=probe_k,
            )
            cfg = TrainConfig(
                epochs=bench.probe_epochs,
                batch_size=bench.probe_batch_size,
                learning_rate=bench.probe_learning_rate,
                seed=seed,
            )
            for arm in ("transfer", "random"):
                if arm == "transfer":
                    w0 = materialize(
                        plan, pretrained, seed=seed, random_scale=bench.random_scale
                    ).values
                else:
                    w0 = random_head(
                        probe_k, bench.feature_dim, seed=seed,
                        random_scale=bench.random_scale,
                    )
                head0 = LinearHead(
                    weights=w0, bias=np.zeros(probe_k, dtype=np.float32)
                )
                head, _ = train_linear(sub_data, head0, cfg)
                metrics = evaluate(head, test_data)
                cells.append(ExperimentCell(
                    fraction=fraction, arm=arm, seed=seed,
                    mean_ap=metrics.mean_ap, top1=metrics.top1,
                ))
    return ExperimentReport(cells=tuple(cells), plan=plan, vocab_size=len(vocab))


def _single_label_block(
    num_classes: int, per_class: int, tag: str
) -> tuple[MultiHotLabel, ...]:
    out = []
    for k in range(num_classes):
        for j in range(per_class):
            out.append(MultiHotLabel(sample_id=f"{tag}-{k}-{j}", class_indices=(k,)))
    return tuple(out)


def _probe_features(
    labels: Sequence[MultiHotLabel],
    class_rows: np.ndarray,
    noise: float,
    seed: int,
) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dim = class_rows.shape[1]
    out = np.stack([class_rows[lab.class_indices[0]] for lab in labels]).astype(np.float64)
    out += noise * rng.normal(0.0, 1.0, size=out.shape) / math.sqrt(dim)
    return out.astype(np.float32)


def _stratified_subset(
    labels: Sequence[MultiHotLabel], fraction: float, rng: np.random.Generator
) -> np.ndarray:
    """Per-class subsample of round(fraction * class size), at least one
    sample per class, order preserved within the dataset."""
    by_class: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab.class_indices[0], []).append(i)
    chosen: list[int] = []
    for k in sorted(by_class):
        idx = by_class[k]
        m = max(1, int(round(fraction * len(idx))))
        picked = rng.permutation(len(idx))[:m]
        chosen.extend(idx[i] for i in picked)
    return np.array(sorted(chosen), dtype=int)


def write_experiment_tsv(report: ExperimentReport, cells_path: str | Path,
                         summary_path: str | Path) -> None:
    with open(cells_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("fraction\tarm\tseed\tmean_ap\ttop1\n")
        for c in report.cells:
            top1 = "NA" if c.top1 is None else format(c.top1, ".6f")
            fh.write(f"{c.fraction:g}\t{c.arm}\t{c.seed}\t{c.mean_ap:.6f}\t{top1}\n")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#vocab_size={report.vocab_size}\n")
        counts = report.plan.counts()
        fh.write(
            f"#plan_rules=exact:{counts['exact']},average:{counts['average']},"
            f"random:{counts['random']}\n"
        )
        fh.write("fraction\tarm\tmean_ap_mean\tmean_ap_sd\n")
        for fraction, arm, mean, sd in report.summary_rows():
            fh.write(f"{fraction:g}\t{arm}\t{mean:.6f}\t{sd:.6f}\n")
