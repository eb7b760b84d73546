"""Transfer Init: build a downstream classifier initialization from the
rows of a pre-trained classification head.

Each downstream label gets one rule. A label whose single resolved synset
matches a vocabulary class at the similarity threshold copies that class's
row bit-exactly (Exact). A label resolved to several synsets that match
gets the arithmetic mean of their best rows (Average). Anything else draws
a truncated-normal random row (Random). Bias terms are not transferred;
downstream heads start with zero bias.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .overlap import DownstreamLabelSet, VocabMatcher
from .vocab import ProvenanceError, SynsetVocab
from .wordnet import WordNetDb

MAGIC = b"CATEMB01"

DEFAULT_RANDOM_SCALE = 0.02


class EmbeddingFormatError(ValueError):
    """An embedding file is not valid CATEMB01."""


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Row-major float32 matrix with a 32-byte provenance hash (the
    vocabulary fingerprint for pretrained heads, a plan/seed digest for
    materialized downstream inits)."""

    values: np.ndarray
    provenance: bytes

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-D, got shape {self.values.shape}")
        if self.values.dtype != np.float32:
            raise ValueError(f"embedding matrix must be float32, got {self.values.dtype}")
        if not np.isfinite(self.values).all():
            raise ValueError("embedding matrix contains non-finite values")
        if len(self.provenance) != 32:
            raise ValueError(f"provenance must be 32 bytes, got {len(self.provenance)}")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TransferRule:
    """Tagged union: kind 'exact' carries one class index, 'average' a
    non-empty ascending index list, 'random' nothing."""

    kind: Literal["exact", "average", "random"]
    class_indices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind == "exact" and len(self.class_indices) != 1:
            raise ValueError("exact rule needs exactly one class index")
        if self.kind == "average":
            if not self.class_indices:
                raise ValueError("average rule needs at least one class index")
            for prev, cur in zip(self.class_indices, self.class_indices[1:]):
                if prev >= cur:
                    raise ValueError("average indices must be strictly ascending")
        if self.kind == "random" and self.class_indices:
            raise ValueError("random rule carries no class indices")


@dataclass(frozen=True)
class TransferPlan:
    rules: tuple[tuple[str, TransferRule], ...]
    alpha: float
    vocab_fingerprint: bytes

    def digest(self) -> bytes:
        h = hashlib.sha256()
        h.update(self.vocab_fingerprint)
        h.update(struct.pack("<d", self.alpha))
        for label, rule in self.rules:
            h.update(label.encode("utf-8"))
            h.update(b"\x00")
            h.update(rule.kind.encode("ascii"))
            h.update(struct.pack(f"<{len(rule.class_indices)}q", *rule.class_indices))
        return h.digest()

    def counts(self) -> dict[str, int]:
        out = {"exact": 0, "average": 0, "random": 0}
        for _, rule in self.rules:
            out[rule.kind] += 1
        return out


def build_transfer_plan(
    downstream: DownstreamLabelSet,
    vocab: SynsetVocab,
    db: WordNetDb,
    alpha: float = 1.0,
) -> TransferPlan:
    """Decide per-label transfer rules at similarity threshold ``alpha``.

    For each resolved synset of a label, the best vocabulary class is found
    (ties: higher similarity, then lower class index; canonical order makes
    that the higher-count class). Synsets whose best similarity reaches
    ``alpha`` are the matches: one match → Exact, several → Average over the
    distinct matched classes, none → Random.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if len(downstream) == 0:
        raise ValueError("downstream label set is empty")
    matcher = VocabMatcher(vocab, db)
    rules: list[tuple[str, TransferRule]] = []
    for label, synsets in downstream.labels:
        matched: list[int] = []
        for sid in synsets:
            got = matcher.best_match(sid)
            if got is not None and got[0] >= alpha:
                matched.append(got[1])
        if not matched:
            rules.append((label, TransferRule(kind="random")))
        elif len(matched) == 1:
            rules.append((label, TransferRule(kind="exact", class_indices=(matched[0],))))
        else:
            dedup = tuple(sorted(set(matched)))
            rules.append((label, TransferRule(kind="average", class_indices=dedup)))
    return TransferPlan(
        rules=tuple(rules), alpha=alpha, vocab_fingerprint=vocab.fingerprint_bytes()
    )


def materialize(
    plan: TransferPlan,
    pretrained: EmbeddingMatrix,
    seed: int,
    random_scale: float = DEFAULT_RANDOM_SCALE,
) -> EmbeddingMatrix:
    """Assemble the downstream initialization matrix, one row per label.

    Exact rows are bit-copies. Average rows sum the cited rows in ascending
    class index order in float64 and divide once, then round to float32.
    Random rows come from a zero-mean normal with standard deviation
    ``random_scale``, redrawn per element until within two standard
    deviations (truncation), all from a generator seeded with ``seed``.
    """
    if random_scale <= 0:
        raise ValueError(f"random_scale must be positive, got {random_scale}")
    if pretrained.provenance != plan.vocab_fingerprint:
        raise ProvenanceError(
            "pretrained matrix provenance does not match the plan's vocabulary fingerprint"
        )
    for label, rule in plan.rules:
        for k in rule.class_indices:
            if not (0 <= k < pretrained.rows):
                raise ValueError(
                    f"rule for {label!r} cites class {k}, but matrix has "
                    f"{pretrained.rows} rows"
                )
    rng = np.random.default_rng(seed)
    dim = pretrained.dim
    out = np.empty((len(plan.rules), dim), dtype=np.float32)
    for row, (label, rule) in enumerate(plan.rules):
        if rule.kind == "exact":
            out[row] = pretrained.values[rule.class_indices[0]]
        elif rule.kind == "average":
            acc = np.zeros(dim, dtype=np.float64)
            for k in rule.class_indices:
                acc += pretrained.values[k].astype(np.float64)
            out[row] = (acc / len(rule.class_indices)).astype(np.float32)
        else:
            out[row] = _truncated_normal(rng, dim, random_scale)
    h = hashlib.sha256()
    h.update(plan.digest())
    h.update(struct.pack("<q", seed))
    h.update(struct.pack("<d", random_scale))
    return EmbeddingMatrix(values=out, provenance=h.digest())


def _truncated_normal(rng: np.random.Generator, n: int, scale: float) -> np.ndarray:
    """Normal(0, scale) samples rejected outside ±2·scale."""
    out = rng.normal(0.0, scale, size=n)
    bad = np.abs(out) > 2.0 * scale
    while bad.any():
        out[bad] = rng.normal(0.0, scale, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * scale
    return out.astype(np.float32)


def random_head(
    rows: int, dim: int, seed: int, random_scale: float = DEFAULT_RANDOM_SCALE
) -> np.ndarray:
    """All-random initialization matrix (the Random Init baseline arm)."""
    rng = np.random.default_rng(seed)
    out = np.empty((rows, dim), dtype=np.float32)
    for row in range(rows):
        out[row] = _truncated_normal(rng, dim, random_scale)
    return out


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Write CATEMB01: magic, u64 rows, u64 dim, float32 row-major data,
    32-byte provenance, all little-endian."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", matrix.rows, matrix.dim))
        fh.write(np.ascontiguousarray(matrix.values, dtype="<f4").tobytes())
        fh.write(matrix.provenance)


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {blob[:8]!r}")
    if len(blob) < 8 + 16 + 32:
        raise EmbeddingFormatError(f"{path}: truncated header")
    rows, dim = struct.unpack_from("<QQ", blob, 8)
    expected = 8 + 16 + rows * dim * 4 + 32
    if len(blob) != expected:
        raise EmbeddingFormatError(
            f"{path}: size {len(blob)} != expected {expected} for {rows}x{dim}"
        )
    data = np.frombuffer(blob, dtype="<f4", count=rows * dim, offset=24)
    values = np.array(data, dtype=np.float32).reshape(rows, dim)
    provenance = blob[-32:]
    try:
        return EmbeddingMatrix(values=values, provenance=provenance)
    except ValueError as exc:
        raise EmbeddingFormatError(f"{path}: {exc}") from None


def export_embeddings_tsv(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Human-inspectable TSV: provenance header then one row per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#provenance={matrix.provenance.hex()}\n")
        fh.write(f"#rows={matrix.rows}\n#dim={matrix.dim}\n")
        for row in matrix.values:
            fh.write("\t".join(format(float(v), ".8g") for v in row) + "\n")


def write_plan_json(plan: TransferPlan, path: str | Path) -> None:
    doc = {
        "alpha": plan.alpha,
        "vocab_fingerprint": plan.vocab_fingerprint.hex(),
        "plan_digest": plan.digest().hex(),
        "rule_counts": plan.counts(),
        "rules": [
            {"label": label, "kind": rule.kind, "class_indices": list(rule.class_indices)}
            for label, rule in plan.rules
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, ensure_ascii=False)
        fh.write("\n")
