"""Multi-hot label encoding of captions against a synset vocabulary.

Output is JSONL: ``{"id": ..., "labels": [class indices, ascending]}`` per
caption, in corpus order. Captions whose synsets all fall outside the
vocabulary get an empty label list and are tallied in the summary.
"""

from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .corpus import CaptionRecord, iter_captions, open_maybe_gzip
from .extraction import StopwordList, extract_synsets
from .vocab import ProvenanceError, SynsetVocab
from .wordnet import WordNetDb


class LabelFormatError(ValueError):
    """An encoded label file violates the JSONL label format."""


@dataclass(frozen=True, slots=True)
class MultiHotLabel:
    """Sparse multi-hot target for one caption: sorted class indices."""

    sample_id: str
    class_indices: tuple[int, ...]

    def __post_init__(self):
        if self.class_indices and self.class_indices[0] < 0:
            raise ValueError(f"class indices must be non-negative, got {self.class_indices}")
        for prev, cur in zip(self.class_indices, self.class_indices[1:]):
            if prev >= cur:
                raise ValueError(
                    f"class indices must be strictly increasing, got {self.class_indices}"
                )


@dataclass(frozen=True)
class EncodeSummary:
    """Per-run encoding statistics."""

    captions: int
    empty_captions: int
    total_labels: int

    @property
    def mean_labels(self) -> float:
        return self.total_labels / self.captions if self.captions else 0.0


def check_provenance(vocab: SynsetVocab, db: WordNetDb, stopwords: StopwordList) -> None:
    """Refuse to encode against a vocabulary built on different inputs."""
    if vocab.wordnet_fingerprint != db.fingerprint:
        raise ProvenanceError(
            f"vocabulary was built against database {vocab.wordnet_fingerprint}, "
            f"loaded database is {db.fingerprint}"
        )
    if vocab.stopword_digest != stopwords.digest:
        raise ProvenanceError(
            f"vocabulary was built with stoplist {vocab.stopword_digest}, "
            f"loaded stoplist is {stopwords.digest}"
        )


def encode(
    record: CaptionRecord,
    vocab: SynsetVocab,
    db: WordNetDb,
    stopwords: StopwordList,
    bigrams: bool = True,
) -> MultiHotLabel:
    """Map one caption to its sorted in-vocabulary class indices."""
    synsets = extract_synsets(record, db, stopwords, bigrams=bigrams)
    indices = sorted(vocab.index[sid] for sid in synsets if sid in vocab.index)
    return MultiHotLabel(sample_id=record.sample_id, class_indices=tuple(indices))


def encode_records(
    records: Iterable[CaptionRecord],
    vocab: SynsetVocab,
    db: WordNetDb,
    stopwords: StopwordList,
    bigrams: bool = True,
) -> Iterator[MultiHotLabel]:
    for record in records:
        yield encode(record, vocab, db, stopwords, bigrams=bigrams)


_WORKER_STATE: dict = {}


def _encode_shard(args: tuple[str, int, int, bool]) -> list[str]:
    path, start, stop, bigrams = args
    db = _WORKER_STATE["db"]
    vocab = _WORKER_STATE["vocab"]
    stopwords = _WORKER_STATE["stopwords"]
    lines: list[str] = []
    for i, record in enumerate(iter_captions(path)):
        if i >= stop:
            break
        if i < start:
            continue
        label = encode(record, vocab, db, stopwords, bigrams=bigrams)
        lines.append(_label_line(label))
    return lines


def _label_line(label: MultiHotLabel) -> str:
    return json.dumps(
        {"id": label.sample_id, "labels": list(label.class_indices)},
        ensure_ascii=False,
        separators=(", ", ": "),
    )


def encode_corpus_file(
    path: str | Path,
    vocab: SynsetVocab,
    db: WordNetDb,
    stopwords: StopwordList,
    out_path: str | Path,
    jobs: int = 1,
    bigrams: bool = True,
) -> EncodeSummary:
    """Encode a corpus shard to a JSONL label file, preserving input order.

    With ``jobs > 1`` the shard is split into contiguous line ranges that
    are encoded in parallel and concatenated in order, so output is
    byte-identical to a sequential run.
    """
    path = Path(path)
    out_path = Path(out_path)
    check_provenance(vocab, db, stopwords)
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    if jobs == 1:
        lines = [
            _label_line(encode(rec, vocab, db, stopwords, bigrams=bigrams))
            for rec in iter_captions(path)
        ]
    else:
        total = sum(1 for _ in iter_captions(path))
        chunk = (total + jobs - 1) // jobs if total else 1
        ranges = [
            (str(path), start, min(start + chunk, total), bigrams)
            for start in range(0, total, chunk)
        ]
        try:
            ctx = multiprocessing.get_context("fork")
        except ValueError:
            ctx = None
        if ctx is None:
            parts = [_encode_shard_inline(r, vocab, db, stopwords) for r in ranges]
        else:
            _WORKER_STATE.update(db=db, vocab=vocab, stopwords=stopwords)
            try:
                with ctx.Pool(processes=min(jobs, len(ranges) or 1)) as pool:
                    parts = pool.map(_encode_shard, ranges)
            finally:
                _WORKER_STATE.clear()
        lines = [line for part in parts for line in part]
    captions = len(lines)
    empty = 0
    total_labels = 0
    for line in lines:
        n = len(json.loads(line)["labels"])
        total_labels += n
        if n == 0:
            empty += 1
    with open_maybe_gzip(out_path, "wt") as fh:
        for line in lines:
            fh.write(line + "\n")
    return EncodeSummary(captions=captions, empty_captions=empty, total_labels=total_labels)


def _encode_shard_inline(
    args: tuple[str, int, int, bool],
    vocab: SynsetVocab,
    db: WordNetDb,
    stopwords: StopwordList,
) -> list[str]:
    path, start, stop, bigrams = args
    lines = []
    for i, record in enumerate(iter_captions(path)):
        if i >= stop:
            break
        if i < start:
            continue
        lines.append(_label_line(encode(record, vocab, db, stopwords, bigrams=bigrams)))
    return lines


def iter_labels(path: str | Path) -> Iterator[MultiHotLabel]:
    """Stream labels back from a JSONL label file."""
    path = Path(path)
    with open_maybe_gzip(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                raise LabelFormatError(f"{path}:{line_no}: blank line")
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise LabelFormatError(f"{path}:{line_no}: invalid JSON: {exc.msg}") from None
            sample_id = obj.get("id")
            labels = obj.get("labels")
            if not isinstance(sample_id, str) or not isinstance(labels, list):
                raise LabelFormatError(f"{path}:{line_no}: need string 'id' and list 'labels'")
            if not all(isinstance(x, int) and not isinstance(x, bool) for x in labels):
                raise LabelFormatError(f"{path}:{line_no}: labels must be integers")
            try:
                yield MultiHotLabel(sample_id=sample_id, class_indices=tuple(labels))
            except ValueError as exc:
                raise LabelFormatError(f"{path}:{line_no}: {exc}") from None


def load_labels(path: str | Path) -> list[MultiHotLabel]:
    return list(iter_labels(path))
