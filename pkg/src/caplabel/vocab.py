"""Synset vocabulary: corpus counting, pruning, and the on-disk TSV format.

Counting uses set semantics per caption (a synset mentioned five times in
one caption contributes one count). Pruning keeps synsets whose count is
STRICTLY greater than the threshold and orders classes canonically: count
descending, then synset offset ascending. That order defines the class
indices every downstream artifact refers back to.
"""

from __future__ import annotations

import hashlib
import multiprocessing
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

from .corpus import CaptionRecord, iter_captions
from .extraction import StopwordList, extract_synsets
from .wordnet import SynsetId, WordNetDb


class ProvenanceError(ValueError):
    """Two artifacts were produced against different databases, stoplists,
    or vocabularies and cannot be combined."""


class VocabFormatError(ValueError):
    """A vocabulary or counts file violates the on-disk format."""


@dataclass(frozen=True)
class SynsetCounts:
    """Raw per-synset caption frequencies plus the provenance they were
    counted under."""

    counts: dict[SynsetId, int]
    captions_processed: int
    wordnet_fingerprint: str
    stopword_digest: str

    @property
    def distinct_synsets(self) -> int:
        return len(self.counts)


class VocabEntry(NamedTuple):
    """One vocabulary class: synset, canonical lemma (the synset's first
    member), and its corpus count."""

    synset: SynsetId
    lemma: str
    count: int


@dataclass(frozen=True)
class SynsetVocab:
    """Pruned, canonically ordered classification vocabulary."""

    entries: tuple[VocabEntry, ...]
    index: dict[SynsetId, int]
    prune_threshold: int
    wordnet_fingerprint: str
    stopword_digest: str

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, sid: SynsetId) -> bool:
        return sid in self.index

    def fingerprint_bytes(self) -> bytes:
        """SHA-256 over the canonical serialization; identifies this exact
        vocabulary (classes, order, counts, and provenance) in binary
        artifacts."""
        h = hashlib.sha256()
        h.update(
            f"{self.wordnet_fingerprint}\t{self.stopword_digest}\t{self.prune_threshold}\n".encode()
        )
        for k, e in enumerate(self.entries):
            h.update(f"{k}\t{e.synset.offset}\t{e.lemma}\t{e.count}\n".encode())
        return h.digest()

    def fingerprint(self) -> str:
        return self.fingerprint_bytes().hex()


def count_captions(
    records: Iterable[CaptionRecord],
    db: WordNetDb,
    stopwords: StopwordList,
    bigrams: bool = True,
) -> SynsetCounts:
    """Stream caption records, counting each synset once per caption."""
    counts: dict[SynsetId, int] = {}
    processed = 0
    for record in records:
        for sid in extract_synsets(record, db, stopwords, bigrams=bigrams):
            counts[sid] = counts.get(sid, 0) + 1
        processed += 1
    return SynsetCounts(
        counts=counts,
        captions_processed=processed,
        wordnet_fingerprint=db.fingerprint,
        stopword_digest=stopwords.digest,
    )


def merge_counts(a: SynsetCounts, b: SynsetCounts) -> SynsetCounts:
    """Pointwise sum of two shard counts. Shards must share provenance."""
    if a.wordnet_fingerprint != b.wordnet_fingerprint:
        raise ProvenanceError(
            f"cannot merge counts from different databases "
            f"({a.wordnet_fingerprint} vs {b.wordnet_fingerprint})"
        )
    if a.stopword_digest != b.stopword_digest:
        raise ProvenanceError(
            f"cannot merge counts from different stoplists "
            f"({a.stopword_digest} vs {b.stopword_digest})"
        )
    merged = dict(a.counts)
    for sid, c in b.counts.items():
        merged[sid] = merged.get(sid, 0) + c
    return SynsetCounts(
        counts=merged,
        captions_processed=a.captions_processed + b.captions_processed,
        wordnet_fingerprint=a.wordnet_fingerprint,
        stopword_digest=a.stopword_digest,
    )


# Worker state for fork-based parallel counting. Set in the parent before
# the pool forks; child processes inherit it without pickling the database.
_WORKER_STATE: dict = {}


def _count_shard(args: tuple[str, int, int, bool]) -> SynsetCounts:
    path, shard, jobs, bigrams = args
    db = _WORKER_STATE["db"]
    stopwords = _WORKER_STATE["stopwords"]
    records = (
        rec for i, rec in enumerate(iter_captions(path)) if i % jobs == shard
    )
    return count_captions(records, db, stopwords, bigrams=bigrams)


def count_corpus_file(
    path: str | Path,
    db: WordNetDb,
    stopwords: StopwordList,
    jobs: int = 1,
    bigrams: bool = True,
) -> SynsetCounts:
    """Count one corpus shard file, optionally splitting the work across
    processes. Lines are dealt round-robin to workers and the per-worker
    counts merged in worker order, so the result is independent of ``jobs``.
    """
    path = str(path)
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    if jobs == 1:
        return count_captions(iter_captions(path), db, stopwords, bigrams=bigrams)
    try:
        ctx = multiprocessing.get_context("fork")
    except ValueError:
        # No fork on this platform; fall back to sequential shards, which
        # produces the identical merge.
        shards = [
            _count_shard_inline(path, shard, jobs, db, stopwords, bigrams)
            for shard in range(jobs)
        ]
    else:
        _WORKER_STATE["db"] = db
        _WORKER_STATE["stopwords"] = stopwords
        try:
            with ctx.Pool(processes=jobs) as pool:
                shards = pool.map(
                    _count_shard, [(path, shard, jobs, bigrams) for shard in range(jobs)]
                )
        finally:
            _WORKER_STATE.clear()
    total = shards[0]
    for part in shards[1:]:
        total = merge_counts(total, part)
    return total


def _count_shard_inline(
    path: str, shard: int, jobs: int, db: WordNetDb, stopwords: StopwordList, bigrams: bool
) -> SynsetCounts:
    records = (rec for i, rec in enumerate(iter_captions(path)) if i % jobs == shard)
    return count_captions(records, db, stopwords, bigrams=bigrams)


def prune(counts: SynsetCounts, threshold: int, db: WordNetDb) -> SynsetVocab:
    """Keep synsets with count strictly greater than ``threshold`` and
    assign canonical class indices (count descending, offset ascending).

    The database supplies each synset's canonical lemma and must match the
    provenance the counts were produced under.
    """
    if threshold < 0:
        raise ValueError(f"prune threshold must be non-negative, got {threshold}")
    if counts.wordnet_fingerprint != db.fingerprint:
        raise ProvenanceError(
            f"counts were produced against database {counts.wordnet_fingerprint}, "
            f"not {db.fingerprint}"
        )
    kept = [
        (sid, c) for sid, c in counts.counts.items() if c > threshold
    ]
    kept.sort(key=lambda item: (-item[1], item[0].offset))
    entries = tuple(
        VocabEntry(synset=sid, lemma=db.synsets[sid].lemmas[0], count=c)
        for sid, c in kept
    )
    return SynsetVocab(
        entries=entries,
        index={e.synset: k for k, e in enumerate(entries)},
        prune_threshold=threshold,
        wordnet_fingerprint=counts.wordnet_fingerprint,
        stopword_digest=counts.stopword_digest,
    )


def save_vocab(vocab: SynsetVocab, path: str | Path) -> None:
    """Write the vocabulary TSV: three ``#key=value`` provenance headers,
    then one ``class_index<TAB>synset_offset<TAB>lemma<TAB>count`` row per
    class in canonical order."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#wordnet={vocab.wordnet_fingerprint}\n")
        fh.write(f"#stopwords={vocab.stopword_digest}\n")
        fh.write(f"#v_tau={vocab.prune_threshold}\n")
        for k, e in enumerate(vocab.entries):
            fh.write(f"{k}\t{e.synset.offset}\t{e.lemma}\t{e.count}\n")


def load_vocab(path: str | Path) -> SynsetVocab:
    """Read a vocabulary TSV back, validating headers, row structure,
    canonical ordering, and the strict prune invariant."""
    path = Path(path)
    headers: dict[str, str] = {}
    entries: list[VocabEntry] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].partition("=")
                if not sep:
                    raise VocabFormatError(f"{path}:{line_no}: malformed header {line!r}")
                headers[key] = value
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise VocabFormatError(
                    f"{path}:{line_no}: expected 4 tab-separated columns, got {len(cols)}"
                )
            k_str, offset, lemma, count_str = cols
            try:
                k = int(k_str)
                count = int(count_str)
            except ValueError:
                raise VocabFormatError(
                    f"{path}:{line_no}: non-integer class index or count"
                ) from None
            if k != len(entries):
                raise VocabFormatError(
                    f"{path}:{line_no}: class index {k} out of order (expected {len(entries)})"
                )
            if len(offset) != 8 or not offset.isdigit():
                raise VocabFormatError(f"{path}:{line_no}: bad synset offset {offset!r}")
            if not lemma:
                raise VocabFormatError(f"{path}:{line_no}: empty lemma")
            entries.append(VocabEntry(synset=SynsetId(offset), lemma=lemma, count=count))
    for key in ("wordnet", "stopwords", "v_tau"):
        if key not in headers:
            raise VocabFormatError(f"{path}: missing #{key}= header")
    try:
        threshold = int(headers["v_tau"])
    except ValueError:
        raise VocabFormatError(f"{path}: non-integer #v_tau header") from None
    for prev, cur in zip(entries, entries[1:]):
        if (-prev.count, prev.synset.offset) > (-cur.count, cur.synset.offset):
            raise VocabFormatError(
                f"{path}: canonical order violated at synset {cur.synset.offset}"
            )
    for e in entries:
        if e.count <= threshold:
            raise VocabFormatError(
                f"{path}: synset {e.synset.offset} count {e.count} <= v_tau {threshold}"
            )
    seen: set[SynsetId] = set()
    for e in entries:
        if e.synset in seen:
            raise VocabFormatError(f"{path}: duplicate synset {e.synset.offset}")
        seen.add(e.synset)
    return SynsetVocab(
        entries=tuple(entries),
        index={e.synset: k for k, e in enumerate(entries)},
        prune_threshold=threshold,
        wordnet_fingerprint=headers["wordnet"],
        stopword_digest=headers["stopwords"],
    )


def save_counts(counts: SynsetCounts, path: str | Path) -> None:
    """Write raw counts (pre-pruning) as TSV: provenance headers plus
    ``synset_offset<TAB>count`` rows in offset order."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#wordnet={counts.wordnet_fingerprint}\n")
        fh.write(f"#stopwords={counts.stopword_digest}\n")
        fh.write(f"#captions={counts.captions_processed}\n")
        for sid in sorted(counts.counts, key=lambda s: s.offset):
            fh.write(f"{sid.offset}\t{counts.counts[sid]}\n")


def load_counts(path: str | Path) -> SynsetCounts:
    path = Path(path)
    headers: dict[str, str] = {}
    counts: dict[SynsetId, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].partition("=")
                if not sep:
                    raise VocabFormatError(f"{path}:{line_no}: malformed header {line!r}")
                headers[key] = value
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise VocabFormatError(
                    f"{path}:{line_no}: expected 2 tab-separated columns, got {len(cols)}"
                )
            offset, count_str = cols
            if len(offset) != 8 or not offset.isdigit():
                raise VocabFormatError(f"{path}:{line_no}: bad synset offset {offset!r}")
            sid = SynsetId(offset)
            if sid in counts:
                raise VocabFormatError(f"{path}:{line_no}: duplicate synset {offset}")
            try:
                count = int(count_str)
            except ValueError:
                raise VocabFormatError(f"{path}:{line_no}: non-integer count") from None
            if count < 1:
                raise VocabFormatError(f"{path}:{line_no}: count must be positive")
            counts[sid] = count
    for key in ("wordnet", "stopwords", "captions"):
        if key not in headers:
            raise VocabFormatError(f"{path}: missing #{key}= header")
    try:
        captions = int(headers["captions"])
    except ValueError:
        raise VocabFormatError(f"{path}: non-integer #captions header") from None
    return SynsetCounts(
        counts=counts,
        captions_processed=captions,
        wordnet_fingerprint=headers["wordnet"],
        stopword_digest=headers["stopwords"],
    )
