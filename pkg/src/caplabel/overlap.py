"""Overlap analysis between a pre-training vocabulary and downstream labels.

Answers four questions about a trained vocabulary: how many downstream
labels have a vocabulary synset within a path-similarity threshold, how
many pre-training samples those matched synsets carry, what the overall
synset count distribution looks like, and how vocabulary size reacts to
the pruning threshold. Reports are exact (no sampling) TSV tables plus an
optional self-contained HTML page.
"""

from __future__ import annotations

import html
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .extraction import StopwordList, extract_nouns
from .vocab import ProvenanceError, SynsetCounts, SynsetVocab, prune
from .wordnet import SynsetId, WordNetDb

DEFAULT_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


class DownstreamLabel(NamedTuple):
    """A downstream class name and the synsets it resolved to (possibly
    empty when nothing in the label is a recognizable noun)."""

    label: str
    synsets: tuple[SynsetId, ...]


@dataclass(frozen=True)
class DownstreamLabelSet:
    labels: tuple[DownstreamLabel, ...]

    @property
    def unresolved(self) -> tuple[str, ...]:
        return tuple(l.label for l in self.labels if not l.synsets)

    def __len__(self) -> int:
        return len(self.labels)


class LabelMatch(NamedTuple):
    """Best vocabulary match for one downstream label.

    ``similarity`` is None when no vocabulary synset shares a hypernym
    ancestor with any resolved synset (or the label resolved to nothing).
    """

    label: str
    similarity: float | None
    class_index: int | None
    vocab_synset: SynsetId | None


@dataclass(frozen=True)
class OverlapReport:
    rows: tuple[tuple[float, int], ...]
    matches: tuple[LabelMatch, ...]
    vocab_size: int

    @property
    def total_labels(self) -> int:
        return len(self.matches)

    def matched_at(self, alpha: float) -> int:
        return sum(
            1 for m in self.matches if m.similarity is not None and m.similarity >= alpha
        )


@dataclass(frozen=True)
class SynsetHistogram:
    """Distribution of pre-training sample counts over matched synsets."""

    buckets: dict[int, int]
    quantiles: dict[str, float]

    @property
    def matched_synsets(self) -> int:
        return sum(self.buckets.values())


def normalize_label(label: str) -> str:
    return "_".join(label.lower().split())


def resolve_downstream_labels(
    label_file: str | Path,
    db: WordNetDb,
    stopwords: StopwordList,
) -> DownstreamLabelSet:
    """Resolve a one-label-per-line file to synsets.

    Each label is lowercased with spaces joined by underscores, looked up
    whole via morphology first, and otherwise split on underscores with
    per-part noun extraction (collocations included). Lines that are blank
    or start with ``#`` are skipped. Duplicate labels keep their first
    occurrence.
    """
    label_file = Path(label_file)
    labels: list[DownstreamLabel] = []
    seen: set[str] = set()
    with open(label_file, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            label = normalize_label(line)
            if label in seen:
                continue
            seen.add(label)
            labels.append(DownstreamLabel(label=label, synsets=_resolve_one(label, db, stopwords)))
    if not labels:
        raise ValueError(f"no labels found in {label_file}")
    return DownstreamLabelSet(labels=tuple(labels))


def _resolve_one(
    label: str, db: WordNetDb, stopwords: StopwordList
) -> tuple[SynsetId, ...]:
    bases = db.morphy_noun(label)
    if bases:
        return (db.lemma_index[bases[0]][0],)
    parts = label.split("_")
    nouns = extract_nouns(parts, db, stopwords, bigrams=True)
    out: list[SynsetId] = []
    for tok in nouns:
        sid = db.lemma_index[tok.lemma][0]
        if sid not in out:
            out.append(sid)
    return tuple(out)


class VocabMatcher:
    """Fast exact nearest-vocabulary-synset queries.

    Precomputes, for every hypernym ancestor of every vocabulary synset,
    the minimum upward distance to the vocabulary and the best class at
    that distance (ties to the lower class index, which in canonical order
    means the higher-count class). A query then scans only the ancestors
    of the query synset. This is exact: any common-subsumer path between
    the query and a vocabulary synset passes through an ancestor of both.
    """

    def __init__(self, vocab: SynsetVocab, db: WordNetDb):
        if len(vocab) == 0:
            raise ValueError("vocabulary is empty")
        self._db = db
        self._vocab = vocab
        best: dict[SynsetId, tuple[int, int]] = {}
        for k, entry in enumerate(vocab.entries):
            for anc, d in db.hypernym_distances(entry.synset).items():
                cur = best.get(anc)
                if cur is None or d < cur[0]:
                    best[anc] = (d, k)
        self._ancestor_best = best

    def best_match(self, sid: SynsetId) -> tuple[float, int] | None:
        """(similarity, class index) of the closest vocabulary synset, or
        None when no vocabulary synset shares an ancestor with ``sid``."""
        best_total: int | None = None
        best_class: int | None = None
        for anc, d in self._db.hypernym_distances(sid).items():
            entry = self._ancestor_best.get(anc)
            if entry is None:
                continue
            total = d + entry[0]
            if best_total is None or total < best_total or (
                total == best_total and entry[1] < best_class
            ):
                best_total = total
                best_class = entry[1]
        if best_total is None:
            return None
        return 1.0 / (best_total + 1), best_class

    def best_label_match(self, synsets: Iterable[SynsetId]) -> LabelMatch | None:
        """Best match over all of a label's resolved synsets; None when
        nothing matches. Ties across resolved synsets keep the lower class
        index."""
        best: tuple[float, int] | None = None
        for sid in synsets:
            got = self.best_match(sid)
            if got is None:
                continue
            if best is None or got[0] > best[0] or (got[0] == best[0] and got[1] < best[1]):
                best = got
        return best


def overlap_sweep(
    vocab: SynsetVocab,
    downstream: DownstreamLabelSet,
    db: WordNetDb,
    thresholds: Sequence[float] | None = None,
) -> OverlapReport:
    """Count downstream labels whose best vocabulary similarity reaches
    each threshold. A label matches at α iff the max path similarity over
    (vocabulary synset, resolved synset) pairs is ≥ α."""
    if thresholds is None:
        thresholds = DEFAULT_THRESHOLDS
    thresholds = sorted(set(float(t) for t in thresholds))
    if not thresholds:
        raise ValueError("threshold list is empty")
    for t in thresholds:
        if not (0.0 < t <= 1.0):
            raise ValueError(f"thresholds must lie in (0, 1], got {t}")
    matcher = VocabMatcher(vocab, db)
    matches: list[LabelMatch] = []
    for label, synsets in downstream.labels:
        got = matcher.best_label_match(synsets)
        if got is None:
            matches.append(LabelMatch(label, None, None, None))
        else:
            sim, k = got
            matches.append(LabelMatch(label, sim, k, vocab.entries[k].synset))
    rows = tuple(
        (t, sum(1 for m in matches if m.similarity is not None and m.similarity >= t))
        for t in thresholds
    )
    return OverlapReport(rows=rows, matches=tuple(matches), vocab_size=len(vocab))


def samples_per_synset(counts: SynsetCounts, report: OverlapReport) -> SynsetHistogram:
    """Histogram of pre-training caption counts over the distinct vocabulary
    synsets that matched some label at the lowest swept threshold."""
    floor = report.rows[0][0]
    matched_synsets = sorted(
        {
            m.vocab_synset
            for m in report.matches
            if m.similarity is not None and m.similarity >= floor
        },
        key=lambda s: s.offset,
    )
    values = []
    for sid in matched_synsets:
        if sid not in counts.counts:
            raise ProvenanceError(
                f"matched synset {sid.offset} missing from counts; counts and "
                f"vocabulary disagree"
            )
        values.append(counts.counts[sid])
    buckets: dict[int, int] = {}
    for v in values:
        buckets[v] = buckets.get(v, 0) + 1
    return SynsetHistogram(buckets=buckets, quantiles=_quantiles(sorted(values)))


def _quantiles(sorted_values: list[int]) -> dict[str, float]:
    if not sorted_values:
        return {}
    def q(p: float) -> float:
        # nearest-rank with linear interpolation, matching numpy's default
        idx = p * (len(sorted_values) - 1)
        lo = int(idx)
        hi = min(lo + 1, len(sorted_values) - 1)
        frac = idx - lo
        return sorted_values[lo] * (1 - frac) + sorted_values[hi] * frac
    return {
        "min": float(sorted_values[0]),
        "p25": q(0.25),
        "median": q(0.5),
        "p75": q(0.75),
        "max": float(sorted_values[-1]),
    }


def vocab_size_sweep(
    counts: SynsetCounts,
    thresholds: Sequence[int],
    db: WordNetDb,
) -> tuple[tuple[int, int], ...]:
    """(V_τ, vocabulary size) rows, sorted by threshold ascending."""
    out = []
    for t in sorted(set(int(t) for t in thresholds)):
        if t < 0:
            raise ValueError(f"prune thresholds must be non-negative, got {t}")
        out.append((t, len(prune(counts, t, db))))
    return tuple(out)


def synset_distribution(counts: SynsetCounts, db: WordNetDb) -> tuple[tuple[int, str, str, int], ...]:
    """(rank, offset, lemma, count) rows in canonical order over all counted
    synsets: the full unpruned frequency distribution."""
    full = prune(counts, 0, db)
    return tuple(
        (k, e.synset.offset, e.lemma, e.count) for k, e in enumerate(full.entries)
    )


def write_overlap_tsv(report: OverlapReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#vocab_size={report.vocab_size}\n")
        fh.write(f"#labels={report.total_labels}\n")
        fh.write("alpha\tmatched\ttotal\n")
        for alpha, matched in report.rows:
            fh.write(f"{alpha:g}\t{matched}\t{report.total_labels}\n")


def write_matches_tsv(report: OverlapReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("label\tbest_similarity\tclass_index\tvocab_synset\n")
        for m in report.matches:
            if m.similarity is None:
                fh.write(f"{m.label}\tNA\tNA\tNA\n")
            else:
                fh.write(
                    f"{m.label}\t{m.similarity:.6f}\t{m.class_index}\t{m.vocab_synset.offset}\n"
                )


def write_histogram_tsv(hist: SynsetHistogram, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in hist.quantiles.items():
            fh.write(f"#{key}={value:g}\n")
        fh.write("caption_count\tnum_synsets\n")
        for count in sorted(hist.buckets):
            fh.write(f"{count}\t{hist.buckets[count]}\n")


def write_vocab_sweep_tsv(rows: Sequence[tuple[int, int]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("v_tau\tvocab_size\n")
        for v_tau, size in rows:
            fh.write(f"{v_tau}\t{size}\n")


def write_distribution_tsv(rows: Sequence[tuple[int, str, str, int]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("rank\tsynset_offset\tlemma\tcaption_count\n")
        for rank, offset, lemma, count in rows:
            fh.write(f"{rank}\t{offset}\t{lemma}\t{count}\n")


def _bar_rows(pairs: list[tuple[str, float, str]], max_value: float) -> str:
    rows = []
    for name, value, display in pairs:
        width = 0.0 if max_value <= 0 else 100.0 * value / max_value
        rows.append(
            f'<tr><td class="lbl">{html.escape(name)}</td>'
            f'<td class="bar"><div style="width:{width:.1f}%"></div></td>'
            f'<td class="val">{html.escape(display)}</td></tr>'
        )
    return "\n".join(rows)


def write_html_report(
    report: OverlapReport,
    hist: SynsetHistogram,
    size_rows: Sequence[tuple[int, int]],
    dist_rows: Sequence[tuple[int, str, str, int]],
    path: str | Path,
) -> None:
    """One self-contained HTML page with inline bar charts for the four
    analyses. No external assets."""
    total = report.total_labels
    sections = []
    sections.append((
        "Downstream labels matched vs. similarity threshold",
        _bar_rows(
            [(f"α = {a:g}", m, f"{m}/{total}") for a, m in report.rows],
            float(total),
        ),
    ))
    if hist.buckets:
        max_n = max(hist.buckets.values())
        sections.append((
            "Pre-training captions per matched synset",
            _bar_rows(
                [(f"{c} captions", n, str(n)) for c, n in sorted(hist.buckets.items())],
                float(max_n),
            ),
        ))
    top = list(dist_rows[:30])
    if top:
        sections.append((
            "Synset distribution (top 30)",
            _bar_rows(
                [(f"{lemma} ({off})", c, str(c)) for _, off, lemma, c in top],
                float(top[0][3]),
            ),
        ))
    if size_rows:
        max_k = max(k for _, k in size_rows)
        sections.append((
            "Vocabulary size vs. pruning threshold",
            _bar_rows(
                [(f"V_τ = {t}", k, str(k)) for t, k in size_rows],
                float(max_k),
            ),
        ))
    body = "\n".join(
        f"<h2>{html.escape(title)}</h2>\n<table>{rows}</table>" for title, rows in sections
    )
    quant = " · ".join(f"{k}: {v:g}" for k, v in hist.quantiles.items())
    page = f"""<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>Vocabulary overlap report</title>
<style>
body {{ font-family: system-ui, sans-serif; margin: 2rem auto; max-width: 60rem; color: #1a1a2e; }}
h1 {{ font-size: 1.4rem; }} h2 {{ font-size: 1.05rem; margin-top: 2rem; }}
table {{ border-collapse: collapse; width: 100%; }}
td {{ padding: 2px 6px; font-size: 0.85rem; }}
td.lbl {{ white-space: nowrap; width: 14rem; }}
td.val {{ white-space: nowrap; text-align: right; width: 6rem; color: #555; }}
td.bar {{ width: auto; }}
td.bar div {{ background: #4a7db5; height: 0.9rem; border-radius: 2px; min-width: 1px; }}
p.meta {{ color: #555; font-size: 0.85rem; }}
</style>
</head>
<body>
<h1>Vocabulary overlap report</h1>
<p class="meta">vocabulary size {report.vocab_size} · downstream labels {total}
· matched-synset counts: {html.escape(quant) if quant else "n/a"}</p>
{body}
</body>
</html>
"""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(page)
