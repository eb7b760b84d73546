#!/usr/bin/env python3
"""Regenerate tests/data/golden/ from the independent oracle implementations.

The goldens are produced WITHOUT importing caplabel: tests then require the
production pipeline to reproduce these files byte for byte. Regenerate only
when the bundled sample data or the documented file formats change, never to
paper over a production/oracle disagreement.
"""

import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "tests"))

import oracles

DATA = REPO / "data"
GOLDEN = REPO / "tests" / "data" / "golden"

WORDNET_DIR = REPO / "src" / "caplabel" / "data" / "wordnet"
STOPWORDS = REPO / "src" / "caplabel" / "data" / "stopwords.txt"

OVERLAP_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
SWEEP_BASE_GRID = (0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000)
V_TAU_MAIN = 5
V_TAU_DEFAULT = 500


def save(name, text):
    path = GOLDEN / name
    path.write_text(text, encoding="utf-8", newline="\n")
    print(f"wrote {path} ({len(text.splitlines())} lines)")


def vocab_tsv(rows, wn_fp, sw_fp, tau):
    lines = [f"#wordnet={wn_fp}", f"#stopwords={sw_fp}", f"#v_tau={tau}"]
    for k, (off, lemma, count) in enumerate(rows):
        lines.append(f"{k}\t{off}\t{lemma}\t{count}")
    return "\n".join(lines) + "\n"


def main():
    GOLDEN.mkdir(parents=True, exist_ok=True)
    wn = oracles.parse_raw_wordnet(
        WORDNET_DIR / "index.noun.gz",
        WORDNET_DIR / "data.noun.gz",
        WORDNET_DIR / "noun.exc.gz",
    )
    wn_fp = oracles.wordnet_fingerprint(
        WORDNET_DIR / "index.noun.gz",
        WORDNET_DIR / "data.noun.gz",
        WORDNET_DIR / "noun.exc.gz",
    )
    stop = oracles.read_stopwords(STOPWORDS)
    sw_fp = oracles.stopword_digest(STOPWORDS)
    records = oracles.read_captions(DATA / "sample_captions.jsonl.gz")
    counts, n_captions = oracles.count_corpus(wn, stop, records)
    print(f"corpus: {n_captions} captions, {len(counts)} distinct synsets")

    # vocabulary files at the default and the sample-scale threshold
    rows5 = oracles.prune_counts(wn, counts, V_TAU_MAIN)
    rows500 = oracles.prune_counts(wn, counts, V_TAU_DEFAULT)
    save("vocab_tau5.tsv", vocab_tsv(rows5, wn_fp, sw_fp, V_TAU_MAIN))
    save("vocab_tau500.tsv", vocab_tsv(rows500, wn_fp, sw_fp, V_TAU_DEFAULT))

    # raw counts file
    lines = [f"#wordnet={wn_fp}", f"#stopwords={sw_fp}", f"#captions={n_captions}"]
    for off in sorted(counts):
        lines.append(f"{off}\t{counts[off]}")
    save("counts.tsv", "\n".join(lines) + "\n")

    # encoded labels against the tau=5 vocabulary
    vocab_offsets = [off for off, _, _ in rows5]
    label_lines = []
    empty = 0
    total_labels = 0
    for sample_id, text in records:
        indices = oracles.encode_text(wn, stop, vocab_offsets, text)
        total_labels += len(indices)
        if not indices:
            empty += 1
        label_lines.append(
            json.dumps(
                {"id": sample_id, "labels": indices},
                ensure_ascii=False,
                separators=(", ", ": "),
            )
        )
    save("labels_tau5.jsonl", "\n".join(label_lines) + "\n")
    save(
        "encode_summary.json",
        json.dumps(
            {
                "captions": n_captions,
                "empty_captions": empty,
                "total_labels": total_labels,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )

    # overlap analysis: downstream labels vs the tau=5 vocabulary
    labels = []
    seen = set()
    for raw in (DATA / "downstream_labels.txt").read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        label, offs = oracles.resolve_label(wn, stop, line)
        if label in seen:
            continue
        seen.add(label)
        labels.append((label, offs))

    matches = [
        (label, oracles.best_label_match(wn, vocab_offsets, offs))
        for label, offs in labels
    ]
    lines = [
        f"#vocab_size={len(vocab_offsets)}",
        f"#labels={len(matches)}",
        "alpha\tmatched\ttotal",
    ]
    for alpha in OVERLAP_THRESHOLDS:
        matched = sum(1 for _, m in matches if m is not None and m[0] >= alpha)
        lines.append(f"{alpha:g}\t{matched}\t{len(matches)}")
    save("overlap_thresholds.tsv", "\n".join(lines) + "\n")

    lines = ["label\tbest_similarity\tclass_index\tvocab_synset"]
    for label, m in matches:
        if m is None:
            lines.append(f"{label}\tNA\tNA\tNA")
        else:
            sim, k = m
            lines.append(f"{label}\t{sim:.6f}\t{k}\t{vocab_offsets[k]}")
    save("label_matches.tsv", "\n".join(lines) + "\n")

    # histogram of pre-training counts over synsets matched at the lowest alpha
    floor = OVERLAP_THRESHOLDS[0]
    matched_offsets = sorted(
        {vocab_offsets[m[1]] for _, m in matches if m is not None and m[0] >= floor}
    )
    values = sorted(counts[off] for off in matched_offsets)
    buckets = {}
    for v in values:
        buckets[v] = buckets.get(v, 0) + 1
    lines = []
    if values:
        quant = {
            "min": float(values[0]),
            "p25": oracles.quantile(values, 0.25),
            "median": oracles.quantile(values, 0.5),
            "p75": oracles.quantile(values, 0.75),
            "max": float(values[-1]),
        }
        for key, value in quant.items():
            lines.append(f"#{key}={value:g}")
    lines.append("caption_count\tnum_synsets")
    for count in sorted(buckets):
        lines.append(f"{count}\t{buckets[count]}")
    save("synset_histogram.tsv", "\n".join(lines) + "\n")

    # vocabulary size sweep over the reporting grid
    grid = sorted(set(SWEEP_BASE_GRID) | {V_TAU_MAIN})
    lines = ["v_tau\tvocab_size"]
    for tau in grid:
        lines.append(f"{tau}\t{len(oracles.prune_counts(wn, counts, tau))}")
    save("vocab_size_sweep.tsv", "\n".join(lines) + "\n")

    # full frequency distribution in canonical order
    lines = ["rank\tsynset_offset\tlemma\tcaption_count"]
    for rank, (off, lemma, count) in enumerate(oracles.prune_counts(wn, counts, 0)):
        lines.append(f"{rank}\t{off}\t{lemma}\t{count}")
    save("synset_distribution.tsv", "\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
