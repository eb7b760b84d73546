#!/usr/bin/env python3
"""Generate the bundled sample caption corpus (data/sample_captions.jsonl.gz).

The corpus is a deterministic synthetic fixture of 1000 captions shaped so
the pipeline's interesting paths all fire on real data:

* three synsets (photo, dog, cat) exceed the default pruning threshold of
  500, in strictly decreasing count order;
* one synset (tree) lands on exactly 500 caption mentions, so strict
  greater-than pruning excludes it at threshold 500;
* a long tail of ~140 nouns with counts roughly 5..120 survives a threshold
  of 5, including collocations ("hot dog", "polar bear"), irregular plurals
  (children, mice, wolves), hyphenated tokens, and unicode punctuation;
* about 3% of captions contain no extractable noun at all.

Rerunning the script reproduces the committed file byte for byte (fixed
seed, gzip mtime pinned to zero).
"""

from __future__ import annotations

import gzip
import io
import json
import random
import sys
from pathlib import Path

from caplabel.corpus import CaptionRecord
from caplabel.extraction import extract_synsets, load_stopwords
from caplabel.vocab import count_captions
from caplabel.wordnet import load_default_wordnet

SEED = 20240817
BASE_CAPTIONS = 940
TOTAL_CAPTIONS = 1000
TREE_TARGET = 500

POOL = """ball car house bird flower boat chair book table lamp phone camera computer guitar piano
clock bottle cup plate knife fork spoon umbrella hat shirt dress shoe sock glove scarf beach mountain
forest river lake ocean park garden street bridge building kitchen bathroom bedroom office school
church castle tower man woman child boy girl baby family crowd player teacher doctor nurse chef artist
pizza sandwich cake cookie bread cheese apple banana orange grape strawberry salad soup coffee tea juice
milk horse cow sheep rabbit elephant lion tiger bear monkey fish duck chicken butterfly spider mouse
picture sunset sunrise sky cloud rain snow grass leaf rock stone sand wave window door roof fence
wall candle basket blanket pillow towel mirror vase painting sculpture restaurant kitten puppy wolf goose""".split()

OBJECT_SLOT = ["ball", "car", "house", "bird", "flower", "boat", "chair", "book"]

IRREGULAR_PLURALS = {
    "man": "men", "woman": "women", "child": "children", "mouse": "mice",
    "leaf": "leaves", "knife": "knives", "wolf": "wolves", "goose": "geese",
}

BIGRAM_PHRASES = [
    ("a hot dog", 0.25), ("an ice cream", 0.15), ("a polar bear", 0.12),
    ("a teddy bear", 0.12), ("a fire engine", 0.09), ("a traffic light", 0.09),
    ("a sea lion", 0.09), ("a rocking chair", 0.09),
]

PLACES = [
    "at the beach", "in the park", "near the river", "on the mountain",
    "in the kitchen", "by the lake", "at school", "in the garden",
    "on the street", "at the swimming pool", "inside the old church",
]

TREE_SUFFIXES = [
    "under a tree", "under the tree", "near a tree", "by the old tree",
    "beside a tree", "among the trees",
]

DOG_PHRASES = [
    "a dog", "the dog", "a sleepy dog", "two dogs", "my dog", "a big dog",
    "dogs", "a small dog", "the happy dog", "three dogs",
]
# "a black cat" is deliberately absent: black_cat is a WordNet collocation
# (the fisher, Martes pennanti) and would swallow the cat token.
CAT_PHRASES = [
    "a cat", "the cat", "a lazy cat", "two cats", "my cat", "a white cat",
    "cats", "the little cat",
]

VERB_FILLERS = ["chasing", "watching", "next to", "beside", "with"]

ADJECTIVES = ["red", "blue", "old", "tiny", "huge", "bright", "wooden", "vintage", "fluffy", "golden"]

NOISE_CAPTIONS = [
    "of the and", "so very much", "!!!", "it's just...", "qzxvwq zzvq",
    "and then there were some", "??", "to be or not to be", "me too",
    "WOW !!", "this is it", "so so so", "oh no", "here we go again",
]

SPECIAL_CAPTIONS = [
    "state-of-the-art photo of a dog",
    "«dogs» and “cats” — 2024",
    "A DOG AND A CAT AT THE BEACH",
    "children playing with mice near the fence",
    "men and women at the restaurant",
    "wolves and geese by the lake",
    "a photo of a hot dog and a dog",
    "leaves on the grass, knives on the table",
    "a black cat on the fence",
]


def pluralize(noun: str) -> str:
    if noun in IRREGULAR_PLURALS:
        return IRREGULAR_PLURALS[noun]
    if noun.endswith(("s", "x", "z", "ch", "sh")):
        return noun + "es"
    if noun.endswith("y") and noun[-2] not in "aeiou":
        return noun[:-1] + "ies"
    return noun + "s"


def weighted_pool(rng: random.Random) -> list[tuple[str, float]]:
    nouns = sorted(set(POOL))
    rng.shuffle(nouns)
    return [(n, 1.0 / (rank + 3) ** 0.7) for rank, n in enumerate(nouns)]


def noun_phrase(rng: random.Random, noun: str) -> str:
    det = rng.choice(["a", "the", "some", ""])
    adj = rng.choice(ADJECTIVES) if rng.random() < 0.18 else ""
    plural = rng.random() < 0.25
    surface = pluralize(noun) if plural else noun
    if plural and det == "a":
        det = "the"
    words = [w for w in (det, adj, surface) if w]
    if words[0] == "a" and words[1][0] in "aeiou":
        words[0] = "an"
    return " ".join(words)


def decorate(rng: random.Random, text: str) -> str:
    r = rng.random()
    if r < 0.05:
        text = text.upper()
    elif r < 0.20:
        text = text[0].upper() + text[1:]
    r = rng.random()
    if r < 0.12:
        text += "."
    elif r < 0.18:
        text += "!"
    elif r < 0.21:
        text += " !!"
    return text


def make_caption(rng: random.Random, pool: list[tuple[str, float]]) -> str:
    if rng.random() < 0.03:
        return rng.choice(NOISE_CAPTIONS)
    parts: list[str] = []
    if rng.random() < 0.70:
        parts.append("a photo of")
    r = rng.random()
    if r < 0.34:
        parts.append(rng.choice(DOG_PHRASES))
    elif r < 0.64:
        parts.append(rng.choice(DOG_PHRASES))
        parts.append("and " + rng.choice(CAT_PHRASES))
    elif r < 0.93:
        parts.append(rng.choice(CAT_PHRASES))
    if rng.random() < 0.15:
        parts.append(rng.choice(VERB_FILLERS))
        parts.append(noun_phrase(rng, rng.choice(OBJECT_SLOT)))
    elif rng.random() < 0.45:
        parts.append("with " + noun_phrase(rng, rng.choice(OBJECT_SLOT)))
    n_extra = rng.choices([0, 1, 2, 3], weights=[30, 40, 25, 5])[0]
    if n_extra:
        nouns = [n for n, _ in pool]
        weights = [w for _, w in pool]
        for noun in rng.choices(nouns, weights=weights, k=n_extra):
            parts.append("and " + noun_phrase(rng, noun))
    if rng.random() < 0.08:
        phrases = [p for p, _ in BIGRAM_PHRASES]
        weights = [w for _, w in BIGRAM_PHRASES]
        parts.append("with " + rng.choices(phrases, weights=weights)[0])
    if rng.random() < 0.35:
        parts.append(rng.choice(PLACES))
    if rng.random() < 0.50:
        parts.append(rng.choice(TREE_SUFFIXES))
    text = " ".join(parts) if parts else rng.choice(NOISE_CAPTIONS)
    return decorate(rng, text)


def main() -> int:
    out_path = Path(__file__).resolve().parent.parent / "data" / "sample_captions.jsonl.gz"
    db = load_default_wordnet()
    stopwords = load_stopwords()
    rng = random.Random(SEED)
    pool = weighted_pool(rng)

    texts = list(SPECIAL_CAPTIONS)
    while len(texts) < BASE_CAPTIONS:
        texts.append(make_caption(rng, pool))

    def first_sense_count(counts, lemma):
        sids = db.synsets_for(lemma)
        return counts.counts.get(sids[0], 0) if sids else 0

    records = [CaptionRecord(f"tmp-{i}", t) for i, t in enumerate(texts)]
    counts = count_captions(records, db, stopwords)
    tree_now = first_sense_count(counts, "tree")
    need_tree = TREE_TARGET - tree_now
    slots = TOTAL_CAPTIONS - len(texts)
    if not (0 < need_tree <= slots):
        print(f"tree count {tree_now} needs {need_tree} fillers but {slots} slots free",
              file=sys.stderr)
        return 1
    tree_fillers = ["a tree", "just a tree", "one tree", "a single tree"]
    for i in range(need_tree):
        texts.append(tree_fillers[i % len(tree_fillers)])
    while len(texts) < TOTAL_CAPTIONS:
        texts.append(rng.choice(["a photo", "another photo", "a photo again"]))

    rng.shuffle(texts)
    records = [CaptionRecord(f"cap-{i:04d}", t) for i, t in enumerate(texts)]

    counts = count_captions(records, db, stopwords)
    empties = sum(1 for r in records if not extract_synsets(r, db, stopwords))

    photo, dog, cat, tree = (
        first_sense_count(counts, k) for k in ("photo", "dog", "cat", "tree")
    )
    assert tree == TREE_TARGET, tree
    assert photo > dog > cat > 505, (photo, dog, cat)
    for probe in ("ball", "car", "house", "bird", "flower", "hot_dog"):
        assert first_sense_count(counts, probe) >= 8, (probe, first_sense_count(counts, probe))
    assert 15 <= empties <= 60, empties
    tail = sorted(c for c in counts.counts.values() if c > 5)
    assert len(tail) >= 80, len(tail)

    buf = io.BytesIO()
    with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as gz:
        for r in records:
            line = json.dumps({"id": r.sample_id, "text": r.text}, ensure_ascii=False)
            gz.write(line.encode("utf-8") + b"\n")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(buf.getvalue())

    print(f"wrote {out_path} ({len(records)} captions)")
    print(f"photo={photo} dog={dog} cat={cat} tree={tree} empties={empties}")
    print(f"distinct synsets={counts.distinct_synsets} "
          f"classes@5={sum(1 for c in counts.counts.values() if c > 5)} "
          f"classes@500={sum(1 for c in counts.counts.values() if c > 500)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
