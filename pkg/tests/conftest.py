"""Shared fixtures.

The real noun database takes a few seconds to parse, so it (and everything
derived from the bundled sample corpus) is session-scoped. Format-level
tests use a tiny synthetic database written per test instead.
"""

import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
REPO = TESTS.parent
DATA = REPO / "data"
GOLDEN = TESTS / "data" / "golden"

sys.path.insert(0, str(TESTS))

import oracles

from caplabel.corpus import iter_captions
from caplabel.extraction import bundled_stopwords_path, load_stopwords
from caplabel.vocab import count_captions, prune
from caplabel.wordnet import load_default_wordnet, load_wordnet, locate_wordnet_files


@pytest.fixture(scope="session")
def db():
    return load_default_wordnet()


@pytest.fixture(scope="session")
def stopwords():
    return load_stopwords()


@pytest.fixture(scope="session")
def raw_wn():
    """The whole database re-parsed by the independent oracle parser."""
    idx, data, exc = locate_wordnet_files()
    return oracles.parse_raw_wordnet(idx, data, exc)


@pytest.fixture(scope="session")
def stopword_set():
    return oracles.read_stopwords(bundled_stopwords_path())


@pytest.fixture(scope="session")
def corpus_path():
    return DATA / "sample_captions.jsonl.gz"


@pytest.fixture(scope="session")
def downstream_path():
    return DATA / "downstream_labels.txt"


@pytest.fixture(scope="session")
def probe_path():
    return DATA / "probe_labels.txt"


@pytest.fixture(scope="session")
def benchmark_path():
    return DATA / "benchmark.json"


@pytest.fixture(scope="session")
def golden_dir():
    return GOLDEN


@pytest.fixture(scope="session")
def sample_counts(db, stopwords, corpus_path):
    return count_captions(iter_captions(corpus_path), db, stopwords)


@pytest.fixture(scope="session")
def vocab5(sample_counts, db):
    return prune(sample_counts, 5, db)


@pytest.fixture(scope="session")
def vocab500(sample_counts, db):
    return prune(sample_counts, 500, db)


# ---------------------------------------------------------------------------
# Tiny synthetic WordNet
#
# Taxonomy: entity is the root of everything except island, which stands
# alone so no-common-ancestor paths can be tested.
#
#   entity 00000001
#     animal 00000002
#       dog 00000003 (also lemma domestic_dog)
#         puppy 00000005
#       cat 00000004
#     plant 00000006
#     hot_dog 00000007
#     box 00000008
#   island 00000009 (no hypernyms)

TINY_DATA = [
    "  1 This database is a synthetic fixture.",
    "  2 Header lines start with two spaces and must be skipped.",
    "00000001 03 n 01 entity 0 000 | that which exists",
    "00000002 05 n 01 animal 0 001 @ 00000001 n 0000 | a living organism",
    "00000003 05 n 02 dog 0 domestic_dog 0 001 @ 00000002 n 0000 | a domesticated canid",
    "00000004 05 n 01 cat 0 001 @ 00000002 n 0000 | feline mammal",
    "00000005 05 n 01 puppy 0 001 @ 00000003 n 0000 | a young dog",
    "00000006 20 n 01 plant 0 001 @ 00000001 n 0000 | a living organism lacking locomotion",
    "00000007 13 n 01 hot_dog 0 001 @ 00000001 n 0000 | a smooth-textured sausage",
    "00000008 06 n 01 box 0 001 @ 00000001 n 0000 | a rigid container",
    "00000009 17 n 01 island 0 000 | land surrounded by water",
]

TINY_INDEX = [
    "  1 This database is a synthetic fixture.",
    "  2 Header lines start with two spaces and must be skipped.",
    "animal n 1 0 1 0 00000002",
    "box n 1 0 1 1 00000008",
    "cat n 1 0 1 1 00000004",
    "dog n 1 1 @ 1 1 00000003",
    "domestic_dog n 1 0 1 0 00000003",
    "entity n 1 0 1 0 00000001",
    "hot_dog n 1 0 1 0 00000007",
    "island n 1 0 1 0 00000009",
    "pet n 2 0 2 0 00000003 00000004",
    "plant n 1 0 1 0 00000006",
    "puppy n 1 0 1 0 00000005",
]

TINY_EXC = [
    "puppies puppy",
    "pups puppy",
    "dogz dog doge",
    "pet dog",
    "boxen box",
    "boxen entity",
]


def write_tiny_wordnet(dirpath, data=None, index=None, exc=None):
    """Write the three database files, with optional line overrides."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    (dirpath / "data.noun").write_text(
        "\n".join(TINY_DATA if data is None else data) + "\n", encoding="latin-1"
    )
    (dirpath / "index.noun").write_text(
        "\n".join(TINY_INDEX if index is None else index) + "\n", encoding="latin-1"
    )
    (dirpath / "noun.exc").write_text(
        "\n".join(TINY_EXC if exc is None else exc) + "\n", encoding="latin-1"
    )
    return dirpath / "index.noun", dirpath / "data.noun", dirpath / "noun.exc"


@pytest.fixture()
def tiny_paths(tmp_path):
    return write_tiny_wordnet(tmp_path / "wn")


@pytest.fixture()
def tiny_db(tiny_paths):
    return load_wordnet(*tiny_paths)
