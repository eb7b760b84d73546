"""Noun extraction from caption text.

The pipeline per caption: whitespace tokenization with edge-punctuation
stripping and lowercasing, stopword filtering, morphological normalization
against the WordNet noun index, and mapping of each extracted lemma to its
first (most frequent) sense. Adjacent token pairs are first checked as
underscore-joined collocations so that e.g. "hot dog" maps to the sausage
synset rather than to the temperature-free reading of its parts.
"""

from __future__ import annotations

import hashlib
import unicodedata
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .corpus import CaptionRecord
from .wordnet import SynsetId, WordNetDb


@dataclass(frozen=True, slots=True)
class TaggedToken:
    """A token recognized as a noun: surface form, token position in the
    caption, and the WordNet lemma it normalized to. Collocations span two
    positions; ``position`` is the first."""

    surface: str
    position: int
    lemma: str
    is_noun: bool = True


@dataclass(frozen=True)
class StopwordList:
    """Function-word stoplist with a content digest for provenance checks."""

    words: frozenset[str]
    digest: str

    def __contains__(self, word: str) -> bool:
        return word in self.words

    def __len__(self) -> int:
        return len(self.words)

    def __iter__(self):
        return iter(sorted(self.words))


def bundled_stopwords_path() -> Path:
    return Path(str(resources.files("caplabel").joinpath("data", "stopwords.txt")))


def load_stopwords(path: str | Path | None = None) -> StopwordList:
    """Load the stoplist (bundled list when ``path`` is None).

    The digest is a SHA-256 prefix over the raw file bytes, so any edit to
    the list changes downstream artifact provenance.
    """
    path = Path(path) if path is not None else bundled_stopwords_path()
    raw = path.read_bytes()
    words = set()
    for line in raw.decode("utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        words.add(line.lower())
    if not words:
        raise ValueError(f"stopword list {path} is empty")
    return StopwordList(words=frozenset(words), digest=hashlib.sha256(raw).hexdigest()[:16])


def _strip_edge_punct(token: str) -> str:
    start = 0
    end = len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> list[str]:
    """Split on whitespace, strip leading/trailing punctuation (any Unicode
    P* category), lowercase, and drop tokens that end up empty.

    Interior punctuation survives, so hyphenated and contracted forms stay
    single tokens.
    """
    out: list[str] = []
    for raw in text.split():
        tok = _strip_edge_punct(raw).lower()
        if tok:
            out.append(tok)
    return out


def extract_nouns(
    tokens: list[str],
    db: WordNetDb,
    stopwords: StopwordList,
    bigrams: bool = True,
) -> list[TaggedToken]:
    """Recognize noun tokens in an already-tokenized caption.

    Scans left to right. At each position the underscore-joined bigram with
    the next token is tried first against the lemma index (collocations are
    taken verbatim, bypassing stopword and morphology handling); on a match
    both tokens are consumed. Otherwise the single token must survive the
    stopword filter and normalize via morphy to count as a noun; the first
    morphy candidate wins. Pass ``bigrams=False`` for strict unigram mode.
    """
    out: list[TaggedToken] = []
    i = 0
    n = len(tokens)
    while i < n:
        if bigrams and i + 1 < n:
            joined = tokens[i] + "_" + tokens[i + 1]
            if joined in db.lemma_index:
                out.append(TaggedToken(surface=joined, position=i, lemma=joined))
                i += 2
                continue
        tok = tokens[i]
        if tok not in stopwords:
            bases = db.morphy_noun(tok)
            if bases:
                out.append(TaggedToken(surface=tok, position=i, lemma=bases[0]))
        i += 1
    return out


def extract_synsets(
    record: CaptionRecord,
    db: WordNetDb,
    stopwords: StopwordList,
    bigrams: bool = True,
) -> set[SynsetId]:
    """The caption-to-synset-set map: extracted noun lemmas, each resolved
    to its first sense, deduplicated."""
    nouns = extract_nouns(tokenize(record.text), db, stopwords, bigrams=bigrams)
    return {db.lemma_index[t.lemma][0] for t in nouns}


def extract_synsets_text(
    text: str,
    db: WordNetDb,
    stopwords: StopwordList,
    bigrams: bool = True,
) -> set[SynsetId]:
    """Convenience wrapper over :func:`extract_synsets` for bare strings."""
    return extract_synsets(CaptionRecord("_", text), db, stopwords, bigrams=bigrams)
