"""Princeton WordNet 3.0 noun database.

Parses the plain-text distribution files (``index.noun``, ``data.noun``,
``noun.exc``) into an immutable in-memory taxonomy and provides the three
operations the rest of the package is built on: lemma lookup, morphological
normalization (morphy), and hypernym-path similarity.

Only the noun database is loaded; verbs, adjectives and adverbs are out of
scope. Files may be stored gzip-compressed (``.gz`` suffix); they are
decompressed transparently and all provenance hashes are computed over the
decompressed bytes, so a compressed and an uncompressed copy of the same
release fingerprint identically.
"""

from __future__ import annotations

import gzip
import hashlib
import os
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple

NOUN = "n"

#: Environment variable consulted when no explicit database directory is given.
WORDNET_DIR_ENV = "CATLIP_WORDNET_DIR"

# Morphy suffix detachment rules for nouns, applied in order.
_DETACHMENT_RULES: tuple[tuple[str, str], ...] = (
    ("s", ""),
    ("ses", "s"),
    ("xes", "x"),
    ("zes", "z"),
    ("ches", "ch"),
    ("shes", "sh"),
    ("men", "man"),
    ("ies", "y"),
)

# data.noun synset types we accept. The noun file only ever uses 'n'.
_NOUN_SS_TYPES = frozenset("n")

# Pointer symbols that denote a hypernym edge (plain and instance).
_HYPERNYM_SYMBOLS = frozenset({"@", "@i"})


class WordNetError(ValueError):
    """Base class for all database loading and lookup failures."""


class WordNetFormatError(WordNetError):
    """A database file line could not be parsed.

    Carries enough context (file, line number, offending field) to locate
    the problem in the source file.
    """

    def __init__(self, path: str | Path, line_no: int, field_name: str, detail: str):
        self.path = str(path)
        self.line_no = line_no
        self.field_name = field_name
        self.detail = detail
        super().__init__(f"{self.path}:{line_no}: bad {field_name}: {detail}")


class DanglingOffsetError(WordNetError):
    """A pointer or index entry references a synset offset that does not exist."""


class HypernymCycleError(WordNetError):
    """The hypernym graph contains a cycle, so it is not a taxonomy."""


class UnknownSynsetError(WordNetError, KeyError):
    """A SynsetId was passed that is not present in the database."""


class SynsetId(NamedTuple):
    """Identifier of a synset: 8-digit byte offset plus part of speech."""

    offset: str
    pos: str = NOUN

    def __str__(self) -> str:
        return f"{self.offset}-{self.pos}"


@dataclass(frozen=True, slots=True)
class Synset:
    """One noun synset: member lemmas, hypernym edges, and the gloss text."""

    id: SynsetId
    lemmas: tuple[str, ...]
    hypernyms: tuple[SynsetId, ...]
    gloss: str


@dataclass(frozen=True)
class WordNetDb:
    """Immutable noun taxonomy with lemma and morphology lookups.

    ``fingerprint`` is a 16-hex-digit SHA-256 prefix over the decompressed
    bytes of the three source files, used by downstream artifacts to detect
    provenance mismatches.
    """

    synsets: dict[SynsetId, Synset]
    lemma_index: dict[str, tuple[SynsetId, ...]]
    exceptions: dict[str, tuple[str, ...]]
    fingerprint: str
    _ancestor_cache: dict[SynsetId, dict[SynsetId, int]] = field(
        default_factory=dict, repr=False, compare=False
    )

    def __len__(self) -> int:
        return len(self.synsets)

    @property
    def lemma_count(self) -> int:
        return len(self.lemma_index)

    def synsets_for(self, lemma: str) -> list[SynsetId]:
        """All synsets containing ``lemma``, in index.noun sense order.

        The first element is the most frequent sense. Returns an empty list
        for lemmas not in the database; no morphology is applied here.
        """
        return list(self.lemma_index.get(lemma, ()))

    def morphy_noun(self, word: str) -> list[str]:
        """Normalize an inflected noun to base lemmas known to the database.

        Candidates are produced in priority order: exception-file bases
        first, then the word itself if it is already a lemma, then suffix
        detachment rule outputs. Every returned lemma exists in
        ``lemma_index``; duplicates are removed keeping first position.
        Returns an empty list when nothing resolves.
        """
        candidates: list[str] = []
        for base in self.exceptions.get(word, ()):
            if base in self.lemma_index:
                candidates.append(base)
        if word in self.lemma_index:
            candidates.append(word)
        for suffix, replacement in _DETACHMENT_RULES:
            if len(word) > len(suffix) and word.endswith(suffix):
                stem = word[: -len(suffix)] + replacement
                if stem in self.lemma_index:
                    candidates.append(stem)
        seen: set[str] = set()
        out: list[str] = []
        for cand in candidates:
            if cand not in seen:
                seen.add(cand)
                out.append(cand)
        return out

    def hypernym_distances(self, sid: SynsetId) -> dict[SynsetId, int]:
        """Map every hypernym ancestor of ``sid`` (including itself at 0)
        to its minimum upward hop count. Cached per synset."""
        cached = self._ancestor_cache.get(sid)
        if cached is not None:
            return cached
        if sid not in self.synsets:
            raise UnknownSynsetError(f"unknown synset {sid}")
        dist: dict[SynsetId, int] = {sid: 0}
        queue = deque([sid])
        while queue:
            cur = queue.popleft()
            d = dist[cur] + 1
            for parent in self.synsets[cur].hypernyms:
                if parent not in dist or d < dist[parent]:
                    dist[parent] = d
                    queue.append(parent)
        self._ancestor_cache[sid] = dist
        return dist

    def path_similarity(self, a: SynsetId, b: SynsetId) -> float | None:
        """Similarity 1 / (d + 1) where d is the length of the shortest
        path between ``a`` and ``b`` running through a common hypernym
        ancestor (the sum of upward hop counts, minimized over shared
        ancestors). Identical synsets score 1.0; synsets with no common
        ancestor return None.
        """
        if a not in self.synsets:
            raise UnknownSynsetError(f"unknown synset {a}")
        if b not in self.synsets:
            raise UnknownSynsetError(f"unknown synset {b}")
        if a == b:
            return 1.0
        da = self.hypernym_distances(a)
        db = self.hypernym_distances(b)
        if len(da) > len(db):
            da, db = db, da
        best: int | None = None
        for anc, d1 in da.items():
            d2 = db.get(anc)
            if d2 is not None:
                total = d1 + d2
                if best is None or total < best:
                    best = total
        if best is None:
            return None
        return 1.0 / (best + 1)


def _open_text(path: Path):
    """Open a database file for text reading, decompressing ``.gz`` files.

    WordNet 3.0 ships as Latin-1; glosses contain a handful of 8-bit
    characters, so UTF-8 would be wrong here.
    """
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="latin-1", newline="")
    return open(path, "rt", encoding="latin-1", newline="")


def _read_bytes(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def _is_license_line(line: str) -> bool:
    # The 29-line license header at the top of index/data files: every
    # line starts with two spaces.
    return line.startswith("  ")


def _parse_data_noun(path: Path) -> dict[SynsetId, Synset]:
    synsets: dict[SynsetId, Synset] = {}
    with _open_text(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line or _is_license_line(line):
                continue
            head, sep, gloss = line.partition("|")
            if not sep:
                raise WordNetFormatError(path, line_no, "gloss separator", "missing '|'")
            toks = head.split()
            if len(toks) < 4:
                raise WordNetFormatError(path, line_no, "synset header", "fewer than 4 fields")
            offset = toks[0]
            if len(offset) != 8 or not offset.isdigit():
                raise WordNetFormatError(
                    path, line_no, "synset_offset", f"expected 8 decimal digits, got {offset!r}"
                )
            ss_type = toks[2]
            if ss_type not in _NOUN_SS_TYPES:
                raise WordNetFormatError(
                    path, line_no, "ss_type", f"expected noun type, got {ss_type!r}"
                )
            try:
                w_cnt = int(toks[3], 16)
            except ValueError:
                raise WordNetFormatError(
                    path, line_no, "w_cnt", f"not a hex integer: {toks[3]!r}"
                ) from None
            if w_cnt < 1:
                raise WordNetFormatError(path, line_no, "w_cnt", "synset has no words")
            pos_in_line = 4
            lemmas: list[str] = []
            for i in range(w_cnt):
                try:
                    word = toks[pos_in_line + 2 * i]
                    lex_id = toks[pos_in_line + 2 * i + 1]
                except IndexError:
                    raise WordNetFormatError(
                        path, line_no, "word", f"line ends inside word list (w_cnt={w_cnt})"
                    ) from None
                try:
                    int(lex_id, 16)
                except ValueError:
                    raise WordNetFormatError(
                        path, line_no, "lex_id", f"not a hex integer: {lex_id!r}"
                    ) from None
                lemmas.append(word.lower())
            pos_in_line += 2 * w_cnt
            try:
                p_cnt = int(toks[pos_in_line])
            except (IndexError, ValueError):
                raise WordNetFormatError(
                    path, line_no, "p_cnt", "missing or not a decimal integer"
                ) from None
            pos_in_line += 1
            sid = SynsetId(offset)
            hypernyms: list[SynsetId] = []
            for i in range(p_cnt):
                base = pos_in_line + 4 * i
                try:
                    symbol = toks[base]
                    ptr_offset = toks[base + 1]
                    ptr_pos = toks[base + 2]
                    source_target = toks[base + 3]
                except IndexError:
                    raise WordNetFormatError(
                        path, line_no, "pointer", f"line ends inside pointer list (p_cnt={p_cnt})"
                    ) from None
                if len(ptr_offset) != 8 or not ptr_offset.isdigit():
                    raise WordNetFormatError(
                        path, line_no, "pointer offset",
                        f"expected 8 decimal digits, got {ptr_offset!r}",
                    )
                try:
                    int(source_target, 16)
                except ValueError:
                    raise WordNetFormatError(
                        path, line_no, "source/target", f"not a hex integer: {source_target!r}"
                    ) from None
                if symbol in _HYPERNYM_SYMBOLS and ptr_pos == NOUN:
                    parent = SynsetId(ptr_offset)
                    if parent == sid:
                        raise WordNetFormatError(
                            path, line_no, "pointer offset", "synset is its own hypernym"
                        )
                    hypernyms.append(parent)
            if sid in synsets:
                raise WordNetFormatError(
                    path, line_no, "synset_offset", f"duplicate synset {offset}"
                )
            synsets[sid] = Synset(
                id=sid,
                lemmas=tuple(lemmas),
                hypernyms=tuple(hypernyms),
                gloss=gloss.strip(),
            )
    if not synsets:
        raise WordNetFormatError(path, 0, "file", "no synsets found")
    return synsets


def _parse_index_noun(
    path: Path, synsets: dict[SynsetId, Synset]
) -> dict[str, tuple[SynsetId, ...]]:
    index: dict[str, tuple[SynsetId, ...]] = {}
    with _open_text(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line or _is_license_line(line):
                continue
            toks = line.split()
            if len(toks) < 6:
                raise WordNetFormatError(path, line_no, "index entry", "fewer than 6 fields")
            lemma = toks[0].lower()
            if toks[1] != NOUN:
                raise WordNetFormatError(
                    path, line_no, "pos", f"expected 'n', got {toks[1]!r}"
                )
            try:
                synset_cnt = int(toks[2])
                p_cnt = int(toks[3])
            except ValueError:
                raise WordNetFormatError(
                    path, line_no, "synset_cnt/p_cnt", "not a decimal integer"
                ) from None
            # layout: lemma pos synset_cnt p_cnt [ptr_symbol...] sense_cnt
            # tagsense_cnt synset_offset...
            expected_len = 4 + p_cnt + 2 + synset_cnt
            if len(toks) != expected_len:
                raise WordNetFormatError(
                    path, line_no, "index entry",
                    f"expected {expected_len} fields for synset_cnt={synset_cnt} "
                    f"p_cnt={p_cnt}, got {len(toks)}",
                )
            offsets = toks[4 + p_cnt + 2:]
            sids: list[SynsetId] = []
            seen: set[str] = set()
            for off in offsets:
                if len(off) != 8 or not off.isdigit():
                    raise WordNetFormatError(
                        path, line_no, "synset_offset",
                        f"expected 8 decimal digits, got {off!r}",
                    )
                if off in seen:
                    raise WordNetFormatError(
                        path, line_no, "synset_offset", f"duplicate offset {off} in entry"
                    )
                seen.add(off)
                sid = SynsetId(off)
                if sid not in synsets:
                    raise DanglingOffsetError(
                        f"{path}:{line_no}: lemma {lemma!r} references missing synset {off}"
                    )
                sids.append(sid)
            if lemma in index:
                raise WordNetFormatError(
                    path, line_no, "lemma", f"duplicate index entry for {lemma!r}"
                )
            index[lemma] = tuple(sids)
    if not index:
        raise WordNetFormatError(path, 0, "file", "no index entries found")
    return index


def _parse_noun_exc(path: Path) -> dict[str, tuple[str, ...]]:
    exceptions: dict[str, list[str]] = {}
    with _open_text(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            toks = line.lower().split()
            if len(toks) < 2:
                raise WordNetFormatError(
                    path, line_no, "exception entry", "needs inflected form plus at least one base"
                )
            inflected, bases = toks[0], toks[1:]
            # A few inflected forms appear on more than one line; merge the
            # base lists in file order, dropping repeats.
            merged = exceptions.setdefault(inflected, [])
            for base in bases:
                if base not in merged:
                    merged.append(base)
    return {k: tuple(v) for k, v in exceptions.items()}


def _check_acyclic(synsets: dict[SynsetId, Synset], data_path: Path) -> None:
    """Kahn's algorithm over hypernym edges; also catches dangling parents."""
    in_deg: dict[SynsetId, int] = {sid: 0 for sid in synsets}
    for syn in synsets.values():
        for parent in syn.hypernyms:
            if parent not in synsets:
                raise DanglingOffsetError(
                    f"{data_path}: synset {syn.id.offset} points to missing hypernym "
                    f"{parent.offset}"
                )
            in_deg[parent] += 1
    queue = deque(sid for sid, deg in in_deg.items() if deg == 0)
    visited = 0
    while queue:
        cur = queue.popleft()
        visited += 1
        for parent in synsets[cur].hypernyms:
            in_deg[parent] -= 1
            if in_deg[parent] == 0:
                queue.append(parent)
    if visited != len(synsets):
        remaining = [sid.offset for sid, deg in in_deg.items() if deg > 0]
        sample = ", ".join(sorted(remaining)[:5])
        raise HypernymCycleError(
            f"hypernym graph has a cycle involving {len(remaining)} synsets "
            f"(e.g. {sample})"
        )


def load_wordnet(
    index_noun: str | Path, data_noun: str | Path, noun_exc: str | Path
) -> WordNetDb:
    """Load the noun database from the three source files.

    Raises :class:`WordNetFormatError` with file/line/field context on any
    malformed line, :class:`DanglingOffsetError` on references to missing
    synsets, and :class:`HypernymCycleError` if the hypernym graph is not
    acyclic.
    """
    index_noun = Path(index_noun)
    data_noun = Path(data_noun)
    noun_exc = Path(noun_exc)
    synsets = _parse_data_noun(data_noun)
    _check_acyclic(synsets, data_noun)
    lemma_index = _parse_index_noun(index_noun, synsets)
    exceptions = _parse_noun_exc(noun_exc)
    digest = hashlib.sha256()
    for path in (index_noun, data_noun, noun_exc):
        digest.update(_read_bytes(path))
    return WordNetDb(
        synsets=synsets,
        lemma_index=lemma_index,
        exceptions=exceptions,
        fingerprint=digest.hexdigest()[:16],
    )


def bundled_wordnet_dir() -> Path:
    """Directory holding the gzip-compressed WordNet 3.0 copy shipped with
    the package."""
    return Path(str(resources.files("caplabel").joinpath("data", "wordnet")))


def locate_wordnet_files(wordnet_dir: str | Path | None = None) -> tuple[Path, Path, Path]:
    """Resolve (index.noun, data.noun, noun.exc) paths.

    Resolution order: explicit ``wordnet_dir`` argument, then the
    ``CATLIP_WORDNET_DIR`` environment variable, then the bundled copy.
    Within the chosen directory a plain file is preferred over its ``.gz``
    twin. Raises FileNotFoundError naming the missing file.
    """
    if wordnet_dir is None:
        env = os.environ.get(WORDNET_DIR_ENV)
        wordnet_dir = env if env else bundled_wordnet_dir()
    base = Path(wordnet_dir)
    out: list[Path] = []
    for name in ("index.noun", "data.noun", "noun.exc"):
        plain = base / name
        gz = base / (name + ".gz")
        if plain.exists():
            out.append(plain)
        elif gz.exists():
            out.append(gz)
        else:
            raise FileNotFoundError(f"{name} (or {name}.gz) not found in {base}")
    return out[0], out[1], out[2]


def load_default_wordnet(wordnet_dir: str | Path | None = None) -> WordNetDb:
    """Load the database using :func:`locate_wordnet_files` resolution."""
    idx, data, exc = locate_wordnet_files(wordnet_dir)
    return load_wordnet(idx, data, exc)
