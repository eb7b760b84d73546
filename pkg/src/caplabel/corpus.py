"""Caption corpus I/O.

A corpus shard is a JSONL file (optionally gzip-compressed): one JSON object
per line with string fields ``id`` and ``text``.
"""

from __future__ import annotations

import gzip
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator


class CorpusFormatError(ValueError):
    """A corpus line could not be parsed; message carries file and line number."""

    def __init__(self, path: str | Path, line_no: int, detail: str):
        self.path = str(path)
        self.line_no = line_no
        self.detail = detail
        super().__init__(f"{self.path}:{line_no}: {detail}")


@dataclass(frozen=True, slots=True)
class CaptionRecord:
    """One caption: stable sample id plus raw text."""

    sample_id: str
    text: str


def open_maybe_gzip(path: str | Path, mode: str = "rt"):
    """Open a file for reading or writing, gzip-compressing ``.gz`` paths."""
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode, encoding="utf-8" if "t" in mode else None)
    if "t" in mode:
        return open(path, mode, encoding="utf-8")
    return open(path, mode)


def iter_captions(path: str | Path) -> Iterator[CaptionRecord]:
    """Stream caption records from a JSONL shard.

    Raises :class:`CorpusFormatError` on malformed JSON, missing or
    non-string fields, empty text, or duplicate sample ids within the shard.
    """
    path = Path(path)
    seen_ids: set[str] = set()
    with open_maybe_gzip(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                raise CorpusFormatError(path, line_no, "blank line in corpus")
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, line_no, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise CorpusFormatError(path, line_no, "line is not a JSON object")
            sample_id = obj.get("id")
            text = obj.get("text")
            if not isinstance(sample_id, str) or not sample_id:
                raise CorpusFormatError(path, line_no, "missing or non-string 'id'")
            if not isinstance(text, str):
                raise CorpusFormatError(path, line_no, "missing or non-string 'text'")
            if not text.strip():
                raise CorpusFormatError(path, line_no, f"empty text for id {sample_id!r}")
            if sample_id in seen_ids:
                raise CorpusFormatError(path, line_no, f"duplicate sample id {sample_id!r}")
            seen_ids.add(sample_id)
            yield CaptionRecord(sample_id=sample_id, text=text)


def count_lines(path: str | Path) -> int:
    """Number of lines in a (possibly gzipped) text file."""
    n = 0
    with open_maybe_gzip(path) as fh:
        for _ in fh:
            n += 1
    return n
