"""Multi-hot encoding and the JSONL label format."""

import dataclasses
import gzip
import json

import pytest

import oracles
from conftest import write_tiny_wordnet
from caplabel.corpus import CaptionRecord
from caplabel.extraction import StopwordList
from caplabel.labels import (
    EncodeSummary,
    LabelFormatError,
    MultiHotLabel,
    check_provenance,
    encode,
    encode_corpus_file,
    encode_records,
    load_labels,
)
from caplabel.vocab import ProvenanceError, SynsetCounts, prune
from caplabel.wordnet import SynsetId, load_wordnet

SW = StopwordList(words=frozenset({"a", "the", "and"}), digest="0" * 16)


@pytest.fixture(scope="module")
def mdb(tmp_path_factory):
    return load_wordnet(*write_tiny_wordnet(tmp_path_factory.mktemp("wn")))


@pytest.fixture(scope="module")
def mvocab(mdb):
    counts = SynsetCounts(
        counts={
            SynsetId("00000003"): 9,  # dog    -> class 0
            SynsetId("00000004"): 5,  # cat    -> class 1
            SynsetId("00000006"): 3,  # plant  -> class 2
        },
        captions_processed=20,
        wordnet_fingerprint=mdb.fingerprint,
        stopword_digest=SW.digest,
    )
    return prune(counts, 0, mdb)


class TestMultiHotLabel:
    def test_valid(self):
        label = MultiHotLabel("x", (0, 2, 7))
        assert label.class_indices == (0, 2, 7)

    def test_empty_ok(self):
        assert MultiHotLabel("x", ()).class_indices == ()

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            MultiHotLabel("x", (-1, 2))

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            MultiHotLabel("x", (1, 1))

    def test_descending_rejected(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            MultiHotLabel("x", (3, 1))


class TestEncode:
    def test_known_caption(self, mdb, mvocab):
        rec = CaptionRecord("c1", "the plant and the dog")
        label = encode(rec, mvocab, mdb, SW)
        assert label.sample_id == "c1"
        assert label.class_indices == (0, 2)

    def test_out_of_vocab_synsets_dropped(self, mdb, mvocab):
        # "box" is a synset but not a vocabulary class
        label = encode(CaptionRecord("c", "a dog and a box"), mvocab, mdb, SW)
        assert label.class_indices == (0,)

    def test_empty_label(self, mdb, mvocab):
        assert encode(CaptionRecord("c", "the box"), mvocab, mdb, SW).class_indices == ()

    def test_indices_sorted_not_mention_ordered(self, mdb, mvocab):
        label = encode(CaptionRecord("c", "plant cat dog"), mvocab, mdb, SW)
        assert label.class_indices == (0, 1, 2)

    def test_encode_records_order(self, mdb, mvocab):
        recs = [CaptionRecord("a", "dog"), CaptionRecord("b", "cat")]
        out = list(encode_records(recs, mvocab, mdb, SW))
        assert [l.sample_id for l in out] == ["a", "b"]
        assert [l.class_indices for l in out] == [(0,), (1,)]


class TestProvenance:
    def test_check_passes(self, mdb, mvocab):
        check_provenance(mvocab, mdb, SW)

    def test_wordnet_mismatch(self, mdb, mvocab):
        foreign = dataclasses.replace(mvocab, wordnet_fingerprint="f" * 16)
        with pytest.raises(ProvenanceError, match="database"):
            check_provenance(foreign, mdb, SW)

    def test_stopword_mismatch(self, mdb, mvocab):
        foreign = dataclasses.replace(mvocab, stopword_digest="f" * 16)
        with pytest.raises(ProvenanceError, match="stoplist"):
            check_provenance(foreign, mdb, SW)

    def test_encode_corpus_checks_provenance(self, mdb, mvocab, tmp_path):
        bad_sw = StopwordList(words=SW.words, digest="9" * 16)
        corpus = tmp_path / "c.jsonl"
        corpus.write_text('{"id": "a", "text": "dog"}\n')
        with pytest.raises(ProvenanceError):
            encode_corpus_file(corpus, mvocab, mdb, bad_sw, tmp_path / "out.jsonl")


def write_corpus(path, texts):
    with open(path, "w") as fh:
        for i, t in enumerate(texts):
            fh.write(json.dumps({"id": f"c{i}", "text": t}) + "\n")


class TestEncodeCorpusFile:
    TEXTS = ["a dog", "the cat and dog", "box", "plant plant", "qqq", "hot dog"] * 4

    def test_summary_and_output(self, mdb, mvocab, tmp_path):
        corpus = tmp_path / "c.jsonl"
        write_corpus(corpus, self.TEXTS)
        out = tmp_path / "labels.jsonl"
        summary = encode_corpus_file(corpus, mvocab, mdb, SW, out)
        assert summary == EncodeSummary(captions=24, empty_captions=12, total_labels=16)
        assert summary.mean_labels == pytest.approx(16 / 24)
        labels = load_labels(out)
        assert len(labels) == 24
        assert labels[0].class_indices == (0,)
        assert labels[1].class_indices == (0, 1)
        assert labels[2].class_indices == ()

    def test_line_format_exact(self, mdb, mvocab, tmp_path):
        corpus = tmp_path / "c.jsonl"
        write_corpus(corpus, ["cat and dog", "qqq"])
        out = tmp_path / "labels.jsonl"
        encode_corpus_file(corpus, mvocab, mdb, SW, out)
        assert out.read_text() == (
            '{"id": "c0", "labels": [0, 1]}\n{"id": "c1", "labels": []}\n'
        )

    def test_parallel_byte_identical(self, mdb, mvocab, tmp_path):
        corpus = tmp_path / "c.jsonl"
        write_corpus(corpus, self.TEXTS)
        seq, par = tmp_path / "seq.jsonl", tmp_path / "par.jsonl"
        s1 = encode_corpus_file(corpus, mvocab, mdb, SW, seq, jobs=1)
        s2 = encode_corpus_file(corpus, mvocab, mdb, SW, par, jobs=5)
        assert seq.read_bytes() == par.read_bytes()
        assert s1 == s2

    def test_gzip_output(self, mdb, mvocab, tmp_path):
        corpus = tmp_path / "c.jsonl"
        write_corpus(corpus, ["dog"])
        out = tmp_path / "labels.jsonl.gz"
        encode_corpus_file(corpus, mvocab, mdb, SW, out)
        with gzip.open(out, "rt") as fh:
            assert fh.read() == '{"id": "c0", "labels": [0]}\n'
        assert load_labels(out)[0].class_indices == (0,)

    def test_empty_corpus(self, mdb, mvocab, tmp_path):
        corpus = tmp_path / "c.jsonl"
        corpus.write_text("")
        out = tmp_path / "labels.jsonl"
        summary = encode_corpus_file(corpus, mvocab, mdb, SW, out)
        assert summary == EncodeSummary(captions=0, empty_captions=0, total_labels=0)
        assert summary.mean_labels == 0.0
        assert out.read_text() == ""

    def test_zero_jobs_rejected(self, mdb, mvocab, tmp_path):
        corpus = tmp_path / "c.jsonl"
        write_corpus(corpus, ["dog"])
        with pytest.raises(ValueError, match="jobs"):
            encode_corpus_file(corpus, mvocab, mdb, SW, tmp_path / "o.jsonl", jobs=0)

    def test_matches_oracle_on_sample(
        self, db, stopwords, vocab5, raw_wn, stopword_set, corpus_path, tmp_path
    ):
        out = tmp_path / "labels.jsonl"
        encode_corpus_file(corpus_path, vocab5, db, stopwords, out)
        got = [(l.sample_id, list(l.class_indices)) for l in load_labels(out)]
        offsets = [e.synset.offset for e in vocab5.entries]
        want = [
            (cid, oracles.encode_text(raw_wn, stopword_set, offsets, text))
            for cid, text in oracles.read_captions(corpus_path)
        ]
        assert got == want


class TestIterLabels:
    def roundtrip_error(self, tmp_path, content, message):
        path = tmp_path / "labels.jsonl"
        path.write_text(content)
        with pytest.raises(LabelFormatError, match=message):
            load_labels(path)

    def test_blank_line(self, tmp_path):
        self.roundtrip_error(tmp_path, '{"id": "a", "labels": []}\n\n', "blank line")

    def test_invalid_json(self, tmp_path):
        self.roundtrip_error(tmp_path, "{nope\n", "invalid JSON")

    def test_missing_id(self, tmp_path):
        self.roundtrip_error(tmp_path, '{"labels": []}\n', "need string 'id'")

    def test_non_string_id(self, tmp_path):
        self.roundtrip_error(tmp_path, '{"id": 3, "labels": []}\n', "need string 'id'")

    def test_non_list_labels(self, tmp_path):
        self.roundtrip_error(tmp_path, '{"id": "a", "labels": 3}\n', "need string 'id'")

    def test_non_integer_labels(self, tmp_path):
        self.roundtrip_error(
            tmp_path, '{"id": "a", "labels": ["x"]}\n', "labels must be integers"
        )

    def test_bool_labels_rejected(self, tmp_path):
        self.roundtrip_error(
            tmp_path, '{"id": "a", "labels": [true]}\n', "labels must be integers"
        )

    def test_unsorted_labels_rejected(self, tmp_path):
        self.roundtrip_error(
            tmp_path, '{"id": "a", "labels": [2, 1]}\n', "strictly increasing"
        )

    def test_error_carries_line_number(self, tmp_path):
        path = tmp_path / "labels.jsonl"
        path.write_text('{"id": "a", "labels": []}\n{bad\n')
        with pytest.raises(LabelFormatError, match=r"labels\.jsonl:2"):
            load_labels(path)
