"""Transfer plans, materialization, and the CATEMB01 binary format."""

import json

import numpy as np
import pytest

from conftest import write_tiny_wordnet
from caplabel.extraction import StopwordList
from caplabel.overlap import resolve_downstream_labels
from caplabel.transfer import (
    DEFAULT_RANDOM_SCALE,
    MAGIC,
    EmbeddingFormatError,
    EmbeddingMatrix,
    TransferPlan,
    TransferRule,
    build_transfer_plan,
    export_embeddings_tsv,
    load_embeddings,
    materialize,
    random_head,
    save_embeddings,
    write_plan_json,
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
            SynsetId("00000003"): 9,  # dog   -> 0
            SynsetId("00000004"): 5,  # cat   -> 1
            SynsetId("00000006"): 3,  # plant -> 2
        },
        captions_processed=20,
        wordnet_fingerprint=mdb.fingerprint,
        stopword_digest=SW.digest,
    )
    return prune(counts, 0, mdb)


def labels(mdb, tmp_path, lines):
    path = tmp_path / "labels.txt"
    path.write_text("\n".join(lines) + "\n")
    return resolve_downstream_labels(path, mdb, SW)


def pretrained_for(mvocab, dim=6, seed=123):
    rng = np.random.default_rng(seed)
    values = rng.normal(0, 1, size=(len(mvocab), dim)).astype(np.float32)
    return EmbeddingMatrix(values=values, provenance=mvocab.fingerprint_bytes())


class TestEmbeddingMatrix:
    def test_shape_and_dtype_validated(self):
        with pytest.raises(ValueError, match="2-D"):
            EmbeddingMatrix(np.zeros(4, dtype=np.float32), b"\x00" * 32)
        with pytest.raises(ValueError, match="float32"):
            EmbeddingMatrix(np.zeros((2, 2)), b"\x00" * 32)
        with pytest.raises(ValueError, match="non-finite"):
            EmbeddingMatrix(
                np.array([[np.nan, 0.0]], dtype=np.float32), b"\x00" * 32
            )
        with pytest.raises(ValueError, match="32 bytes"):
            EmbeddingMatrix(np.zeros((2, 2), dtype=np.float32), b"\x00" * 7)

    def test_properties(self):
        m = EmbeddingMatrix(np.zeros((3, 5), dtype=np.float32), b"\x01" * 32)
        assert m.rows == 3 and m.dim == 5


class TestTransferRule:
    def test_exact_needs_one_index(self):
        TransferRule(kind="exact", class_indices=(2,))
        with pytest.raises(ValueError, match="exactly one"):
            TransferRule(kind="exact", class_indices=(1, 2))
        with pytest.raises(ValueError, match="exactly one"):
            TransferRule(kind="exact")

    def test_average_needs_ascending(self):
        TransferRule(kind="average", class_indices=(0, 3))
        with pytest.raises(ValueError, match="at least one"):
            TransferRule(kind="average")
        with pytest.raises(ValueError, match="ascending"):
            TransferRule(kind="average", class_indices=(3, 0))
        with pytest.raises(ValueError, match="ascending"):
            TransferRule(kind="average", class_indices=(1, 1))

    def test_random_carries_nothing(self):
        TransferRule(kind="random")
        with pytest.raises(ValueError, match="no class indices"):
            TransferRule(kind="random", class_indices=(0,))


class TestBuildPlan:
    def test_rule_assignment(self, mdb, mvocab, tmp_path):
        # dog -> exact(0); "puppy island" -> puppy matches dog at 0.5 only,
        # island never matches -> random at alpha 1.0; "dog plant" averages
        downstream = labels(mdb, tmp_path, ["dog", "puppy island", "dog plant", "qzxvwq"])
        plan = build_transfer_plan(downstream, mvocab, mdb, alpha=1.0)
        by_label = dict(plan.rules)
        assert by_label["dog"] == TransferRule(kind="exact", class_indices=(0,))
        assert by_label["puppy_island"] == TransferRule(kind="random")
        assert by_label["dog_plant"] == TransferRule(kind="average", class_indices=(0, 2))
        assert by_label["qzxvwq"] == TransferRule(kind="random")
        assert plan.counts() == {"exact": 1, "average": 1, "random": 2}
        assert plan.alpha == 1.0
        assert plan.vocab_fingerprint == mvocab.fingerprint_bytes()

    def test_lower_alpha_promotes_matches(self, mdb, mvocab, tmp_path):
        downstream = labels(mdb, tmp_path, ["puppy island"])
        plan = build_transfer_plan(downstream, mvocab, mdb, alpha=0.5)
        # puppy now matches dog; island still matches nothing
        assert plan.rules[0][1] == TransferRule(kind="exact", class_indices=(0,))

    def test_duplicate_matches_collapse(self, mdb, mvocab, tmp_path):
        # both parts match class 0 (puppy at 0.5, dog at 1.0): two matched
        # synsets -> Average, deduped to the single distinct class
        downstream = labels(mdb, tmp_path, ["puppy dog"])
        plan = build_transfer_plan(downstream, mvocab, mdb, alpha=0.5)
        assert plan.rules[0][1] == TransferRule(kind="average", class_indices=(0,))

    def test_alpha_validation(self, mdb, mvocab, tmp_path):
        downstream = labels(mdb, tmp_path, ["dog"])
        for alpha in (0.0, -0.5, 1.5):
            with pytest.raises(ValueError, match="alpha"):
                build_transfer_plan(downstream, mvocab, mdb, alpha=alpha)

    def test_empty_downstream_rejected(self, mdb, mvocab):
        from caplabel.overlap import DownstreamLabelSet

        with pytest.raises(ValueError, match="empty"):
            build_transfer_plan(DownstreamLabelSet(labels=()), mvocab, mdb)

    def test_digest_sensitivity(self, mdb, mvocab, tmp_path):
        base = build_transfer_plan(labels(mdb, tmp_path, ["dog", "cat"]), mvocab, mdb)
        relabeled = TransferPlan(
            rules=((base.rules[0][0] + "x", base.rules[0][1]), base.rules[1]),
            alpha=base.alpha,
            vocab_fingerprint=base.vocab_fingerprint,
        )
        realpha = TransferPlan(
            rules=base.rules, alpha=0.9, vocab_fingerprint=base.vocab_fingerprint
        )
        revocab = TransferPlan(
            rules=base.rules, alpha=base.alpha, vocab_fingerprint=b"\x07" * 32
        )
        rerule = TransferPlan(
            rules=(base.rules[0], (base.rules[1][0], TransferRule(kind="random"))),
            alpha=base.alpha,
            vocab_fingerprint=base.vocab_fingerprint,
        )
        digests = {p.digest() for p in (base, relabeled, realpha, revocab, rerule)}
        assert len(digests) == 5
        assert all(len(d) == 32 for d in digests)


class TestMaterialize:
    def test_exact_rows_bit_copied(self, mdb, mvocab, tmp_path):
        downstream = labels(mdb, tmp_path, ["dog", "cat"])
        plan = build_transfer_plan(downstream, mvocab, mdb)
        pre = pretrained_for(mvocab)
        out = materialize(plan, pre, seed=0)
        assert out.values[0].tobytes() == pre.values[0].tobytes()
        assert out.values[1].tobytes() == pre.values[1].tobytes()

    def test_average_rows_float64_mean(self, mdb, mvocab, tmp_path):
        downstream = labels(mdb, tmp_path, ["dog plant"])
        plan = build_transfer_plan(downstream, mvocab, mdb)
        pre = pretrained_for(mvocab)
        out = materialize(plan, pre, seed=0)
        want = (
            (pre.values[0].astype(np.float64) + pre.values[2].astype(np.float64)) / 2
        ).astype(np.float32)
        # zero-ulp equality, not approx
        assert out.values[0].tobytes() == want.tobytes()

    def test_random_rows_truncated_and_seeded(self, mdb, mvocab, tmp_path):
        downstream = labels(mdb, tmp_path, ["qzxvwq", "island"])
        plan = build_transfer_plan(downstream, mvocab, mdb)
        pre = pretrained_for(mvocab, dim=64)
        a = materialize(plan, pre, seed=7)
        b = materialize(plan, pre, seed=7)
        c = materialize(plan, pre, seed=8)
        assert a.values.tobytes() == b.values.tobytes()
        assert a.values.tobytes() != c.values.tobytes()
        assert np.abs(a.values).max() <= 2.0 * DEFAULT_RANDOM_SCALE
        assert a.values.std() > 0

    def test_output_provenance_tracks_plan_and_seed(self, mdb, mvocab, tmp_path):
        downstream = labels(mdb, tmp_path, ["dog"])
        plan = build_transfer_plan(downstream, mvocab, mdb)
        pre = pretrained_for(mvocab)
        a = materialize(plan, pre, seed=1)
        b = materialize(plan, pre, seed=2)
        c = materialize(plan, pre, seed=1, random_scale=0.01)
        assert len(a.provenance) == 32
        assert a.provenance != b.provenance
        assert a.provenance != c.provenance
        assert a.provenance != plan.vocab_fingerprint

    def test_provenance_mismatch_rejected(self, mdb, mvocab, tmp_path):
        downstream = labels(mdb, tmp_path, ["dog"])
        plan = build_transfer_plan(downstream, mvocab, mdb)
        stranger = EmbeddingMatrix(
            values=np.zeros((3, 4), dtype=np.float32), provenance=b"\x09" * 32
        )
        with pytest.raises(ProvenanceError, match="provenance"):
            materialize(plan, stranger, seed=0)

    def test_out_of_range_class_rejected(self, mdb, mvocab, tmp_path):
        downstream = labels(mdb, tmp_path, ["dog"])
        plan = build_transfer_plan(downstream, mvocab, mdb)
        short = EmbeddingMatrix(
            values=np.zeros((0, 4), dtype=np.float32),
            provenance=mvocab.fingerprint_bytes(),
        )
        with pytest.raises(ValueError, match="cites class"):
            materialize(plan, short, seed=0)

    def test_bad_scale_rejected(self, mdb, mvocab, tmp_path):
        downstream = labels(mdb, tmp_path, ["dog"])
        plan = build_transfer_plan(downstream, mvocab, mdb)
        pre = pretrained_for(mvocab)
        with pytest.raises(ValueError, match="random_scale"):
            materialize(plan, pre, seed=0, random_scale=0.0)

    def test_row_order_follows_plan(self, mdb, mvocab, tmp_path):
        downstream = labels(mdb, tmp_path, ["cat", "dog"])
        plan = build_transfer_plan(downstream, mvocab, mdb)
        pre = pretrained_for(mvocab)
        out = materialize(plan, pre, seed=0)
        assert out.rows == 2
        assert out.values[0].tobytes() == pre.values[1].tobytes()  # cat
        assert out.values[1].tobytes() == pre.values[0].tobytes()  # dog


class TestRandomHead:
    def test_shape_seed_and_truncation(self):
        a = random_head(5, 16, seed=3)
        b = random_head(5, 16, seed=3)
        c = random_head(5, 16, seed=4)
        assert a.shape == (5, 16) and a.dtype == np.float32
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        assert np.abs(a).max() <= 2.0 * DEFAULT_RANDOM_SCALE

    def test_custom_scale(self):
        a = random_head(4, 32, seed=0, random_scale=1.0)
        assert np.abs(a).max() <= 2.0
        assert np.abs(a).max() > 2.0 * DEFAULT_RANDOM_SCALE


class TestEmbeddingIO:
    def test_round_trip(self, tmp_path):
        m = EmbeddingMatrix(
            values=np.arange(12, dtype=np.float32).reshape(3, 4) / 7,
            provenance=bytes(range(32)),
        )
        path = tmp_path / "head.bin"
        save_embeddings(m, path)
        back = load_embeddings(path)
        assert back.values.tobytes() == m.values.tobytes()
        assert back.provenance == m.provenance
        assert back.rows == 3 and back.dim == 4

    def test_file_layout(self, tmp_path):
        m = EmbeddingMatrix(
            values=np.zeros((2, 3), dtype=np.float32), provenance=b"\xab" * 32
        )
        path = tmp_path / "head.bin"
        save_embeddings(m, path)
        blob = path.read_bytes()
        assert blob[:8] == MAGIC == b"CATEMB01"
        assert len(blob) == 8 + 16 + 2 * 3 * 4 + 32
        assert blob[-32:] == b"\xab" * 32

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "head.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(EmbeddingFormatError, match="bad magic"):
            load_embeddings(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "head.bin"
        path.write_bytes(MAGIC + b"\x00" * 10)
        with pytest.raises(EmbeddingFormatError, match="truncated"):
            load_embeddings(path)

    def test_size_mismatch(self, tmp_path):
        m = EmbeddingMatrix(
            values=np.zeros((2, 3), dtype=np.float32), provenance=b"\x00" * 32
        )
        path = tmp_path / "head.bin"
        save_embeddings(m, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(EmbeddingFormatError, match="size"):
            load_embeddings(path)

    def test_non_finite_payload_rejected(self, tmp_path):
        m = EmbeddingMatrix(
            values=np.ones((1, 2), dtype=np.float32), provenance=b"\x00" * 32
        )
        path = tmp_path / "head.bin"
        save_embeddings(m, path)
        blob = bytearray(path.read_bytes())
        blob[24:28] = np.array([np.inf], dtype="<f4").tobytes()
        path.write_bytes(bytes(blob))
        with pytest.raises(EmbeddingFormatError, match="non-finite"):
            load_embeddings(path)

    def test_export_tsv(self, tmp_path):
        m = EmbeddingMatrix(
            values=np.array([[0.5, -1.25]], dtype=np.float32),
            provenance=b"\x01" * 32,
        )
        path = tmp_path / "head.tsv"
        export_embeddings_tsv(m, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "#provenance=" + "01" * 32
        assert lines[1] == "#rows=1"
        assert lines[2] == "#dim=2"
        assert lines[3] == "0.5\t-1.25"


class TestPlanJson:
    def test_document_shape(self, mdb, mvocab, tmp_path):
        downstream = labels(mdb, tmp_path, ["dog", "dog plant", "qzxvwq"])
        plan = build_transfer_plan(downstream, mvocab, mdb)
        path = tmp_path / "plan.json"
        write_plan_json(plan, path)
        doc = json.loads(path.read_text())
        assert doc["alpha"] == 1.0
        assert doc["vocab_fingerprint"] == mvocab.fingerprint_bytes().hex()
        assert doc["plan_digest"] == plan.digest().hex()
        assert doc["rule_counts"] == {"exact": 1, "average": 1, "random": 1}
        assert doc["rules"][0] == {"label": "dog", "kind": "exact", "class_indices": [0]}
        assert doc["rules"][1] == {
            "label": "dog_plant",
            "kind": "average",
            "class_indices": [0, 2],
        }
        assert doc["rules"][2] == {"label": "qzxvwq", "kind": "random", "class_indices": []}
