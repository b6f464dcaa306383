import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rank_brittle import store
from rank_brittle.store import (
    BadMagicError,
    DuplicateIdError,
    EmbeddingStore,
    IdCountMismatchError,
    MissingSidecarError,
    NonFinitePayloadError,
    QueryRecord,
    TruncatedPayloadError,
    ZeroNormError,
    cosine_distance,
    load_store,
    mean_pairwise_distance,
    normalize,
    read_query_records,
    write_query_records,
    write_store,
)


def make_store(rows, ids=None, normalized=False):
    rows = np.asarray(rows, dtype=np.float32)
    ids = tuple(ids) if ids else tuple(f"v{i}" for i in range(rows.shape[0]))
    return EmbeddingStore(ids=ids, vectors=rows, normalized=normalized)


class TestFileFormat:
    def test_round_trip_identity(self, tmp_path):
        st_in = make_store([[1, 0, 0], [0, 1, 0]], ids=["a", "b"])
        path = tmp_path / "two.emb"
        write_store(st_in, path)
        st_out = load_store(path)
        assert st_out.ids == ("a", "b")
        assert st_out.dim == 3
        assert len(st_out) == 2
        assert np.array_equal(st_out.vectors, st_in.vectors)
        assert st_out.normalized is False

    def test_round_trip_bit_exact_random(self, tmp_path):
        rng = np.random.default_rng(7)
        vec = rng.standard_normal((50, 17)).astype(np.float32)
        st_in = make_store(vec)
        path = tmp_path / "r.emb"
        write_store(st_in, path)
        st_out = load_store(path)
        assert st_out.vectors.tobytes() == st_in.vectors.tobytes()
        assert st_out.ids == st_in.ids

    def test_unicode_ids_round_trip(self, tmp_path):
        st_in = make_store([[1, 0]], ids=["café/夢-1"])
        write_store(st_in, tmp_path / "u.emb")
        assert load_store(tmp_path / "u.emb").ids == ("café/夢-1",)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.emb"
        path.write_bytes(b"NOPE" + b"\0" * 32)
        (tmp_path / "bad.emb.ids").write_text("a\n")
        with pytest.raises(BadMagicError, match="offset 0"):
            load_store(path)

    def test_truncated_payload(self, tmp_path):
        st_in = make_store([[1, 0], [0, 1]], ids=["a", "b"])
        path = tmp_path / "t.emb"
        write_store(st_in, path)
        data = path.read_bytes()
        path.write_bytes(data[:-4])
        with pytest.raises(TruncatedPayloadError, match="byte offset"):
            load_store(path)

    def test_id_count_mismatch(self, tmp_path):
        st_in = make_store([[1, 0], [0, 1]], ids=["a", "b"])
        path = tmp_path / "m.emb"
        write_store(st_in, path)
        (tmp_path / "m.emb.ids").write_text("a\nb\nc\n")
        with pytest.raises(IdCountMismatchError, match="3 id lines, header count 2"):
            load_store(path)

    def test_missing_sidecar(self, tmp_path):
        st_in = make_store([[1, 0]], ids=["a"])
        path = tmp_path / "s.emb"
        write_store(st_in, path)
        (tmp_path / "s.emb.ids").unlink()
        with pytest.raises(MissingSidecarError):
            load_store(path)

    def test_duplicate_ids(self, tmp_path):
        st_in = make_store([[1, 0], [0, 1]], ids=["a", "b"])
        path = tmp_path / "d.emb"
        write_store(st_in, path)
        (tmp_path / "d.emb.ids").write_text("a\na\n")
        with pytest.raises(DuplicateIdError, match="'a'"):
            load_store(path)

    def test_nan_payload_names_row(self, tmp_path):
        vec = np.ones((8, 3), dtype=np.float32)
        vec[5, 1] = np.nan
        path = tmp_path / "n.emb"
        # bypass the constructor check by writing bytes directly
        import struct

        header = store.MAGIC + struct.pack("<IQII", 1, 8, 3, 0)
        path.write_bytes(header + vec.tobytes())
        (tmp_path / "n.emb.ids").write_text("".join(f"v{i}\n" for i in range(8)))
        with pytest.raises(NonFinitePayloadError, match="row 5"):
            load_store(path)

    def test_normalized_flag_round_trip(self, tmp_path):
        st_in = normalize(make_store([[3, 4], [0, 2]]))
        path = tmp_path / "norm.emb"
        write_store(st_in, path)
        assert load_store(path).normalized is True


class TestNormalize:
    def test_three_four_five(self):
        out = normalize(make_store([[3, 4]]))
        assert np.allclose(out.vectors[0], [0.6, 0.8], atol=1e-7)
        assert out.normalized

    def test_unit_row_unchanged(self):
        out = normalize(make_store([[1, 0]]))
        assert np.array_equal(out.vectors[0], np.array([1, 0], dtype=np.float32))

    def test_zero_row_rejected(self):
        with pytest.raises(ZeroNormError, match="'z'"):
            normalize(make_store([[1, 0], [0, 0]], ids=["a", "z"]))

    @given(
        st.lists(
            st.lists(
                st.floats(min_value=-1e3, max_value=1e3).filter(lambda x: abs(x) > 1e-3),
                min_size=2,
                max_size=8,
            ),
            min_size=1,
            max_size=10,
        ).filter(lambda rows: len({len(r) for r in rows}) == 1)
    )
    def test_idempotent(self, rows):
        once = normalize(make_store(rows))
        twice = normalize(once)
        assert np.max(np.abs(twice.vectors - once.vectors)) <= 1e-7


class TestCosineDistance:
    def test_identical(self):
        assert cosine_distance([1, 0], [1, 0]) == 0.0

    def test_orthogonal(self):
        assert cosine_distance([1, 0], [0, 1]) == 1.0

    def test_diagonal(self):
        expected = 1 - 1 / math.sqrt(2)
        assert cosine_distance([1, 1], [1, 0]) == pytest.approx(expected, abs=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            cosine_distance([1, 0], [1, 0, 0])

    def test_zero_vector(self):
        with pytest.raises(ZeroNormError):
            cosine_distance([0, 0], [1, 0])

    @given(
        st.lists(st.floats(min_value=-100, max_value=100), min_size=2, max_size=6),
        st.lists(st.floats(min_value=-100, max_value=100), min_size=2, max_size=6),
        st.floats(min_value=1e-3, max_value=1e3),
    )
    def test_symmetric_and_scale_invariant(self, u, v, c):
        n = min(len(u), len(v))
        u, v = np.array(u[:n]), np.array(v[:n])
        if np.allclose(u, 0) or np.allclose(v, 0):
            return
        d1 = cosine_distance(u, v)
        assert d1 == cosine_distance(v, u)
        assert abs(cosine_distance(c * u, v) - d1) <= 1e-6
        assert 0.0 <= d1 <= 2.0

    def test_identical_exactly_zero_random(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            u = rng.standard_normal(rng.integers(2, 64))
            assert cosine_distance(u, u) == 0.0


class TestMeanPairwiseDistance:
    def test_identical_pair(self):
        s = make_store([[2, 1], [2, 1]], ids=["a", "b"])
        assert mean_pairwise_distance(s, ["a", "b"]) == 0.0

    def test_orthogonal_pair(self):
        s = make_store([[1, 0], [0, 1]], ids=["a", "b"])
        assert mean_pairwise_distance(s, ["a", "b"]) == 1.0

    def test_three_vectors_brute_force(self):
        inv = 1 / math.sqrt(2)
        s = make_store([[1, 0], [0, 1], [inv, inv]], ids=["a", "b", "c"])
        # brute force over the 3 pairs from float32 rows
        v = s.vectors.astype(np.float64)
        dists = [
            cosine_distance(v[i], v[j]) for i in range(3) for j in range(i + 1, 3)
        ]
        expected = sum(dists) / 3
        got = mean_pairwise_distance(s, ["a", "b", "c"])
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(0.5285954792089683, abs=1e-7)

    @given(st.integers(min_value=2, max_value=12))
    def test_copies_of_one_vector(self, n):
        rows = [[0.4, -1.25, 3.0]] * n
        s = make_store(rows)
        assert mean_pairwise_distance(s, list(s.ids)) == 0.0

    def test_subset_too_small(self):
        s = make_store([[1, 0], [0, 1]])
        with pytest.raises(ValueError, match="at least 2"):
            mean_pairwise_distance(s, ["v0"])

    def test_unknown_id(self):
        s = make_store([[1, 0], [0, 1]])
        with pytest.raises(KeyError, match="nope"):
            mean_pairwise_distance(s, ["v0", "nope"])


class TestQueryRecords:
    def test_round_trip(self, tmp_path):
        recs = [
            QueryRecord(query_id="q1", text="a dog"),
            QueryRecord(
                query_id="q1::lowercase",
                text="a dog",
                origin="perturbed",
                perturbation_class="lexical",
                perturbation_type="lowercase",
                parent_id="q1",
            ),
        ]
        path = tmp_path / "q.jsonl"
        write_query_records(recs, path)
        assert read_query_records(path) == recs

    def test_original_consistency_enforced(self):
        with pytest.raises(ValueError, match="inconsistent"):
            QueryRecord(query_id="q", text="t", origin="original", parent_id="x")
        with pytest.raises(ValueError, match="inconsistent"):
            QueryRecord(
                query_id="q", text="t", origin="perturbed",
                perturbation_class="lexical", perturbation_type="lowercase",
            )

    def test_malformed_line_names_lineno(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"query_id":"a","text":"x"}\n'
            '{"query_id":"b","text":"y"}\n'
            "{oops\n"
        )
        with pytest.raises(ValueError, match="line 3"):
            read_query_records(path)

    def test_unknown_field_rejected(self, tmp_path):
        path = tmp_path / "extra.jsonl"
        path.write_text('{"query_id":"a","text":"x","wat":1}\n')
        with pytest.raises(ValueError, match="wat"):
            read_query_records(path)
