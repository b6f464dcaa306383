import math

import numpy as np
import pytest

from rank_brittle.ranker import RankedList, rank_batch, rank_topk, read_rankings, write_rankings
from rank_brittle.store import EmbeddingStore, ZeroNormError, normalize

from oracles import full_sort_rank_oracle


def unit_store(rows, ids=None):
    rows = np.asarray(rows, dtype=np.float32)
    ids = tuple(ids) if ids else tuple(f"c{i:04d}" for i in range(rows.shape[0]))
    return normalize(EmbeddingStore(ids=ids, vectors=rows))


def random_unit_store(rng, n, dim, with_ties=False):
    vec = rng.standard_normal((n, dim)).astype(np.float32)
    if with_ties and n >= 4:
        # duplicated rows share scores, forcing id tie-breaks
        vec[1] = vec[0]
        vec[3] = vec[2]
    return unit_store(vec)


class TestRankTopk:
    def test_exact_match_first(self):
        corpus = unit_store([[1, 0], [0, 1]], ids=["a", "b"])
        rl = rank_topk(corpus, [1, 0], 1)
        assert rl.item_ids() == ["a"]
        assert rl.items[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_tie_broken_by_id(self):
        corpus = unit_store([[1, 0], [0, 1]], ids=["a", "b"])
        q = np.array([1, 1], dtype=np.float64) / math.sqrt(2)
        rl = rank_topk(corpus, q, 2)
        assert rl.item_ids() == ["a", "b"]
        assert rl.items[0][1] == pytest.approx(0.7071, abs=1e-3)
        assert rl.items[0][1] == rl.items[1][1]

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(11)
        corpus = random_unit_store(rng, 1000, 16, with_ties=True)
        vecs = np.asarray(corpus.vectors)
        for qi in range(20):
            q = rng.standard_normal(16)
            expected = full_sort_rank_oracle(list(corpus.ids), vecs, q, 50)
            assert rank_topk(corpus, q, 50).item_ids() == expected

    def test_k_larger_than_corpus(self):
        corpus = unit_store([[1, 0], [0, 1], [1, 1]])
        rl = rank_topk(corpus, [1, 0], 10)
        assert len(rl) == 3

    def test_k_zero_rejected(self):
        corpus = unit_store([[1, 0]])
        with pytest.raises(ValueError, match="positive"):
            rank_topk(corpus, [1, 0], 0)

    def test_dim_mismatch(self):
        corpus = unit_store([[1, 0]])
        with pytest.raises(ValueError, match="dim"):
            rank_topk(corpus, [1, 0, 0], 1)

    def test_zero_query(self):
        corpus = unit_store([[1, 0]])
        with pytest.raises(ZeroNormError):
            rank_topk(corpus, [0, 0], 1)

    def test_unnormalized_corpus_rejected(self):
        corpus = EmbeddingStore(ids=("a",), vectors=np.array([[2, 0]], dtype=np.float32))
        with pytest.raises(ValueError, match="normalized"):
            rank_topk(corpus, [1, 0], 1)

    def test_scale_invariance(self):
        rng = np.random.default_rng(5)
        corpus = random_unit_store(rng, 200, 8)
        q = rng.standard_normal(8)
        base = rank_topk(corpus, q, 25).item_ids()
        for c in (1e-3, 0.5, 7.0, 1e4):
            assert rank_topk(corpus, c * q, 25).item_ids() == base

    def test_deterministic_repeat(self):
        rng = np.random.default_rng(9)
        corpus = random_unit_store(rng, 500, 12, with_ties=True)
        q = rng.standard_normal(12)
        first = rank_topk(corpus, q, 100)
        for _ in range(3):
            again = rank_topk(corpus, q, 100)
            assert again.items == first.items


class TestRankBatch:
    def test_singleton_matches_topk(self):
        rng = np.random.default_rng(2)
        corpus = random_unit_store(rng, 100, 8)
        queries = unit_store(rng.standard_normal((1, 8)).astype(np.float32), ids=["q0"])
        batch = rank_batch(corpus, queries, 10)
        solo = rank_topk(corpus, queries.vectors[0], 10, query_id="q0")
        assert batch == [solo]

    def test_duplicate_queries_identical(self):
        rng = np.random.default_rng(3)
        corpus = random_unit_store(rng, 100, 8)
        row = rng.standard_normal(8).astype(np.float32)
        queries = unit_store(np.stack([row, row, row]), ids=["a", "b", "c"])
        batch = rank_batch(corpus, queries, 10)
        assert batch[0].items == batch[1].items == batch[2].items

    def test_matches_sequential_map(self):
        rng = np.random.default_rng(4)
        corpus = random_unit_store(rng, 300, 8, with_ties=True)
        queries = unit_store(rng.standard_normal((200, 8)).astype(np.float32))
        batch = rank_batch(corpus, queries, 20)
        for i, qid in enumerate(queries.ids):
            solo = rank_topk(corpus, queries.vectors[i], 20, query_id=qid)
            assert batch[i] == solo

    def test_parallel_equals_sequential(self):
        rng = np.random.default_rng(6)
        corpus = random_unit_store(rng, 300, 8, with_ties=True)
        queries = unit_store(rng.standard_normal((40, 8)).astype(np.float32))
        seq = rank_batch(corpus, queries, 30, threads=1)
        par = rank_batch(corpus, queries, 30, threads=4)
        assert par == seq

    def test_error_names_query(self):
        corpus = unit_store([[1, 0], [0, 1]])
        queries = EmbeddingStore(
            ids=("ok", "zero"),
            vectors=np.array([[1, 0], [0, 0]], dtype=np.float32),
        )
        with pytest.raises(ZeroNormError, match="zero"):
            rank_batch(corpus, queries, 1)


class TestRankedListInvariants:
    def test_rejects_duplicate_ids(self):
        with pytest.raises(ValueError, match="duplicate"):
            RankedList(query_id="q", k=2, items=(("a", 1.0), ("a", 0.5)))

    def test_rejects_increasing_scores(self):
        with pytest.raises(ValueError, match="non-increasing"):
            RankedList(query_id="q", k=2, items=(("a", 0.5), ("b", 1.0)))

    def test_tie_rule_holds_for_generated_lists(self):
        # construction-time guarantee: equal scores appear in ascending id order
        rng = np.random.default_rng(12)
        corpus = random_unit_store(rng, 64, 6, with_ties=True)
        rl = rank_topk(corpus, rng.standard_normal(6), 64)
        for (id1, s1), (id2, s2) in zip(rl.items, rl.items[1:]):
            if s1 == s2:
                assert id1 < id2


class TestRankingsFile:
    def test_round_trip_and_score_precision(self, tmp_path):
        rng = np.random.default_rng(8)
        corpus = random_unit_store(rng, 50, 4)
        queries = unit_store(rng.standard_normal((3, 4)).astype(np.float32))
        ranked = rank_batch(corpus, queries, 10)
        path = tmp_path / "rankings.jsonl"
        write_rankings(ranked, path)
        back = read_rankings(path)
        assert [r.query_id for r in back] == [r.query_id for r in ranked]
        for orig, loaded in zip(ranked, back):
            assert loaded.item_ids() == orig.item_ids()
            for (_, s1), (_, s2) in zip(orig.items, loaded.items):
                assert s2 == float(f"{s1:.6g}")

    def test_bad_line_named(self, tmp_path):
        path = tmp_path / "r.jsonl"
        path.write_text('{"query_id":"q","k":1,"items":[["a",1.0]]}\nnot json\n')
        with pytest.raises(ValueError, match="line 2"):
            read_rankings(path)
