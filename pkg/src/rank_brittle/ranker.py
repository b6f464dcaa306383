"""Exact top-k cosine ranking of a corpus store against query vectors.

Rankings here are the reference objects the overlap metrics compare, so
selection is exact (partial select, then full sort of the candidates)
and ties are broken deterministically by ascending corpus id. Scores
are float64 dot products against the unit-normalized query.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .store import EmbeddingStore, ZeroNormError

# corpus rows converted to float64 this many at a time
_CHUNK_ROWS = 65536


@dataclass(frozen=True)
class RankedList:
    """Top-k corpus ids with scores for one query, in rank order."""

    query_id: str
    k: int
    items: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be positive")
        if len(self.items) > self.k:
            raise ValueError(f"{len(self.items)} items exceed k={self.k}")
        prev_score = None
        seen: set[str] = set()
        for cid, score in self.items:
            if cid in seen:
                raise ValueError(f"duplicate corpus id {cid!r}")
            seen.add(cid)
            if prev_score is not None and score > prev_score:
                raise ValueError("scores must be non-increasing")
            prev_score = score
        object.__setattr__(self, "items", tuple(self.items))
        # The tie rule (equal scores ordered by ascending id) holds for
        # lists built by rank_topk but cannot be re-checked after score
        # serialization: distinct scores may round to equal values.

    def item_ids(self) -> list[str]:
        return [cid for cid, _ in self.items]

    def __len__(self) -> int:
        return len(self.items)


def _scores(corpus: EmbeddingStore, query_vec: np.ndarray) -> np.ndarray:
    q = np.asarray(query_vec, dtype=np.float64).ravel()
    if q.shape[0] != corpus.dim:
        raise ValueError(
            f"query dim {q.shape[0]} does not match corpus dim {corpus.dim}"
        )
    norm = float(np.sqrt(q @ q))
    if norm == 0.0:
        raise ZeroNormError("query vector has zero norm")
    qn = q / norm
    n = len(corpus)
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, n)
        out[start:stop] = corpus.vectors[start:stop].astype(np.float64) @ qn
    return out


def rank_topk(
    corpus: EmbeddingStore,
    query_vec: Sequence[float] | np.ndarray,
    k: int,
    query_id: str = "",
) -> RankedList:
    """Exact top-k rows by dot product with the normalized query.

    Equivalent to a full sort by (-score, corpus_id) truncated to k.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if not corpus.normalized:
        raise ValueError("corpus store must be normalized before ranking")
    scores = _scores(corpus, query_vec)
    n = scores.shape[0]
    kk = min(k, n)
    if kk < n:
        cut = np.partition(scores, n - kk)[n - kk]
        cand = np.flatnonzero(scores > cut)
        short = kk - cand.shape[0]
        if short > 0:
            tied = sorted(
                (corpus.ids[i] for i in np.flatnonzero(scores == cut))
            )[:short]
            tied_idx = np.array([corpus.index_of(i) for i in tied], dtype=np.int64)
            cand = np.concatenate([cand, tied_idx])
    else:
        cand = np.arange(n)
    order = sorted(cand.tolist(), key=lambda i: (-scores[i], corpus.ids[i]))
    items = tuple((corpus.ids[i], float(scores[i])) for i in order)
    return RankedList(query_id=query_id, k=k, items=items)


def rank_batch(
    corpus: EmbeddingStore,
    queries: EmbeddingStore,
    k: int,
    threads: int = 1,
) -> list[RankedList]:
    """rank_topk over every query row, output aligned with query order."""
    if queries.dim != corpus.dim:
        raise ValueError(
            f"query dim {queries.dim} does not match corpus dim {corpus.dim}"
        )

    def one(i: int) -> RankedList:
        qid = queries.ids[i]
        try:
            return rank_topk(corpus, queries.vectors[i], k, query_id=qid)
        except (ValueError, ZeroNormError) as exc:
            raise type(exc)(f"query {qid!r}: {exc}") from None

    indices = range(len(queries))
    if threads > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, indices))
    return [one(i) for i in indices]


def _round6(x: float) -> float:
    return float(f"{x:.6g}")


def write_rankings(ranked: Iterable[RankedList], path: str | Path) -> None:
    """JSONL, one ranked list per line; scores kept to 6 significant digits."""
    lines = []
    for rl in ranked:
        obj = {
            "query_id": rl.query_id,
            "k": rl.k,
            "items": [[cid, _round6(score)] for cid, score in rl.items],
        }
        lines.append(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
    Path(path).write_bytes("".join(line + "\n" for line in lines).encode("utf-8"))


def read_rankings(path: str | Path) -> list[RankedList]:
    """Parse a rankings JSONL file; errors name the offending line."""
    path = Path(path)
    out: list[RankedList] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                obj = json.loads(line)
                out.append(
                    RankedList(
                        query_id=obj["query_id"],
                        k=obj["k"],
                        items=tuple((cid, float(s)) for cid, s in obj["items"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return out
