"""Rank-overlap metrics: overlap@k, rank-biased overlap, instability,
intra/inter query distances, and the log-ratio brittleness index.

Two RBO variants are provided. ``standard`` is truncated RBO with the
residual extrapolation term, so identical rankings score exactly 1 and
"instability = 1 - rbo" is anchored at 0. ``paper_literal`` keeps the
prefix-Jaccard agreement and the extra 1/k factor with no residual; it
is bounded well below 1 even for identical rankings and exists for
exact-formula comparisons.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .perturb import PerturbationSuite
from .ranker import RankedList, rank_topk
from .store import EmbeddingStore, cosine_distance, mean_pairwise_distance

RBO_MODES = ("standard", "paper_literal")
OVERLAP_MODES = ("fraction_of_k", "jaccard")

FLAG_INTRA_FLOORED = "intra_floored"
FLAG_INSTABILITY_FLOORED = "instability_floored"


class MissingEmbeddingError(KeyError):
    pass


@dataclass(frozen=True)
class MetricsConfig:
    p: float = 0.99
    depth: int = 1000
    overlap_ks: tuple[int, ...] = (1, 5, 10, 25, 50, 100, 500, 1000)
    rbo_mode: str = "standard"
    overlap_mode: str = "fraction_of_k"
    epsilon_intra: float = 1e-6
    epsilon_instability: float = 1e-9

    def __post_init__(self) -> None:
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must be in (0, 1), got {self.p}")
        object.__setattr__(self, "overlap_ks", tuple(self.overlap_ks))
        if not self.overlap_ks or min(self.overlap_ks) < 1:
            raise ValueError("overlap_ks must be positive integers")
        if self.depth < max(self.overlap_ks):
            raise ValueError(
                f"depth {self.depth} is below max overlap k {max(self.overlap_ks)}"
            )
        if self.rbo_mode not in RBO_MODES:
            raise ValueError(f"unknown rbo_mode {self.rbo_mode!r}")
        if self.overlap_mode not in OVERLAP_MODES:
            raise ValueError(f"unknown overlap_mode {self.overlap_mode!r}")
        if self.epsilon_intra <= 0 or self.epsilon_instability <= 0:
            raise ValueError("epsilons must be positive")


@dataclass(frozen=True)
class MetricsRecord:
    """All per-(model, query, perturbation) quantities for one comparison."""

    model_id: str
    query_id: str
    parent_id: str
    perturbation_class: str
    perturbation_type: str
    overlap_at_k: dict[int, float]
    rbo: float
    instability: float
    intra_distance: float
    inter_distance: float
    brittleness: float
    flags: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.instability != 1.0 - self.rbo:
            raise ValueError("instability must equal 1 - rbo exactly")
        object.__setattr__(self, "flags", frozenset(self.flags))


def _ids(ranking: RankedList | Sequence[str]) -> list[str]:
    if isinstance(ranking, RankedList):
        return ranking.item_ids()
    return list(ranking)


def _prefix_intersections(ids_a: Sequence[str], ids_b: Sequence[str], depth: int) -> list[int]:
    """x[d-1] = |A_d intersect B_d| for d = 1..depth."""
    seen_a: set[str] = set()
    seen_b: set[str] = set()
    x = 0
    out: list[int] = []
    for d in range(depth):
        a, b = ids_a[d], ids_b[d]
        if a == b:
            x += 1
        else:
            if a in seen_b:
                x += 1
            if b in seen_a:
                x += 1
            seen_a.add(a)
            seen_b.add(b)
        out.append(x)
    return out


def overlap_at_k(
    a: RankedList | Sequence[str],
    b: RankedList | Sequence[str],
    k: int,
    mode: str = "fraction_of_k",
) -> float:
    """Agreement of the two top-k prefixes, as |A∩B|/k or Jaccard."""
    if mode not in OVERLAP_MODES:
        raise ValueError(f"unknown overlap mode {mode!r}")
    ids_a, ids_b = _ids(a), _ids(b)
    if k < 1:
        raise ValueError("k must be positive")
    if k > len(ids_a) or k > len(ids_b):
        raise ValueError(
            f"k={k} exceeds list length ({len(ids_a)}, {len(ids_b)})"
        )
    inter = len(set(ids_a[:k]) & set(ids_b[:k]))
    if mode == "fraction_of_k":
        return inter / k
    return inter / (2 * k - inter)


def _rbo_from_intersections(xs: Sequence[int], p: float, mode: str) -> float:
    depth = len(xs)
    if mode == "standard":
        # weights and agreements accumulated with identical operations so
        # full agreement yields exactly s == w_total, hence exactly 1.0
        s = 0.0
        w_total = 0.0
        w = 1.0 - p
        pd = 1.0
        for d in range(1, depth + 1):
            agree = xs[d - 1] / d
            s += w * agree
            w_total += w
            w *= p
            pd *= p
        tail_agree = xs[depth - 1] / depth
        s += pd * tail_agree
        w_total += pd
        return s / w_total
    # paper_literal: prefix Jaccard, extra 1/k factor, no residual
    s = 0.0
    pk = 1.0
    one_minus_p = 1.0 - p
    for d in range(1, depth + 1):
        x = xs[d - 1]
        jac = x / (2 * d - x)
        s += one_minus_p * pk / d * jac
        pk *= p
    return s


def rbo(
    a: RankedList | Sequence[str],
    b: RankedList | Sequence[str],
    cfg: MetricsConfig,
) -> float:
    """Rank-biased overlap of the two rankings truncated at cfg.depth."""
    ids_a, ids_b = _ids(a), _ids(b)
    if len(ids_a) < cfg.depth or len(ids_b) < cfg.depth:
        raise ValueError(
            f"depth {cfg.depth} exceeds ranking length "
            f"({len(ids_a)}, {len(ids_b)})"
        )
    xs = _prefix_intersections(ids_a, ids_b, cfg.depth)
    return _rbo_from_intersections(xs, cfg.p, cfg.rbo_mode)


def instability(
    a: RankedList | Sequence[str],
    b: RankedList | Sequence[str],
    cfg: MetricsConfig,
) -> float:
    """1 - rbo under the configured mode."""
    return 1.0 - rbo(a, b, cfg)


def brittleness(
    instability_val: float,
    intra: float,
    inter: float,
    cfg: MetricsConfig,
) -> tuple[float, frozenset[str]]:
    """ln(instability * inter / intra) with epsilon floors against zeros.

    Returns the value and the set of floor flags that were applied.
    """
    if inter <= 0.0:
        raise ValueError(f"inter-query distance must be positive, got {inter}")
    if not 0.0 <= instability_val <= 1.0:
        raise ValueError(f"instability must be in [0, 1], got {instability_val}")
    if intra < 0.0:
        raise ValueError(f"intra-query distance must be >= 0, got {intra}")
    flags = set()
    if instability_val < cfg.epsilon_instability:
        instability_val = cfg.epsilon_instability
        flags.add(FLAG_INSTABILITY_FLOORED)
    if intra < cfg.epsilon_intra:
        intra = cfg.epsilon_intra
        flags.add(FLAG_INTRA_FLOORED)
    return math.log(instability_val * inter / intra), frozenset(flags)


def evaluate(
    corpus: EmbeddingStore,
    original_queries: EmbeddingStore,
    perturbed_queries: EmbeddingStore,
    suite: PerturbationSuite,
    cfg: MetricsConfig,
    model_id: str,
) -> list[MetricsRecord]:
    """Full metric table for one model: one record per suite entry.

    The inter-query distance is computed once over all original query
    embeddings; each suite record is ranked against the corpus at
    cfg.depth alongside its parent.
    """
    if not corpus.normalized:
        raise ValueError("corpus store must be normalized")
    if len(corpus) < cfg.depth:
        raise ValueError(
            f"depth {cfg.depth} exceeds available ranking length {len(corpus)} "
            f"(corpus has {len(corpus)} items)"
        )
    inter = mean_pairwise_distance(original_queries, list(original_queries.ids))

    parent_rank_ids: dict[str, list[str]] = {}

    def ranked_ids_for_parent(pid: str) -> list[str]:
        ids = parent_rank_ids.get(pid)
        if ids is None:
            vec = original_queries.row(pid)
            ids = rank_topk(corpus, vec, cfg.depth, query_id=pid).item_ids()
            parent_rank_ids[pid] = ids
        return ids

    records: list[MetricsRecord] = []
    for rec in suite.records:
        try:
            parent_vec = original_queries.row(rec.parent_id)
        except KeyError:
            raise MissingEmbeddingError(
                f"no original embedding for id {rec.parent_id!r}"
            ) from None
        try:
            pert_vec = perturbed_queries.row(rec.query_id)
        except KeyError:
            raise MissingEmbeddingError(
                f"no perturbed embedding for id {rec.query_id!r}"
            ) from None
        ids_a = ranked_ids_for_parent(rec.parent_id)
        ids_b = rank_topk(corpus, pert_vec, cfg.depth, query_id=rec.query_id).item_ids()
        xs = _prefix_intersections(ids_a, ids_b, cfg.depth)
        overlaps: dict[int, float] = {}
        for k in cfg.overlap_ks:
            inter_k = xs[k - 1]
            overlaps[k] = (
                inter_k / k
                if cfg.overlap_mode == "fraction_of_k"
                else inter_k / (2 * k - inter_k)
            )
        rbo_val = _rbo_from_intersections(xs, cfg.p, cfg.rbo_mode)
        inst = 1.0 - rbo_val
        intra = cosine_distance(parent_vec, pert_vec)
        brit, flags = brittleness(inst, intra, inter, cfg)
        records.append(
            MetricsRecord(
                model_id=model_id,
                query_id=rec.query_id,
                parent_id=rec.parent_id,
                perturbation_class=rec.perturbation_class,
                perturbation_type=rec.perturbation_type,
                overlap_at_k=overlaps,
                rbo=rbo_val,
                instability=inst,
                intra_distance=intra,
                inter_distance=inter,
                brittleness=brit,
                flags=flags,
            )
        )
    records.sort(key=lambda r: (r.parent_id, r.perturbation_type))
    return records


def _csv_header(ks: Sequence[int]) -> list[str]:
    return (
        ["model_id", "query_id", "parent_id", "class", "type"]
        + [f"overlap@{k}" for k in ks]
        + ["rbo", "instability", "intra_distance", "inter_distance", "brittleness", "flags"]
    )


def _common_ks(records: Sequence[MetricsRecord]) -> list[int]:
    ks = sorted(records[0].overlap_at_k)
    for r in records[1:]:
        if sorted(r.overlap_at_k) != ks:
            raise ValueError("records carry inconsistent overlap k sets")
    return ks


def write_metrics_csv(records: Sequence[MetricsRecord], path: str | Path) -> None:
    if not records:
        raise ValueError("no metrics records to write")
    ks = _common_ks(records)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_csv_header(ks))
        for r in records:
            writer.writerow(
                [r.model_id, r.query_id, r.parent_id, r.perturbation_class, r.perturbation_type]
                + [repr(r.overlap_at_k[k]) for k in ks]
                + [
                    repr(r.rbo),
                    repr(r.instability),
                    repr(r.intra_distance),
                    repr(r.inter_distance),
                    repr(r.brittleness),
                    "|".join(sorted(r.flags)),
                ]
            )


def write_metrics_jsonl(records: Sequence[MetricsRecord], path: str | Path) -> None:
    lines = []
    for r in records:
        obj = {
            "model_id": r.model_id,
            "query_id": r.query_id,
            "parent_id": r.parent_id,
            "perturbation_class": r.perturbation_class,
            "perturbation_type": r.perturbation_type,
            "overlap_at_k": {str(k): v for k, v in sorted(r.overlap_at_k.items())},
            "rbo": r.rbo,
            "instability": r.instability,
            "intra_distance": r.intra_distance,
            "inter_distance": r.inter_distance,
            "brittleness": r.brittleness,
            "flags": sorted(r.flags),
        }
        lines.append(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
    Path(path).write_bytes("".join(line + "\n" for line in lines).encode("utf-8"))


def read_metrics_jsonl(path: str | Path) -> list[MetricsRecord]:
    path = Path(path)
    out: list[MetricsRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                obj = json.loads(line)
                out.append(
                    MetricsRecord(
                        model_id=obj["model_id"],
                        query_id=obj["query_id"],
                        parent_id=obj["parent_id"],
                        perturbation_class=obj["perturbation_class"],
                        perturbation_type=obj["perturbation_type"],
                        overlap_at_k={int(k): float(v) for k, v in obj["overlap_at_k"].items()},
                        rbo=float(obj["rbo"]),
                        instability=float(obj["instability"]),
                        intra_distance=float(obj["intra_distance"]),
                        inter_distance=float(obj["inter_distance"]),
                        brittleness=float(obj["brittleness"]),
                        flags=frozenset(obj["flags"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return out


def read_metrics_csv(path: str | Path) -> list[MetricsRecord]:
    path = Path(path)
    out: list[MetricsRecord] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty metrics file") from None
        ks = [int(h.split("@", 1)[1]) for h in header if h.startswith("overlap@")]
        expected = _csv_header(ks)
        if header != expected:
            raise ValueError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                base = 5
                overlaps = {k: float(row[base + i]) for i, k in enumerate(ks)}
                rest = row[base + len(ks):]
                out.append(
                    MetricsRecord(
                        model_id=row[0],
                        query_id=row[1],
                        parent_id=row[2],
                        perturbation_class=row[3],
                        perturbation_type=row[4],
                        overlap_at_k=overlaps,
                        rbo=float(rest[0]),
                        instability=float(rest[1]),
                        intra_distance=float(rest[2]),
                        inter_distance=float(rest[3]),
                        brittleness=float(rest[4]),
                        flags=frozenset(f for f in rest[5].split("|") if f),
                    )
                )
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return out
