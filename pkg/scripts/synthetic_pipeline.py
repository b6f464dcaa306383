#!/usr/bin/env python3
"""Run the whole pipeline on synthetic data, end to end, via the CLI.

Builds a toy workspace (query texts, a random corpus, seeded pseudo
embeddings standing in for real text encoders), then drives
perturb -> rank -> evaluate -> report for two pseudo models and prints
the resulting artifact paths. Useful as a living example of the file
formats and subcommand wiring.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

from rank_brittle.cli import main as cli
from rank_brittle.store import (
    EmbeddingStore,
    QueryRecord,
    read_query_records,
    write_query_records,
    write_store,
)

TEXTS = [
    "A red car parked on a quiet street.",
    "Two dogs running through a green park.",
    "A man riding a bicycle near the river.",
    "Children playing football on the beach.",
    "An old boat sailing under the bridge.",
    "A woman reading a book in the garden.",
    "Birds flying over the snowy mountains.",
    "A train crossing a long iron bridge.",
]


def pseudo_embed(model_tag: str, texts: list[str], dim: int, fold_case: bool) -> np.ndarray:
    """Deterministic stand-in encoder: one seeded Gaussian per text."""
    rows = []
    for text in texts:
        key = text.lower() if fold_case else text
        digest = hashlib.blake2b(f"{model_tag}\x1f{key}".encode(), digest_size=8).digest()
        gen = np.random.default_rng(int.from_bytes(digest, "little"))
        v = gen.standard_normal(dim)
        rows.append(v / np.linalg.norm(v))
    return np.asarray(rows, dtype=np.float32)


def embed_to_file(model_tag: str, records, dim: int, fold_case: bool, path: Path) -> None:
    vec = pseudo_embed(model_tag, [r.text for r in records], dim, fold_case)
    write_store(
        EmbeddingStore(ids=tuple(r.query_id for r in records), vectors=vec, normalized=True),
        path,
    )


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="synthetic_run")
    ap.add_argument("--corpus", type=int, default=500)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--depth", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    originals_path = work / "originals.jsonl"
    write_query_records(
        [QueryRecord(query_id=f"q{i:02d}", text=t) for i, t in enumerate(TEXTS)],
        originals_path,
    )

    rc = cli(
        ["perturb", "--queries", str(originals_path), "--out", str(work / "suite"),
         "--seed", str(args.seed)]
    )
    if rc:
        return rc
    originals = read_query_records(originals_path)
    suite_records = read_query_records(work / "suite/suite.jsonl")

    rng = np.random.default_rng(args.seed)
    corpus_vec = rng.standard_normal((args.corpus, args.dim)).astype(np.float32)
    corpus_vec /= np.linalg.norm(corpus_vec.astype(np.float64), axis=1, keepdims=True).astype(
        np.float32
    )
    corpus_path = work / "corpus.emb"
    write_store(
        EmbeddingStore(
            ids=tuple(f"key{i:06d}" for i in range(args.corpus)),
            vectors=corpus_vec,
            normalized=True,
        ),
        corpus_path,
    )

    metrics_files = []
    # fold-case model mimics a case-folding tokenizer: case edits vanish
    for model_tag, fold_case in (("pseudo-base", False), ("pseudo-foldcase", True)):
        model_dir = work / model_tag
        model_dir.mkdir(exist_ok=True)
        embed_to_file(model_tag, originals, args.dim, fold_case, model_dir / "originals.emb")
        embed_to_file(model_tag, suite_records, args.dim, fold_case, model_dir / "perturbed.emb")
        rc = cli(
            [
                "evaluate",
                "--corpus", str(corpus_path),
                "--originals_emb", str(model_dir / "originals.emb"),
                "--originals", str(originals_path),
                "--perturbed_emb", str(model_dir / "perturbed.emb"),
                "--suite", str(work / "suite/suite.jsonl"),
                "--out", str(model_dir / "metrics"),
                "--model_id", model_tag,
                "--depth", str(args.depth),
                "--overlap_ks", f"1,5,10,{args.depth}",
            ]
        )
        if rc:
            return rc
        metrics_files.append(str(model_dir / "metrics/metrics.jsonl"))

    rc = cli(["report", *metrics_files, "--out", str(work / "report")])
    if rc:
        return rc
    print("\nartifacts:")
    for p in sorted((work / "report").iterdir()):
        print(f"  {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
