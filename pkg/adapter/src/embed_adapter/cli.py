"""Adapter CLI: encode-texts, encode-images, tag, semantic-suite.

Mirrors the primary pipeline's conventions: explicit paths, validation
before writing, atomic EMB1 output, a JSON manifest next to each
artifact, exit 0 for success with warnings, 1 for structural errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .encoders import EncoderUnavailableError, ModelSpec, encode_images, encode_texts
from .records import read_queries, write_records
from .semantic import (
    BackendUnavailableError,
    default_lexicon,
    generate_semantic_suite,
    load_lexicon,
)
from .tagger import tag_queries


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path: Path, subcommand: str, config: dict,
                    inputs: Sequence[Path], outputs: Sequence[Path]) -> None:
    manifest = {
        "tool": "embed-adapter",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")


def _model_spec(args: argparse.Namespace) -> ModelSpec:
    return ModelSpec(
        model_id=args.model_id,
        checkpoint=args.model,
        batch_size=args.batch_size,
        device=args.device,
    )


def _cmd_encode_texts(args: argparse.Namespace) -> int:
    spec = _model_spec(args)
    out = Path(args.out)
    count = encode_texts(spec, args.queries, out)
    sidecar = out.with_name(out.name + ".ids")
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        "encode-texts",
        {"model_id": spec.model_id, "checkpoint": spec.checkpoint,
         "batch_size": spec.batch_size, "device": spec.device, "normalized": True},
        [Path(args.queries)],
        [out, sidecar],
    )
    print(f"encoded {count} texts to {out}")
    return 0


def _cmd_encode_images(args: argparse.Namespace) -> int:
    spec = _model_spec(args)
    out = Path(args.out)
    written, skipped = encode_images(spec, args.images, out)
    sidecar = out.with_name(out.name + ".ids")
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        "encode-images",
        {"model_id": spec.model_id, "checkpoint": spec.checkpoint,
         "batch_size": spec.batch_size, "device": spec.device,
         "skipped": skipped, "normalized": True},
        [Path(args.images)] if Path(args.images).is_file() else [],
        [out, sidecar],
    )
    if skipped:
        print(f"warning: skipped {skipped} unreadable image(s)", file=sys.stderr)
    print(f"encoded {written} images to {out}")
    return 0


def _cmd_tag(args: argparse.Namespace) -> int:
    records = read_queries(args.queries)
    out = Path(args.out)
    count = tag_queries(records, out)
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        "tag",
        {"tagger": "builtin-rules"},
        [Path(args.queries)],
        [out],
    )
    print(f"tagged {count} queries to {out}")
    return 0


def _cmd_semantic_suite(args: argparse.Namespace) -> int:
    records = read_queries(args.queries)
    lexicon = load_lexicon(args.lexicon) if args.lexicon else default_lexicon()
    suite = generate_semantic_suite(
        records,
        method=args.method,
        suite_seed=args.seed,
        lexicon=lexicon,
        paraphrase_backend=args.backend,
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    suite_path = outdir / "suite.jsonl"
    skips_path = outdir / "skips.jsonl"
    write_records(suite.records, suite_path)
    skips_lines = [
        json.dumps(s, ensure_ascii=False, separators=(",", ":")) for s in suite.skips
    ]
    skips_path.write_bytes("".join(l + "\n" for l in skips_lines).encode("utf-8"))
    _write_manifest(
        outdir / "manifest.json",
        "semantic-suite",
        {"method": args.method, "suite_seed": args.seed,
         "backend": args.backend, "provenance": suite.provenance,
         "lexicon": args.lexicon or "builtin"},
        [Path(args.queries)] + ([Path(args.lexicon)] if args.lexicon else []),
        [suite_path, skips_path],
    )
    if suite.skips:
        print(f"warning: {len(suite.skips)} record(s) skipped; see {skips_path}",
              file=sys.stderr)
    print(f"wrote {len(suite.records)} suite records to {suite_path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-adapter",
        description="Encode texts/images to EMB1, tag queries, build semantic suites",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_args(p):
        p.add_argument("--model", required=True,
                       help="backend spec: hash:dim=64[,fold_case=1] or clip:<checkpoint>")
        p.add_argument("--model_id", required=True)
        p.add_argument("--batch_size", type=int, default=32)
        p.add_argument("--device", default="cpu")

    p = sub.add_parser("encode-texts", help="query texts -> EMB1 + .ids")
    add_model_args(p)
    p.add_argument("--queries", required=True, help="query records JSONL")
    p.add_argument("--out", required=True, help="output .emb path")
    p.set_defaults(func=_cmd_encode_texts)

    p = sub.add_parser("encode-images", help="image dir or manifest -> EMB1 + .ids")
    add_model_args(p)
    p.add_argument("--images", required=True,
                   help="image directory or JSONL manifest of {id, path}")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_encode_images)

    p = sub.add_parser("tag", help="UPOS tag table for query texts")
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True, help="output tags JSONL")
    p.set_defaults(func=_cmd_tag)

    p = sub.add_parser("semantic-suite", help="synonym/paraphrase perturbation suite")
    p.add_argument("--queries", required=True)
    p.add_argument("--method", choices=["synonym", "paraphrase"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", default=None, help="paraphrase backend name")
    p.add_argument("--lexicon", default=None, help="synonym lexicon JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_semantic_suite)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError,
            EncoderUnavailableError, BackendUnavailableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
