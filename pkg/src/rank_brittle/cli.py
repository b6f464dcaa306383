"""Pipeline CLI: perturb, rank, evaluate, report, validate.

Every subcommand reads only files named on the command line, validates
them fully before writing anything, and writes its artifacts plus one
manifest.json into the --out directory. Artifacts are byte-deterministic
given identical inputs and seeds; the manifest carries the only
timestamps. Exit codes: 0 success (warnings allowed), 1 structural
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from . import metrics as metrics_mod
from . import perturb as perturb_mod
from . import ranker as ranker_mod
from . import stats as stats_mod
from . import store as store_mod

THREADS_ENV = "RANK_BRITTLE_THREADS"

_BUILTIN_TYPES = perturb_mod.LEXICAL_TYPES + perturb_mod.SYNTACTIC_TYPES


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(
    outdir: Path,
    subcommand: str,
    config: dict,
    inputs: Sequence[Path],
    outputs: Sequence[Path],
    started: str,
    extra: dict | None = None,
) -> None:
    manifest = {
        "tool": "rank-brittle",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {p.name: _sha256(p) for p in outputs},
        "started_utc": started,
        "finished_utc": _utc_now(),
    }
    if extra:
        manifest.update(extra)
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8"
    )


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _parse_int_list(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.split(",") if part != "")
    except ValueError:
        raise ValueError(f"expected comma-separated integers, got {raw!r}") from None


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# per-key converters used for both flags and --config entries
_CONVERTERS: dict[str, Callable[[str], object]] = {
    "seed": int,
    "k": int,
    "depth": int,
    "p": float,
    "overlap_ks": _parse_int_list,
    "epsilon_intra": float,
    "epsilon_instability": float,
    "rbo_mode": str,
    "overlap_mode": str,
    "types": str,
    "model_id": str,
    "response": str,
    "group_by": str,
    "stopwords": str,
    "keyboard": str,
    "tags": str,
}

_DEFAULTS: dict[str, object] = {
    "seed": 0,
    "k": 1000,
    "depth": 1000,
    "p": 0.99,
    "overlap_ks": (1, 5, 10, 25, 50, 100, 500, 1000),
    "epsilon_intra": 1e-6,
    "epsilon_instability": 1e-9,
    "rbo_mode": "standard",
    "overlap_mode": "fraction_of_k",
    "types": ",".join(_BUILTIN_TYPES),
    "response": "instability",
    "group_by": "model_id,perturbation_class,perturbation_type",
}


def _read_config(path: str) -> dict[str, object]:
    out: dict[str, object] = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONVERTERS:
            raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
        out[key] = _CONVERTERS[key](value.strip())
    return out


def _resolve(args: argparse.Namespace, keys: Sequence[str]) -> None:
    """Fill unset options from --config, then from built-in defaults.

    Config keys are validated against the global key set when parsed; a
    pipeline-wide config may carry keys other subcommands use.
    """
    config = _read_config(args.config) if getattr(args, "config", None) else {}
    for key in keys:
        if getattr(args, key, None) is None:
            if key in config:
                setattr(args, key, config[key])
            elif key in _DEFAULTS:
                setattr(args, key, _DEFAULTS[key])


def _load_corpus(path: Path) -> tuple[store_mod.EmbeddingStore, bool]:
    corpus = store_mod.load_store(path)
    if corpus.normalized:
        return corpus, False
    _warn(f"{path} is not flagged normalized; normalizing in memory")
    return store_mod.normalize(corpus), True


def _cmd_perturb(args: argparse.Namespace) -> int:
    _resolve(args, ["seed", "types", "stopwords", "keyboard", "tags"])
    started = _utc_now()
    queries_path = Path(args.queries)
    originals = store_mod.read_query_records(queries_path)
    if not originals:
        raise ValueError(f"{queries_path}: no query records")
    type_names = [t for t in str(args.types).split(",") if t]
    specs = [perturb_mod.PerturbationSpec(t) for t in type_names]
    tag_table = perturb_mod.read_tag_table(args.tags) if args.tags else None
    stopwords = perturb_mod.load_stopwords(args.stopwords) if args.stopwords else None
    keyboard = perturb_mod.load_keyboard(args.keyboard) if args.keyboard else None
    suite = perturb_mod.generate_suite(
        originals,
        specs,
        suite_seed=args.seed,
        tags=tag_table,
        stopwords=stopwords,
        keyboard=keyboard,
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    suite_path = outdir / "suite.jsonl"
    skips_path = outdir / "skips.jsonl"
    perturb_mod.write_suite(suite, suite_path)
    perturb_mod.write_skips(suite.skips, skips_path)
    inputs = [queries_path] + [Path(p) for p in (args.tags, args.stopwords, args.keyboard) if p]
    _write_manifest(
        outdir,
        "perturb",
        {
            "types": type_names,
            "provenance": suite.provenance,
            "stopwords": args.stopwords or "builtin",
            "keyboard": args.keyboard or "builtin",
        },
        inputs,
        [suite_path, skips_path],
        started,
        extra={"suite_seed": args.seed},
    )
    if suite.skips:
        _warn(f"{len(suite.skips)} perturbation(s) skipped; see {skips_path}")
    print(f"wrote {len(suite.records)} suite records to {suite_path}")
    return 0


def _cmd_rank(args: argparse.Namespace) -> int:
    _resolve(args, ["k"])
    started = _utc_now()
    corpus_path, queries_path = Path(args.corpus), Path(args.queries)
    corpus, renormalized = _load_corpus(corpus_path)
    queries = store_mod.load_store(queries_path)
    k = args.k
    if k < 1:
        raise ValueError("k must be positive")
    if k > len(corpus):
        _warn(f"k={k} exceeds corpus size {len(corpus)}; lists will be truncated")
    ranked = ranker_mod.rank_batch(corpus, queries, k, threads=_threads())
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rankings_path = outdir / "rankings.jsonl"
    ranker_mod.write_rankings(ranked, rankings_path)
    _write_manifest(
        outdir,
        "rank",
        {"k": k, "threads": _threads(), "corpus_renormalized": renormalized},
        [corpus_path, corpus_path.with_name(corpus_path.name + ".ids"),
         queries_path, queries_path.with_name(queries_path.name + ".ids")],
        [rankings_path],
        started,
    )
    print(f"wrote {len(ranked)} rankings to {rankings_path}")
    return 0


def _metrics_config(args: argparse.Namespace) -> metrics_mod.MetricsConfig:
    return metrics_mod.MetricsConfig(
        p=args.p,
        depth=args.depth,
        overlap_ks=tuple(args.overlap_ks),
        rbo_mode=args.rbo_mode,
        overlap_mode=args.overlap_mode,
        epsilon_intra=args.epsilon_intra,
        epsilon_instability=args.epsilon_instability,
    )


def _cmd_evaluate(args: argparse.Namespace) -> int:
    _resolve(
        args,
        ["p", "depth", "overlap_ks", "rbo_mode", "overlap_mode",
         "epsilon_intra", "epsilon_instability", "model_id"],
    )
    if not args.model_id:
        raise ValueError("--model_id is required (flag or config)")
    started = _utc_now()
    cfg = _metrics_config(args)
    corpus_path = Path(args.corpus)
    corpus, renormalized = _load_corpus(corpus_path)
    originals_emb = store_mod.load_store(args.originals_emb)
    perturbed_emb = store_mod.load_store(args.perturbed_emb)
    originals = store_mod.read_query_records(args.originals)
    suite = perturb_mod.ingest_suite(args.suite, originals)
    records = metrics_mod.evaluate(
        corpus, originals_emb, perturbed_emb, suite, cfg, args.model_id
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "metrics.csv"
    jsonl_path = outdir / "metrics.jsonl"
    metrics_mod.write_metrics_csv(records, csv_path)
    metrics_mod.write_metrics_jsonl(records, jsonl_path)
    input_paths = [
        corpus_path,
        Path(args.originals_emb),
        Path(args.perturbed_emb),
        Path(args.originals),
        Path(args.suite),
    ]
    _write_manifest(
        outdir,
        "evaluate",
        {
            "model_id": args.model_id,
            "p": cfg.p,
            "depth": cfg.depth,
            "overlap_ks": list(cfg.overlap_ks),
            "rbo_mode": cfg.rbo_mode,
            "overlap_mode": cfg.overlap_mode,
            "epsilon_intra": cfg.epsilon_intra,
            "epsilon_instability": cfg.epsilon_instability,
            "corpus_renormalized": renormalized,
        },
        input_paths,
        [csv_path, jsonl_path],
        started,
        extra={"log_base": "e"},
    )
    print(f"wrote {len(records)} metric records to {csv_path}")
    return 0


def _read_metrics_any(path: Path) -> list[metrics_mod.MetricsRecord]:
    if path.suffix == ".csv":
        return metrics_mod.read_metrics_csv(path)
    return metrics_mod.read_metrics_jsonl(path)


def _cmd_report(args: argparse.Namespace) -> int:
    _resolve(args, ["response", "group_by"])
    started = _utc_now()
    metric_paths = [Path(p) for p in args.metrics]
    records: list[metrics_mod.MetricsRecord] = []
    for path in metric_paths:
        records.extend(_read_metrics_any(path))
    if not records:
        raise ValueError("no metric records in the given files")
    group_by = [g for g in str(args.group_by).split(",") if g]
    summary = stats_mod.summarize(records, group_by)
    regression = stats_mod.fit_fixed_effects(records, response=args.response)
    heatmap = stats_mod.brittleness_heatmap(records)

    scatter_rows: list[stats_mod.ScatterRow] = []
    by_model: dict[str, list[metrics_mod.MetricsRecord]] = {}
    for r in records:
        by_model.setdefault(r.model_id, []).append(r)
    for model in sorted(by_model):
        group = by_model[model]
        inters = {r.inter_distance for r in group}
        if len(inters) != 1:
            raise ValueError(
                f"model {model!r} has inconsistent inter-query distances "
                f"across input files"
            )
        scatter_rows.extend(stats_mod.scatter_table(group, inters.pop()))

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "summary": outdir / "summary.csv",
        "regression": outdir / "regression.json",
        "scatter": outdir / "scatter.csv",
        "heatmap": outdir / "heatmap.csv",
        "heatmap_long": outdir / "heatmap_long.csv",
        "long": outdir / "long.csv",
    }
    stats_mod.write_summary_csv(summary, paths["summary"])
    stats_mod.write_regression_json(regression, paths["regression"])
    stats_mod.write_scatter_csv(scatter_rows, paths["scatter"])
    stats_mod.write_heatmap_csv(heatmap, paths["heatmap"])
    stats_mod.write_heatmap_long_csv(heatmap, paths["heatmap_long"])
    stats_mod.write_long_format_csv(records, paths["long"])
    _write_manifest(
        outdir,
        "report",
        {"response": args.response, "group_by": group_by},
        metric_paths,
        list(paths.values()),
        started,
        extra={"log_base": "e"},
    )
    print(f"wrote report artifacts to {outdir}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    kind, path = args.kind, Path(args.path)
    if kind == "emb":
        st = store_mod.load_store(path)
        print(f"OK emb {path}: {len(st)} rows, dim {st.dim}, normalized={st.normalized}")
    elif kind == "queries":
        recs = store_mod.read_query_records(path)
        print(f"OK queries {path}: {len(recs)} records")
    elif kind == "suite":
        if not args.originals:
            raise ValueError("suite validation requires --originals")
        originals = store_mod.read_query_records(args.originals)
        suite = perturb_mod.ingest_suite(path, originals)
        print(f"OK suite {path}: {len(suite.records)} records")
    elif kind == "rankings":
        ranked = ranker_mod.read_rankings(path)
        print(f"OK rankings {path}: {len(ranked)} lists")
    elif kind == "tags":
        table = perturb_mod.read_tag_table(path)
        print(f"OK tags {path}: {len(table.entries)} entries")
    elif kind == "metrics":
        recs = _read_metrics_any(path)
        print(f"OK metrics {path}: {len(recs)} records")
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rank-brittle",
        description="Ranking instability and brittleness benchmarking pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("perturb", help="generate a perturbation suite from originals")
    p.add_argument("--queries", required=True, help="originals JSONL")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="suite seed (default 0)")
    p.add_argument("--types", default=None, help="comma-separated type names")
    p.add_argument("--tags", default=None, help="tag table JSONL for noun types")
    p.add_argument("--stopwords", default=None, help="stopword list file")
    p.add_argument("--keyboard", default=None, help="keyboard adjacency JSON")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("rank", help="write top-k rankings for every query vector")
    p.add_argument("--corpus", required=True, help="corpus EMB1 file")
    p.add_argument("--queries", required=True, help="query EMB1 file")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None, help="ranking depth (default 1000)")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("evaluate", help="compute the per-perturbation metric table")
    p.add_argument("--corpus", required=True)
    p.add_argument("--originals_emb", required=True, help="original query EMB1")
    p.add_argument("--originals", required=True, help="original query JSONL")
    p.add_argument("--perturbed_emb", required=True, help="perturbed query EMB1")
    p.add_argument("--suite", required=True, help="suite JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--model_id", default=None)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--overlap_ks", type=_parse_int_list, default=None)
    p.add_argument("--rbo_mode", choices=metrics_mod.RBO_MODES, default=None)
    p.add_argument("--overlap_mode", choices=metrics_mod.OVERLAP_MODES, default=None)
    p.add_argument("--epsilon_intra", type=float, default=None)
    p.add_argument("--epsilon_instability", type=float, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="aggregate metric files into report artifacts")
    p.add_argument("metrics", nargs="+", help="metrics .jsonl or .csv files")
    p.add_argument("--out", required=True)
    p.add_argument("--response", choices=stats_mod.RESPONSES, default=None)
    p.add_argument("--group_by", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("validate", help="format checks only, writes nothing")
    p.add_argument("kind", choices=["emb", "queries", "suite", "rankings", "tags", "metrics"])
    p.add_argument("path")
    p.add_argument("--originals", default=None, help="originals JSONL (suite kind)")
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
