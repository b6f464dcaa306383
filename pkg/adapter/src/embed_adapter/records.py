"""Query-record JSONL reading/writing in the toolkit's exchange schema."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

_FIELDS = (
    "query_id", "text", "origin", "perturbation_class", "perturbation_type",
    "parent_id",
)


def read_queries(path: str | Path) -> list[dict]:
    """Parse query records; every record needs a unique id and non-empty text."""
    path = Path(path)
    records: list[dict] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON: {exc}") from None
            qid = obj.get("query_id")
            text = obj.get("text")
            if not qid or not isinstance(qid, str):
                raise ValueError(f"{path}: line {lineno}: missing query_id")
            if qid in seen:
                raise ValueError(f"{path}: line {lineno}: duplicate query_id {qid!r}")
            if not text or not isinstance(text, str):
                raise ValueError(f"{path}: line {lineno}: empty text for {qid!r}")
            seen.add(qid)
            records.append(obj)
    return records


def write_records(records: Iterable[dict], path: str | Path) -> None:
    lines = []
    for rec in records:
        ordered = {k: rec[k] for k in _FIELDS if k in rec}
        lines.append(json.dumps(ordered, ensure_ascii=False, separators=(",", ":")))
    Path(path).write_bytes("".join(line + "\n" for line in lines).encode("utf-8"))
