"""EMB1 embedding files, query records, and cosine-distance utilities.

EMB1 is the binary exchange format for embedding sets: a 24-byte header
(magic ``EMB1``, format version u32, row count u64, dimension u32, flags
u32, all little-endian) followed by a count x dim float32 row-major
payload. Row ids live in a ``<filename>.ids`` sidecar, UTF-8, one id per
LF-terminated line. Query sets are JSON Lines of QueryRecord objects.

Payloads are float32 on disk; every distance/similarity reduction here
accumulates in float64.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"EMB1"
FORMAT_VERSION = 1
FLAG_NORMALIZED = 0x1
HEADER_SIZE = 24

# |row norm - 1| tolerated on stores carrying the normalized flag
UNIT_NORM_TOL = 1e-4

ORIGIN_ORIGINAL = "original"
ORIGIN_PERTURBED = "perturbed"
PERTURBATION_CLASSES = ("none", "lexical", "syntactic", "semantic")


class StoreFormatError(ValueError):
    """A malformed or inconsistent EMB1 file."""


class BadMagicError(StoreFormatError):
    pass


class UnsupportedVersionError(StoreFormatError):
    pass


class TruncatedPayloadError(StoreFormatError):
    pass


class MissingSidecarError(StoreFormatError):
    pass


class IdCountMismatchError(StoreFormatError):
    pass


class DuplicateIdError(StoreFormatError):
    pass


class InvalidIdError(StoreFormatError):
    pass


class NonFinitePayloadError(StoreFormatError):
    pass


class ZeroNormError(ValueError):
    """A zero vector where cosine geometry is required."""


class QueryFileError(ValueError):
    """A malformed query-record JSONL file."""


@dataclass(frozen=True, eq=False)
class EmbeddingStore:
    """Immutable set of vectors with string ids, row-aligned."""

    ids: tuple[str, ...]
    vectors: np.ndarray  # (count, dim) float32, read-only
    normalized: bool = False

    def __post_init__(self) -> None:
        vec = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if vec.ndim != 2:
            raise ValueError(f"vectors must be 2-d, got shape {vec.shape}")
        if vec.shape[1] < 1:
            raise ValueError("dim must be positive")
        if len(self.ids) != vec.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids for {vec.shape[0]} vector rows"
            )
        seen: set[str] = set()
        for i in self.ids:
            if not i:
                raise InvalidIdError("empty id")
            if i in seen:
                raise DuplicateIdError(f"duplicate id {i!r}")
            seen.add(i)
        finite = np.isfinite(vec).all(axis=1)
        if not finite.all():
            row = int(np.flatnonzero(~finite)[0])
            raise NonFinitePayloadError(f"non-finite value in row {row}")
        if self.normalized:
            norms = np.sqrt((vec.astype(np.float64) ** 2).sum(axis=1))
            bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
            if bad.size:
                r = int(bad[0])
                raise ValueError(
                    f"normalized flag set but row {r} ({self.ids[r]!r}) "
                    f"has norm {norms[r]:.6g}"
                )
        if vec.flags.writeable:
            # never flip flags on caller-owned memory
            if vec is self.vectors or vec.base is not None:
                vec = vec.copy()
            vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "_index", None)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    def index_of(self, item_id: str) -> int:
        idx = object.__getattribute__(self, "_index")
        if idx is None:
            idx = {i: n for n, i in enumerate(self.ids)}
            object.__setattr__(self, "_index", idx)
        try:
            return idx[item_id]
        except KeyError:
            raise KeyError(f"unknown id {item_id!r}") from None

    def row(self, item_id: str) -> np.ndarray:
        return self.vectors[self.index_of(item_id)]


def load_store(path: str | Path) -> EmbeddingStore:
    """Read an EMB1 file and its .ids sidecar into an EmbeddingStore."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic at byte offset 0")
    if len(data) < HEADER_SIZE:
        raise TruncatedPayloadError(
            f"{path}: header truncated at byte offset {len(data)}"
        )
    version, = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: unsupported format version {version} at byte offset 4"
        )
    count, = struct.unpack_from("<Q", data, 8)
    dim, = struct.unpack_from("<I", data, 16)
    flags, = struct.unpack_from("<I", data, 20)
    if dim == 0:
        raise StoreFormatError(f"{path}: dim is 0 at byte offset 16")
    expected = HEADER_SIZE + count * dim * 4
    if len(data) != expected:
        raise TruncatedPayloadError(
            f"{path}: expected {expected} bytes, file ends at byte offset "
            f"{len(data)}"
        )
    vec = np.frombuffer(data, dtype="<f4", count=count * dim, offset=HEADER_SIZE)
    vec = vec.reshape(count, dim)

    ids_path = path.with_name(path.name + ".ids")
    if not ids_path.exists():
        raise MissingSidecarError(f"{path}: ids sidecar {ids_path} not found")
    raw = ids_path.read_bytes().decode("utf-8")
    if raw == "":
        lines: list[str] = []
    else:
        if not raw.endswith("\n"):
            raise StoreFormatError(f"{ids_path}: last line not LF-terminated")
        lines = raw.split("\n")[:-1]
    if len(lines) != count:
        raise IdCountMismatchError(
            f"{ids_path}: {len(lines)} id lines, header count {count}"
        )
    return EmbeddingStore(
        ids=tuple(lines), vectors=vec, normalized=bool(flags & FLAG_NORMALIZED)
    )


def write_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write an EmbeddingStore as an EMB1 file plus .ids sidecar."""
    path = Path(path)
    for i in store.ids:
        if "\n" in i or "\r" in i:
            raise InvalidIdError(f"id {i!r} contains a line break")
    flags = FLAG_NORMALIZED if store.normalized else 0
    header = MAGIC + struct.pack("<IQII", FORMAT_VERSION, len(store), store.dim, flags)
    payload = np.ascontiguousarray(store.vectors, dtype="<f4").tobytes()
    path.write_bytes(header + payload)
    ids_path = path.with_name(path.name + ".ids")
    ids_path.write_bytes("".join(i + "\n" for i in store.ids).encode("utf-8"))


def normalize(store: EmbeddingStore) -> EmbeddingStore:
    """Rescale every row to unit Euclidean norm; zero rows are errors."""
    v64 = store.vectors.astype(np.float64)
    norms = np.sqrt((v64 ** 2).sum(axis=1))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroNormError(f"zero-norm row {store.ids[int(zero[0])]!r}")
    out = (v64 / norms[:, None]).astype(np.float32)
    return EmbeddingStore(ids=store.ids, vectors=out, normalized=True)


def cosine_distance(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    """1 - cos(u, v), clamped to [0, 2] against rounding."""
    a = np.asarray(u, dtype=np.float64).ravel()
    b = np.asarray(v, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    sa = float(a @ a)
    sb = float(b @ b)
    if sa == 0.0 or sb == 0.0:
        raise ZeroNormError("cosine distance undefined for zero vector")
    sim = float(a @ b) / math.sqrt(sa * sb)
    return min(max(1.0 - sim, 0.0), 2.0)


def mean_pairwise_distance(store: EmbeddingStore, id_subset: Sequence[str]) -> float:
    """Mean cosine distance over all unordered pairs of the given rows."""
    if len(id_subset) < 2:
        raise ValueError(f"need at least 2 ids, got {len(id_subset)}")
    idx = [store.index_of(i) for i in id_subset]
    v = store.vectors[idx].astype(np.float64)
    gram = v @ v.T
    sq = np.diag(gram).copy()
    zero = np.flatnonzero(sq == 0.0)
    if zero.size:
        raise ZeroNormError(f"zero-norm row {id_subset[int(zero[0])]!r}")
    sims = gram / np.sqrt(np.outer(sq, sq))
    dists = np.clip(1.0 - sims, 0.0, 2.0)
    iu = np.triu_indices(len(idx), k=1)
    return float(dists[iu].mean())


@dataclass(frozen=True)
class QueryRecord:
    """One text query, either an original or a perturbed variant."""

    query_id: str
    text: str
    origin: str = ORIGIN_ORIGINAL
    perturbation_class: str = "none"
    perturbation_type: str = "none"
    parent_id: str | None = None

    def __post_init__(self) -> None:
        if not self.query_id:
            raise ValueError("query_id must be non-empty")
        if self.origin not in (ORIGIN_ORIGINAL, ORIGIN_PERTURBED):
            raise ValueError(f"invalid origin {self.origin!r}")
        if self.perturbation_class not in PERTURBATION_CLASSES:
            raise ValueError(
                f"invalid perturbation_class {self.perturbation_class!r}"
            )
        is_original = self.origin == ORIGIN_ORIGINAL
        if is_original != (self.perturbation_class == "none") or is_original != (
            self.parent_id is None
        ):
            raise ValueError(
                f"record {self.query_id!r}: origin, perturbation_class and "
                "parent_id are inconsistent"
            )


def _record_to_obj(rec: QueryRecord) -> dict:
    obj = {
        "query_id": rec.query_id,
        "text": rec.text,
        "origin": rec.origin,
        "perturbation_class": rec.perturbation_class,
        "perturbation_type": rec.perturbation_type,
    }
    if rec.parent_id is not None:
        obj["parent_id"] = rec.parent_id
    return obj


_QUERY_KEYS = {
    "query_id", "text", "origin", "perturbation_class", "perturbation_type",
    "parent_id",
}


def read_query_records(path: str | Path) -> list[QueryRecord]:
    """Parse a QueryRecord JSONL file; errors name the offending line."""
    path = Path(path)
    records: list[QueryRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise QueryFileError(f"{path}: line {lineno}: invalid JSON: {exc}") from None
            if not isinstance(obj, dict):
                raise QueryFileError(f"{path}: line {lineno}: not a JSON object")
            unknown = set(obj) - _QUERY_KEYS
            if unknown:
                raise QueryFileError(
                    f"{path}: line {lineno}: unknown fields {sorted(unknown)}"
                )
            try:
                records.append(QueryRecord(**obj))
            except (TypeError, ValueError) as exc:
                raise QueryFileError(f"{path}: line {lineno}: {exc}") from None
    return records


def write_query_records(records: Iterable[QueryRecord], path: str | Path) -> None:
    """Write QueryRecords as deterministic JSONL (UTF-8, LF, compact)."""
    lines = [
        json.dumps(_record_to_obj(r), ensure_ascii=False, separators=(",", ":"))
        for r in records
    ]
    Path(path).write_bytes("".join(line + "\n" for line in lines).encode("utf-8"))
