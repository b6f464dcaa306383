"""Seeded text perturbations and perturbation-suite generation/validation.

Character edits, case changes and punctuation edits are generated here;
extraction types (keyword/noun) keep original token order unless the
type has a shuffled variant, in which case a seeded uniform permutation
is applied after extraction. Part-of-speech dependent types consume a
caller-supplied tag table instead of embedding a tagger.

All randomness flows through a keyed blake2b counter stream so that a
suite regenerated with the same seed is byte-identical on any platform.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .store import (
    ORIGIN_ORIGINAL,
    ORIGIN_PERTURBED,
    QueryRecord,
    read_query_records,
    write_query_records,
)

LEXICAL_TYPES = (
    "lowercase",
    "uppercase",
    "punctuation_add",
    "punctuation_remove",
    "typo_keyboard",
    "char_swap",
    "char_delete",
    "char_add",
    "char_substitute",
)
SYNTACTIC_TYPES = (
    "keyword_only",
    "keyword_only_shuffled",
    "noun_only",
    "noun_only_shuffled",
    "adjective_noun_only",
    "word_shuffle",
)
SEMANTIC_TYPES = ("synonym_replace", "paraphrase")

TYPE_CLASS: dict[str, str] = (
    {t: "lexical" for t in LEXICAL_TYPES}
    | {t: "syntactic" for t in SYNTACTIC_TYPES}
    | {t: "semantic" for t in SEMANTIC_TYPES}
)

# shuffled variants exist only for extractive types
SHUFFLED_BASE = {
    "keyword_only_shuffled": "keyword_only",
    "noun_only_shuffled": "noun_only",
}
EXTRACTIVE_TYPES = ("keyword_only", "noun_only", "adjective_noun_only")
TAGGED_TYPES = ("noun_only", "noun_only_shuffled", "adjective_noun_only")

PUNCTUATION_CHARS = ".,!?;:"
NOUN_TAGS = frozenset({"NOUN", "PROPN"})
ADJECTIVE_NOUN_TAGS = frozenset({"ADJ", "NOUN", "PROPN"})

_MASK64 = (1 << 64) - 1


class PerturbationSkip(Exception):
    """A per-record condition that the pipeline records and skips."""

    reason = "skipped"


class NoOpPerturbation(PerturbationSkip):
    """No eligible position; the transform cannot change the text."""

    reason = "no-op perturbation"


class EmptyPerturbation(PerturbationSkip):
    """The transform would produce an empty string."""

    reason = "empty perturbation"


class MissingTagsError(ValueError):
    """A tag-dependent type was requested without tags."""


class SuiteValidationError(ValueError):
    pass


class UnresolvedParentError(SuiteValidationError):
    pass


class DuplicatePerturbationError(SuiteValidationError):
    pass


class ClassTypeMismatchError(SuiteValidationError):
    pass


def _load_text_lines(name: str) -> list[str]:
    text = resources.files("rank_brittle.data").joinpath(name).read_text("utf-8")
    return [line for line in text.splitlines() if line]


def default_stopwords() -> frozenset[str]:
    return frozenset(_load_text_lines("stopwords.txt"))


def default_keyboard() -> dict[str, str]:
    raw = resources.files("rank_brittle.data").joinpath(
        "qwerty_neighbors.json"
    ).read_text("utf-8")
    return json.loads(raw)


def load_stopwords(path: str | Path) -> frozenset[str]:
    return frozenset(
        line for line in Path(path).read_text("utf-8").splitlines() if line
    )


def load_keyboard(path: str | Path) -> dict[str, str]:
    return json.loads(Path(path).read_text("utf-8"))


class SeedStream:
    """Uniform integers from a keyed blake2b counter; platform-stable."""

    def __init__(self, seed: int) -> None:
        self._key = (seed & _MASK64).to_bytes(8, "little")
        self._counter = 0

    def _next64(self) -> int:
        h = hashlib.blake2b(
            self._counter.to_bytes(8, "little"), digest_size=8, key=self._key
        )
        self._counter += 1
        return int.from_bytes(h.digest(), "little")

    def randbelow(self, n: int) -> int:
        if n < 1:
            raise ValueError("n must be positive")
        limit = ((1 << 64) // n) * n
        while True:
            v = self._next64()
            if v < limit:
                return v % n

    def choice(self, seq: Sequence):
        return seq[self.randbelow(len(seq))]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]


def derive_seed(suite_seed: int, query_id: str, type_name: str) -> int:
    """Stable per-record seed; independent of other queries and specs."""
    key = f"{suite_seed & _MASK64}\x1f{query_id}\x1f{type_name}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class PerturbationSpec:
    """One perturbation type with its seed; class follows from the type."""

    type_name: str
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.type_name not in TYPE_CLASS:
            raise ValueError(f"unknown perturbation type {self.type_name!r}")

    @property
    def perturbation_class(self) -> str:
        return TYPE_CLASS[self.type_name]


@dataclass(frozen=True)
class SkipRecord:
    parent_id: str
    perturbation_type: str
    reason: str


@dataclass(frozen=True)
class PerturbationSuite:
    records: tuple[QueryRecord, ...]
    provenance: dict[str, str]
    skips: tuple[SkipRecord, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "skips", tuple(self.skips))


def _eligible_letter_positions(text: str, keyboard: Mapping[str, str]) -> list[int]:
    return [i for i, ch in enumerate(text) if ch.lower() in keyboard]


def _neighbor(ch: str, keyboard: Mapping[str, str], rng: SeedStream) -> str:
    repl = rng.choice(keyboard[ch.lower()])
    return repl.upper() if ch.isupper() else repl


def perturb_lexical(
    text: str,
    spec: PerturbationSpec,
    keyboard: Mapping[str, str] | None = None,
) -> str:
    """Apply a surface edit; deterministic in (text, type, seed).

    Raises NoOpPerturbation when the type has no eligible position in
    the text, EmptyPerturbation when the edit would empty the string.
    """
    if spec.perturbation_class != "lexical":
        raise ValueError(f"{spec.type_name!r} is not a lexical type")
    if not text:
        raise ValueError("text must be non-empty")
    keyboard = keyboard if keyboard is not None else default_keyboard()
    rng = SeedStream(spec.seed)
    t = spec.type_name

    if t == "lowercase":
        out = text.lower()
        if out == text:
            raise NoOpPerturbation("no cased character to lower")
        return out
    if t == "uppercase":
        out = text.upper()
        if out == text:
            raise NoOpPerturbation("no cased character to upper")
        return out
    if t == "punctuation_add":
        if text[-1] in PUNCTUATION_CHARS:
            raise NoOpPerturbation("text already ends with punctuation")
        return text + "."
    if t == "punctuation_remove":
        out = text.translate({ord(c): None for c in PUNCTUATION_CHARS})
        if out == text:
            raise NoOpPerturbation("no punctuation to remove")
        if not out.strip():
            raise EmptyPerturbation("removal leaves no text")
        return out
    if t in ("typo_keyboard", "char_substitute"):
        eligible = _eligible_letter_positions(text, keyboard)
        if not eligible:
            raise NoOpPerturbation("no keyboard letter to replace")
        i = eligible[rng.randbelow(len(eligible))]
        return text[:i] + _neighbor(text[i], keyboard, rng) + text[i + 1 :]
    if t == "char_add":
        eligible = _eligible_letter_positions(text, keyboard)
        if not eligible:
            raise NoOpPerturbation("no keyboard letter to extend")
        i = eligible[rng.randbelow(len(eligible))]
        return text[: i + 1] + _neighbor(text[i], keyboard, rng) + text[i + 1 :]
    if t == "char_delete":
        eligible = [i for i, ch in enumerate(text) if ch.isalpha()]
        if not eligible:
            raise NoOpPerturbation("no letter to delete")
        i = eligible[rng.randbelow(len(eligible))]
        out = text[:i] + text[i + 1 :]
        if not out.strip():
            raise EmptyPerturbation("deletion leaves no text")
        return out
    if t == "char_swap":
        eligible = [
            i
            for i in range(len(text) - 1)
            if text[i].isalpha() and text[i + 1].isalpha() and text[i] != text[i + 1]
        ]
        if not eligible:
            raise NoOpPerturbation("no adjacent distinct letters to swap")
        i = eligible[rng.randbelow(len(eligible))]
        return text[:i] + text[i + 1] + text[i] + text[i + 2 :]
    raise AssertionError(f"unhandled lexical type {t!r}")


def perturb_syntactic(
    text: str,
    spec: PerturbationSpec,
    tags: Sequence[str] | None = None,
    stopwords: frozenset[str] | None = None,
) -> str:
    """Extract or reorder tokens; deterministic in (text, type, seed, tags)."""
    if spec.perturbation_class != "syntactic":
        raise ValueError(f"{spec.type_name!r} is not a syntactic type")
    if not text:
        raise ValueError("text must be non-empty")
    tokens = text.split()
    if not tokens:
        raise EmptyPerturbation("text has no tokens")
    t = spec.type_name

    if t == "word_shuffle":
        out = list(tokens)
        SeedStream(spec.seed).shuffle(out)
        return " ".join(out)

    if t in ("keyword_only", "keyword_only_shuffled"):
        sw = stopwords if stopwords is not None else default_stopwords()
        kept = [tok for tok in tokens if tok.lower() not in sw]
    else:
        if tags is None:
            raise MissingTagsError(f"{t!r} requires a tag table")
        if len(tags) != len(tokens):
            raise ValueError(
                f"{len(tags)} tags for {len(tokens)} tokens"
            )
        wanted = NOUN_TAGS if t in ("noun_only", "noun_only_shuffled") else ADJECTIVE_NOUN_TAGS
        kept = [tok for tok, tag in zip(tokens, tags) if tag in wanted]

    if not kept:
        raise EmptyPerturbation("extraction keeps no token")
    if t in SHUFFLED_BASE:
        SeedStream(spec.seed).shuffle(kept)
    return " ".join(kept)


@dataclass(frozen=True)
class TagTable:
    """Whitespace-aligned UPOS tags per query id."""

    entries: dict[str, tuple[tuple[str, ...], tuple[str, ...]]]

    def tags_for(self, query_id: str, text: str) -> tuple[str, ...] | None:
        entry = self.entries.get(query_id)
        if entry is None:
            return None
        tokens, tags = entry
        if list(tokens) != text.split():
            return None
        return tags


def read_tag_table(path: str | Path) -> TagTable:
    path = Path(path)
    entries: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                obj = json.loads(line)
                qid = obj["query_id"]
                tokens = tuple(obj["tokens"])
                tags = tuple(obj["tags"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            if len(tokens) != len(tags):
                raise ValueError(
                    f"{path}: line {lineno}: {len(tokens)} tokens vs {len(tags)} tags"
                )
            if qid in entries:
                raise ValueError(f"{path}: line {lineno}: duplicate query_id {qid!r}")
            entries[qid] = (tokens, tags)
    return TagTable(entries=entries)


def perturbed_query_id(parent_id: str, type_name: str) -> str:
    return f"{parent_id}::{type_name}"


def generate_suite(
    originals: Sequence[QueryRecord],
    specs: Sequence[PerturbationSpec],
    suite_seed: int = 0,
    tags: TagTable | None = None,
    stopwords: frozenset[str] | None = None,
    keyboard: Mapping[str, str] | None = None,
) -> PerturbationSuite:
    """One perturbed record per (original, spec), minus recorded skips.

    Pure in (originals, specs, suite_seed, tags); records are sorted by
    (parent_id, type) so regeneration is byte-identical.
    """
    seen_ids: set[str] = set()
    for rec in originals:
        if rec.origin != ORIGIN_ORIGINAL:
            raise ValueError(f"{rec.query_id!r} is not an original query")
        if rec.query_id in seen_ids:
            raise ValueError(f"duplicate original id {rec.query_id!r}")
        seen_ids.add(rec.query_id)
    for spec in specs:
        if spec.perturbation_class == "semantic":
            raise ValueError(
                f"{spec.type_name!r} has no builtin generator; ingest an external suite"
            )
    stopwords = stopwords if stopwords is not None else default_stopwords()
    keyboard = keyboard if keyboard is not None else default_keyboard()

    records: list[QueryRecord] = []
    skips: list[SkipRecord] = []
    for orig in originals:
        for spec in specs:
            seeded = PerturbationSpec(
                spec.type_name,
                seed=derive_seed(suite_seed, orig.query_id, spec.type_name),
                params=spec.params,
            )
            try:
                if seeded.perturbation_class == "lexical":
                    new_text = perturb_lexical(orig.text, seeded, keyboard=keyboard)
                else:
                    tag_seq = None
                    if seeded.type_name in TAGGED_TYPES:
                        tag_seq = tags.tags_for(orig.query_id, orig.text) if tags else None
                        if tag_seq is None:
                            raise MissingTagsError(
                                f"no tags for query {orig.query_id!r}"
                            )
                    new_text = perturb_syntactic(
                        orig.text, seeded, tags=tag_seq, stopwords=stopwords
                    )
            except PerturbationSkip as exc:
                skips.append(SkipRecord(orig.query_id, seeded.type_name, exc.reason))
                continue
            except MissingTagsError:
                skips.append(SkipRecord(orig.query_id, seeded.type_name, "missing tags"))
                continue
            records.append(
                QueryRecord(
                    query_id=perturbed_query_id(orig.query_id, seeded.type_name),
                    text=new_text,
                    origin=ORIGIN_PERTURBED,
                    perturbation_class=seeded.perturbation_class,
                    perturbation_type=seeded.type_name,
                    parent_id=orig.query_id,
                )
            )
    records.sort(key=lambda r: (r.parent_id, r.perturbation_type))
    skips.sort(key=lambda s: (s.parent_id, s.perturbation_type))
    provenance = {spec.type_name: "builtin" for spec in specs}
    return PerturbationSuite(
        records=tuple(records), provenance=provenance, skips=tuple(skips)
    )


def ingest_suite(
    path: str | Path, originals: Sequence[QueryRecord]
) -> PerturbationSuite:
    """Validate an externally generated suite file against its originals."""
    recs = read_query_records(path)
    original_ids = {
        r.query_id for r in originals if r.origin == ORIGIN_ORIGINAL
    }
    seen: set[tuple[str, str]] = set()
    for i, rec in enumerate(recs, start=1):
        if rec.origin != ORIGIN_PERTURBED:
            raise SuiteValidationError(
                f"{path}: line {i}: suite records must have origin 'perturbed'"
            )
        expected = TYPE_CLASS.get(rec.perturbation_type)
        if expected is None or expected != rec.perturbation_class:
            raise ClassTypeMismatchError(
                f"{path}: line {i}: type {rec.perturbation_type!r} is not "
                f"class {rec.perturbation_class!r}"
            )
        if rec.parent_id not in original_ids:
            raise UnresolvedParentError(
                f"{path}: line {i}: parent_id {rec.parent_id!r} not among originals"
            )
        pair = (rec.parent_id, rec.perturbation_type)
        if pair in seen:
            raise DuplicatePerturbationError(
                f"{path}: line {i}: duplicate (parent, type) {pair!r}"
            )
        seen.add(pair)
    provenance = {r.perturbation_type: "external" for r in recs}
    return PerturbationSuite(records=tuple(recs), provenance=provenance)


def write_suite(suite: PerturbationSuite, path: str | Path) -> None:
    write_query_records(suite.records, path)


def write_skips(skips: Iterable[SkipRecord], path: str | Path) -> None:
    lines = [
        json.dumps(
            {
                "parent_id": s.parent_id,
                "perturbation_type": s.perturbation_type,
                "reason": s.reason,
            },
            ensure_ascii=False,
            separators=(",", ":"),
        )
        for s in skips
    ]
    Path(path).write_bytes("".join(line + "\n" for line in lines).encode("utf-8"))
