"""Semantic perturbation suites: synonym replacement and paraphrasing.

Synonym replacement swaps one seeded content word for a same-POS synonym
from the shipped lexicon (or a caller-supplied one). Paraphrasing is
backend-pluggable; the built-in "thesaurus" backend rewrites every
lexicon word and fixes a/an agreement, which is deterministic and needs
no model. Queries with no rewritable word become skip markers instead of
records, mirroring the pipeline's no-op policy.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

_MASK64 = (1 << 64) - 1
_PUNCT = ".,!?;:'\"()[]"
_VOWELS = "aeiou"


class SeedStream:
    """Uniform integers from a keyed blake2b counter; platform-stable."""

    def __init__(self, seed: int) -> None:
        self._key = (seed & _MASK64).to_bytes(8, "little")
        self._counter = 0

    def randbelow(self, n: int) -> int:
        limit = ((1 << 64) // n) * n
        while True:
            h = hashlib.blake2b(
                self._counter.to_bytes(8, "little"), digest_size=8, key=self._key
            )
            self._counter += 1
            v = int.from_bytes(h.digest(), "little")
            if v < limit:
                return v % n

    def choice(self, seq: Sequence):
        return seq[self.randbelow(len(seq))]


def derive_seed(suite_seed: int, query_id: str, type_name: str) -> int:
    key = f"{suite_seed & _MASK64}\x1f{query_id}\x1f{type_name}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def default_lexicon() -> dict[str, list[str]]:
    raw = resources.files("embed_adapter.data").joinpath("synonyms.json").read_text("utf-8")
    return json.loads(raw)


def load_lexicon(path: str | Path) -> dict[str, list[str]]:
    return json.loads(Path(path).read_text("utf-8"))


def _split_token(token: str) -> tuple[str, str, str]:
    """token -> (leading punct, core, trailing punct)."""
    start, end = 0, len(token)
    while start < end and token[start] in _PUNCT:
        start += 1
    while end > start and token[end - 1] in _PUNCT:
        end -= 1
    return token[:start], token[start:end], token[end:]


def _match_case(original: str, replacement: str) -> str:
    if original.isupper() and len(original) > 1:
        return replacement.upper()
    if original[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    return replacement


def _fix_articles(tokens: list[str]) -> list[str]:
    out = list(tokens)
    for i, tok in enumerate(out[:-1]):
        _, core, _ = _split_token(tok)
        low = core.lower()
        if low not in ("a", "an"):
            continue
        _, nxt, _ = _split_token(out[i + 1])
        if not nxt:
            continue
        wanted = "an" if nxt[0].lower() in _VOWELS else "a"
        if low != wanted:
            out[i] = tok.replace(core, _match_case(core, wanted))
    return out


def synonym_replace(text: str, seed: int, lexicon: Mapping[str, list[str]]) -> str | None:
    """Replace one seeded lexicon word; None when nothing is replaceable."""
    tokens = text.split()
    candidates = []
    for i, tok in enumerate(tokens):
        _, core, _ = _split_token(tok)
        if core.lower() in lexicon:
            candidates.append(i)
    if not candidates:
        return None
    rng = SeedStream(seed)
    i = candidates[rng.randbelow(len(candidates))]
    lead, core, trail = _split_token(tokens[i])
    synonym = rng.choice(lexicon[core.lower()])
    tokens[i] = lead + _match_case(core, synonym) + trail
    return " ".join(_fix_articles(tokens))


def thesaurus_paraphrase(text: str, seed: int, lexicon: Mapping[str, list[str]]) -> str | None:
    """Rewrite every lexicon word with a seeded synonym; None if none found."""
    tokens = text.split()
    rng = SeedStream(seed)
    changed = False
    for i, tok in enumerate(tokens):
        lead, core, trail = _split_token(tok)
        options = lexicon.get(core.lower())
        if not options:
            continue
        tokens[i] = lead + _match_case(core, rng.choice(options)) + trail
        changed = True
    if not changed:
        return None
    return " ".join(_fix_articles(tokens))


ParaphraseBackend = Callable[[str, int, Mapping[str, list[str]]], "str | None"]

PARAPHRASE_BACKENDS: dict[str, ParaphraseBackend] = {
    "thesaurus": thesaurus_paraphrase,
}


class BackendUnavailableError(RuntimeError):
    pass


@dataclass(frozen=True)
class SemanticSuite:
    records: tuple[dict, ...]
    skips: tuple[dict, ...]
    provenance: dict[str, str]


def generate_semantic_suite(
    originals: Sequence[dict],
    method: str,
    suite_seed: int = 0,
    lexicon: Mapping[str, list[str]] | None = None,
    paraphrase_backend: str | None = None,
) -> SemanticSuite:
    """QueryRecord rows with class=semantic, one per original minus skips."""
    if method not in ("synonym", "paraphrase"):
        raise ValueError(f"unknown method {method!r}")
    lexicon = lexicon if lexicon is not None else default_lexicon()
    if method == "synonym":
        type_name = "synonym_replace"
        rewrite: ParaphraseBackend = synonym_replace
        tool = "embed-adapter:lexicon"
    else:
        type_name = "paraphrase"
        if paraphrase_backend is None:
            raise BackendUnavailableError(
                "paraphrase needs a configured backend; available: "
                + ", ".join(sorted(PARAPHRASE_BACKENDS))
            )
        try:
            rewrite = PARAPHRASE_BACKENDS[paraphrase_backend]
        except KeyError:
            raise BackendUnavailableError(
                f"unknown paraphrase backend {paraphrase_backend!r}"
            ) from None
        tool = f"embed-adapter:{paraphrase_backend}"

    records: list[dict] = []
    skips: list[dict] = []
    for rec in originals:
        qid = rec["query_id"]
        seed = derive_seed(suite_seed, qid, type_name)
        new_text = rewrite(rec["text"], seed, lexicon)
        if new_text is None or new_text == rec["text"]:
            skips.append(
                {
                    "parent_id": qid,
                    "perturbation_type": type_name,
                    "reason": "no-op perturbation",
                }
            )
            continue
        records.append(
            {
                "query_id": f"{qid}::{type_name}",
                "text": new_text,
                "origin": "perturbed",
                "perturbation_class": "semantic",
                "perturbation_type": type_name,
                "parent_id": qid,
            }
        )
    records.sort(key=lambda r: (r["parent_id"], r["perturbation_type"]))
    skips.sort(key=lambda s: (s["parent_id"], s["perturbation_type"]))
    return SemanticSuite(
        records=tuple(records),
        skips=tuple(skips),
        provenance={type_name: tool},
    )
