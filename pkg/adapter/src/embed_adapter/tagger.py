"""Deterministic rule-based UPOS tagging for English queries.

Closed-class words come from fixed lexicons; open-class words fall back
to suffix heuristics and finally NOUN, which suits the noun-heavy
language of retrieval queries. Tags align one-to-one with whitespace
tokens, matching the tag-table exchange schema.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

DET = {
    "a", "an", "the", "this", "that", "these", "those", "each", "every",
    "either", "neither", "some", "any", "no", "another", "both", "all",
    "such", "what", "which",
}
ADP = {
    "in", "on", "at", "of", "by", "with", "from", "to", "into", "onto",
    "over", "under", "through", "between", "against", "during", "near",
    "across", "behind", "beside", "above", "below", "along", "around",
    "inside", "outside", "toward", "towards", "upon", "within", "without",
    "about", "off", "up", "down", "before", "after", "past", "among",
}
PRON = {
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us",
    "them", "who", "whom", "someone", "something", "anyone", "anything",
    "everyone", "everything", "nobody", "nothing", "himself", "herself",
    "itself", "themselves", "mine", "yours", "hers", "theirs", "ours",
}
AUX = {
    "am", "is", "are", "was", "were", "be", "been", "being", "do", "does",
    "did", "have", "has", "had", "having", "will", "would", "can", "could",
    "shall", "should", "may", "might", "must",
}
CCONJ = {"and", "or", "but", "nor", "yet"}
SCONJ = {"because", "although", "though", "whereas", "unless", "since",
         "until", "while", "if", "whether"}
PART = {"not", "n't"}
NUM_WORDS = {
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve", "dozen", "hundred", "thousand",
    "million", "first", "second", "third",
}
ADV = {"very", "too", "quite", "rather", "almost", "also", "now", "then",
       "here", "there", "again", "often", "always", "never", "together"}
ADJ = {
    "red", "blue", "green", "yellow", "white", "black", "brown", "orange",
    "purple", "pink", "grey", "gray", "golden", "silver", "dark", "light",
    "big", "large", "small", "little", "tiny", "huge", "tall", "short",
    "long", "wide", "narrow", "old", "young", "new", "ancient", "modern",
    "fast", "quick", "slow", "happy", "sad", "angry", "empty", "full",
    "open", "closed", "wet", "dry", "hot", "cold", "warm", "cool", "high",
    "low", "wooden", "metal", "plastic", "glass", "round", "square",
    "front", "back", "left", "right", "several", "many", "few", "male",
    "female", "outdoor", "indoor", "snowy", "rainy", "sunny", "crowded",
    "busy", "quiet", "noisy", "shiny", "dirty", "clean", "bright", "heavy",
    "pretty", "colorful", "striped", "bald", "blonde",
}
VERB = {
    "run", "runs", "ran", "walk", "walks", "ride", "rides", "rode", "fly",
    "flies", "flew", "jump", "jumps", "sit", "sits", "sat", "stand",
    "stands", "stood", "hold", "holds", "held", "eat", "eats", "ate",
    "drink", "drinks", "drank", "play", "plays", "look", "looks", "watch",
    "watches", "wear", "wears", "wore", "drive", "drives", "drove", "swim",
    "swims", "swam", "climb", "climbs", "dance", "dances", "sing", "sings",
    "sang", "talk", "talks", "speak", "speaks", "spoke", "throw", "throws",
    "catch", "catches", "kick", "kicks", "carry", "carries", "pull",
    "pulls", "push", "pushes", "point", "points", "wave", "waves", "go",
    "goes", "went", "cross", "crosses", "sail", "sails", "read", "reads",
    "write", "writes", "cook", "cooks", "cut", "cuts", "fight", "fights",
}

ADJ_SUFFIXES = ("ous", "ful", "ive", "able", "ible", "ish", "less")
PUNCT_CHARS = set(".,!?;:'\"()[]-")


def _strip_punct(token: str) -> str:
    return token.strip(".,!?;:'\"()[]")


def tag_token(token: str, position: int) -> str:
    core = _strip_punct(token)
    if not core:
        return "PUNCT"
    low = core.lower()
    if core.replace(",", "").replace(".", "").isdigit():
        return "NUM"
    if low in NUM_WORDS:
        return "NUM"
    if low in DET:
        return "DET"
    if low in ADP:
        return "ADP"
    if low in PRON:
        return "PRON"
    if low in AUX:
        return "AUX"
    if low in CCONJ:
        return "CCONJ"
    if low in SCONJ:
        return "SCONJ"
    if low in PART:
        return "PART"
    if low in VERB:
        return "VERB"
    if low in ADJ:
        return "ADJ"
    if low in ADV or (low.endswith("ly") and len(low) > 3):
        return "ADV"
    if low.endswith("ing") and len(low) > 4:
        return "VERB"
    if low.endswith("ed") and len(low) > 3:
        return "VERB"
    if low.endswith(ADJ_SUFFIXES) and len(low) > 4:
        return "ADJ"
    if position > 0 and core[0].isupper():
        return "PROPN"
    return "NOUN"


def tag_text(text: str) -> tuple[list[str], list[str]]:
    tokens = text.split()
    tags = [tag_token(tok, i) for i, tok in enumerate(tokens)]
    return tokens, tags


def tag_queries(records: Iterable[dict], out_path: str | Path) -> int:
    """Write a tag table (JSONL of query_id/tokens/tags) for the records."""
    lines = []
    for rec in records:
        tokens, tags = tag_text(rec["text"])
        lines.append(
            json.dumps(
                {"query_id": rec["query_id"], "tokens": tokens, "tags": tags},
                ensure_ascii=False,
                separators=(",", ":"),
            )
        )
    Path(out_path).write_bytes("".join(line + "\n" for line in lines).encode("utf-8"))
    return len(lines)
