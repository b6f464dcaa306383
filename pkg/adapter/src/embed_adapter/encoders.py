"""Text and image encoders emitting EMB1 files.

Two backend families are supported through the checkpoint string of a
ModelSpec:

- ``hash:dim=64[,fold_case=1]``: a deterministic pseudo-encoder (keyed
  blake2b seed -> Gaussian draw -> unit norm). Needs no ML runtime and
  is the backend used by the format-contract tests. ``fold_case``
  lower-cases text before hashing, mimicking case-folding tokenizers.
- ``clip:<checkpoint>``: a CLIP-family model loaded via transformers
  (optional extra); text and image features are unit-normalized.

Rows are unit-normalized here, once, so downstream consumers can assume
normalized inputs.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .emb1 import unit_normalize, write_emb1
from .records import read_queries

logger = logging.getLogger("embed_adapter")

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp")


class EncoderUnavailableError(RuntimeError):
    """The requested backend or checkpoint cannot be loaded."""


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    checkpoint: str
    batch_size: int = 32
    device: str = "cpu"

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


class HashEncoder:
    """Deterministic stand-in encoder: one seeded Gaussian per input."""

    def __init__(self, dim: int, fold_case: bool = False) -> None:
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.fold_case = fold_case

    def _vector(self, payload: bytes) -> np.ndarray:
        digest = hashlib.blake2b(payload, digest_size=8).digest()
        gen = np.random.default_rng(int.from_bytes(digest, "little"))
        return gen.standard_normal(self.dim)

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        rows = []
        for text in texts:
            if self.fold_case:
                text = text.lower()
            rows.append(self._vector(b"text\x1f" + text.encode("utf-8")))
        return unit_normalize(np.asarray(rows))

    def encode_image_bytes(self, blobs: Sequence[bytes]) -> np.ndarray:
        rows = [self._vector(b"image\x1f" + blob) for blob in blobs]
        return unit_normalize(np.asarray(rows))


class ClipEncoder:
    """CLIP-family encoder via transformers; unit-normalized features."""

    def __init__(self, checkpoint: str, batch_size: int, device: str) -> None:
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderUnavailableError(
                f"clip backend needs the [clip] extra (transformers, torch): {exc}"
            ) from None
        try:
            self.model = CLIPModel.from_pretrained(checkpoint)
            self.processor = CLIPProcessor.from_pretrained(checkpoint)
        except Exception as exc:
            raise EncoderUnavailableError(
                f"cannot load checkpoint {checkpoint!r}: {exc}"
            ) from None
        self.model.eval().to(device)
        self.batch_size = batch_size
        self.device = device
        self.max_tokens = int(self.model.config.text_config.max_position_embeddings)

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        import torch

        tokenizer = self.processor.tokenizer
        over = [
            i
            for i, t in enumerate(texts)
            if len(tokenizer(t)["input_ids"]) > self.max_tokens
        ]
        for i in over:
            logger.warning(
                "text %d exceeds the %d-token limit and will be truncated",
                i, self.max_tokens,
            )
        rows = []
        with torch.no_grad():
            for start in range(0, len(texts), self.batch_size):
                batch = list(texts[start : start + self.batch_size])
                inputs = tokenizer(
                    batch, padding=True, truncation=True,
                    max_length=self.max_tokens, return_tensors="pt",
                ).to(self.device)
                feats = self.model.get_text_features(**inputs)
                rows.append(feats.cpu().numpy())
        return unit_normalize(np.concatenate(rows, axis=0))

    def encode_images(self, images) -> np.ndarray:
        import torch

        rows = []
        with torch.no_grad():
            for start in range(0, len(images), self.batch_size):
                batch = images[start : start + self.batch_size]
                inputs = self.processor(images=batch, return_tensors="pt").to(self.device)
                feats = self.model.get_image_features(**inputs)
                rows.append(feats.cpu().numpy())
        return unit_normalize(np.concatenate(rows, axis=0))


def make_encoder(spec: ModelSpec):
    kind, _, rest = spec.checkpoint.partition(":")
    if kind == "hash":
        params = {}
        for part in rest.split(","):
            if part:
                key, _, value = part.partition("=")
                params[key.strip()] = value.strip()
        dim = int(params.pop("dim", "64"))
        fold_case = params.pop("fold_case", "0") not in ("0", "", "false")
        if params:
            raise ValueError(f"unknown hash backend params {sorted(params)}")
        return HashEncoder(dim=dim, fold_case=fold_case)
    if kind == "clip":
        if not rest:
            raise ValueError("clip backend needs a checkpoint, e.g. clip:openai/clip-vit-base-patch32")
        return ClipEncoder(rest, batch_size=spec.batch_size, device=spec.device)
    raise ValueError(f"unknown encoder backend {spec.checkpoint!r}")


def encode_texts(spec: ModelSpec, queries_path: str | Path, out_path: str | Path) -> int:
    """Encode every query record's text; ids become the EMB1 row ids."""
    records = read_queries(queries_path)
    encoder = make_encoder(spec)
    vectors = encoder.encode_texts([r["text"] for r in records])
    write_emb1([r["query_id"] for r in records], vectors, out_path, normalized=True)
    return len(records)


def _load_image_entries(source: str | Path) -> list[tuple[str, Path]]:
    source = Path(source)
    if source.is_dir():
        paths = sorted(
            p for p in source.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
        )
        return [(p.stem, p) for p in paths]
    # manifest: JSONL of {"id", "path"}
    import json

    entries = []
    with open(source, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                obj = json.loads(line)
                entries.append((obj["id"], Path(obj["path"])))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{source}: line {lineno}: {exc}") from None
    return entries


def encode_images(spec: ModelSpec, source: str | Path, out_path: str | Path) -> tuple[int, int]:
    """Encode images from a directory or manifest; returns (written, skipped).

    Unreadable files are skipped with a logged id; zero successes is an error.
    """
    from PIL import Image

    entries = _load_image_entries(source)
    encoder = make_encoder(spec)
    ids: list[str] = []
    skipped = 0
    if isinstance(encoder, HashEncoder):
        blobs = []
        for image_id, path in entries:
            try:
                with Image.open(path) as img:
                    img.verify()
                blobs.append(path.read_bytes())
            except Exception:
                logger.warning("skipping unreadable image %r (%s)", image_id, path)
                skipped += 1
                continue
            ids.append(image_id)
        if not ids:
            raise ValueError(f"no readable images in {source}")
        vectors = encoder.encode_image_bytes(blobs)
    else:
        images = []
        for image_id, path in entries:
            try:
                with Image.open(path) as img:
                    images.append(img.convert("RGB"))
            except Exception:
                logger.warning("skipping unreadable image %r (%s)", image_id, path)
                skipped += 1
                continue
            ids.append(image_id)
        if not ids:
            raise ValueError(f"no readable images in {source}")
        vectors = encoder.encode_images(images)
    write_emb1(ids, vectors, out_path, normalized=True)
    return len(ids), skipped
