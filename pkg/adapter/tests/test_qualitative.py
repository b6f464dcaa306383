"""Optional qualitative check with a real CLIP checkpoint.

Needs a locally resolvable checkpoint (set EMBED_ADAPTER_CLIP_CHECKPOINT,
e.g. to openai/clip-vit-base-patch32 with a warm HF cache) plus a local
image set; skipped otherwise. Direction-only assertions: case-change
perturbations should give near-zero intra distance and near-zero
instability, and keyword-only perturbations should destabilize rankings
more than punctuation edits.
"""

import os

import numpy as np
import pytest

CHECKPOINT = os.environ.get("EMBED_ADAPTER_CLIP_CHECKPOINT")


def _clip_available() -> bool:
    if not CHECKPOINT:
        return False
    try:
        from embed_adapter.encoders import ClipEncoder

        ClipEncoder(CHECKPOINT, batch_size=8, device="cpu")
        return True
    except Exception:
        return False


pytestmark = pytest.mark.skipif(
    not _clip_available(),
    reason="no resolvable CLIP checkpoint (set EMBED_ADAPTER_CLIP_CHECKPOINT)",
)

TEXTS = [
    "A red car parked on a quiet street.",
    "Two dogs running through a green park.",
    "A man riding a bicycle near the river.",
    "Children playing football on the beach.",
    "An old boat sailing under the bridge.",
]


def test_case_changes_near_zero_keyword_above_punctuation(tmp_path):
    from embed_adapter.encoders import ClipEncoder
    from rank_brittle.metrics import MetricsConfig, instability
    from rank_brittle.perturb import PerturbationSpec, perturb_lexical, perturb_syntactic
    from rank_brittle.ranker import rank_topk
    from rank_brittle.store import EmbeddingStore, cosine_distance, normalize

    encoder = ClipEncoder(CHECKPOINT, batch_size=8, device="cpu")

    rng = np.random.default_rng(0)
    images = rng.integers(0, 255, size=(100, 32, 32, 3), dtype=np.uint8)
    from PIL import Image

    corpus_vecs = encoder.encode_images([Image.fromarray(a) for a in images])
    corpus = normalize(
        EmbeddingStore(
            ids=tuple(f"img{i:03d}" for i in range(len(corpus_vecs))),
            vectors=corpus_vecs,
        )
    )
    depth = 50
    cfg = MetricsConfig(depth=depth, overlap_ks=(1, 10, 50))

    def mean_metrics(variants: list[str], originals: list[str]):
        base_vecs = encoder.encode_texts(originals)
        var_vecs = encoder.encode_texts(variants)
        intras, insts = [], []
        for b, v in zip(base_vecs, var_vecs):
            intras.append(cosine_distance(b, v))
            a_ids = rank_topk(corpus, b, depth).item_ids()
            b_ids = rank_topk(corpus, v, depth).item_ids()
            insts.append(instability(a_ids, b_ids, cfg))
        return float(np.mean(intras)), float(np.mean(insts))

    lower = [perturb_lexical(t, PerturbationSpec("lowercase")) for t in TEXTS]
    punct = [perturb_lexical(t, PerturbationSpec("punctuation_remove")) for t in TEXTS]
    keywords = [perturb_syntactic(t, PerturbationSpec("keyword_only")) for t in TEXTS]

    case_intra, case_inst = mean_metrics(lower, TEXTS)
    _, punct_inst = mean_metrics(punct, TEXTS)
    _, keyword_inst = mean_metrics(keywords, TEXTS)

    assert case_intra < 0.05
    assert case_inst < 0.1
    assert keyword_inst > punct_inst
