"""Shared test factories.

Everything here builds tiny in-memory fixtures; file-backed fixtures live
under tests/fixtures/ and are regenerated by scripts/make_fixtures.py.
"""

from __future__ import annotations

import hashlib

import numpy as np
import pytest

from vwsd.captions import CaptionSet, CaptionStore
from vwsd.dataset import Dataset, VwsdInstance
from vwsd.embeddings import EmbeddingRecord, EmbeddingStore, text_key
from vwsd.gateway import LlmGateway, ScriptedTransport

LETTERS = "ABCDEFGHIJ"


def make_instance(idx=0, target="bank", context="river", gold_pos=0, n=10):
    """One instance with candidate ids img<idx>_0..9 and gold at gold_pos."""
    cands = tuple(f"img{idx}_{j}" for j in range(n))
    phrase = f"{target} {context}".strip()
    return VwsdInstance(
        instance_id=str(idx).zfill(4),
        target_word=target,
        context_word=context,
        full_phrase=phrase,
        candidate_ids=cands,
        gold_id=cands[gold_pos],
    )


def make_dataset(instances):
    ids = frozenset(i for inst in instances for i in inst.candidate_ids)
    return Dataset(instances=tuple(instances), image_ids=frozenset(ids))


def unit_vector(token: str, dim: int = 8) -> np.ndarray:
    """Deterministic unit vector seeded from the token text."""
    seed = int.from_bytes(hashlib.sha256(token.encode()).digest()[:4], "big")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


def store_for(dataset, model="toy-clip", dim=8, phrases=None):
    """Embeddings for every image id and every full phrase (or override text)."""
    store = EmbeddingStore()
    for inst in dataset:
        text = (phrases or {}).get(inst.instance_id, inst.full_phrase)
        store.add(EmbeddingRecord(
            key=text_key(text, model), kind="text", model=model, dim=dim,
            vector=unit_vector("t:" + text, dim)))
        for img in inst.candidate_ids:
            # duplicate adds are fine: identical payloads are idempotent
            store.add(EmbeddingRecord(
                key=img, kind="image", model=model, dim=dim,
                vector=unit_vector("i:" + img, dim)))
    return store


def caption_store_for(dataset, captioner="toy-cap", strategy="greedy"):
    store = CaptionStore()
    for inst in dataset:
        for img in inst.candidate_ids:
            caps = (f"a photo of {img}",) if strategy == "greedy" else tuple(
                f"beam {j} of {img}" for j in range(10))
            store.add(CaptionSet(image_id=img, captioner=captioner,
                                 strategy=strategy, captions=caps))
    return store


def scripted_gateway(tmp_path, script=None, default="(A)", failures=None, offline=False):
    transport = ScriptedTransport(script=script or {}, default=default,
                                  failures=failures)
    gw = LlmGateway(cache_dir=tmp_path / "cache", transport=transport,
                    offline=offline, sleep=lambda s: None)
    return gw, transport


@pytest.fixture
def tiny_dataset():
    return make_dataset([make_instance(i, target=f"word{i}", context=f"ctx{i}",
                                       gold_pos=i % 10) for i in range(4)])
