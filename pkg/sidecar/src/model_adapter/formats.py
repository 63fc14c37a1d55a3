"""Writers for the retrieval pipeline's embedding and caption files.

The schemas are duplicated from the consumer on purpose: the contract
between the two packages is the bytes on disk, not shared code.  Any
change here must keep the consumer's loaders accepting the output.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import AdapterError

BINARY_MAGIC = b"VWSDEMB1"
# kind byte on the wire; all integers little-endian
KIND_CODES = {"text": 0, "image": 1}


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


def text_key(text: str, model: str) -> str:
    """Store key for a text: SHA-256 over the normalized text plus model name."""
    payload = normalize_ws(text) + "\n" + model
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ExportedVector:
    key: str
    kind: str
    model: str
    vector: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


@dataclass(frozen=True)
class ExportedCaptions:
    image_id: str
    captioner: str
    strategy: str
    captions: tuple[str, ...]


def write_embeddings_jsonl(records: Iterable[ExportedVector], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "key": rec.key,
                "kind": rec.kind,
                "model": rec.model,
                "dim": rec.dim,
                "vector": [float(x) for x in rec.vector],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def write_embeddings_binary(records: Iterable[ExportedVector], path: str | Path) -> None:
    with Path(path).open("wb") as fh:
        fh.write(BINARY_MAGIC)
        for rec in records:
            key_b = rec.key.encode("utf-8")
            model_b = rec.model.encode("utf-8")
            if len(key_b) > 0xFFFF or len(model_b) > 0xFFFF:
                raise AdapterError(f"record {rec.key!r}: key or model name too long for binary format")
            fh.write(struct.pack("<H", len(key_b)))
            fh.write(key_b)
            fh.write(struct.pack("<B", KIND_CODES[rec.kind]))
            fh.write(struct.pack("<H", len(model_b)))
            fh.write(model_b)
            fh.write(struct.pack("<I", rec.dim))
            fh.write(rec.vector.astype("<f4", copy=False).tobytes())


def write_captions_jsonl(sets: Sequence[ExportedCaptions], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in sets:
            obj = {
                "image_id": s.image_id,
                "captioner": s.captioner,
                "strategy": s.strategy,
                "captions": list(s.captions),
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
