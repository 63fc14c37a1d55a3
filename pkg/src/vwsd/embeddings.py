"""Embedding records, the keyed store, and similarity measures.

Vectors are stored as float32 and accumulated in float64.  All three
measures are "higher is better": cosine is the normalized dot product,
euclidean and manhattan are negated distances.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmbeddingError
from .util import normalize_ws

MEASURES = ("cosine", "euclidean", "manhattan")
KINDS = ("text", "image")

BINARY_MAGIC = b"VWSDEMB1"
# kind byte on the wire; all integers little-endian
_KIND_CODES = {"text": 0, "image": 1}
_KIND_NAMES = {code: name for name, code in _KIND_CODES.items()}


def text_key(text: str, model: str) -> str:
    """Store key for a text: SHA-256 over the normalized text plus model name."""
    payload = normalize_ws(text) + "\n" + model
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(eq=False)
class EmbeddingRecord:
    key: str
    kind: str
    model: str
    dim: int
    vector: np.ndarray

    def __post_init__(self) -> None:
        if not isinstance(self.key, str) or not isinstance(self.model, str):
            raise EmbeddingError("record key and model must be strings")
        if self.kind not in KINDS:
            raise EmbeddingError(f"record {self.key!r}: unknown kind {self.kind!r}")
        if not self.key:
            raise EmbeddingError("record has an empty key")
        vec = np.asarray(self.vector, dtype=np.float32)
        if vec.ndim != 1:
            raise EmbeddingError(f"record {self.key!r}: vector must be 1-dimensional")
        if not isinstance(self.dim, int) or self.dim <= 0:
            raise EmbeddingError(f"record {self.key!r}: dim must be a positive integer")
        if vec.shape[0] != self.dim:
            raise EmbeddingError(
                f"record {self.key!r}: dim {self.dim} does not match vector length {vec.shape[0]}"
            )
        if not np.all(np.isfinite(vec)):
            raise EmbeddingError(f"record {self.key!r}: non-finite vector component")
        self.vector = vec

    def same_payload(self, other: "EmbeddingRecord") -> bool:
        return (
            self.kind == other.kind
            and self.model == other.model
            and self.dim == other.dim
            and bool(np.array_equal(self.vector, other.vector))
        )


def similarity(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray, measure: str) -> float:
    """Similarity between two vectors under the named measure."""
    if measure not in MEASURES:
        raise EmbeddingError(f"unknown similarity measure {measure!r}; valid: {', '.join(MEASURES)}")
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise EmbeddingError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if measure == "cosine":
        na = float(np.linalg.norm(a))
        nb = float(np.linalg.norm(b))
        if na == 0.0 or nb == 0.0:
            raise EmbeddingError("cosine similarity is undefined for a zero-norm vector")
        return float(np.dot(a, b)) / (na * nb)
    diff = a - b
    if measure == "euclidean":
        return -float(np.linalg.norm(diff))
    return -float(np.sum(np.abs(diff)))


class EmbeddingStore:
    """Keyed embedding lookup; per model, every record shares one dim.

    Records are addressed by (key, model).  Re-adding an identical record
    is a no-op; re-adding a conflicting one is an error.
    """

    def __init__(self) -> None:
        self._records: dict[tuple[str, str], EmbeddingRecord] = {}
        self._model_dims: dict[str, int] = {}

    def add(self, record: EmbeddingRecord) -> None:
        want = self._model_dims.get(record.model)
        if want is not None and want != record.dim:
            raise EmbeddingError(
                f"model {record.model!r}: record {record.key!r} has dim {record.dim}, "
                f"earlier records have dim {want}"
            )
        slot = (record.key, record.model)
        existing = self._records.get(slot)
        if existing is not None:
            if existing.same_payload(record):
                return
            raise EmbeddingError(
                f"duplicate key {record.key!r} for model {record.model!r} with a different payload"
            )
        self._records[slot] = record
        self._model_dims.setdefault(record.model, record.dim)

    def get(self, key: str, model: str) -> EmbeddingRecord:
        try:
            return self._records[(key, model)]
        except KeyError:
            raise EmbeddingError(f"no embedding for key {key!r} under model {model!r}") from None

    def get_text(self, text: str, model: str) -> EmbeddingRecord:
        return self.get(text_key(text, model), model)

    def model_dim(self, model: str) -> int:
        try:
            return self._model_dims[model]
        except KeyError:
            raise EmbeddingError(f"store holds no records for model {model!r}") from None

    def records(self) -> list[EmbeddingRecord]:
        return list(self._records.values())

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, slot: tuple[str, str]) -> bool:
        return tuple(slot) in self._records


_JSONL_FIELDS = ("key", "kind", "model", "dim", "vector")


def _record_from_obj(obj: object, where: str) -> EmbeddingRecord:
    if not isinstance(obj, dict) or set(obj) != set(_JSONL_FIELDS):
        raise EmbeddingError(
            f"{where}: malformed record; fields must be exactly {', '.join(_JSONL_FIELDS)}"
        )
    if not isinstance(obj["vector"], list):
        raise EmbeddingError(f"{where}: vector must be a list of numbers")
    try:
        return EmbeddingRecord(
            key=obj["key"],
            kind=obj["kind"],
            model=obj["model"],
            dim=obj["dim"],
            vector=np.asarray(obj["vector"], dtype=np.float32),
        )
    except (TypeError, ValueError) as exc:
        raise EmbeddingError(f"{where}: {exc}") from None
    except EmbeddingError as exc:
        raise EmbeddingError(f"{where}: {exc}") from None


def load_embeddings(path: str | Path) -> EmbeddingStore:
    """Load a store from JSONL or the binary format (sniffed by magic)."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            head = fh.read(len(BINARY_MAGIC))
    except FileNotFoundError:
        raise EmbeddingError(f"no such file: {path}") from None
    if head == BINARY_MAGIC:
        return _load_binary(path)
    return _load_jsonl(path)


def _load_jsonl(path: Path) -> EmbeddingStore:
    store = EmbeddingStore()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EmbeddingError(f"{where}: invalid JSON ({exc.msg})") from None
            store.add(_record_from_obj(obj, where))
    return store


def _load_binary(path: Path) -> EmbeddingStore:
    store = EmbeddingStore()
    raw = path.read_bytes()
    off = len(BINARY_MAGIC)
    total = len(raw)

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > total:
            raise EmbeddingError(f"{path}: truncated record ({what})")
        chunk = raw[off : off + n]
        off += n
        return chunk

    while off < total:
        (key_len,) = struct.unpack("<H", take(2, "key length"))
        key = take(key_len, "key").decode("utf-8")
        (kind_code,) = struct.unpack("<B", take(1, "kind"))
        if kind_code not in _KIND_NAMES:
            raise EmbeddingError(f"{path}: unknown kind code {kind_code} in record {key!r}")
        (model_len,) = struct.unpack("<H", take(2, "model length"))
        model = take(model_len, "model").decode("utf-8")
        (dim,) = struct.unpack("<I", take(4, "dim"))
        vec = np.frombuffer(take(4 * dim, "vector"), dtype="<f4").astype(np.float32)
        store.add(EmbeddingRecord(key=key, kind=_KIND_NAMES[kind_code], model=model, dim=dim, vector=vec))
    return store


def write_embeddings_jsonl(records: Iterable[EmbeddingRecord], path: str | Path) -> None:
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


def write_embeddings_binary(records: Iterable[EmbeddingRecord], path: str | Path) -> None:
    with Path(path).open("wb") as fh:
        fh.write(BINARY_MAGIC)
        for rec in records:
            key_b = rec.key.encode("utf-8")
            model_b = rec.model.encode("utf-8")
            if len(key_b) > 0xFFFF or len(model_b) > 0xFFFF:
                raise EmbeddingError(f"record {rec.key!r}: key or model name too long for binary format")
            fh.write(struct.pack("<H", len(key_b)))
            fh.write(key_b)
            fh.write(struct.pack("<B", _KIND_CODES[rec.kind]))
            fh.write(struct.pack("<H", len(model_b)))
            fh.write(model_b)
            fh.write(struct.pack("<I", rec.dim))
            fh.write(rec.vector.astype("<f4", copy=False).tobytes())
