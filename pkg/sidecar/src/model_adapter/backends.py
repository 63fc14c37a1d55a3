"""Model backends: a deterministic hash-feature one, and lazy ML ones.

The hash backend exists so exports and their consumers can be exercised
without weights or a GPU; its vectors are unit f32 features seeded from
the input bytes.  The transformers-backed ones import their runtime only
when actually constructed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AdapterError
from .jobs import BEAM_RETURN, BEAM_WIDTH
from .registry import ModelSpec

HASH_DIM = 16

_ADJECTIVES = ("quiet", "rusty", "bright", "narrow", "weathered",
               "distant", "empty", "crowded")
_NOUNS = ("harbor", "bridge", "orchard", "staircase", "market",
          "hillside", "station", "courtyard")
_TAILS = ("at dawn", "in the rain", "under a gray sky", "at night",
          "in summer", "from above", "after the storm", "in the fog",
          "at low tide", "near the road")


def _seeded_unit(payload: bytes) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(payload).digest()[:4], "big")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(HASH_DIM)
    return (v / np.linalg.norm(v)).astype(np.float32)


@dataclass(frozen=True)
class HashBackend:
    """Feature extractor with no ML runtime; output depends only on input bytes."""

    spec: ModelSpec

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([_seeded_unit(f"text:{t}:{self.spec.checkpoint}".encode())
                         for t in texts])

    def embed_images(self, blobs: Sequence[bytes]) -> np.ndarray:
        return np.stack([_seeded_unit(b"image:" + b) for b in blobs])

    def caption_images(self, blobs: Sequence[bytes], strategy: str) -> list[list[str]]:
        out = []
        for blob in blobs:
            h = int.from_bytes(hashlib.sha256(blob).digest()[:4], "big")
            base = f"a {_ADJECTIVES[h % 8]} {_NOUNS[(h >> 3) % 8]}"
            if strategy == "greedy":
                out.append([base])
            else:
                out.append([f"{base} {_TAILS[(h + j) % 10]}" for j in range(BEAM_RETURN)])
        return out


def make_hash_backend(spec: ModelSpec) -> HashBackend:
    return HashBackend(spec)


def _require(module: str, spec: ModelSpec):
    try:
        return __import__(module)
    except ImportError as exc:
        raise AdapterError(
            f"model {spec.name!r} needs {module}; install the 'models' extra") from exc


class ClipEncoder:
    def __init__(self, spec: ModelSpec):
        _require("torch", spec)
        transformers = _require("transformers", spec)
        self.spec = spec
        self.model = transformers.CLIPModel.from_pretrained(spec.checkpoint)
        self.processor = transformers.CLIPProcessor.from_pretrained(spec.checkpoint)
        self.model.eval()

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        import torch

        inputs = self.processor(text=list(texts), return_tensors="pt",
                                padding=True, truncation=True,
                                max_length=self.spec.max_text_tokens)
        with torch.no_grad():
            feats = self.model.get_text_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)

    def embed_images(self, blobs: Sequence[bytes]) -> np.ndarray:
        import io

        import torch
        from PIL import Image

        images = [Image.open(io.BytesIO(b)).convert("RGB") for b in blobs]
        inputs = self.processor(images=images, return_tensors="pt")
        with torch.no_grad():
            feats = self.model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)


class AlignEncoder(ClipEncoder):
    def __init__(self, spec: ModelSpec):
        _require("torch", spec)
        transformers = _require("transformers", spec)
        self.spec = spec
        self.model = transformers.AlignModel.from_pretrained(spec.checkpoint)
        self.processor = transformers.AlignProcessor.from_pretrained(spec.checkpoint)
        self.model.eval()


class ImageToTextCaptioner:
    """Greedy or beam captioning through a transformers pipeline."""

    def __init__(self, spec: ModelSpec):
        _require("torch", spec)
        transformers = _require("transformers", spec)
        self.spec = spec
        self.pipe = transformers.pipeline("image-to-text", model=spec.checkpoint)

    def caption_images(self, blobs: Sequence[bytes], strategy: str) -> list[list[str]]:
        import io

        from PIL import Image

        if strategy == "greedy":
            kwargs = {"do_sample": False, "num_beams": 1}
        else:
            kwargs = {"do_sample": True, "num_beams": BEAM_WIDTH,
                      "num_return_sequences": BEAM_RETURN}
        out = []
        for blob in blobs:
            image = Image.open(io.BytesIO(blob)).convert("RGB")
            results = self.pipe(image, generate_kwargs=kwargs)
            out.append([r["generated_text"].strip() for r in results])
        return out


def make_clip_backend(spec: ModelSpec) -> ClipEncoder:
    return ClipEncoder(spec)


def make_align_backend(spec: ModelSpec) -> AlignEncoder:
    return AlignEncoder(spec)


def make_image_to_text_backend(spec: ModelSpec) -> ImageToTextCaptioner:
    return ImageToTextCaptioner(spec)
