"""Known encoders and captioners, with pinned checkpoint strings.

Checkpoints are recorded in every exported record (inside the model
string) so a file always says exactly which weights produced it.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import AdapterError


@dataclass(frozen=True)
class ModelSpec:
    name: str
    checkpoint: str
    embeds: bool
    captions: bool
    max_text_tokens: int
    backend: str  # factory name in backends.py


MODELS = {
    "hash-16": ModelSpec("hash-16", "deterministic-v1", True, True, 77, "hash"),
    "clip-l": ModelSpec("clip-l", "openai/clip-vit-large-patch14", True, False, 77, "clip"),
    "clip-laion": ModelSpec("clip-laion", "laion/CLIP-ViT-H-14-laion2B-s32B-b79K",
                            True, False, 77, "clip"),
    "align": ModelSpec("align", "kakaobrain/align-base", True, False, 64, "align"),
    "blip-base": ModelSpec("blip-base", "Salesforce/blip-image-captioning-base",
                           False, True, 0, "image_to_text"),
    "blip-large": ModelSpec("blip-large", "Salesforce/blip-image-captioning-large",
                            False, True, 0, "image_to_text"),
    "git-l": ModelSpec("git-l", "microsoft/git-large-coco", False, True, 0, "image_to_text"),
    "vit-gpt2": ModelSpec("vit-gpt2", "nlpconnect/vit-gpt2-image-captioning",
                          False, True, 0, "image_to_text"),
}


def get_model(name: str) -> ModelSpec:
    try:
        return MODELS[name]
    except KeyError:
        raise AdapterError(
            f"unknown model {name!r}; valid: {', '.join(sorted(MODELS))}") from None


def model_string(spec: ModelSpec) -> str:
    """The model field written into every record: name plus checkpoint."""
    return f"{spec.name}:{spec.checkpoint}"


def load_backend(spec: ModelSpec):
    from . import backends

    factory = getattr(backends, f"make_{spec.backend}_backend")
    return factory(spec)
