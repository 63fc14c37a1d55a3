"""Caption sets produced by an image-captioning sidecar.

Greedy decoding yields exactly one caption per image; beam search yields
exactly ten.  When a beam set is used as prompt text the captions are
joined with ", ".
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import CaptionError

STRATEGIES = ("greedy", "beam")
BEAM_COUNT = 10


@dataclass(frozen=True)
class CaptionSet:
    image_id: str
    captioner: str
    strategy: str
    captions: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise CaptionError(
                f"image {self.image_id!r}: unknown strategy {self.strategy!r}; valid: greedy, beam"
            )
        object.__setattr__(self, "captions", tuple(self.captions))
        want = 1 if self.strategy == "greedy" else BEAM_COUNT
        if len(self.captions) != want:
            raise CaptionError(
                f"image {self.image_id!r}: {self.strategy} set must hold {want} "
                f"caption(s), got {len(self.captions)}"
            )
        if any(not isinstance(c, str) or not c for c in self.captions):
            raise CaptionError(f"image {self.image_id!r}: captions must be non-empty strings")

    def same_payload(self, other: "CaptionSet") -> bool:
        return self.captions == other.captions


def caption_text(caption_set: CaptionSet) -> str:
    """The prompt text for one option: single caption, or ', '-joined beam."""
    if caption_set.strategy == "greedy":
        return caption_set.captions[0]
    return ", ".join(caption_set.captions)


class CaptionStore:
    """Caption sets keyed by (image id, captioner, strategy)."""

    def __init__(self) -> None:
        self._sets: dict[tuple[str, str, str], CaptionSet] = {}

    def add(self, caption_set: CaptionSet) -> None:
        slot = (caption_set.image_id, caption_set.captioner, caption_set.strategy)
        existing = self._sets.get(slot)
        if existing is not None:
            if existing.same_payload(caption_set):
                return
            raise CaptionError(
                f"duplicate caption set for image {caption_set.image_id!r} "
                f"({caption_set.captioner}, {caption_set.strategy}) with different captions"
            )
        self._sets[slot] = caption_set

    def get(self, image_id: str, captioner: str, strategy: str) -> CaptionSet:
        try:
            return self._sets[(image_id, captioner, strategy)]
        except KeyError:
            raise CaptionError(
                f"no {strategy} caption set for image {image_id!r} from captioner {captioner!r}"
            ) from None

    def __len__(self) -> int:
        return len(self._sets)

    def sets(self) -> list[CaptionSet]:
        return list(self._sets.values())


_FIELDS = ("image_id", "captioner", "strategy", "captions")


def load_captions(path: str | Path) -> CaptionStore:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise CaptionError(f"no such file: {path}") from None
    store = CaptionStore()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CaptionError(f"{where}: invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict) or set(obj) != set(_FIELDS):
            raise CaptionError(f"{where}: fields must be exactly {', '.join(_FIELDS)}")
        if not isinstance(obj["captions"], list):
            raise CaptionError(f"{where}: captions must be a list")
        try:
            store.add(
                CaptionSet(
                    image_id=obj["image_id"],
                    captioner=obj["captioner"],
                    strategy=obj["strategy"],
                    captions=tuple(obj["captions"]),
                )
            )
        except CaptionError as exc:
            raise CaptionError(f"{where}: {exc}") from None
    return store


def write_captions(sets: Iterable[CaptionSet], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in sets:
            obj = {
                "image_id": s.image_id,
                "captioner": s.captioner,
                "strategy": s.strategy,
                "captions": list(s.captions),
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
