from __future__ import annotations

from dataclasses import dataclass

from .errors import AdapterError

MODES = ("embed_text", "embed_image", "caption")
STRATEGIES = ("greedy", "beam")
FORMATS = ("jsonl", "binary")

BEAM_WIDTH = 5
BEAM_RETURN = 10


@dataclass(frozen=True)
class ExportJob:
    """One batch export: what to run, on which inputs, where to write."""

    mode: str
    model: str
    out_path: str
    texts: tuple[str, ...] = ()
    image_dir: str = ""
    strategy: str = "greedy"
    fmt: str = "jsonl"

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise AdapterError(f"unknown mode {self.mode!r}; valid: {', '.join(MODES)}")
        if not self.model:
            raise AdapterError("job needs a model name")
        if not self.out_path:
            raise AdapterError("job needs an output path")
        if self.strategy not in STRATEGIES:
            raise AdapterError(f"unknown strategy {self.strategy!r}; valid: greedy, beam")
        if self.fmt not in FORMATS:
            raise AdapterError(f"unknown output format {self.fmt!r}; valid: jsonl, binary")
        object.__setattr__(self, "texts", tuple(self.texts))
        if self.mode == "embed_text":
            if not self.texts:
                raise AdapterError("embed_text needs at least one input text")
            if self.image_dir:
                raise AdapterError("embed_text takes texts, not an image directory")
        else:
            if not self.image_dir:
                raise AdapterError(f"{self.mode} needs an image directory")
            if self.texts:
                raise AdapterError(f"{self.mode} takes an image directory, not texts")
        if self.mode == "caption" and self.fmt != "jsonl":
            raise AdapterError("caption exports are JSONL only")
