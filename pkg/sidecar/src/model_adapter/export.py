from __future__ import annotations

from pathlib import Path

from .errors import AdapterError
from .formats import (
    ExportedCaptions,
    ExportedVector,
    text_key,
    write_captions_jsonl,
    write_embeddings_binary,
    write_embeddings_jsonl,
)
from .jobs import BEAM_RETURN, ExportJob
from .registry import get_model, load_backend, model_string

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".webp", ".gif"}


def discover_images(image_dir: str | Path) -> list[tuple[str, Path]]:
    """(image id, path) pairs in filename order; the id is the file stem."""
    root = Path(image_dir)
    if not root.is_dir():
        raise AdapterError(f"no such image directory: {root}")
    found = sorted(p for p in root.iterdir()
                   if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not found:
        raise AdapterError(f"no images under {root}")
    pairs = [(p.stem, p) for p in found]
    seen: dict[str, Path] = {}
    for image_id, path in pairs:
        if image_id in seen:
            raise AdapterError(
                f"ambiguous image id {image_id!r}: {seen[image_id].name} vs {path.name}")
        seen[image_id] = path
    return pairs


def _read_blobs(pairs: list[tuple[str, Path]]) -> list[bytes]:
    blobs = []
    for image_id, path in pairs:
        try:
            blobs.append(path.read_bytes())
        except OSError as exc:
            raise AdapterError(f"cannot read image {image_id!r}: {exc}") from None
    return blobs


def _truncate(text: str, limit: int) -> str:
    # token limits are encoder properties; the consumer never sees this
    if limit <= 0:
        return text
    return " ".join(text.split()[:limit])


def export_embeddings(job: ExportJob) -> int:
    """Embed the job's inputs and write one record per distinct key."""
    if job.mode not in ("embed_text", "embed_image"):
        raise AdapterError(f"export_embeddings cannot run a {job.mode!r} job")
    spec = get_model(job.model)
    if not spec.embeds:
        raise AdapterError(f"model {spec.name!r} is a captioner, it cannot embed")
    backend = load_backend(spec)
    model = model_string(spec)

    records: list[ExportedVector] = []
    seen: set[str] = set()
    if job.mode == "embed_text":
        keyed = [(text_key(t, model), t) for t in job.texts]
        fresh = [(k, t) for k, t in keyed if not (k in seen or seen.add(k))]
        vectors = backend.embed_texts([_truncate(t, spec.max_text_tokens)
                                       for _, t in fresh])
        for (key, _), vec in zip(fresh, vectors):
            records.append(ExportedVector(key=key, kind="text", model=model, vector=vec))
    else:
        pairs = discover_images(job.image_dir)
        vectors = backend.embed_images(_read_blobs(pairs))
        for (image_id, _), vec in zip(pairs, vectors):
            records.append(ExportedVector(key=image_id, kind="image", model=model,
                                          vector=vec))

    if job.fmt == "binary":
        write_embeddings_binary(records, job.out_path)
    else:
        write_embeddings_jsonl(records, job.out_path)
    return len(records)


def export_captions(job: ExportJob) -> int:
    """Caption every image in the job's directory, one set per image."""
    if job.mode != "caption":
        raise AdapterError(f"export_captions cannot run a {job.mode!r} job")
    spec = get_model(job.model)
    if not spec.captions:
        raise AdapterError(f"model {spec.name!r} is an encoder, it cannot caption")
    backend = load_backend(spec)
    model = model_string(spec)

    pairs = discover_images(job.image_dir)
    per_image = backend.caption_images(_read_blobs(pairs), job.strategy)
    want = 1 if job.strategy == "greedy" else BEAM_RETURN
    sets = []
    for (image_id, _), captions in zip(pairs, per_image):
        if len(captions) != want:
            raise AdapterError(
                f"image {image_id!r}: backend returned {len(captions)} captions, "
                f"{job.strategy} needs {want}")
        sets.append(ExportedCaptions(image_id=image_id, captioner=model,
                                     strategy=job.strategy, captions=tuple(captions)))
    write_captions_jsonl(sets, job.out_path)
    return len(sets)
