"""Command line entry: export-embeddings and export-captions."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import AdapterError
from .export import export_captions, export_embeddings
from .jobs import ExportJob
from .registry import MODELS


def _read_text_lines(path: str) -> tuple[str, ...]:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise AdapterError(f"cannot read texts file: {exc}") from None
    lines = tuple(line for line in raw.splitlines() if line.strip())
    if not lines:
        raise AdapterError(f"no texts in {path}")
    return lines


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="model-adapter",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-embeddings", help="embed texts or images to a vector file")
    p.add_argument("--model", required=True, choices=sorted(MODELS),
                   help="encoder to run")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--texts", help="file with one text per line")
    group.add_argument("--images", help="directory of images")
    p.add_argument("--out", required=True, help="output embeddings file")
    p.add_argument("--format", choices=("jsonl", "binary"), default="jsonl",
                   help="output encoding (default jsonl)")

    p = sub.add_parser("export-captions", help="caption a directory of images")
    p.add_argument("--model", required=True, choices=sorted(MODELS),
                   help="captioner to run")
    p.add_argument("--images", required=True, help="directory of images")
    p.add_argument("--strategy", choices=("greedy", "beam"), default="greedy",
                   help="decoding strategy (beam: width 5, 10 captions)")
    p.add_argument("--out", required=True, help="output captions JSONL")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export-embeddings":
            if args.texts:
                job = ExportJob(mode="embed_text", model=args.model, out_path=args.out,
                                texts=_read_text_lines(args.texts), fmt=args.format)
            else:
                job = ExportJob(mode="embed_image", model=args.model, out_path=args.out,
                                image_dir=args.images, fmt=args.format)
            n = export_embeddings(job)
            print(f"{args.out}: {n} embedding records")
        else:
            job = ExportJob(mode="caption", model=args.model, out_path=args.out,
                            image_dir=args.images, strategy=args.strategy)
            n = export_captions(job)
            print(f"{args.out}: {n} caption sets")
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
