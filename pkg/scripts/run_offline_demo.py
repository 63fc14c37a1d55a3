#!/usr/bin/env python3
"""Drive the whole pipeline offline against the committed fixture.

Every LLM completion is replayed from the fixture cache, so this runs
without network access or API keys.  Outputs land under --out (default
./out), one subdirectory per stage.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from vwsd.cli import main as vwsd

ROOT = Path(__file__).resolve().parent.parent
E2E = ROOT / "tests" / "fixtures" / "e2e"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="out", help="output root (default ./out)")
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cfg = out / "run.ini"
    cfg.write_text(f"""[dataset]
data = {E2E}/data.tsv
gold = {E2E}/gold.txt

[embeddings]
path = {E2E}/embeddings.jsonl
model = toy-clip

[captions]
path = {E2E}/captions.jsonl
captioner = toy-cap

[gateway]
model = fixture-llm
cache_dir = {E2E}/cache
""", encoding="utf-8")

    steps = [
        ("retrieve", "--out-dir", str(out / "retrieve_plain")),
        ("retrieve", "--penalty", "--lambda", "1.0", "--out-dir", str(out / "retrieve_penalty")),
        ("enhance", "--offline", "--out-dir", str(out / "enhance")),
        ("retrieve", "--enhanced", str(out / "enhance" / "enhanced.jsonl"),
         "--out-dir", str(out / "retrieve_enhanced")),
        ("qa", "--qa-template", "no_cot", "--strategy", "greedy", "--offline",
         "--out-dir", str(out / "qa_zero_shot")),
        ("qa", "--qa-template", "cot", "--strategy", "greedy", "--offline",
         "--out-dir", str(out / "qa_cot")),
    ]
    for step in steps:
        code = vwsd([step[0], "--config", str(cfg), *step[1:]])
        if code != 0:
            print(f"step {step[0]} failed with exit code {code}", file=sys.stderr)
            return code

    return vwsd(["report",
                 str(out / "retrieve_plain" / "report.json"),
                 str(out / "retrieve_penalty" / "report.json"),
                 str(out / "retrieve_enhanced" / "report.json"),
                 str(out / "qa_zero_shot" / "report.json"),
                 str(out / "qa_cot" / "report.json"),
                 "--config", str(cfg), "--out-dir", str(out)])


if __name__ == "__main__":
    sys.exit(main())
