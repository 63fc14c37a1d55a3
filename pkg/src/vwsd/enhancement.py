"""Phrase enrichment: ask an LLM what a phrase means, append the answer.

The enriched phrase is the original followed by a single space and the
whitespace-normalized LLM output; an empty answer leaves the phrase
untouched.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .dataset import Dataset, VwsdInstance
from .errors import ConfigError, GatewayError, VwsdError
from .gateway import LlmGateway, LlmRequest
from .util import normalize_ws

# prompt patterns; "exact" deliberately ends with a trailing space
TEMPLATES = {
    "exact": "<phrase> ",
    "what_is": "What is <phrase>?",
    "describe": "Describe <phrase>.",
    "meaning_of": "What is the meaning of <phrase>?",
}

PLACEHOLDER = "<phrase>"

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 150


def build_enhancement_prompt(phrase: str, template: str) -> str:
    """Substitute the phrase into a named template, byte for byte."""
    try:
        pattern = TEMPLATES[template]
    except KeyError:
        raise ConfigError(
            f"unknown enhancement template {template!r}; valid: {', '.join(TEMPLATES)}"
        ) from None
    return pattern.replace(PLACEHOLDER, phrase)


@dataclass(frozen=True)
class EnhancedPhrase:
    instance_id: str
    template: str
    model: str
    original: str
    knowledge: str  # raw LLM output, kept verbatim
    enhanced: str


def combine(original: str, knowledge: str) -> str:
    cleaned = normalize_ws(knowledge)
    return f"{original} {cleaned}" if cleaned else original


def enhance_phrase(
    instance: VwsdInstance,
    template: str,
    gateway: LlmGateway,
    model: str,
    temperature: float = DEFAULT_TEMPERATURE,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> EnhancedPhrase:
    prompt = build_enhancement_prompt(instance.full_phrase, template)
    request = LlmRequest(
        model=model,
        messages=(("user", prompt),),
        temperature=temperature,
        max_tokens=max_tokens,
    )
    response = gateway.complete(request)
    return EnhancedPhrase(
        instance_id=instance.instance_id,
        template=template,
        model=model,
        original=instance.full_phrase,
        knowledge=response.text,
        enhanced=combine(instance.full_phrase, response.text),
    )


def enhance_batch(
    dataset: Dataset,
    template: str,
    gateway: LlmGateway,
    model: str,
    temperature: float = DEFAULT_TEMPERATURE,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    jobs: int = 1,
) -> tuple[list[EnhancedPhrase], list[str]]:
    """Enrich every instance; gateway failures are collected, not fatal.

    Returns (enriched phrases in dataset order, ids of failed instances).
    """
    build_enhancement_prompt("probe", template)  # validate the name up front

    def one(inst: VwsdInstance) -> EnhancedPhrase | str:
        try:
            return enhance_phrase(inst, template, gateway, model, temperature, max_tokens)
        except GatewayError:
            return inst.instance_id

    if jobs > 1 and len(dataset) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, dataset.instances))
    else:
        results = [one(inst) for inst in dataset.instances]

    enhanced = [r for r in results if isinstance(r, EnhancedPhrase)]
    failed = [r for r in results if isinstance(r, str)]
    return enhanced, failed


def write_enhanced_jsonl(items: Sequence[EnhancedPhrase], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for e in items:
            obj = {
                "instance_id": e.instance_id,
                "template": e.template,
                "model": e.model,
                "original": e.original,
                "knowledge": e.knowledge,
                "enhanced": e.enhanced,
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_enhanced_jsonl(path: str | Path) -> list[EnhancedPhrase]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise VwsdError(f"no such file: {path}") from None
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            out.append(
                EnhancedPhrase(
                    instance_id=obj["instance_id"],
                    template=obj["template"],
                    model=obj["model"],
                    original=obj["original"],
                    knowledge=obj["knowledge"],
                    enhanced=obj["enhanced"],
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise VwsdError(f"{path}:{lineno}: malformed enhanced-phrase record ({exc})") from None
    return out
