"""Disambiguation as ten-way multiple choice over image captions.

Covers prompt rendering for the nine question styles, a two-stage
reason-then-answer pipeline, in-context example selection, few-shot
assembly, and a total parser from free-text completions to option
letters.
"""

from __future__ import annotations

import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import json

from .captions import CaptionStore, caption_text
from .dataset import Dataset, VwsdInstance
from .embeddings import EmbeddingStore, similarity
from .errors import GatewayError, QaError
from .gateway import LlmGateway, LlmRequest
from .util import normalize_ws

LETTERS = "ABCDEFGHIJ"

QA_TEMPLATES = (
    "think_greedy",
    "think_beam",
    "cot",
    "no_cot_greedy",
    "no_cot_beam",
    "choose_no_cot_greedy",
    "choose_no_cot_beam",
    "choose_cot_greedy",
    "choose_cot_beam",
)

# single-call templates; think_* only make sense inside the cot pipeline
SINGLE_CALL_TEMPLATES = (
    "no_cot_greedy",
    "no_cot_beam",
    "choose_no_cot_greedy",
    "choose_no_cot_beam",
    "choose_cot_greedy",
    "choose_cot_beam",
)

FEW_SHOT_TEMPLATES = (
    "no_cot_greedy",
    "no_cot_beam",
    "choose_no_cot_greedy",
    "choose_no_cot_beam",
)

THINK_SUFFIX = "A: Let’s think step by step. "
COT_ANSWER_CUE = "Therefore, among A through J, the answer is"
COT_RATIONALE_LIMIT = 2048

_CHOOSE_PREAMBLE = "You have ten images, (A) to (J), which are given to you in the form of captions."
_CHOOSE_PREAMBLE_SETS = "You have ten images, (A) to (J), which are given to you in the form of a set of captions."
_CHOOSE_FORMAT_GREEDY = (
    "Use the following format:\n"
    "Question: What image do you choose?\n"
    "Thought: you should always think about what you choose.\n"
    "Result: the result of your thought.\n"
    "Final Answer: the image that you choose."
)
# the beam variant of the format block ends without a period
_CHOOSE_FORMAT_BEAM = _CHOOSE_FORMAT_GREEDY[:-1]
_CHOOSE_EPILOGUE = "Begin!\nQuestion: What image do you choose?"


def strategy_of(template: str) -> str:
    if template == "cot":
        raise QaError("the cot template has no decoding strategy of its own")
    return "beam" if template.endswith("_beam") else "greedy"


@dataclass(frozen=True)
class QaPrompt:
    instance_id: str
    template: str
    rendered: str
    option_order: tuple[str, ...]
    option_texts: tuple[str, ...]


def _option_texts(instance: VwsdInstance, captions: CaptionStore, captioner: str,
                  strategy: str) -> list[str]:
    return [
        caption_text(captions.get(image_id, captioner, strategy))
        for image_id in instance.candidate_ids
    ]


def _question_block(phrase: str, options: Sequence[str], strategy: str) -> str:
    noun = "caption" if strategy == "greedy" else "group of captions"
    listed = " ".join(f"({letter}) {text}" for letter, text in zip(LETTERS, options))
    return f"Q: What is the most appropriate {noun} for the {phrase}? Answer Choices: {listed}"


def _choose_body(phrase: str, options: Sequence[str], template: str) -> str:
    greedy = template.endswith("_greedy")
    preamble = _CHOOSE_PREAMBLE_SETS if template == "choose_cot_beam" else _CHOOSE_PREAMBLE
    lines = [preamble]
    lines.extend(f"({letter}) {text}" for letter, text in zip(LETTERS, options))
    noun = "caption" if greedy else "set of captions"
    lines.append(
        f"You should choose the image, and therefore the {noun} that could better represent the {phrase}."
    )
    body = "\n".join(lines)
    if template in ("choose_no_cot_greedy", "choose_no_cot_beam"):
        return body + "\nWhat image do you choose?"
    fmt = _CHOOSE_FORMAT_GREEDY if template == "choose_cot_greedy" else _CHOOSE_FORMAT_BEAM
    return body + "\n\n" + fmt + "\n\n" + _CHOOSE_EPILOGUE


def render_question(instance: VwsdInstance, captions: CaptionStore, template: str,
                    captioner: str) -> str:
    """The question body alone: everything before any answer cue."""
    if template == "cot":
        raise QaError("cot prompts are assembled from a think prompt and its response")
    if template not in QA_TEMPLATES:
        raise QaError(f"unknown template {template!r}; valid: {', '.join(QA_TEMPLATES)}")
    strategy = strategy_of(template)
    options = _option_texts(instance, captions, captioner, strategy)
    phrase = instance.full_phrase
    if template.startswith(("think_", "no_cot_")):
        return _question_block(phrase, options, strategy)
    return _choose_body(phrase, options, template)


def render_qa_prompt(instance: VwsdInstance, captions: CaptionStore, template: str,
                     captioner: str) -> QaPrompt:
    """Render the complete prompt sent for one instance."""
    question = render_question(instance, captions, template, captioner)
    if template in ("no_cot_greedy", "no_cot_beam"):
        rendered = question + "\nA: "
    elif template in ("think_greedy", "think_beam"):
        rendered = question + "\n" + THINK_SUFFIX
    else:
        rendered = question  # choose family carries its own ending
    strategy = strategy_of(template)
    options = _option_texts(instance, captions, captioner, strategy)
    return QaPrompt(
        instance_id=instance.instance_id,
        template=template,
        rendered=rendered,
        option_order=instance.candidate_ids,
        option_texts=tuple(options),
    )


def render_cot_prompt(think_prompt: str, rationale: str) -> str:
    """Second stage: think prompt, its completion, then the answer cue."""
    return f"{think_prompt} {rationale[:COT_RATIONALE_LIMIT]}\n{COT_ANSWER_CUE}"


# ---------------------------------------------------------------------------
# answer parsing

MATCHERS = ("paren_letter", "answer_is_phrase", "leading_letter", "caption_fuzzy", "none")

FUZZY_THRESHOLD = 0.8

_PAREN_RE = re.compile(r"\(([A-J])\)")
_ANSWER_IS_RE = re.compile(r"[Aa]nswer\s+is\s*:?\s*\(?([A-J])\)?(?![A-Za-z])")
_CHOOSE_RE = re.compile(r"[Cc]hoose\s*:?\s*\(([A-J])\)")
# a bare letter counts only when followed by a hard delimiter, never whitespace,
# so "I pick ..." or "A thing" cannot match
_LEADING_RE = re.compile(r"^([A-J])(?:$|[).:,])")


@dataclass(frozen=True)
class ParsedAnswer:
    raw: str
    letter: str | None
    matched_by: str

    @property
    def outcome(self) -> str:
        return "abstain" if self.letter is None else "option"


def _unique_letter(found: Sequence[str], valid: set[str]) -> str | None:
    distinct = {letter for letter in found if letter in valid}
    if len(distinct) == 1:
        return next(iter(distinct))
    return None


def _levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _lev_ratio(a: str, b: str) -> float:
    if not a and not b:
        return 1.0
    return 1.0 - _levenshtein(a, b) / max(len(a), len(b))


def _fuzzy_option(text: str, option_texts: Sequence[str], valid: set[str]) -> str | None:
    probe = normalize_ws(text).lower()
    if not probe:
        return None
    best_letter: str | None = None
    best = -1.0
    runner_up = -1.0
    for letter, option in zip(LETTERS, option_texts):
        if letter not in valid:
            continue
        target = normalize_ws(option).lower()
        if not target:
            continue
        score = _lev_ratio(probe, target)
        # a quoted caption at the end of a longer sentence should still match
        score = max(score, _lev_ratio(probe[-len(target):], target))
        if score > best:
            best_letter, runner_up, best = letter, best, score
        elif score > runner_up:
            runner_up = score
    if best >= FUZZY_THRESHOLD and best > runner_up:
        return best_letter
    return None


def parse_answer(raw: str, option_texts: Sequence[str]) -> ParsedAnswer:
    """Total parser: matchers in priority order, abstain when all pass.

    A matcher is decisive only when it pins exactly one distinct letter;
    otherwise the next matcher gets its chance.
    """
    valid = set(LETTERS[: len(option_texts)])
    text = raw.strip()
    if text:
        letter = _unique_letter(_PAREN_RE.findall(text), valid)
        if letter is not None:
            return ParsedAnswer(raw, letter, "paren_letter")
        hits = _ANSWER_IS_RE.findall(text) + _CHOOSE_RE.findall(text)
        letter = _unique_letter(hits, valid)
        if letter is not None:
            return ParsedAnswer(raw, letter, "answer_is_phrase")
        m = _LEADING_RE.match(text)
        if m is not None and m.group(1) in valid:
            return ParsedAnswer(raw, m.group(1), "leading_letter")
        letter = _fuzzy_option(text, option_texts, valid)
        if letter is not None:
            return ParsedAnswer(raw, letter, "caption_fuzzy")
    return ParsedAnswer(raw, None, "none")


# ---------------------------------------------------------------------------
# in-context example selection and few-shot assembly

SELECTION_STRATEGIES = ("random", "top", "inverse_top")


@dataclass(frozen=True)
class InContextConfig:
    k: int
    strategy: str = "random"
    seed: int = 0
    embedding_model: str = ""


def gold_letter(instance: VwsdInstance) -> str:
    return LETTERS[instance.gold_position()]


def select_in_context(
    query: VwsdInstance,
    dataset: Dataset,
    phrase_embeddings: EmbeddingStore | None,
    config: InContextConfig,
) -> list[tuple[VwsdInstance, str]]:
    """Pick k solved examples for a query; the query itself is excluded.

    random: seeded sample, kept in dataset order.  top: k nearest phrases
    by cosine, most similar first, ties toward dataset order.
    inverse_top: the top list reversed.
    """
    if config.strategy not in SELECTION_STRATEGIES:
        raise QaError(
            f"unknown selection strategy {config.strategy!r}; valid: {', '.join(SELECTION_STRATEGIES)}"
        )
    if config.k < 1:
        raise QaError(f"need at least one in-context example, got k={config.k}")
    pool = [inst for inst in dataset if inst.instance_id != query.instance_id]
    if config.k >= len(pool):
        raise QaError(f"k={config.k} needs a pool larger than {len(pool)} examples")

    if config.strategy == "random":
        rng = random.Random(config.seed)
        chosen = sorted(rng.sample(range(len(pool)), config.k))
        picked = [pool[i] for i in chosen]
    else:
        if phrase_embeddings is None:
            raise QaError("top/inverse_top selection needs phrase embeddings")
        query_emb = phrase_embeddings.get_text(query.full_phrase, config.embedding_model)
        scored = []
        for pos, inst in enumerate(pool):
            emb = phrase_embeddings.get_text(inst.full_phrase, config.embedding_model)
            scored.append((-similarity(query_emb.vector, emb.vector, "cosine"), pos))
        scored.sort()
        picked = [pool[pos] for _, pos in scored[: config.k]]
        if config.strategy == "inverse_top":
            picked.reverse()
    return [(inst, gold_letter(inst)) for inst in picked]


def build_shots(
    selected: Sequence[tuple[VwsdInstance, str]],
    captions: CaptionStore,
    template: str,
    captioner: str,
) -> list[tuple[str, str, str]]:
    """(question, gold letter, gold caption text) for each chosen example."""
    strategy = strategy_of(template)
    shots = []
    for inst, letter in selected:
        question = render_question(inst, captions, template, captioner)
        gold_caption = caption_text(captions.get(inst.gold_id, captioner, strategy))
        shots.append((question, letter, gold_caption))
    return shots


def render_few_shot_prompt(shots: Sequence[tuple[str, str, str]], query_prompt: QaPrompt) -> str:
    """Solved QA blocks, then the query with its zero-shot ending intact.

    With no shots this is exactly the zero-shot prompt.
    """
    if query_prompt.template not in FEW_SHOT_TEMPLATES:
        raise QaError(f"template {query_prompt.template!r} cannot be used few-shot")
    blocks = [f"{question}\nA: ({letter}) {caption}\n\n" for question, letter, caption in shots]
    return "".join(blocks) + query_prompt.rendered


# ---------------------------------------------------------------------------
# prompting pipelines

@dataclass(frozen=True)
class QaOutcome:
    instance_id: str
    template: str
    prompt: str
    responses: tuple[str, ...]
    gold_letter: str
    answer: ParsedAnswer | None
    rationale: str | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def run_zero_shot(
    instance: VwsdInstance,
    captions: CaptionStore,
    template: str,
    captioner: str,
    gateway: LlmGateway,
    model: str,
    temperature: float = 0.0,
    max_tokens: int = 150,
) -> QaOutcome:
    """One prompt, one completion, one parsed letter."""
    if template not in SINGLE_CALL_TEMPLATES:
        raise QaError(f"template {template!r} is not a single-call template")
    prompt = render_qa_prompt(instance, captions, template, captioner)
    gold = gold_letter(instance)
    request = LlmRequest(model=model, messages=(("user", prompt.rendered),),
                         temperature=temperature, max_tokens=max_tokens)
    try:
        response = gateway.complete(request)
    except GatewayError as exc:
        return QaOutcome(instance.instance_id, template, prompt.rendered, (),
                         gold, None, error=str(exc))
    answer = parse_answer(response.text, prompt.option_texts)
    return QaOutcome(instance.instance_id, template, prompt.rendered,
                     (response.text,), gold, answer)


def run_cot(
    instance: VwsdInstance,
    captions: CaptionStore,
    think_template: str,
    captioner: str,
    gateway: LlmGateway,
    model: str,
    temperature: float = 0.0,
    max_tokens: int = 150,
) -> QaOutcome:
    """Two sequential calls: elicit a rationale, then ask for the letter."""
    if think_template not in ("think_greedy", "think_beam"):
        raise QaError(f"cot runs start from a think template, not {think_template!r}")
    prompt = render_qa_prompt(instance, captions, think_template, captioner)
    gold = gold_letter(instance)
    think_request = LlmRequest(model=model, messages=(("user", prompt.rendered),),
                               temperature=temperature, max_tokens=max_tokens)
    try:
        think_response = gateway.complete(think_request)
    except GatewayError as exc:
        return QaOutcome(instance.instance_id, "cot", prompt.rendered, (),
                         gold, None, error=str(exc))
    rationale = think_response.text
    final_prompt = render_cot_prompt(prompt.rendered, rationale)
    final_request = LlmRequest(model=model, messages=(("user", final_prompt),),
                               temperature=temperature, max_tokens=max_tokens)
    try:
        final_response = gateway.complete(final_request)
    except GatewayError as exc:
        # keep the partial rationale for the transcript
        return QaOutcome(instance.instance_id, "cot", prompt.rendered,
                         (rationale,), gold, None, rationale=rationale, error=str(exc))
    answer = parse_answer(final_response.text, prompt.option_texts)
    return QaOutcome(instance.instance_id, "cot", prompt.rendered,
                     (rationale, final_response.text), gold, answer, rationale=rationale)


def run_few_shot(
    query: VwsdInstance,
    dataset: Dataset,
    captions: CaptionStore,
    phrase_embeddings: EmbeddingStore | None,
    template: str,
    captioner: str,
    in_context: InContextConfig,
    gateway: LlmGateway,
    model: str,
    temperature: float = 0.0,
    max_tokens: int = 150,
) -> QaOutcome:
    selected = select_in_context(query, dataset, phrase_embeddings, in_context)
    shots = build_shots(selected, captions, template, captioner)
    query_prompt = render_qa_prompt(query, captions, template, captioner)
    prompt = render_few_shot_prompt(shots, query_prompt)
    gold = gold_letter(query)
    request = LlmRequest(model=model, messages=(("user", prompt),),
                         temperature=temperature, max_tokens=max_tokens)
    try:
        response = gateway.complete(request)
    except GatewayError as exc:
        return QaOutcome(query.instance_id, template, prompt, (), gold, None, error=str(exc))
    answer = parse_answer(response.text, query_prompt.option_texts)
    return QaOutcome(query.instance_id, template, prompt, (response.text,), gold, answer)


def run_batch(
    instances: Sequence[VwsdInstance],
    fn: Callable[[VwsdInstance], QaOutcome],
    jobs: int = 1,
) -> list[QaOutcome]:
    """Apply a per-instance pipeline, preserving dataset order."""
    if jobs > 1 and len(instances) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, instances))
    return [fn(inst) for inst in instances]


def write_transcripts_jsonl(outcomes: Sequence[QaOutcome], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for o in outcomes:
            if o.failed:
                outcome_kind, letter, matched_by = "failed", None, None
            else:
                outcome_kind = o.answer.outcome
                letter = o.answer.letter
                matched_by = o.answer.matched_by
            obj = {
                "instance_id": o.instance_id,
                "template": o.template,
                "prompt": o.prompt,
                "responses": list(o.responses),
                "rationale": o.rationale,
                "outcome": outcome_kind,
                "letter": letter,
                "matched_by": matched_by,
                "gold_letter": o.gold_letter,
                "error": o.error,
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_transcripts_jsonl(path: str | Path) -> list[QaOutcome]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise QaError(f"no such file: {path}") from None
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if obj["outcome"] == "failed":
                answer = None
            else:
                answer = ParsedAnswer(
                    raw=obj["responses"][-1] if obj["responses"] else "",
                    letter=obj["letter"],
                    matched_by=obj["matched_by"],
                )
            out.append(
                QaOutcome(
                    instance_id=obj["instance_id"],
                    template=obj["template"],
                    prompt=obj["prompt"],
                    responses=tuple(obj["responses"]),
                    gold_letter=obj["gold_letter"],
                    answer=answer,
                    rationale=obj.get("rationale"),
                    error=obj.get("error"),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, IndexError) as exc:
            raise QaError(f"{path}:{lineno}: malformed transcript record ({exc})") from None
    return out
