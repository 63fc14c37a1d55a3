"""Byte-for-byte prompt rendering against the golden files.

The goldens use sentinel strings: <P> for the phrase, <Ck> for the k-th
greedy caption, <Ck.j> for beam caption j of candidate k.  Feeding those
sentinels through the renderer must reproduce each file exactly.
"""

from pathlib import Path

import pytest

from vwsd.captions import CaptionSet, CaptionStore
from vwsd.dataset import VwsdInstance
from vwsd.enhancement import TEMPLATES, build_enhancement_prompt
from vwsd.errors import QaError
from vwsd.qa import (
    COT_RATIONALE_LIMIT,
    QA_TEMPLATES,
    render_cot_prompt,
    render_qa_prompt,
    render_question,
    strategy_of,
)

GOLDEN_DIR = Path(__file__).parent / "fixtures" / "golden" / "templates"


def golden(name):
    return (GOLDEN_DIR / f"{name}.txt").read_text(encoding="utf-8")


def sentinel_instance():
    cands = tuple(f"c{k}" for k in range(1, 11))
    return VwsdInstance(instance_id="0000", target_word="<P>", context_word="",
                        full_phrase="<P>", candidate_ids=cands, gold_id=cands[0])


def sentinel_captions():
    store = CaptionStore()
    for k in range(1, 11):
        store.add(CaptionSet(image_id=f"c{k}", captioner="cap", strategy="greedy",
                             captions=(f"<C{k}>",)))
        store.add(CaptionSet(image_id=f"c{k}", captioner="cap", strategy="beam",
                             captions=tuple(f"<C{k}.{j}>" for j in range(1, 11))))
    return store


@pytest.mark.parametrize("template", QA_TEMPLATES)
def test_qa_template_matches_golden(template):
    if template == "cot":
        return  # assembled two-stage, checked below
    prompt = render_qa_prompt(sentinel_instance(), sentinel_captions(), template, "cap")
    assert prompt.rendered == golden(template)


def test_cot_assembly_matches_golden():
    assert render_cot_prompt("<THINK PROMPT>", "<THINK RESPONSE>") == golden("cot")


def test_cot_rationale_truncated():
    long = "x" * (COT_RATIONALE_LIMIT + 500)
    out = render_cot_prompt("Q", long)
    assert "x" * COT_RATIONALE_LIMIT in out
    assert "x" * (COT_RATIONALE_LIMIT + 1) not in out


@pytest.mark.parametrize("name", sorted(TEMPLATES))
def test_enhancement_template_matches_golden(name):
    assert build_enhancement_prompt("<P>", name) == golden(name)


def test_strategy_of():
    assert strategy_of("no_cot_greedy") == "greedy"
    assert strategy_of("choose_cot_beam") == "beam"
    with pytest.raises(QaError):
        strategy_of("cot")


def test_render_question_rejects_bad_names():
    inst, caps = sentinel_instance(), sentinel_captions()
    with pytest.raises(QaError):
        render_question(inst, caps, "cot", "cap")
    with pytest.raises(QaError) as err:
        render_question(inst, caps, "socratic", "cap")
    assert "no_cot_greedy" in str(err.value)


def test_inline_vs_per_line_option_layout():
    inst, caps = sentinel_instance(), sentinel_captions()
    flat = render_qa_prompt(inst, caps, "no_cot_greedy", "cap").rendered
    # inline family: the whole question is one line before the answer cue
    assert flat.count("\n") == 1
    tall = render_qa_prompt(inst, caps, "choose_no_cot_greedy", "cap").rendered
    assert tall.count("\n") == 12  # preamble + 10 options + instruction + cue


def test_prompt_records_option_order():
    inst, caps = sentinel_instance(), sentinel_captions()
    prompt = render_qa_prompt(inst, caps, "no_cot_beam", "cap")
    assert prompt.option_order == inst.candidate_ids
    assert prompt.option_texts[0] == ", ".join(f"<C1.{j}>" for j in range(1, 11))
    assert len(prompt.option_texts) == 10


def test_question_content_for_pinned_example():
    # one fully spelled out greedy question, captions pinned as fixture data
    texts = ["a small boat sitting on top of a dock.",
             "a group of people walking on a green hill.",
             "a student gets a hug from a student."]
    store = CaptionStore()
    cands = []
    for i, text in enumerate(texts * 4):
        if len(cands) == 10:
            break
        image_id = f"img{i}"
        cands.append(image_id)
        store.add(CaptionSet(image_id=image_id, captioner="git-l",
                             strategy="greedy", captions=(text,)))
    inst = VwsdInstance(instance_id="0001", target_word="embrace",
                        context_word="tender", full_phrase="tender embrace",
                        candidate_ids=tuple(cands), gold_id=cands[2])
    prompt = render_qa_prompt(inst, store, "no_cot_greedy", "git-l")
    assert prompt.rendered.startswith(
        "Q: What is the most appropriate caption for the tender embrace? "
        "Answer Choices: (A) a small boat sitting on top of a dock. "
        "(B) a group of people walking on a green hill. "
        "(C) a student gets a hug from a student.")
    assert prompt.rendered.endswith("\nA: ")
