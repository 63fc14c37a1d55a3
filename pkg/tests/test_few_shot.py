from pathlib import Path

import pytest

from vwsd.captions import load_captions
from vwsd.dataset import load_dataset
from vwsd.errors import QaError
from vwsd.qa import (
    InContextConfig,
    build_shots,
    gold_letter,
    render_few_shot_prompt,
    render_qa_prompt,
    run_few_shot,
    select_in_context,
)

from conftest import make_dataset, make_instance, scripted_gateway, store_for

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def fewshot():
    ds = load_dataset(FIXTURES / "fewshot" / "data.tsv",
                      FIXTURES / "fewshot" / "gold.txt")
    caps = load_captions(FIXTURES / "fewshot" / "captions.jsonl")
    return ds, caps


def test_five_shot_prompt_matches_golden(fewshot):
    ds, caps = fewshot
    query = ds.instances[-1]  # the sixth phrase is the unsolved one
    selected = [(inst, gold_letter(inst)) for inst in ds.instances[:-1]]
    shots = build_shots(selected, caps, "no_cot_greedy", "git-l")
    prompt = render_qa_prompt(query, caps, "no_cot_greedy", "git-l")
    rendered = render_few_shot_prompt(shots, prompt)
    golden = (FIXTURES / "golden" / "few_shot_5shot.txt").read_text(encoding="utf-8")
    assert rendered == golden


def test_zero_shots_degenerates_to_plain_prompt(fewshot):
    ds, caps = fewshot
    prompt = render_qa_prompt(ds.instances[0], caps, "no_cot_greedy", "git-l")
    assert render_few_shot_prompt([], prompt) == prompt.rendered


def test_shot_block_shape(fewshot):
    ds, caps = fewshot
    inst = ds.instances[0]
    shots = build_shots([(inst, gold_letter(inst))], caps, "no_cot_greedy", "git-l")
    question, letter, caption = shots[0]
    assert letter == "D"
    assert caption == "a spoon full of sugar on a table."
    prompt = render_qa_prompt(ds.instances[1], caps, "no_cot_greedy", "git-l")
    rendered = render_few_shot_prompt(shots, prompt)
    assert rendered.startswith(question + "\nA: (D) a spoon full of sugar on a table.\n\n")
    assert rendered.endswith(prompt.rendered)


def test_few_shot_rejects_cot_templates(fewshot):
    ds, caps = fewshot
    prompt = render_qa_prompt(ds.instances[0], caps, "think_greedy", "git-l")
    with pytest.raises(QaError):
        render_few_shot_prompt([], prompt)


# --- selection ------------------------------------------------------------

def bigger_dataset(n=12):
    return make_dataset([make_instance(i, target=f"word{i}", context=f"ctx{i}")
                         for i in range(n)])


def test_random_selection_reproducible_and_ordered():
    ds = bigger_dataset()
    query = ds.instances[3]
    cfg = InContextConfig(k=4, strategy="random", seed=11)
    first = select_in_context(query, ds, None, cfg)
    second = select_in_context(query, ds, None, cfg)
    assert first == second
    ids = [inst.instance_id for inst, _ in first]
    assert ids == sorted(ids)  # picks keep dataset order
    assert query.instance_id not in ids
    other = select_in_context(query, ds, None,
                              InContextConfig(k=4, strategy="random", seed=12))
    assert [i.instance_id for i, _ in other] != ids


def test_top_and_inverse_top_are_reversals():
    ds = bigger_dataset()
    store = store_for(ds)
    query = ds.instances[0]
    top = select_in_context(query, ds, store,
                            InContextConfig(k=5, strategy="top",
                                            embedding_model="toy-clip"))
    inv = select_in_context(query, ds, store,
                            InContextConfig(k=5, strategy="inverse_top",
                                            embedding_model="toy-clip"))
    assert top == list(reversed(inv))
    assert len({inst.instance_id for inst, _ in top}) == 5


def test_selection_pairs_carry_gold_letters():
    ds = bigger_dataset()
    for inst, letter in select_in_context(ds.instances[0], ds, None,
                                          InContextConfig(k=3, seed=0)):
        assert letter == gold_letter(inst)


def test_selection_validation():
    ds = bigger_dataset(4)
    query = ds.instances[0]
    with pytest.raises(QaError):
        select_in_context(query, ds, None, InContextConfig(k=0))
    with pytest.raises(QaError) as err:
        select_in_context(query, ds, None, InContextConfig(k=3))
    assert "pool" in str(err.value)
    with pytest.raises(QaError):
        select_in_context(query, ds, None, InContextConfig(k=2, strategy="nearest"))
    with pytest.raises(QaError):
        select_in_context(query, ds, None, InContextConfig(k=2, strategy="top"))


# --- end-to-end few-shot run ----------------------------------------------

def test_run_few_shot_parses_reply(fewshot, tmp_path):
    ds, caps = fewshot
    query = ds.instances[-1]
    gw, transport = scripted_gateway(
        tmp_path, default="(I) a soccer field with a goal post in the middle")
    out = run_few_shot(query, ds, caps, None, "no_cot_greedy", "git-l",
                       InContextConfig(k=4, strategy="random", seed=3),
                       gw, model="test-llm")
    assert out.answer.letter == "I"
    assert out.gold_letter == "I"
    assert not out.failed
    # the prompt sent upstream contains four solved blocks
    sent = transport.calls[0].messages[0][1]
    assert sent.count("\nA: (") == 4
    assert sent.endswith("\nA: ")
