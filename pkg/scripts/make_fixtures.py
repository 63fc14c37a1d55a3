#!/usr/bin/env python3
"""Regenerate the committed end-to-end fixture under tests/fixtures/e2e/.

The fixture is a 12-instance retrieval + QA workload with precomputed
embeddings, a caption manifest, and a fully primed LLM cache, so every
pipeline command can replay offline.  All randomness is seeded; rerunning
this script must reproduce the committed bytes exactly.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

from vwsd.captions import CaptionSet, CaptionStore, write_captions
from vwsd.dataset import Dataset, VwsdInstance, load_dataset, write_dataset
from vwsd.embeddings import (
    EmbeddingRecord,
    EmbeddingStore,
    text_key,
    write_embeddings_jsonl,
)
from vwsd.enhancement import build_enhancement_prompt, combine
from vwsd.gateway import LlmRequest, write_cache_entry
from vwsd.qa import (
    COT_ANSWER_CUE,
    LETTERS,
    gold_letter,
    parse_answer,
    render_qa_prompt,
)
from vwsd.ranking import rank_batch

EMBED_MODEL = "toy-clip"
CAPTIONER = "toy-cap"
LLM_MODEL = "fixture-llm"
DIM = 8

# (target word, full phrase, gold position) for the synthetic instances
PHRASES = [
    ("bank", "river bank", 2),
    ("bank", "bank vault", 5),
    ("crane", "crane bird", 0),
    ("crane", "construction crane", 7),
    ("bass", "bass guitar", 3),
    ("bass", "bass fish", 9),
    ("spring", "spring coil", 1),
    ("spring", "spring season", 4),
    ("mole", "garden mole", 6),
    ("mole", "mole sauce", 8),
    ("seal", "harbor seal", 0),
]

# the twelfth instance replays a real CoT exchange end to end
STEEL_PHRASE = ("steel", "metal steel", 7)
STEEL_CAPTIONS = [
    "a chocolate bar with three sides",
    "[unused0] and [unused0] at the concert in 2007",
    "a guitar and a guitar are displayed in front of a speaker.",
    "frosty patterns on a window",
    "gold in the rocks - -",
    "a black piece of metal with a large black square in the middle.",
    "a jar of honey on a wooden table.",
    "a close up of a metal plate with a pattern of lines.",
    "a large white quartz rock with a clear base.",
    "gold jewelry from the late 19th century.",
]
STEEL_RATIONALE = (
    "First, we need to understand what metal steel is and what its characteristics are. "
    "Steel is a hard and strong metal alloy made mainly of iron and carbon. It is often "
    "used in construction, machinery, and transportation. Based on this information, the "
    "most appropriate caption for metal steel would be (H) a close up of a metal plate "
    "with a pattern of lines. This caption describes the texture and appearance of steel, "
    "which is often characterized by its distinctive pattern of lines. The other options "
    "do not accurately describe steel or its unique qualities."
)
STEEL_FINAL = "(H) a close up of a metal plate with a pattern of lines."
STEEL_ZERO_SHOT = (
    "The most appropriate caption for the metal steel would be "
    "(F) a black piece of metal with a large black square in the middle."
)

SUBJECTS = ["a rusty bicycle", "two fishing boats", "a brick lighthouse",
            "a snowy mountain pass", "an open market stall", "a row of mailboxes",
            "a tiled courtyard", "a cargo train", "a weathered barn",
            "a stone footpath"]
SETTINGS = ["at dusk", "under heavy clouds", "beside the harbor",
            "in morning fog", "after the rain", "near the old mill",
            "along the canal", "on a quiet street", "behind the station",
            "at the edge of town"]

KNOWLEDGE = [
    "The sloping ground along the edge of a river.",
    "A reinforced room where a bank stores money and valuables.",
    "A tall wading bird with long legs and a long neck.",
    "A machine with a long arm used to lift heavy loads on building sites.",
    "An electric instrument with four thick strings played in rhythm sections.",
    "",  # an empty answer leaves the phrase untouched
    "A spiral of metal that stores energy when compressed.",
    "The season between winter and summer when plants begin to grow.",
    "A small burrowing animal with velvety fur that digs tunnels in lawns.",
    "A thick Mexican sauce made with chiles and chocolate.",
    "A marine mammal with flippers that rests on rocky shores.",
    "A strong alloy of iron and carbon used in construction.",
]


def unit_vector(token: str) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(token.encode()).digest()[:4], "big")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(DIM)
    return (v / np.linalg.norm(v)).astype(np.float32)


def blend(base: np.ndarray, other: np.ndarray, weight: float) -> np.ndarray:
    v = base.astype(np.float64) + weight * other.astype(np.float64)
    return (v / np.linalg.norm(v)).astype(np.float32)


def build_dataset() -> Dataset:
    rng = np.random.default_rng(20240817)
    pool = [f"pool{i:02d}" for i in range(30)]
    instances = []
    for idx, (target, phrase, gold_pos) in enumerate(PHRASES):
        # the first five instances share pool00 so the batch penalty bites
        if idx < 5:
            rest = [str(x) for x in rng.choice(pool[1:], size=9, replace=False)]
            cands = rest[:gold_pos] + ["pool00"] + rest[gold_pos:]
            # keep the magnet off the gold slot: gold should be a plain image
            cands[gold_pos], cands[(gold_pos + 3) % 10] = (
                cands[(gold_pos + 3) % 10], cands[gold_pos])
        else:
            cands = [str(x) for x in rng.choice(pool[1:], size=10, replace=False)]
        instances.append(VwsdInstance(
            instance_id=f"{idx:04d}", target_word=target,
            context_word=phrase.replace(target, "").strip() or phrase,
            full_phrase=phrase, candidate_ids=tuple(cands),
            gold_id=cands[gold_pos]))
    target, phrase, gold_pos = STEEL_PHRASE
    cands = tuple(f"ms.{letter.lower()}" for letter in LETTERS)
    instances.append(VwsdInstance(
        instance_id="0011", target_word=target, context_word="metal",
        full_phrase=phrase, candidate_ids=cands, gold_id=cands[gold_pos]))
    image_ids = frozenset(i for inst in instances for i in inst.candidate_ids)
    return Dataset(instances=tuple(instances), image_ids=image_ids)


def greedy_caption(image_id: str) -> str:
    if image_id.startswith("ms."):
        return STEEL_CAPTIONS[LETTERS.index(image_id[-1].upper())]
    i = int(image_id[4:])
    return f"{SUBJECTS[i % 10]} {SETTINGS[(i + i // 10 * 3) % 10]}"


def build_captions(dataset: Dataset) -> list[CaptionSet]:
    sets = []
    for image_id in sorted(dataset.image_ids):
        text = greedy_caption(image_id)
        sets.append(CaptionSet(image_id=image_id, captioner=CAPTIONER,
                               strategy="greedy", captions=(text,)))
        sets.append(CaptionSet(image_id=image_id, captioner=CAPTIONER,
                               strategy="beam",
                               captions=tuple(f"{text} (angle {j})"
                                              for j in range(1, 11))))
    return sets


def build_embeddings(dataset: Dataset) -> list[EmbeddingRecord]:
    magnet = unit_vector("img:pool00")
    vectors: dict[str, np.ndarray] = {}
    for image_id in sorted(dataset.image_ids):
        vectors[image_id] = unit_vector(f"img:{image_id}")

    records = [EmbeddingRecord(key=image_id, kind="image", model=EMBED_MODEL,
                               dim=DIM, vector=vec)
               for image_id, vec in vectors.items()]

    text_vecs: dict[str, np.ndarray] = {}
    for idx, inst in enumerate(dataset.instances):
        if idx < 5:
            vec = blend(magnet * 0.9, unit_vector(f"phrase:{inst.full_phrase}"), 0.45)
        else:
            vec = blend(vectors[inst.gold_id] * 0.8,
                        unit_vector(f"phrase:{inst.full_phrase}"), 0.7)
        text_vecs[inst.full_phrase] = vec
        enhanced = combine(inst.full_phrase, KNOWLEDGE[idx])
        if enhanced not in text_vecs:
            text_vecs[enhanced] = blend(vec, unit_vector(f"enh:{enhanced}"), 0.3)
    for text, vec in text_vecs.items():
        records.append(EmbeddingRecord(key=text_key(text, EMBED_MODEL), kind="text",
                                       model=EMBED_MODEL, dim=DIM, vector=vec))
    return records


def zero_shot_reply(idx: int, inst: VwsdInstance) -> str:
    g = gold_letter(inst)
    caption = greedy_caption(inst.gold_id)
    if idx == 1:
        return (f"The most appropriate caption for the {inst.full_phrase} "
                f"would be: ({g}) {caption}")
    if idx == 2:
        return f"({LETTERS[(inst.gold_position() + 1) % 10]})"
    if idx == 3:
        return f"{g}."
    if idx == 4:
        return f"The answer is {g}"
    if idx == 6:
        return caption  # letterless reply, resolved by caption matching
    if idx == 7:
        return f"I would choose ({g}) here."
    if idx == 9:
        return "I cannot determine the answer."
    if idx == 11:
        return STEEL_ZERO_SHOT
    return f"({g})"


def cot_exchange(idx: int, inst: VwsdInstance) -> tuple[str, str]:
    g = gold_letter(inst)
    caption = greedy_caption(inst.gold_id)
    if idx == 6:
        return ("Without more information about the photo it is not possible "
                "to choose the most appropriate caption.",
                "not applicable without more information about the photo")
    if idx == 11:
        return (STEEL_RATIONALE, STEEL_FINAL)
    return (f"The phrase {inst.full_phrase} describes {caption[2:]}, "
            f"so option ({g}) fits best.",
            f"({g}) {caption}")


def prime_cache(dataset: Dataset, captions, cache_dir: Path) -> None:
    store = CaptionStore()
    for s in captions:
        store.add(s)

    def cache(prompt: str, text: str) -> None:
        request = LlmRequest(model=LLM_MODEL, messages=(("user", prompt),))
        write_cache_entry(cache_dir, request, text)

    for idx, inst in enumerate(dataset.instances):
        cache(build_enhancement_prompt(inst.full_phrase, "meaning_of"), KNOWLEDGE[idx])

        plain = render_qa_prompt(inst, store, "no_cot_greedy", CAPTIONER)
        reply = zero_shot_reply(idx, inst)
        cache(plain.rendered, reply)

        think = render_qa_prompt(inst, store, "think_greedy", CAPTIONER)
        rationale, final = cot_exchange(idx, inst)
        cache(think.rendered, rationale)
        cache(f"{think.rendered} {rationale}\n{COT_ANSWER_CUE}", final)


def sanity_check(dataset: Dataset, records, captions) -> None:
    emb = EmbeddingStore()
    for r in records:
        emb.add(r)
    caps = CaptionStore()
    for s in captions:
        caps.add(s)

    plain = rank_batch(dataset, emb, EMBED_MODEL, "cosine")
    tops = [r.ranked[0].image_id for r in plain]
    assert tops.count("pool00") == 5, f"magnet won {tops.count('pool00')} instances"
    penalized = rank_batch(dataset, emb, EMBED_MODEL, "cosine", penalty_lambda=1.0)
    flips = sum(1 for a, b in zip(plain, penalized)
                if a.ranked[0].image_id != b.ranked[0].image_id)
    assert flips >= 1, "penalty never changed a top-1"

    expected = {2: "wrong", 9: "abstain", 11: "wrong"}
    for idx, inst in enumerate(dataset.instances):
        options = [greedy_caption(i) for i in inst.candidate_ids]
        answer = parse_answer(zero_shot_reply(idx, inst), options)
        want = expected.get(idx, "gold")
        if want == "gold":
            assert answer.letter == gold_letter(inst), (idx, answer)
        elif want == "abstain":
            assert answer.letter is None, (idx, answer)
        else:
            assert answer.letter is not None and answer.letter != gold_letter(inst)
        rationale, final = cot_exchange(idx, inst)
        cot = parse_answer(final, options)
        if idx == 6:
            assert cot.letter is None
        else:
            assert cot.letter == gold_letter(inst)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=None,
                        help="fixture root (default: tests/fixtures/e2e)")
    args = parser.parse_args(argv)
    root = Path(args.out) if args.out else (
        Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "e2e")
    root.mkdir(parents=True, exist_ok=True)

    write_dataset(build_dataset(), root / "data.tsv", root / "gold.txt")
    # rebuild everything from the written files so the cache keys match
    # what the pipeline renders after a round trip
    dataset = load_dataset(root / "data.tsv", root / "gold.txt")
    captions = build_captions(dataset)
    records = build_embeddings(dataset)
    sanity_check(dataset, records, captions)

    write_captions(captions, root / "captions.jsonl")
    write_embeddings_jsonl(records, root / "embeddings.jsonl")
    prime_cache(dataset, captions, root / "cache")
    n_cache = sum(1 for _ in (root / "cache").rglob("*.json"))
    print(f"{root}: 12 instances, {len(records)} embeddings, "
          f"{len(captions)} caption sets, {n_cache} cached completions")
    return 0


if __name__ == "__main__":
    sys.exit(main())
