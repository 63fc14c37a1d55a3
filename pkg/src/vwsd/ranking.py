"""Candidate ranking: similarity scores minus an optional batch penalty.

The penalty discourages images that win too many phrases in one batch:
rank the whole batch plainly first, count how often each image comes out
on top, then re-rank with p(i) = lambda * n_top(i) / N subtracted from
every raw similarity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .dataset import Dataset, VwsdInstance
from .embeddings import EmbeddingRecord, EmbeddingStore, similarity
from .errors import RankingError


@dataclass(frozen=True)
class RankedCandidate:
    image_id: str
    raw_sim: float
    final_score: float


@dataclass(frozen=True)
class PenaltyTable:
    """Per-image score subtraction; images never ranked first get 0."""

    lam: float
    counts: dict[str, int]
    total: int
    values: dict[str, float]

    def value(self, image_id: str) -> float:
        return self.values.get(image_id, 0.0)


@dataclass(frozen=True)
class RankingResult:
    instance_id: str
    phrase_used: str
    measure: str
    penalized: bool
    ranked: tuple[RankedCandidate, ...]
    gold_rank: int


def rank_candidates(
    instance: VwsdInstance,
    phrase_embedding: EmbeddingRecord,
    store: EmbeddingStore,
    measure: str,
    penalty: PenaltyTable | None = None,
    phrase_text: str | None = None,
) -> RankingResult:
    """Order the instance's candidates by final score, best first.

    Ties break toward the earlier candidate position, deterministically.
    """
    sims: list[float] = []
    for image_id in instance.candidate_ids:
        rec = store.get(image_id, phrase_embedding.model)
        if rec.dim != phrase_embedding.dim:
            raise RankingError(
                f"instance {instance.instance_id}: image {image_id!r} has dim {rec.dim}, "
                f"phrase embedding has dim {phrase_embedding.dim}"
            )
        sims.append(similarity(phrase_embedding.vector, rec.vector, measure))

    if penalty is None:
        finals = list(sims)
    else:
        finals = [s - penalty.value(i) for s, i in zip(sims, instance.candidate_ids)]

    order = sorted(range(len(finals)), key=lambda j: (-finals[j], j))
    ranked = tuple(
        RankedCandidate(instance.candidate_ids[j], sims[j], finals[j]) for j in order
    )
    gold_rank = 1 + next(i for i, rc in enumerate(ranked) if rc.image_id == instance.gold_id)
    return RankingResult(
        instance_id=instance.instance_id,
        phrase_used=phrase_text if phrase_text is not None else instance.full_phrase,
        measure=measure,
        penalized=penalty is not None,
        ranked=ranked,
        gold_rank=gold_rank,
    )


def compute_penalty(rankings: Sequence[RankingResult], lam: float) -> PenaltyTable:
    """Derive the penalty table from an unpenalized batch."""
    if not rankings:
        raise RankingError("cannot compute a penalty from an empty batch")
    if lam < 0:
        raise RankingError(f"penalty weight must be non-negative, got {lam}")
    if any(r.penalized for r in rankings):
        raise RankingError("penalty must be computed from unpenalized rankings")
    counts: dict[str, int] = {}
    for r in rankings:
        top = r.ranked[0].image_id
        counts[top] = counts.get(top, 0) + 1
    total = len(rankings)
    values = {image_id: lam * n / total for image_id, n in counts.items()}
    return PenaltyTable(lam=lam, counts=counts, total=total, values=values)


def rank_batch(
    dataset: Dataset,
    store: EmbeddingStore,
    model: str,
    measure: str,
    penalty_lambda: float | None = None,
    phrases: Mapping[str, str] | None = None,
) -> list[RankingResult]:
    """Rank every instance; two passes when the penalty is enabled.

    `phrases` optionally maps instance id to a replacement phrase (for
    knowledge-enriched retrieval); its embedding must be in the store.
    """
    def phrase_for(inst: VwsdInstance) -> str:
        if phrases is not None and inst.instance_id in phrases:
            return phrases[inst.instance_id]
        return inst.full_phrase

    def one_pass(penalty: PenaltyTable | None) -> list[RankingResult]:
        out = []
        for inst in dataset:
            phrase = phrase_for(inst)
            emb = store.get_text(phrase, model)
            out.append(rank_candidates(inst, emb, store, measure, penalty, phrase_text=phrase))
        return out

    plain = one_pass(None)
    if penalty_lambda is None:
        return plain
    table = compute_penalty(plain, penalty_lambda)
    return one_pass(table)


def write_rankings_jsonl(rankings: Sequence[RankingResult], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in rankings:
            obj = {
                "instance_id": r.instance_id,
                "phrase_used": r.phrase_used,
                "measure": r.measure,
                "penalized": r.penalized,
                "ranked": [
                    {"image_id": rc.image_id, "raw_sim": rc.raw_sim, "final_score": rc.final_score}
                    for rc in r.ranked
                ],
                "gold_rank": r.gold_rank,
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_rankings_jsonl(path: str | Path) -> list[RankingResult]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise RankingError(f"no such file: {path}") from None
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            out.append(
                RankingResult(
                    instance_id=obj["instance_id"],
                    phrase_used=obj["phrase_used"],
                    measure=obj["measure"],
                    penalized=obj["penalized"],
                    ranked=tuple(
                        RankedCandidate(rc["image_id"], rc["raw_sim"], rc["final_score"])
                        for rc in obj["ranked"]
                    ),
                    gold_rank=obj["gold_rank"],
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise RankingError(f"{path}:{lineno}: malformed ranking record ({exc})") from None
    return out
