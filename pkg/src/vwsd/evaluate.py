"""Accuracy and mean reciprocal rank, plus report emission.

Both metrics are percentages carried as exact fractions and formatted to
two decimals with half-up rounding only at the edge.  Failed instances
never enter the denominator; they are counted separately.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from .errors import VwsdError
from .qa import ParsedAnswer
from .ranking import RankingResult


@dataclass(frozen=True)
class InstanceScore:
    instance_id: str
    result: str  # the gold rank for ranking runs, a letter or "abstain" for QA
    correct: bool


@dataclass(frozen=True)
class RunReport:
    run_id: str
    config: dict
    kind: str  # "ranking" | "qa"
    per_instance: tuple[InstanceScore, ...]
    accuracy: Fraction
    mrr: Fraction
    failures: int

    @property
    def accuracy_str(self) -> str:
        return format_pct(self.accuracy)

    @property
    def mrr_str(self) -> str:
        return format_pct(self.mrr)


def format_pct(x: Fraction) -> str:
    """Exact half-up rounding of a non-negative percentage to 2 decimals."""
    scaled = x * 100
    q, r = divmod(scaled.numerator, scaled.denominator)
    if 2 * r >= scaled.denominator:
        q += 1
    return f"{q // 100}.{q % 100:02d}"


def score_rankings(
    rankings: Sequence[RankingResult],
    run_id: str = "",
    config: Mapping | None = None,
    failures: int = 0,
) -> RunReport:
    """Accuracy = share of rank-1 golds; MRR averages 1/gold_rank."""
    if not rankings:
        raise VwsdError("cannot score an empty batch of rankings")
    per = tuple(
        InstanceScore(r.instance_id, str(r.gold_rank), r.gold_rank == 1) for r in rankings
    )
    n = len(rankings)
    correct = sum(1 for p in per if p.correct)
    rr_sum = sum((Fraction(1, r.gold_rank) for r in rankings), Fraction(0))
    return RunReport(
        run_id=run_id,
        config=dict(config or {}),
        kind="ranking",
        per_instance=per,
        accuracy=Fraction(100 * correct, n),
        mrr=Fraction(100) * rr_sum / n,
        failures=failures,
    )


def score_answers(
    answers: Sequence[tuple[str, ParsedAnswer, str]],
    run_id: str = "",
    config: Mapping | None = None,
    failures: int = 0,
) -> RunReport:
    """QA scoring; an abstention counts as incorrect, rr is 0 or 1."""
    if not answers and failures == 0:
        raise VwsdError("cannot score an empty batch of answers")
    per = []
    correct = 0
    for instance_id, answer, gold in answers:
        hit = answer.letter == gold and answer.letter is not None
        correct += int(hit)
        per.append(InstanceScore(instance_id, answer.letter or "abstain", hit))
    n = len(answers)
    accuracy = Fraction(100 * correct, n) if n else Fraction(0)
    return RunReport(
        run_id=run_id,
        config=dict(config or {}),
        kind="qa",
        per_instance=tuple(per),
        accuracy=accuracy,
        mrr=accuracy,  # reciprocal rank is the correctness indicator here
        failures=failures,
    )


def _cfg_str(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def emit_report(report: RunReport, fmt: str) -> bytes:
    """Render a report as markdown, csv, or json (deterministic bytes)."""
    if fmt == "markdown":
        return _emit_markdown(report)
    if fmt == "csv":
        return _emit_csv(report)
    if fmt == "json":
        return _emit_json(report)
    raise VwsdError(f"unknown report format {fmt!r}; valid: markdown, csv, json")


def _emit_markdown(report: RunReport) -> bytes:
    lines = [f"# run {report.run_id}" if report.run_id else "# run", ""]
    lines += ["## config", ""]
    if report.config:
        lines += ["| key | value |", "| --- | --- |"]
        lines += [f"| {k} | {_cfg_str(report.config[k])} |" for k in sorted(report.config)]
    else:
        lines.append("(none)")
    lines += ["", "## metrics", "", "| acc. | MRR |", "| --- | --- |",
              f"| {report.accuracy_str} | {report.mrr_str} |", "",
              f"failures: {report.failures}", "", "## instances", "",
              "| instance | result | correct |", "| --- | --- | --- |"]
    lines += [
        f"| {p.instance_id} | {p.result} | {'yes' if p.correct else 'no'} |"
        for p in report.per_instance
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")


def _emit_csv(report: RunReport) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cfg_keys = sorted(report.config)
    writer.writerow(["run_id", "accuracy", "mrr", "failures"] + [f"config.{k}" for k in cfg_keys])
    writer.writerow(
        [report.run_id, report.accuracy_str, report.mrr_str, report.failures]
        + [_cfg_str(report.config[k]) for k in cfg_keys]
    )
    return buf.getvalue().encode("utf-8")


def _emit_json(report: RunReport) -> bytes:
    obj = {
        "run_id": report.run_id,
        "kind": report.kind,
        "config": {k: report.config[k] for k in sorted(report.config)},
        "accuracy": report.accuracy_str,
        "mrr": report.mrr_str,
        "failures": report.failures,
        "per_instance": [
            {"instance_id": p.instance_id, "result": p.result, "correct": p.correct}
            for p in report.per_instance
        ],
    }
    return (json.dumps(obj, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


@dataclass(frozen=True)
class ReportSummary:
    """The slice of a stored report needed for cross-run comparison."""

    run_id: str
    config: dict
    accuracy_str: str
    mrr_str: str
    failures: int


def read_report_json(path: str | Path) -> ReportSummary:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise VwsdError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise VwsdError(f"{path}: invalid JSON ({exc.msg})") from None
    try:
        return ReportSummary(
            run_id=obj["run_id"],
            config=dict(obj["config"]),
            accuracy_str=obj["accuracy"],
            mrr_str=obj["mrr"],
            failures=obj["failures"],
        )
    except (KeyError, TypeError) as exc:
        raise VwsdError(f"{path}: not a run report ({exc})") from None


def merge_reports(summaries: Sequence[ReportSummary]) -> bytes:
    """One markdown table over several runs, best acc./MRR in bold."""
    if not summaries:
        raise VwsdError("no reports to merge")
    seen: set[str] = set()
    for s in summaries:
        if s.run_id in seen:
            raise VwsdError(f"conflicting run id {s.run_id!r} appears twice")
        seen.add(s.run_id)

    def as_fraction(text: str) -> Fraction:
        return Fraction(text)

    best_acc = max(as_fraction(s.accuracy_str) for s in summaries)
    best_mrr = max(as_fraction(s.mrr_str) for s in summaries)
    lines = ["# comparison", "", "| run | config | acc. | MRR |", "| --- | --- | --- | --- |"]
    for s in summaries:
        cfg = " ".join(f"{k}={_cfg_str(s.config[k])}" for k in sorted(s.config)) or "-"
        acc = f"**{s.accuracy_str}**" if as_fraction(s.accuracy_str) == best_acc else s.accuracy_str
        mrr = f"**{s.mrr_str}**" if as_fraction(s.mrr_str) == best_mrr else s.mrr_str
        lines.append(f"| {s.run_id} | {cfg} | {acc} | {mrr} |")
    return ("\n".join(lines) + "\n").encode("utf-8")
