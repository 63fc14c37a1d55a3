"""Command-line entry points: retrieve, enhance, qa, eval, report.

Exit codes: 0 on success, 1 on missing files or bad configuration, 2
when at least one instance failed mid-run (argparse also uses 2 for
usage errors, as usual).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .captions import load_captions
from .config import (
    QA_FAMILIES,
    RunConfig,
    load_config,
    resolve_qa_template,
    run_id_for,
    snapshot,
)
from .dataset import load_dataset
from .embeddings import MEASURES, load_embeddings
from .enhancement import TEMPLATES as ENHANCE_TEMPLATES
from .enhancement import enhance_batch, read_enhanced_jsonl, write_enhanced_jsonl
from .errors import ConfigError, VwsdError
from .evaluate import (
    emit_report,
    merge_reports,
    read_report_json,
    score_answers,
    score_rankings,
)
from .gateway import gateway_from_env
from .qa import (
    InContextConfig,
    read_transcripts_jsonl,
    run_batch,
    run_cot,
    run_few_shot,
    run_zero_shot,
    write_transcripts_jsonl,
)
from .ranking import rank_batch, read_rankings_jsonl, write_rankings_jsonl


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="INI-style config file; flags override it")
    p.add_argument("--jobs", type=int, help="worker pool size across instances")
    p.add_argument("--offline", action="store_true", default=None,
                   help="serve completions from the cache only")
    p.add_argument("--out-dir", help="directory for rankings, transcripts, reports")
    return p


def _gateway_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--model", help="completion model name")
    p.add_argument("--temperature", type=float, help="sampling temperature")
    p.add_argument("--max-tokens", type=int, help="completion token budget")
    p.add_argument("--rpm", type=int, help="request-per-minute ceiling (0 = unlimited)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vwsd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_flags()
    gw = _gateway_flags()

    p = sub.add_parser("retrieve", parents=[common],
                       help="rank candidate images by embedding similarity")
    p.add_argument("--data", help="instances TSV")
    p.add_argument("--gold", help="gold image ids, one per line")
    p.add_argument("--embeddings", help="embedding store (JSONL or binary)")
    p.add_argument("--embedding-model", help="embedding space to rank in")
    p.add_argument("--measure", choices=MEASURES, help="similarity measure")
    p.add_argument("--penalty", action=argparse.BooleanOptionalAction, default=None,
                   help="subtract the batch-frequency penalty (two passes)")
    p.add_argument("--lambda", dest="penalty_lambda", type=float,
                   help="penalty weight, non-negative")
    p.add_argument("--enhanced", help="enriched-phrase JSONL to rank with")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("enhance", parents=[common, gw],
                       help="ask the LLM what each phrase means")
    p.add_argument("--data", help="instances TSV")
    p.add_argument("--gold", help="gold image ids, one per line")
    p.add_argument("--template", choices=sorted(ENHANCE_TEMPLATES),
                   help="prompt template for the meaning question")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("qa", parents=[common, gw],
                       help="pose each instance as ten-way multiple choice")
    p.add_argument("--data", help="instances TSV")
    p.add_argument("--gold", help="gold image ids, one per line")
    p.add_argument("--captions", help="caption-set JSONL")
    p.add_argument("--captioner", help="captioner whose sets to use")
    p.add_argument("--embeddings", help="phrase embeddings (top/inverse-top selection)")
    p.add_argument("--embedding-model", help="embedding space for shot selection")
    p.add_argument("--qa-template", choices=QA_FAMILIES, help="question style family")
    p.add_argument("--strategy", choices=("greedy", "beam"), help="caption decoding strategy")
    p.add_argument("--shots", type=int, help="in-context examples per query (0 = zero-shot)")
    p.add_argument("--selection", choices=("random", "top", "inverse-top"),
                   help="how to pick in-context examples")
    p.add_argument("--seed", type=int, help="seed for random selection")
    p.set_defaults(func=cmd_qa)

    p = sub.add_parser("eval", parents=[common],
                       help="recompute a report from stored rankings or transcripts")
    p.add_argument("--rankings", help="rankings JSONL to score")
    p.add_argument("--transcripts", help="QA transcripts JSONL to score")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common],
                       help="merge stored reports into one comparison table")
    p.add_argument("reports", nargs="+", help="report.json files to merge")
    p.set_defaults(func=cmd_report)

    return parser


# flag destination -> RunConfig field
_OVERRIDES = {
    "jobs": "jobs",
    "offline": "offline",
    "out_dir": "out_dir",
    "data": "data_path",
    "gold": "gold_path",
    "embeddings": "embeddings_path",
    "embedding_model": "embedding_model",
    "captions": "captions_path",
    "captioner": "captioner",
    "measure": "measure",
    "penalty": "penalty_enabled",
    "penalty_lambda": "penalty_lambda",
    "enhanced": "enhanced_path",
    "template": "enhance_template",
    "qa_template": "qa_template",
    "strategy": "strategy",
    "shots": "shots",
    "selection": "selection",
    "seed": "seed",
    "model": "llm_model",
    "temperature": "temperature",
    "max_tokens": "max_tokens",
    "rpm": "rpm",
}


def _merged_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    for dest, field_name in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if dest == "selection":
            value = value.replace("-", "_")
        setattr(config, field_name, value)
    return config


def _require(value: str, what: str, flag: str) -> str:
    if not value:
        raise ConfigError(f"{what} not set; pass {flag} or put it in the config file")
    return value


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_reports(report, out: Path) -> None:
    (out / "report.md").write_bytes(emit_report(report, "markdown"))
    (out / "report.csv").write_bytes(emit_report(report, "csv"))
    (out / "report.json").write_bytes(emit_report(report, "json"))


def _gateway(config: RunConfig):
    return gateway_from_env(
        cache_dir=config.cache_dir,
        offline=config.offline,
        rpm=config.rpm,
        base_url=config.base_url,
        api_key=config.api_key,
    )


def cmd_retrieve(args: argparse.Namespace) -> int:
    config = _merged_config(args)
    dataset = load_dataset(
        _require(config.data_path, "data file", "--data"),
        _require(config.gold_path, "gold file", "--gold"),
    )
    store = load_embeddings(_require(config.embeddings_path, "embeddings file", "--embeddings"))
    model = _require(config.embedding_model, "embedding model", "--embedding-model")
    phrases = None
    if config.enhanced_path:
        phrases = {e.instance_id: e.enhanced for e in read_enhanced_jsonl(config.enhanced_path)}
    rankings = rank_batch(
        dataset,
        store,
        model,
        config.measure,
        penalty_lambda=config.penalty_lambda if config.penalty_enabled else None,
        phrases=phrases,
    )
    snap = snapshot(config, "retrieve")
    report = score_rankings(rankings, run_id=run_id_for(snap), config=snap)
    out = _out_dir(config)
    write_rankings_jsonl(rankings, out / "rankings.jsonl")
    _write_reports(report, out)
    print(f"{out / 'rankings.jsonl'}: {len(rankings)} instances, "
          f"accuracy {report.accuracy_str}, MRR {report.mrr_str}")
    return 0


def cmd_enhance(args: argparse.Namespace) -> int:
    config = _merged_config(args)
    dataset = load_dataset(
        _require(config.data_path, "data file", "--data"),
        _require(config.gold_path, "gold file", "--gold"),
    )
    model = _require(config.llm_model, "completion model", "--model")
    gateway = _gateway(config)
    enhanced, failed = enhance_batch(
        dataset,
        config.enhance_template,
        gateway,
        model,
        temperature=config.temperature,
        max_tokens=config.max_tokens,
        jobs=config.jobs,
    )
    out = _out_dir(config)
    write_enhanced_jsonl(enhanced, out / "enhanced.jsonl")
    print(f"{out / 'enhanced.jsonl'}: {len(enhanced)} phrases enriched, {len(failed)} failed")
    if failed:
        print("failed instances: " + ", ".join(failed), file=sys.stderr)
        return 2
    return 0


def cmd_qa(args: argparse.Namespace) -> int:
    config = _merged_config(args)
    dataset = load_dataset(
        _require(config.data_path, "data file", "--data"),
        _require(config.gold_path, "gold file", "--gold"),
    )
    captions = load_captions(_require(config.captions_path, "captions file", "--captions"))
    captioner = _require(config.captioner, "captioner", "--captioner")
    model = _require(config.llm_model, "completion model", "--model")
    template = resolve_qa_template(config.qa_template, config.strategy)
    gateway = _gateway(config)

    if config.shots > 0:
        if config.qa_template not in ("no_cot", "choose_no_cot"):
            raise ConfigError("few-shot runs use the no_cot or choose_no_cot families")
        phrase_store = None
        if config.selection in ("top", "inverse_top"):
            phrase_store = load_embeddings(
                _require(config.embeddings_path, "embeddings file", "--embeddings")
            )
            _require(config.embedding_model, "embedding model", "--embedding-model")
        in_context = InContextConfig(
            k=config.shots,
            strategy=config.selection,
            seed=config.seed,
            embedding_model=config.embedding_model,
        )

        def pipeline(inst):
            return run_few_shot(
                inst, dataset, captions, phrase_store, template, captioner,
                in_context, gateway, model,
                temperature=config.temperature, max_tokens=config.max_tokens,
            )
    elif config.qa_template == "cot":

        def pipeline(inst):
            return run_cot(
                inst, captions, template, captioner, gateway, model,
                temperature=config.temperature, max_tokens=config.max_tokens,
            )
    else:

        def pipeline(inst):
            return run_zero_shot(
                inst, captions, template, captioner, gateway, model,
                temperature=config.temperature, max_tokens=config.max_tokens,
            )

    outcomes = run_batch(dataset.instances, pipeline, jobs=config.jobs)
    failures = sum(1 for o in outcomes if o.failed)
    answers = [(o.instance_id, o.answer, o.gold_letter) for o in outcomes if not o.failed]
    snap = snapshot(config, "qa")
    report = score_answers(answers, run_id=run_id_for(snap), config=snap, failures=failures)
    out = _out_dir(config)
    write_transcripts_jsonl(outcomes, out / "transcripts.jsonl")
    _write_reports(report, out)
    print(f"{out / 'transcripts.jsonl'}: {len(outcomes)} instances, "
          f"accuracy {report.accuracy_str}, failures {failures}")
    return 2 if failures else 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _merged_config(args)
    if bool(args.rankings) == bool(args.transcripts):
        raise ConfigError("pass exactly one of --rankings or --transcripts")
    out = _out_dir(config)
    if args.rankings:
        rankings = read_rankings_jsonl(args.rankings)
        if not rankings:
            raise VwsdError(f"{args.rankings}: no rankings to score")
        snap = {
            "command": "eval",
            "source": "rankings",
            "measure": rankings[0].measure,
            "penalized": rankings[0].penalized,
        }
        report = score_rankings(rankings, run_id=run_id_for(snap), config=snap)
        failures = 0
    else:
        outcomes = read_transcripts_jsonl(args.transcripts)
        if not outcomes:
            raise VwsdError(f"{args.transcripts}: no transcripts to score")
        failures = sum(1 for o in outcomes if o.failed)
        answers = [(o.instance_id, o.answer, o.gold_letter) for o in outcomes if not o.failed]
        snap = {"command": "eval", "source": "transcripts", "template": outcomes[0].template}
        report = score_answers(answers, run_id=run_id_for(snap), config=snap, failures=failures)
    _write_reports(report, out)
    print(f"{out / 'report.json'}: accuracy {report.accuracy_str}, MRR {report.mrr_str}, "
          f"failures {report.failures}")
    return 2 if failures else 0


def cmd_report(args: argparse.Namespace) -> int:
    config = _merged_config(args)
    summaries = [read_report_json(p) for p in args.reports]
    merged = merge_reports(summaries)
    out = _out_dir(config)
    (out / "comparison.md").write_bytes(merged)
    print(f"wrote {out / 'comparison.md'} ({len(summaries)} runs)")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VwsdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
