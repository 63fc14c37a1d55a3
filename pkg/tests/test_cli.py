import json

import pytest

from vwsd.captions import write_captions
from vwsd.cli import main
from vwsd.dataset import write_dataset
from vwsd.embeddings import write_embeddings_jsonl
from vwsd.enhancement import build_enhancement_prompt
from vwsd.gateway import LlmRequest, write_cache_entry
from vwsd.qa import gold_letter, render_qa_prompt

from conftest import caption_store_for, make_dataset, make_instance, store_for


@pytest.fixture(autouse=True)
def no_endpoint(monkeypatch):
    monkeypatch.delenv("VWSD_LLM_BASE_URL", raising=False)
    monkeypatch.delenv("VWSD_LLM_API_KEY", raising=False)


@pytest.fixture
def workspace(tmp_path):
    ds = make_dataset([make_instance(i, target=f"word{i}", context=f"ctx{i}",
                                     gold_pos=i) for i in range(4)])
    write_dataset(ds, tmp_path / "data.tsv", tmp_path / "gold.txt")
    store = store_for(ds)
    write_embeddings_jsonl(store.records(), tmp_path / "embeddings.jsonl")
    greedy = caption_store_for(ds, strategy="greedy")
    beam = caption_store_for(ds, strategy="beam")
    write_captions(greedy.sets() + beam.sets(), tmp_path / "captions.jsonl")
    (tmp_path / "run.ini").write_text(
        f"[gateway]\ncache_dir = {tmp_path / 'cache'}\nmodel = test-llm\n"
        f"offline = true\n")
    return tmp_path, ds, greedy


def base_args(tmp, extra):
    return ["--data", str(tmp / "data.tsv"), "--gold", str(tmp / "gold.txt")] + extra


def prime_qa_cache(tmp, ds, captions, text_for):
    for inst in ds:
        prompt = render_qa_prompt(inst, captions, "no_cot_greedy", "toy-cap")
        request = LlmRequest(model="test-llm", messages=(("user", prompt.rendered),))
        write_cache_entry(tmp / "cache", request, text_for(inst))


# --- retrieve -------------------------------------------------------------

def test_retrieve_writes_outputs(workspace, capsys):
    tmp, ds, _ = workspace
    out = tmp / "out_r"
    code = main(["retrieve"] + base_args(tmp, [
        "--embeddings", str(tmp / "embeddings.jsonl"),
        "--embedding-model", "toy-clip", "--measure", "cosine",
        "--out-dir", str(out)]))
    assert code == 0
    for name in ("rankings.jsonl", "report.md", "report.csv", "report.json"):
        assert (out / name).is_file()
    assert "accuracy" in capsys.readouterr().out
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["penalty"] is False
    assert len(report["per_instance"]) == 4


def test_retrieve_penalty_flags(workspace):
    tmp, _, _ = workspace
    out = tmp / "out_p"
    code = main(["retrieve"] + base_args(tmp, [
        "--embeddings", str(tmp / "embeddings.jsonl"),
        "--embedding-model", "toy-clip", "--penalty", "--lambda", "0.5",
        "--out-dir", str(out)]))
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["penalty"] is True
    assert report["config"]["lambda"] == 0.5
    rankings = (out / "rankings.jsonl").read_text().splitlines()
    assert all(json.loads(line)["penalized"] for line in rankings)


def test_retrieve_missing_file_exits_1(workspace, capsys):
    tmp, _, _ = workspace
    code = main(["retrieve", "--data", str(tmp / "ghost.tsv"),
                 "--gold", str(tmp / "gold.txt"),
                 "--embeddings", str(tmp / "embeddings.jsonl"),
                 "--embedding-model", "toy-clip"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_retrieve_requires_embedding_model(workspace, capsys):
    tmp, _, _ = workspace
    code = main(["retrieve"] + base_args(tmp, [
        "--embeddings", str(tmp / "embeddings.jsonl")]))
    assert code == 1
    assert "--embedding-model" in capsys.readouterr().err


def test_retrieve_usage_error_is_exit_2(workspace, capsys):
    tmp, _, _ = workspace
    with pytest.raises(SystemExit) as exc:
        main(["retrieve"] + base_args(tmp, ["--measure", "dot"]))
    assert exc.value.code == 2
    assert "cosine" in capsys.readouterr().err


# --- qa --------------------------------------------------------------------

def qa_args(tmp, extra=None):
    return ["qa", "--config", str(tmp / "run.ini")] + base_args(tmp, [
        "--captions", str(tmp / "captions.jsonl"), "--captioner", "toy-cap",
        "--qa-template", "no_cot", "--strategy", "greedy"] + (extra or []))


def test_qa_offline_replay(workspace, capsys):
    tmp, ds, captions = workspace
    prime_qa_cache(tmp, ds, captions, lambda inst: f"({gold_letter(inst)})")
    out = tmp / "out_qa"
    code = main(qa_args(tmp, ["--out-dir", str(out)]))
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["accuracy"] == "100.00"
    assert report["failures"] == 0
    transcripts = [json.loads(l) for l in (out / "transcripts.jsonl").read_text().splitlines()]
    assert [t["letter"] for t in transcripts] == ["A", "B", "C", "D"]
    assert all(t["outcome"] == "option" for t in transcripts)


def test_qa_offline_cache_gap_marks_failures(workspace, capsys):
    tmp, ds, _ = workspace
    out = tmp / "out_gap"
    code = main(qa_args(tmp, ["--out-dir", str(out)]))
    assert code == 2
    report = json.loads((out / "report.json").read_text())
    assert report["failures"] == 4
    transcripts = [json.loads(l) for l in (out / "transcripts.jsonl").read_text().splitlines()]
    assert all(t["outcome"] == "failed" for t in transcripts)
    assert all("offline replay gap" in t["error"] for t in transcripts)


def test_qa_abstention_is_not_failure(workspace):
    tmp, ds, captions = workspace

    def reply(inst):
        if inst.instance_id == "0000":
            return "cannot tell from these captions"
        return f"({gold_letter(inst)})"

    prime_qa_cache(tmp, ds, captions, reply)
    out = tmp / "out_abstain"
    code = main(qa_args(tmp, ["--out-dir", str(out)]))
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["accuracy"] == "75.00"
    assert report["failures"] == 0
    assert report["per_instance"][0]["result"] == "abstain"


def test_qa_few_shot_rejects_cot_family(workspace, capsys):
    tmp, _, _ = workspace
    # the later --qa-template occurrence wins, turning the run into cot + shots
    code = main(qa_args(tmp, ["--shots", "2", "--qa-template", "cot"]))
    assert code == 1
    assert "no_cot or choose_no_cot" in capsys.readouterr().err


def test_qa_cot_family_two_stage(workspace):
    from vwsd.qa import COT_ANSWER_CUE

    tmp, ds, captions = workspace
    for inst in ds:
        prompt = render_qa_prompt(inst, captions, "think_greedy", "toy-cap")
        think_req = LlmRequest(model="test-llm", messages=(("user", prompt.rendered),))
        rationale = f"thinking about {inst.full_phrase}"
        write_cache_entry(tmp / "cache", think_req, rationale)
        stage2 = f"{prompt.rendered} {rationale}\n{COT_ANSWER_CUE}"
        final_req = LlmRequest(model="test-llm", messages=(("user", stage2),))
        write_cache_entry(tmp / "cache", final_req, f"({gold_letter(inst)})")
    out = tmp / "out_cot"
    code = main(qa_args(tmp, ["--out-dir", str(out), "--qa-template", "cot"]))
    assert code == 0
    transcripts = [json.loads(l) for l in (out / "transcripts.jsonl").read_text().splitlines()]
    assert all(t["template"] == "cot" for t in transcripts)
    assert all(t["rationale"].startswith("thinking about") for t in transcripts)
    assert all(len(t["responses"]) == 2 for t in transcripts)
    report = json.loads((out / "report.json").read_text())
    assert report["accuracy"] == "100.00"


def test_qa_few_shot_inverse_top(workspace):
    from vwsd.qa import InContextConfig, build_shots, render_few_shot_prompt, select_in_context

    tmp, ds, captions = workspace
    store = store_for(ds)
    cfg = InContextConfig(k=2, strategy="inverse_top", seed=0,
                          embedding_model="toy-clip")
    for inst in ds:
        selected = select_in_context(inst, ds, store, cfg)
        shots = build_shots(selected, captions, "no_cot_greedy", "toy-cap")
        query = render_qa_prompt(inst, captions, "no_cot_greedy", "toy-cap")
        prompt = render_few_shot_prompt(shots, query)
        request = LlmRequest(model="test-llm", messages=(("user", prompt),))
        write_cache_entry(tmp / "cache", request, f"({gold_letter(inst)})")
    out = tmp / "out_fs"
    code = main(qa_args(tmp, [
        "--out-dir", str(out), "--shots", "2", "--selection", "inverse-top",
        "--embeddings", str(tmp / "embeddings.jsonl"),
        "--embedding-model", "toy-clip"]))
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["accuracy"] == "100.00"
    assert report["config"]["selection"] == "inverse_top"
    assert report["config"]["shots"] == 2


# --- eval and report --------------------------------------------------------

def test_eval_roundtrips_rankings(workspace, capsys):
    tmp, _, _ = workspace
    out = tmp / "out_r2"
    main(["retrieve"] + base_args(tmp, [
        "--embeddings", str(tmp / "embeddings.jsonl"),
        "--embedding-model", "toy-clip", "--out-dir", str(out)]))
    first = json.loads((out / "report.json").read_text())
    out2 = tmp / "out_eval"
    code = main(["eval", "--rankings", str(out / "rankings.jsonl"),
                 "--out-dir", str(out2)])
    assert code == 0
    second = json.loads((out2 / "report.json").read_text())
    assert second["accuracy"] == first["accuracy"]
    assert second["mrr"] == first["mrr"]


def test_eval_needs_exactly_one_source(workspace, capsys):
    tmp, _, _ = workspace
    assert main(["eval"]) == 1
    assert main(["eval", "--rankings", "a", "--transcripts", "b"]) == 1
    assert "exactly one" in capsys.readouterr().err


def test_report_merges_runs(workspace, capsys):
    tmp, _, _ = workspace
    outs = []
    for measure in ("cosine", "manhattan"):
        out = tmp / f"out_{measure}"
        main(["retrieve"] + base_args(tmp, [
            "--embeddings", str(tmp / "embeddings.jsonl"),
            "--embedding-model", "toy-clip", "--measure", measure,
            "--out-dir", str(out)]))
        outs.append(out / "report.json")
    merged_dir = tmp / "merged"
    code = main(["report", str(outs[0]), str(outs[1]),
                 "--out-dir", str(merged_dir)])
    assert code == 0
    text = (merged_dir / "comparison.md").read_text()
    assert text.count("| ") > 4 and "**" in text
    # merging the same run twice is a hard error
    assert main(["report", str(outs[0]), str(outs[0])]) == 1
    assert "conflicting run id" in capsys.readouterr().err


# --- enhance -----------------------------------------------------------------

def test_enhance_offline_replay(workspace):
    tmp, ds, _ = workspace
    for inst in ds:
        prompt = build_enhancement_prompt(inst.full_phrase, "meaning_of")
        request = LlmRequest(model="test-llm", messages=(("user", prompt),))
        write_cache_entry(tmp / "cache", request, f"details about {inst.target_word}")
    out = tmp / "out_enh"
    code = main(["enhance", "--config", str(tmp / "run.ini")] + base_args(tmp, [
        "--template", "meaning_of", "--out-dir", str(out)]))
    assert code == 0
    lines = (out / "enhanced.jsonl").read_text().splitlines()
    assert len(lines) == 4
    first = json.loads(lines[0])
    assert first["enhanced"] == "word0 ctx0 details about word0"


def test_enhance_offline_gap_exits_2(workspace, capsys):
    tmp, _, _ = workspace
    out = tmp / "out_enh_gap"
    code = main(["enhance", "--config", str(tmp / "run.ini")] + base_args(tmp, [
        "--template", "meaning_of", "--out-dir", str(out)]))
    assert code == 2
    assert "failed instances" in capsys.readouterr().err
    assert (out / "enhanced.jsonl").read_text() == ""


def test_enhance_unknown_template_usage_error(workspace, capsys):
    tmp, _, _ = workspace
    with pytest.raises(SystemExit) as exc:
        main(["enhance", "--config", str(tmp / "run.ini")]
             + base_args(tmp, ["--template", "definition"]))
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert "meaning_of" in err and "what_is" in err


# --- parser surface ----------------------------------------------------------

def test_subcommand_help_mentions_flags(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["qa", "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for flag in ("--qa-template", "--strategy", "--shots", "--selection",
                 "--seed", "--captioner", "--offline", "--jobs"):
        assert flag in out
    with pytest.raises(SystemExit):
        main(["retrieve", "--help"])
    out = capsys.readouterr().out
    for flag in ("--measure", "--penalty", "--lambda", "--enhanced"):
        assert flag in out


def test_no_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
