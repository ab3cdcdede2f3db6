import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from shotchain.cli import main
from shotchain.core import QaItem
from shotchain.errors import DatasetError, InvalidInputError
from shotchain.harness import (
    RunReport,
    load_dataset,
    parse_option_string,
    prepare_item,
    rescore_trace,
    run_benchmark,
)
from shotchain.orchestrator import AgentConfig
from shotchain.providers import Providers, ScriptedProvider
from shotchain.report import write_run_outputs

from conftest import build_bundle, make_features


def write_jsonl(path, records):
    path.write_text(
        "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records),
        encoding="utf-8",
    )


BENCH_RULES = {
    "rules": [
        {"kind": "glance_decision", "contains": "first", "response": "Yes"},
        {"kind": "glance_decision", "response": "No"},
        {"kind": "answer", "round": 0, "response": "A"},
        {"kind": "answer", "contains": "second", "response": "B"},
        {"kind": "answer", "contains": "third", "response": "zzz"},
        {"kind": "key_info_initial", "response": "look for the object"},
        {"kind": "key_info_update", "response": "look closer"},
        {"kind": "reason", "response": "visible in the frames"},
        {"kind": "confidence", "response": "{'confidence': '3'}"},
    ],
    "default_embedding": [1.0, 0.0],
}


def bench_records():
    return [
        {
            "id": "q1",
            "video": "vid1",
            "question": "What happens first?",
            "options": ["A. a greeting", "B. a fight"],
            "answer": "A",
        },
        {
            "id": "q2",
            "video": "vid2",
            "question": "What happens second?",
            "options": ["A. rain", "B. snow", "C. sun"],
            "answer": "B",
            "subtitles": "subs.txt",
        },
        {
            "id": "q3",
            "video": "vid2",
            "question": "What happens third?",
            "options": ["A. yes", "B. no"],
            "answer": "A",
        },
    ]


@pytest.fixture
def bench_dir(tmp_path):
    build_bundle(tmp_path, "vid1", make_features(40, 2, seed=1))
    build_bundle(tmp_path, "vid2", make_features(50, 2, seed=2))
    (tmp_path / "subs.txt").write_text("hello from the file", encoding="utf-8")
    write_jsonl(tmp_path / "bench.jsonl", bench_records())
    (tmp_path / "rules.json").write_text(json.dumps(BENCH_RULES), encoding="utf-8")
    return tmp_path


def bench_providers():
    return Providers.scripted(ScriptedProvider.from_dict(BENCH_RULES))


# ---------------------------------------------------------------- datasets

def test_parse_option_string_forms():
    assert parse_option_string("A. a cup") == ("A", "a cup")
    assert parse_option_string(" B)  two words ") == ("B", "two words")
    with pytest.raises(DatasetError):
        parse_option_string("1. numbered")
    with pytest.raises(DatasetError):
        parse_option_string("no letter")


def test_load_dataset_happy_path(bench_dir):
    data = load_dataset(bench_dir / "bench.jsonl")
    assert data.name == "bench"
    assert len(data.items) == 3
    assert data.items[0].options == (("A", "a greeting"), ("B", "a fight"))
    assert data.items[0].gold == "A"
    # subtitle value naming an existing file loads the file text
    assert data.items[1].subtitles == "hello from the file"
    # subtitle value that is not a file stays literal
    write_jsonl(
        bench_dir / "inline.jsonl",
        [{**bench_records()[0], "subtitles": "spoken words"}],
    )
    inline = load_dataset(bench_dir / "inline.jsonl")
    assert inline.items[0].subtitles == "spoken words"


def test_load_dataset_skips_blank_lines(tmp_path):
    path = tmp_path / "d.jsonl"
    record = json.dumps(bench_records()[0])
    path.write_text(f"\n{record}\n\n", encoding="utf-8")
    assert len(load_dataset(path).items) == 1


def test_load_dataset_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(
        json.dumps(bench_records()[0]) + "\nnot json\n", encoding="utf-8"
    )
    with pytest.raises(DatasetError, match="line 2"):
        load_dataset(path)

    path.write_text('[1, 2]\n', encoding="utf-8")
    with pytest.raises(DatasetError, match="line 1"):
        load_dataset(path)

    bad_options = dict(bench_records()[0], options=["A. one"])
    path.write_text(json.dumps(bad_options) + "\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="line 1"):
        load_dataset(path)


def test_load_dataset_rejects_duplicates_and_empty(tmp_path):
    path = tmp_path / "d.jsonl"
    record = json.dumps(bench_records()[0])
    path.write_text(record + "\n" + record + "\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="duplicate"):
        load_dataset(path)

    path.write_text("\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="no questions"):
        load_dataset(path)


def test_prepare_item_subtitle_policy():
    item = QaItem(
        id="x",
        video="v",
        question="q",
        options=(("A", "1"), ("B", "2")),
        subtitles="abcdef",
    )
    assert prepare_item(item, use_subtitles=False, subtitle_chars=100).subtitles is None
    assert prepare_item(item, use_subtitles=True, subtitle_chars=3).subtitles == "abc"
    assert prepare_item(item, use_subtitles=True, subtitle_chars=100).subtitles == "abcdef"


# ---------------------------------------------------------------- benchmark

def test_run_benchmark_full_pass(bench_dir):
    data = load_dataset(bench_dir / "bench.jsonl")
    result = run_benchmark(data, AgentConfig(), bench_providers())
    report = result.report
    assert report.total == 3
    assert report.correct == 2
    assert report.accuracy == pytest.approx(2 / 3)
    assert report.paths == {"global": 1, "chain": 1, "vote": 0, "failed": 1}
    assert sum(report.paths.values()) == report.total
    assert report.mean_frames > 0
    assert report.mean_rounds == pytest.approx(0.5)  # (0 + 1) / 2 answered

    by_id = {r.qa_id: r for r in result.results}
    assert by_id["q1"].path == "global" and by_id["q1"].correct
    assert by_id["q2"].path == "chain" and by_id["q2"].correct
    assert by_id["q3"].path == "failed" and not by_id["q3"].correct
    assert by_id["q3"].answer is None
    assert "UnparseableAnswerError" in by_id["q3"].error


def test_run_benchmark_is_deterministic_across_parallelism(bench_dir):
    data = load_dataset(bench_dir / "bench.jsonl")
    serial = run_benchmark(data, AgentConfig(), bench_providers())
    threaded = run_benchmark(data, AgentConfig(), bench_providers(), parallelism=3)
    strip = lambda rs: [
        (r.qa_id, r.answer, r.correct, r.path, r.rounds, r.frames_used)
        for r in rs
    ]
    assert strip(serial.results) == strip(threaded.results)
    assert serial.report.paths == threaded.report.paths


def test_run_benchmark_rejects_missing_videos(bench_dir):
    records = bench_records()
    records[0]["video"] = "missing_vid"
    write_jsonl(bench_dir / "broken.jsonl", records)
    data = load_dataset(bench_dir / "broken.jsonl")
    with pytest.raises(DatasetError, match="missing_vid"):
        run_benchmark(data, AgentConfig(), bench_providers())


def test_run_benchmark_rejects_bad_parallelism(bench_dir):
    data = load_dataset(bench_dir / "bench.jsonl")
    with pytest.raises(InvalidInputError):
        run_benchmark(data, AgentConfig(), bench_providers(), parallelism=0)


def test_run_benchmark_respects_video_root(bench_dir, tmp_path):
    elsewhere = tmp_path / "elsewhere"
    elsewhere.mkdir()
    write_jsonl(elsewhere / "bench.jsonl", bench_records())
    data = load_dataset(elsewhere / "bench.jsonl")
    result = run_benchmark(
        data, AgentConfig(), bench_providers(), video_root=bench_dir
    )
    assert result.report.total == 3


def test_trace_round_trips_through_rescore(bench_dir):
    data = load_dataset(bench_dir / "bench.jsonl")
    trace_path = bench_dir / "trace.jsonl"
    result = run_benchmark(
        data, AgentConfig(), bench_providers(), trace_path=trace_path
    )
    lines = [json.loads(l) for l in trace_path.read_text().splitlines() if l.strip()]
    assert len(lines) == 3
    assert {l["id"] for l in lines} == {"q1", "q2", "q3"}
    for line in lines:
        assert line["config"]["max_rounds"] == 3
        assert isinstance(line["events"], list)
        assert any(e["type"] == "prompt" for e in line["events"])

    scored = rescore_trace(trace_path)
    assert scored["total"] == result.report.total
    assert scored["correct"] == result.report.correct
    assert scored["accuracy"] == pytest.approx(result.report.accuracy)
    assert scored["paths"] == result.report.paths


def test_trace_path_parent_directory_is_created(bench_dir):
    data = load_dataset(bench_dir / "bench.jsonl")
    trace_path = bench_dir / "out" / "nested" / "trace.jsonl"
    run_benchmark(data, AgentConfig(), bench_providers(), trace_path=trace_path)
    assert len(trace_path.read_text().splitlines()) == 3


def test_rescore_rejects_bad_trace(tmp_path):
    path = tmp_path / "t.jsonl"
    path.write_text("garbage\n", encoding="utf-8")
    with pytest.raises(DatasetError):
        rescore_trace(path)


def test_report_format_table():
    report = RunReport(
        total=4,
        correct=3,
        accuracy=0.75,
        paths={"global": 1, "chain": 2, "vote": 0, "failed": 1},
        mean_frames=20.5,
        mean_rounds=1.25,
        mean_seconds=0.01,
    )
    table = report.format_table()
    assert "questions      4" in table
    assert "accuracy       0.7500" in table
    assert "global=1  chain=2  vote=0  failed=1" in table


# ---------------------------------------------------------------- outputs

def test_write_run_outputs(bench_dir):
    data = load_dataset(bench_dir / "bench.jsonl")
    result = run_benchmark(data, AgentConfig(), bench_providers())
    out_dir = bench_dir / "out"
    written = write_run_outputs(out_dir, result)
    names = {p.name for p in written}
    assert names == {"report.json", "results.csv", "paths.png", "rounds.png", "frames.png"}

    report = json.loads((out_dir / "report.json").read_text())
    assert report == result.report.to_dict()

    csv_lines = (out_dir / "results.csv").read_text().strip().splitlines()
    assert len(csv_lines) == 4
    assert csv_lines[0].startswith("id,video,gold,answer,correct,path")
    for name in ("paths.png", "rounds.png", "frames.png"):
        assert (out_dir / name).stat().st_size > 0


def test_write_run_outputs_without_figures(bench_dir):
    data = load_dataset(bench_dir / "bench.jsonl")
    result = run_benchmark(data, AgentConfig(), bench_providers())
    written = write_run_outputs(bench_dir / "out2", result, figures=False)
    assert {p.name for p in written} == {"report.json", "results.csv"}


# ---------------------------------------------------------------- cli

def test_cli_run_prints_report_and_writes_outputs(bench_dir):
    runner = CliRunner()
    out = runner.invoke(
        main,
        [
            "run",
            str(bench_dir / "bench.jsonl"),
            "--scripted",
            str(bench_dir / "rules.json"),
            "--report-dir",
            str(bench_dir / "report"),
            "--trace",
            str(bench_dir / "cli_trace.jsonl"),
        ],
    )
    assert out.exit_code == 0, out.output
    assert "questions      3" in out.output
    assert "accuracy       0.6667" in out.output
    assert (bench_dir / "report" / "report.json").is_file()
    assert (bench_dir / "report" / "paths.png").is_file()
    assert (bench_dir / "cli_trace.jsonl").is_file()


def test_cli_run_requires_some_provider(bench_dir):
    runner = CliRunner()
    out = runner.invoke(main, ["run", str(bench_dir / "bench.jsonl")])
    assert out.exit_code != 0
    assert "--scripted" in out.output


def test_cli_run_rejects_unknown_config_keys(bench_dir):
    (bench_dir / "cfg.json").write_text('{"bogus_knob": 1}', encoding="utf-8")
    runner = CliRunner()
    out = runner.invoke(
        main,
        [
            "run",
            str(bench_dir / "bench.jsonl"),
            "--scripted",
            str(bench_dir / "rules.json"),
            "--config",
            str(bench_dir / "cfg.json"),
        ],
    )
    assert out.exit_code != 0
    assert "bogus_knob" in out.output


def test_cli_run_accepts_config_file_and_flag_overrides(bench_dir):
    (bench_dir / "cfg.json").write_text('{"max_rounds": 2}', encoding="utf-8")
    runner = CliRunner()
    out = runner.invoke(
        main,
        [
            "run",
            str(bench_dir / "bench.jsonl"),
            "--scripted",
            str(bench_dir / "rules.json"),
            "--config",
            str(bench_dir / "cfg.json"),
            "--seed",
            "7",
            "--trace",
            str(bench_dir / "t.jsonl"),
        ],
    )
    assert out.exit_code == 0, out.output
    line = json.loads((bench_dir / "t.jsonl").read_text().splitlines()[0])
    assert line["config"]["max_rounds"] == 2
    assert line["config"]["seed"] == 7


def test_cli_ask(bench_dir):
    runner = CliRunner()
    out = runner.invoke(
        main,
        [
            "ask",
            "--video",
            str(bench_dir / "vid2"),
            "--question",
            "What happens second?",
            "--option",
            "A. rain",
            "--option",
            "B. snow",
            "--gold",
            "B",
            "--scripted",
            str(bench_dir / "rules.json"),
        ],
    )
    assert out.exit_code == 0, out.output
    assert "answer  B" in out.output
    assert "path    chain" in out.output
    assert "correct True" in out.output


def test_cli_ask_failure_exits_nonzero(bench_dir):
    runner = CliRunner()
    out = runner.invoke(
        main,
        [
            "ask",
            "--video",
            str(bench_dir / "vid2"),
            "--question",
            "What happens third?",
            "--option",
            "A. yes",
            "--option",
            "B. no",
            "--scripted",
            str(bench_dir / "rules.json"),
        ],
    )
    assert out.exit_code != 0
    assert "failed" in out.output


def test_cli_segment(bench_dir):
    runner = CliRunner()
    out = runner.invoke(
        main,
        [
            "segment",
            str(bench_dir / "vid1" / "features.vcf1"),
            "--k",
            "3",
            "--plot",
            str(bench_dir / "seg.png"),
        ],
    )
    assert out.exit_code == 0, out.output
    lines = [l for l in out.output.splitlines() if l and not l.startswith("wrote")]
    assert lines[0] == "id\tstart\tend\tlength"
    rows = [l.split("\t") for l in lines[1:]]
    assert 1 <= len(rows) <= 3
    assert rows[0][1] == "0"
    assert rows[-1][2] == "39"
    assert (bench_dir / "seg.png").stat().st_size > 0


def test_cli_validate(bench_dir, tmp_path):
    runner = CliRunner()
    out = runner.invoke(
        main,
        [
            "validate",
            str(bench_dir / "vid1"),
            str(bench_dir / "vid1" / "features.vcf1"),
            str(bench_dir / "bench.jsonl"),
        ],
    )
    assert out.exit_code == 0, out.output
    assert out.output.count("ok    ") == 3

    bad = tmp_path / "bad.vcf1"
    bad.write_bytes(b"JUNKJUNK")
    out = runner.invoke(main, ["validate", str(bad)])
    assert out.exit_code == 1
    assert "FAIL" in out.output


def test_cli_trace_summary_and_rescore(bench_dir):
    runner = CliRunner()
    runner.invoke(
        main,
        [
            "run",
            str(bench_dir / "bench.jsonl"),
            "--scripted",
            str(bench_dir / "rules.json"),
            "--trace",
            str(bench_dir / "t.jsonl"),
        ],
    )
    out = runner.invoke(main, ["trace", str(bench_dir / "t.jsonl")])
    assert out.exit_code == 0, out.output
    assert "q1: A" in out.output
    assert "q3: FAILED" in out.output

    out = runner.invoke(main, ["trace", str(bench_dir / "t.jsonl"), "--rescore"])
    assert out.exit_code == 0
    scored = json.loads(out.output)
    assert scored["total"] == 3
    assert scored["correct"] == 2
