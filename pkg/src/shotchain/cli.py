"""Command-line surface: run, ask, segment, validate, trace."""

from __future__ import annotations

import dataclasses
import itertools
import json
import logging
import sys
from pathlib import Path

import click

from .core import QaItem, Shot
from .errors import ConfigError, FeatureFileError, ShotChainError
from .frames import VideoSource, read_feature_file, validate_video_source
from .harness import (
    load_dataset,
    parse_option_string,
    rescore_trace,
    run_benchmark,
    trace_record,
)
from .orchestrator import AgentConfig, Providers, run_question
from .partition import partition_shot
from .providers import (
    HttpChatProvider,
    HttpTextEmbedder,
    ProviderConfig,
    ScriptedProvider,
)
from .report import write_run_outputs

log = logging.getLogger(__name__)

_CONFIG_FIELDS = {f.name for f in dataclasses.fields(AgentConfig)}


def _build_config(config_path: str | None, overrides: dict) -> AgentConfig:
    values: dict = {}
    if config_path:
        raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
        unknown = set(raw) - _CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return AgentConfig(**values)


def _build_providers(
    scripted: str | None,
    chat_url: str | None,
    embed_url: str | None,
    model: str,
    api_key_env: str | None,
    timeout: float,
    retries: int,
) -> Providers:
    if scripted:
        provider = ScriptedProvider.from_file(scripted)
        return Providers.scripted(provider)
    if not chat_url or not embed_url:
        raise ConfigError("need --scripted, or both --chat-url and --embed-url")
    chat_cfg = ProviderConfig(
        base_url=chat_url,
        model=model,
        api_key_env=api_key_env,
        timeout=timeout,
        retries=retries,
    )
    embed_cfg = ProviderConfig(base_url=embed_url, timeout=timeout, retries=retries)
    return Providers(
        chat=HttpChatProvider(chat_cfg), embedder=HttpTextEmbedder(embed_cfg)
    )


def _agent_options(command):
    for name in sorted(_CONFIG_FIELDS):
        flag = "--" + name.replace("_", "-")
        kind = float if name == "sim_threshold" else int
        command = click.option(flag, type=kind, default=None, help=f"override {name}")(
            command
        )
    return command


def _provider_options(command):
    decorators = [
        click.option("--scripted", type=click.Path(exists=True), default=None,
                     help="scripted provider rules file (JSON)"),
        click.option("--chat-url", default=None, help="OpenAI-compatible base URL"),
        click.option("--embed-url", default=None, help="embedding service base URL"),
        click.option("--model", default="", help="chat model identifier"),
        click.option("--api-key-env", default=None,
                     help="environment variable holding the chat API key"),
        click.option("--timeout", type=float, default=60.0, show_default=True),
        click.option("--retries", type=int, default=2, show_default=True),
    ]
    for dec in reversed(decorators):
        command = dec(command)
    return command


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="debug logging")
def main(verbose: bool) -> None:
    """Chain-of-shot long-video question answering."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@main.command()
@click.argument("dataset", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file of agent settings; flags override it")
@click.option("--parallelism", type=int, default=1, show_default=True)
@click.option("--video-root", type=click.Path(exists=True, file_okay=False), default=None,
              help="directory video paths resolve against")
@click.option("--report-dir", type=click.Path(file_okay=False), default=None,
              help="write report.json, results.csv, and figures here")
@click.option("--trace", "trace_path", type=click.Path(), default=None,
              help="write a JSONL trace of every question")
@click.option("--no-subtitles", is_flag=True, help="ignore dataset subtitles")
@click.option("--subtitle-chars", type=int, default=4000, show_default=True)
@click.option("--no-figures", is_flag=True, help="skip figure rendering")
@_provider_options
@_agent_options
def run(dataset, config_path, parallelism, video_root, report_dir, trace_path,
        no_subtitles, subtitle_chars, no_figures, scripted, chat_url, embed_url,
        model, api_key_env, timeout, retries, **overrides):
    """Evaluate a dataset and print the aggregate report."""
    try:
        cfg = _build_config(config_path, overrides)
        providers = _build_providers(
            scripted, chat_url, embed_url, model, api_key_env, timeout, retries
        )
        data = load_dataset(dataset)
        result = run_benchmark(
            data,
            cfg,
            providers,
            parallelism=parallelism,
            video_root=Path(video_root) if video_root else None,
            use_subtitles=not no_subtitles,
            subtitle_chars=subtitle_chars,
            trace_path=Path(trace_path) if trace_path else None,
        )
    except ShotChainError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(result.report.format_table())
    if report_dir:
        for path in write_run_outputs(report_dir, result, figures=not no_figures):
            click.echo(f"wrote {path}")


@main.command()
@click.option("--video", "video_dir", type=click.Path(exists=True, file_okay=False),
              required=True, help="video bundle directory")
@click.option("--question", required=True)
@click.option("--option", "options", multiple=True, required=True,
              help="repeatable: 'A. first choice'")
@click.option("--subtitles", default=None)
@click.option("--gold", default=None, help="gold letter, for scoring the trace")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--trace", "trace_path", type=click.Path(), default=None)
@_provider_options
@_agent_options
def ask(video_dir, question, options, subtitles, gold, config_path, trace_path,
        scripted, chat_url, embed_url, model, api_key_env, timeout, retries,
        **overrides):
    """Answer one question about one video bundle."""
    try:
        cfg = _build_config(config_path, overrides)
        providers = _build_providers(
            scripted, chat_url, embed_url, model, api_key_env, timeout, retries
        )
        qa = QaItem(
            id="cli",
            video=video_dir,
            question=question,
            options=tuple(parse_option_string(o) for o in options),
            gold=gold,
            subtitles=subtitles,
        )
        source = VideoSource.from_dir(video_dir)
    except ShotChainError as exc:
        raise click.ClickException(str(exc)) from exc
    run_result = run_question(source, qa, cfg, providers)
    if trace_path:
        Path(trace_path).write_text(
            json.dumps(trace_record(qa, run_result, cfg), ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    if run_result.verdict is None:
        raise click.ClickException(f"question failed: {run_result.error}")
    v = run_result.verdict
    click.echo(f"answer  {v.answer}")
    click.echo(f"path    {v.path}")
    click.echo(f"rounds  {len(v.rounds)}")
    click.echo(f"frames  {v.frames_used}")
    if gold:
        click.echo(f"correct {v.answer == gold}")


@main.command()
@click.argument("features", type=click.Path(exists=True, dir_okay=False))
@click.option("--k", type=int, default=6, show_default=True, help="cluster count")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--start", type=int, default=0, show_default=True)
@click.option("--end", type=int, default=None, help="last frame, default video end")
@click.option("--plot", "plot_path", type=click.Path(), default=None,
              help="save a deviation plot with subshot cuts")
def segment(features, k, seed, start, end, plot_path):
    """Partition a feature file into subshots and print them as TSV."""
    try:
        matrix = read_feature_file(features)
        last = matrix.count - 1 if end is None else end
        shot = Shot(id=0, start=start, end=last)
        subshots = partition_shot(matrix, shot, k, seed, itertools.count(1))
    except ShotChainError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo("id\tstart\tend\tlength")
    for sub in subshots:
        click.echo(f"{sub.id}\t{sub.start}\t{sub.end}\t{sub.length}")
    if plot_path:
        _plot_segmentation(matrix, shot, subshots, Path(plot_path))
        click.echo(f"wrote {plot_path}")


def _plot_segmentation(matrix, shot, subshots, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    rows = matrix.rows[shot.start : shot.end + 1].astype(np.float64)
    drift = np.linalg.norm(rows - rows.mean(axis=0), axis=1)
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(range(shot.start, shot.end + 1), drift, color="#4878cf", lw=1.2)
    for sub in subshots[1:]:
        ax.axvline(sub.start - 0.5, color="#d65f5f", linestyle="--", lw=1)
    ax.set_xlabel("frame")
    ax.set_ylabel("feature drift")
    ax.set_title(f"{len(subshots)} subshots")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


@main.command()
@click.argument("paths", nargs=-1, required=True, type=click.Path(exists=True))
def validate(paths):
    """Check datasets, feature files, or video bundles. Exit 1 on any
    violation."""
    failures = 0
    for raw in paths:
        path = Path(raw)
        try:
            if path.is_dir():
                report = validate_video_source(VideoSource.from_dir(path))
                if report.ok:
                    click.echo(f"ok    {path} (bundle)")
                else:
                    failures += 1
                    for violation in report.violations:
                        click.echo(f"FAIL  {path}: {violation}")
            elif path.suffix == ".vcf1":
                matrix = read_feature_file(path)
                click.echo(f"ok    {path} ({matrix.count} x {matrix.dim})")
            else:
                data = load_dataset(path)
                click.echo(f"ok    {path} ({len(data.items)} questions)")
        except (ShotChainError, FeatureFileError) as exc:
            failures += 1
            click.echo(f"FAIL  {path}: {exc}")
    if failures:
        sys.exit(1)


@main.command("trace")
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--rescore", is_flag=True, help="recompute accuracy from the trace")
def trace_cmd(trace_file, rescore):
    """Inspect a trace: per-question summary, or recomputed scores."""
    if rescore:
        click.echo(json.dumps(rescore_trace(trace_file), indent=2))
        return
    with open(trace_file, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            verdict = record.get("verdict")
            if verdict is None:
                click.echo(f"{record['id']}: FAILED ({record.get('error')})")
                continue
            mark = ""
            if record.get("gold"):
                mark = " ✓" if verdict["answer"] == record["gold"] else " ✗"
            click.echo(
                f"{record['id']}: {verdict['answer']}{mark} "
                f"path={verdict['path']} rounds={len(verdict['rounds'])} "
                f"frames={verdict['frames_used']}"
            )


if __name__ == "__main__":
    main()
