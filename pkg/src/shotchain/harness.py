"""Batch evaluation: datasets, the benchmark runner, and trace files.

Dataset format: one JSON object per line with fields ``id``, ``video``
(bundle directory, resolved against the dataset's directory unless a
video root is given), ``question``, ``options`` (strings like
"A. ..."), optional ``answer`` (gold letter) and optional ``subtitles``
(inline text, or a path relative to the dataset file).

The trace is one JSON object per question holding the config snapshot,
every prompt/response exchange, shot-set and evidence snapshots, the
verdict, and timings; it carries enough to re-score a run from scratch.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .core import QaItem
from .errors import DatasetError, InvalidInputError, ShotChainError
from .frames import FEATURES_NAME, VideoSource
from .orchestrator import AgentConfig, Providers, QuestionRun, run_question

log = logging.getLogger(__name__)

PATHS = ("global", "chain", "vote", "failed")

_OPTION_RE = re.compile(r"^\s*([A-E])[.)]\s*(.*?)\s*$", re.DOTALL)


def parse_option_string(raw: str) -> tuple[str, str]:
    match = _OPTION_RE.match(raw)
    if match is None:
        raise DatasetError(f"option {raw!r} is not of the form 'A. text'")
    return match.group(1), match.group(2)


def _load_subtitles(value: str, base: Path) -> str:
    candidate = base / value
    if len(value) < 4096 and candidate.is_file():
        return candidate.read_text(encoding="utf-8")
    return value


@dataclass(frozen=True, slots=True)
class Dataset:
    name: str
    items: tuple[QaItem, ...]
    root: Path


def load_dataset(path: str | Path) -> Dataset:
    """Parse a JSONL question file, failing with the offending line
    number on any malformed record."""
    path = Path(path)
    items: list[QaItem] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path.name} line {lineno}: bad JSON ({exc})") from exc
            if not isinstance(record, dict):
                raise DatasetError(f"{path.name} line {lineno}: not an object")
            try:
                options = tuple(parse_option_string(o) for o in record.get("options", []))
                subtitles = record.get("subtitles")
                if subtitles is not None:
                    subtitles = _load_subtitles(str(subtitles), path.parent)
                item = QaItem(
                    id=str(record.get("id", "")),
                    video=str(record.get("video", "")),
                    question=str(record.get("question", "")),
                    options=options,
                    gold=record.get("answer"),
                    subtitles=subtitles,
                )
            except (ShotChainError, TypeError) as exc:
                raise DatasetError(f"{path.name} line {lineno}: {exc}") from exc
            if item.id in seen:
                raise DatasetError(
                    f"{path.name} line {lineno}: duplicate id {item.id!r}"
                )
            seen.add(item.id)
            items.append(item)
    if not items:
        raise DatasetError(f"{path.name}: no questions")
    return Dataset(name=path.stem, items=tuple(items), root=path.parent)


@dataclass(frozen=True, slots=True)
class ItemResult:
    qa_id: str
    video: str
    gold: str | None
    answer: str | None
    correct: bool
    path: str
    rounds: int
    frames_used: int
    elapsed_s: float
    error: str | None = None


@dataclass(frozen=True, slots=True)
class RunReport:
    """Aggregate numbers for one benchmark run. ``paths`` counts every
    question exactly once, failures included, so the counts always sum
    to ``total``."""

    total: int
    correct: int
    accuracy: float
    paths: dict[str, int]
    mean_frames: float
    mean_rounds: float
    mean_seconds: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def format_table(self) -> str:
        lines = [
            f"questions      {self.total}",
            f"correct        {self.correct}",
            f"accuracy       {self.accuracy:.4f}",
            "paths          "
            + "  ".join(f"{name}={self.paths[name]}" for name in PATHS),
            f"mean frames    {self.mean_frames:.2f}",
            f"mean rounds    {self.mean_rounds:.2f}",
            f"mean seconds   {self.mean_seconds:.3f}",
        ]
        return "\n".join(lines)


@dataclass(frozen=True, slots=True)
class BenchmarkResult:
    report: RunReport
    results: tuple[ItemResult, ...]


def _mean(xs: list[float]) -> float:
    return sum(xs) / len(xs) if xs else 0.0


def _summarize(results: list[ItemResult]) -> RunReport:
    total = len(results)
    correct = sum(1 for r in results if r.correct)
    paths = {name: 0 for name in PATHS}
    for r in results:
        paths[r.path] += 1
    answered = [r for r in results if r.path != "failed"]
    return RunReport(
        total=total,
        correct=correct,
        accuracy=correct / total if total else 0.0,
        paths=paths,
        mean_frames=_mean([r.frames_used for r in answered]),
        mean_rounds=_mean([r.rounds for r in answered]),
        mean_seconds=_mean([r.elapsed_s for r in results]),
    )


def _result_of(item: QaItem, run: QuestionRun) -> ItemResult:
    if run.verdict is None:
        return ItemResult(
            qa_id=item.id,
            video=item.video,
            gold=item.gold,
            answer=None,
            correct=False,
            path="failed",
            rounds=0,
            frames_used=0,
            elapsed_s=run.elapsed_s,
            error=run.error,
        )
    v = run.verdict
    return ItemResult(
        qa_id=item.id,
        video=item.video,
        gold=item.gold,
        answer=v.answer,
        correct=item.gold is not None and v.answer == item.gold,
        path=v.path,
        rounds=len(v.rounds),
        frames_used=v.frames_used,
        elapsed_s=run.elapsed_s,
        error=None,
    )


def trace_record(item: QaItem, run: QuestionRun, cfg: AgentConfig) -> dict:
    verdict = None
    if run.verdict is not None:
        verdict = {
            "answer": run.verdict.answer,
            "path": run.verdict.path,
            "frames_used": run.verdict.frames_used,
            "rounds": [dataclasses.asdict(rec) for rec in run.verdict.rounds],
        }
    return {
        "id": item.id,
        "video": item.video,
        "gold": item.gold,
        "config": dataclasses.asdict(cfg),
        "verdict": verdict,
        "error": run.error,
        "elapsed_s": run.elapsed_s,
        "events": run.events,
    }


def prepare_item(item: QaItem, use_subtitles: bool, subtitle_chars: int) -> QaItem:
    """Apply the run's subtitle policy to one question."""
    if not use_subtitles:
        return dataclasses.replace(item, subtitles=None)
    if item.subtitles is not None and len(item.subtitles) > subtitle_chars:
        return dataclasses.replace(item, subtitles=item.subtitles[:subtitle_chars])
    return item


def resolve_video(item: QaItem, root: Path) -> VideoSource:
    video_path = Path(item.video)
    if not video_path.is_absolute():
        video_path = root / video_path
    return VideoSource.from_dir(video_path)


def run_benchmark(
    dataset: Dataset,
    cfg: AgentConfig,
    providers: Providers,
    parallelism: int = 1,
    video_root: Path | None = None,
    use_subtitles: bool = True,
    subtitle_chars: int = 4000,
    trace_path: Path | None = None,
) -> BenchmarkResult:
    """Run every question, score against gold letters, aggregate.

    Per-question failures are recorded and counted as incorrect, never
    fatal. With scripted providers and a fixed seed the report is
    identical on every run regardless of parallelism.
    """
    if parallelism < 1:
        raise InvalidInputError("parallelism must be >= 1")
    root = video_root if video_root is not None else dataset.root
    prepared = [
        prepare_item(item, use_subtitles, subtitle_chars) for item in dataset.items
    ]
    missing = []
    for item in prepared:
        feature_file = Path(item.video)
        if not feature_file.is_absolute():
            feature_file = root / feature_file
        if not (feature_file / FEATURES_NAME).is_file():
            missing.append(item.video)
    if missing:
        raise DatasetError(
            "missing feature files for: " + ", ".join(sorted(set(missing)))
        )

    if trace_path is not None:
        trace_path.parent.mkdir(parents=True, exist_ok=True)
    trace_handle = trace_path.open("w", encoding="utf-8") if trace_path else None
    trace_lock = threading.Lock()

    def work(item: QaItem) -> QuestionRun:
        run = run_question(resolve_video(item, root), item, cfg, providers)
        if trace_handle is not None:
            line = json.dumps(trace_record(item, run, cfg), ensure_ascii=False)
            with trace_lock:
                trace_handle.write(line + "\n")
                trace_handle.flush()
        return run

    started = time.perf_counter()
    try:
        if parallelism == 1:
            runs = [work(item) for item in prepared]
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                runs = list(pool.map(work, prepared))
    finally:
        if trace_handle is not None:
            trace_handle.close()
    results = [_result_of(item, run) for item, run in zip(prepared, runs)]
    report = _summarize(results)
    log.info(
        "benchmark %s: %d questions in %.2fs, accuracy %.4f",
        dataset.name,
        report.total,
        time.perf_counter() - started,
        report.accuracy,
    )
    return BenchmarkResult(report=report, results=tuple(results))


def rescore_trace(path: str | Path) -> dict:
    """Recompute accuracy and path counts from a trace file alone."""
    total = 0
    correct = 0
    paths = {name: 0 for name in PATHS}
    with Path(path).open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"trace line {lineno}: bad JSON ({exc})") from exc
            total += 1
            verdict = record.get("verdict")
            if verdict is None:
                paths["failed"] += 1
                continue
            paths[verdict["path"]] += 1
            if record.get("gold") is not None and verdict["answer"] == record["gold"]:
                correct += 1
    return {
        "total": total,
        "correct": correct,
        "accuracy": correct / total if total else 0.0,
        "paths": paths,
    }
