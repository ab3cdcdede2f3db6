"""Benchmark output files: JSON report, per-question CSV, figures."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import PATHS, BenchmarkResult

log = logging.getLogger(__name__)

_PATH_COLORS = {
    "global": "#4878cf",
    "chain": "#6acc65",
    "vote": "#d65f5f",
    "failed": "#8b8b8b",
}

CSV_COLUMNS = (
    "id",
    "video",
    "gold",
    "answer",
    "correct",
    "path",
    "rounds",
    "frames_used",
    "elapsed_s",
    "error",
)


def write_results_csv(path: Path, result: BenchmarkResult) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for r in result.results:
            writer.writerow(
                [
                    r.qa_id,
                    r.video,
                    r.gold or "",
                    r.answer or "",
                    int(r.correct),
                    r.path,
                    r.rounds,
                    r.frames_used,
                    f"{r.elapsed_s:.4f}",
                    r.error or "",
                ]
            )


def _save(fig: plt.Figure, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _paths_figure(result: BenchmarkResult, path: Path) -> None:
    counts = result.report.paths
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(PATHS, [counts[p] for p in PATHS], color=[_PATH_COLORS[p] for p in PATHS])
    ax.set_ylabel("questions")
    ax.set_title("Answer path per question")
    _save(fig, path)


def _rounds_figure(result: BenchmarkResult, path: Path) -> None:
    rounds = [r.rounds for r in result.results if r.path != "failed"]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    top = max(rounds, default=1)
    ax.hist(rounds, bins=[b - 0.5 for b in range(top + 2)], color="#6acc65", rwidth=0.8)
    ax.set_xlabel("rounds")
    ax.set_ylabel("questions")
    ax.set_title("Refinement rounds per question")
    ax.set_xticks(range(top + 1))
    _save(fig, path)


def _frames_figure(result: BenchmarkResult, path: Path) -> None:
    frames = [r.frames_used for r in result.results if r.path != "failed"]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(frames, bins=min(20, max(len(set(frames)), 1)), color="#4878cf")
    ax.axvline(
        result.report.mean_frames,
        color="#d65f5f",
        linestyle="--",
        label=f"mean {result.report.mean_frames:.1f}",
    )
    ax.set_xlabel("unique frames shown")
    ax.set_ylabel("questions")
    ax.set_title("Frame usage per question")
    ax.legend()
    _save(fig, path)


def write_run_outputs(
    out_dir: str | Path, result: BenchmarkResult, figures: bool = True
) -> list[Path]:
    """Write report.json, results.csv, and the figures into out_dir.
    Returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    report_path = out_dir / "report.json"
    report_path.write_text(
        json.dumps(result.report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    written.append(report_path)

    csv_path = out_dir / "results.csv"
    write_results_csv(csv_path, result)
    written.append(csv_path)

    if figures:
        for name, draw in (
            ("paths.png", _paths_figure),
            ("rounds.png", _rounds_figure),
            ("frames.png", _frames_figure),
        ):
            fig_path = out_dir / name
            draw(result, fig_path)
            written.append(fig_path)
    log.info("wrote %d files to %s", len(written), out_dir)
    return written
