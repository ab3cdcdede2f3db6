"""Core data model: shots, features, questions, rounds, verdicts.

Frame indices are 0-based positions into a video sampled at one frame per
second, so an index doubles as a timestamp in whole seconds. A shot is the
closed interval [start, end] of such indices. All types here are immutable;
the iterative loop replaces values instead of mutating them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError

OPTION_LETTERS = "ABCDE"


@dataclass(frozen=True, slots=True)
class Shot:
    """A contiguous frame interval [start, end], both ends inclusive."""

    id: int
    start: int
    end: int
    depth: int = 0
    parent: int | None = None

    def __post_init__(self) -> None:
        if self.start < 0:
            raise InvalidInputError(f"shot {self.id}: start {self.start} < 0")
        if self.end < self.start:
            raise InvalidInputError(
                f"shot {self.id}: end {self.end} < start {self.start}"
            )
        if self.depth < 0:
            raise InvalidInputError(f"shot {self.id}: negative depth")

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def frames(self) -> range:
        return range(self.start, self.end + 1)

    def contains(self, frame: int) -> bool:
        return self.start <= frame <= self.end


@dataclass(frozen=True, slots=True)
class ShotSet:
    """The current partition of a video into shots.

    Shots are kept sorted by start. A valid set tiles [0, video_len) with
    no gaps and no overlaps; ``validate_shot_set`` checks that.
    """

    shots: tuple[Shot, ...]
    video_len: int

    def __post_init__(self) -> None:
        if self.video_len <= 0:
            raise InvalidInputError("video_len must be positive")
        if not self.shots:
            raise InvalidInputError("a shot set cannot be empty")
        ordered = tuple(sorted(self.shots, key=lambda s: (s.start, s.end)))
        object.__setattr__(self, "shots", ordered)
        seen: set[int] = set()
        for shot in ordered:
            if shot.id in seen:
                raise InvalidInputError(f"duplicate shot id {shot.id}")
            seen.add(shot.id)

    @classmethod
    def whole_video(cls, video_len: int, shot_id: int = 0) -> "ShotSet":
        return cls(shots=(Shot(id=shot_id, start=0, end=video_len - 1),), video_len=video_len)

    def find(self, shot_id: int) -> Shot:
        for shot in self.shots:
            if shot.id == shot_id:
                return shot
        raise InvalidInputError(f"no shot with id {shot_id}")

    def ids(self) -> tuple[int, ...]:
        return tuple(s.id for s in self.shots)


@dataclass(frozen=True, slots=True)
class ShotSetReport:
    ok: bool
    violations: tuple[str, ...] = ()


def validate_shot_set(shot_set: ShotSet) -> ShotSetReport:
    """Check that the shots tile [0, video_len) exactly.

    Returns a report listing every violation instead of stopping at the
    first one, so callers can show all problems at once.
    """
    violations: list[str] = []
    shots = shot_set.shots
    n = shot_set.video_len
    for shot in shots:
        if shot.end >= n:
            violations.append(
                f"shot {shot.id} ends at frame {shot.end}, past video end {n - 1}"
            )
    if shots[0].start > 0:
        violations.append(f"gap at frame 0 before shot {shots[0].id}")
    for prev, cur in zip(shots, shots[1:]):
        if cur.start <= prev.end:
            violations.append(
                f"overlap at frame {cur.start} between shots {prev.id} and {cur.id}"
            )
        elif cur.start > prev.end + 1:
            violations.append(
                f"gap at frame {prev.end + 1} between shots {prev.id} and {cur.id}"
            )
    if shots[-1].end < n - 1:
        violations.append(f"gap at frame {shots[-1].end + 1} after shot {shots[-1].id}")
    return ShotSetReport(ok=not violations, violations=tuple(violations))


class FeatureMatrix:
    """Per-frame feature vectors for one video, one row per frame.

    Rows are stored as float32 (the on-disk element type) and frozen
    against mutation. ``fps`` records the sampling rate the rows were
    extracted at; the engine assumes 1.0.
    """

    __slots__ = ("rows", "fps")

    def __init__(self, rows: np.ndarray | Sequence[Sequence[float]], fps: float = 1.0):
        arr = np.asarray(rows, dtype=np.float32)
        if arr.ndim != 2:
            raise InvalidInputError(f"feature rows must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError(f"feature rows must be non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("feature rows contain non-finite values")
        if not (np.isfinite(fps) and fps > 0):
            raise InvalidInputError(f"fps must be positive and finite, got {fps}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "rows", arr)
        object.__setattr__(self, "fps", float(fps))

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("FeatureMatrix is immutable")

    @property
    def count(self) -> int:
        return int(self.rows.shape[0])

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    def row(self, frame: int) -> np.ndarray:
        if not 0 <= frame < self.count:
            raise InvalidInputError(f"frame {frame} outside [0, {self.count})")
        return self.rows[frame]

    def rows_for(self, shot: Shot) -> np.ndarray:
        if shot.end >= self.count:
            raise InvalidInputError(
                f"shot {shot.id} ends at {shot.end} but only {self.count} rows exist"
            )
        return self.rows[shot.start : shot.end + 1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.fps == other.fps
            and self.rows.shape == other.rows.shape
            and bool(np.array_equal(self.rows, other.rows))
        )

    def __repr__(self) -> str:
        return f"FeatureMatrix(count={self.count}, dim={self.dim}, fps={self.fps})"


@dataclass(frozen=True, slots=True)
class QaItem:
    """One multiple-choice question about one video."""

    id: str
    video: str
    question: str
    options: tuple[tuple[str, str], ...]
    gold: str | None = None
    subtitles: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise InvalidInputError("question id must be non-empty")
        if not self.question.strip():
            raise InvalidInputError(f"question {self.id}: empty question text")
        letters = [letter for letter, _ in self.options]
        if not 2 <= len(letters) <= len(OPTION_LETTERS):
            raise InvalidInputError(
                f"question {self.id}: need 2..{len(OPTION_LETTERS)} options, got {len(letters)}"
            )
        expected = list(OPTION_LETTERS[: len(letters)])
        if letters != expected:
            raise InvalidInputError(
                f"question {self.id}: option letters {letters} are not contiguous from A"
            )
        if self.gold is not None and self.gold not in letters:
            raise InvalidInputError(
                f"question {self.id}: gold answer {self.gold!r} is not an option"
            )

    @property
    def letters(self) -> tuple[str, ...]:
        return tuple(letter for letter, _ in self.options)

    def options_block(self) -> str:
        return "\n".join(f"{letter}. {text}" for letter, text in self.options)


@dataclass(frozen=True, slots=True)
class FrameSet:
    """Strictly increasing frame indices accumulated as evidence."""

    indices: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for prev, cur in zip(self.indices, self.indices[1:]):
            if cur <= prev:
                raise InvalidInputError("frame indices must be strictly increasing")
        if self.indices and self.indices[0] < 0:
            raise InvalidInputError("frame indices must be non-negative")

    @classmethod
    def of(cls, indices: Iterable[int]) -> "FrameSet":
        return cls(indices=tuple(sorted(set(int(i) for i in indices))))

    def union(self, other: Iterable[int]) -> "FrameSet":
        return FrameSet.of(set(self.indices) | set(int(i) for i in other))

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, frame: int) -> bool:
        return frame in set(self.indices)

    def __iter__(self):
        return iter(self.indices)


@dataclass(frozen=True, slots=True)
class RoundRecord:
    """Everything one refinement round produced."""

    round: int
    key_info: str
    candidates: tuple[int, ...]
    new_frames: tuple[int, ...]
    answer: str
    reason: str
    confidence: int

    def __post_init__(self) -> None:
        if self.round < 1:
            raise InvalidInputError("rounds are numbered from 1")
        if self.confidence not in (1, 2, 3):
            raise InvalidInputError(f"confidence must be 1..3, got {self.confidence}")


@dataclass(frozen=True, slots=True)
class Verdict:
    """Final answer for one question plus how it was reached.

    ``path`` is "global" when the glance step answered from uniformly
    sampled frames, "chain" when a round hit the confidence bar, and
    "vote" when the round budget ran out and the answers were voted on.
    ``frames_used`` counts unique frame indices shown to the model across
    the whole run, the glance frames included.
    """

    answer: str
    path: str
    rounds: tuple[RoundRecord, ...] = ()
    frames_used: int = 0

    def __post_init__(self) -> None:
        if self.path not in ("global", "chain", "vote"):
            raise InvalidInputError(f"unknown verdict path {self.path!r}")
        if self.path == "global" and self.rounds:
            raise InvalidInputError("global verdicts carry no rounds")
        if self.path in ("chain", "vote") and not self.rounds:
            raise InvalidInputError(f"{self.path} verdicts need at least one round")
        if self.frames_used < 0:
            raise InvalidInputError("frames_used cannot be negative")
