"""Frame sampling, evidence merging, and on-disk video bundles.

A video bundle is a directory holding ``features.vcf1`` (one feature row
per second of video) and optionally ``frames/frame_NNNNNN.jpg`` images,
one per second, named by 0-based index. The engine itself only needs
the features; frame images are read just before a model call that wants
pixels.

Feature file layout (little-endian): magic ``VCF1``, u32 dim, u32 count,
f32 fps, then count*dim f32 values row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import FeatureMatrix, FrameSet, Shot
from .errors import (
    BadMagicError,
    DimMismatchError,
    FeatureFileError,
    InvalidInputError,
    MissingFrameError,
    TruncatedFileError,
)

MAGIC = b"VCF1"
_HEADER = struct.Struct("<IIf")

FRAME_NAME = "frame_{:06d}.jpg"
FEATURES_NAME = "features.vcf1"


def sample_uniform(shot: Shot, n: int) -> list[int]:
    """Up to n frame indices spread evenly across the shot.

    Each index is the center of one of n equal bins over the shot, so
    resampling with the same n is stable. Shots with <= n frames return
    every frame.
    """
    if n < 1:
        raise InvalidInputError(f"cannot sample {n} frames")
    length = shot.length
    if n >= length:
        return list(shot.frames())
    return [shot.start + ((2 * i + 1) * length) // (2 * n) for i in range(n)]


def merge_with_diversity(
    existing: FrameSet, new: Iterable[int], source_shot: Shot
) -> FrameSet:
    """Union new frames into the evidence set, nudging duplicates.

    A new index already present is replaced by the nearest unused index
    inside the source shot (preferring the earlier side on ties); if the
    whole shot is already covered the duplicate is dropped. Keeps every
    model call from wasting budget on repeated frames.
    """
    used = set(existing.indices)
    for idx in new:
        idx = int(idx)
        if not source_shot.contains(idx):
            raise InvalidInputError(
                f"frame {idx} outside source shot [{source_shot.start}, {source_shot.end}]"
            )
        if idx not in used:
            used.add(idx)
            continue
        span = max(idx - source_shot.start, source_shot.end - idx)
        for dist in range(1, span + 1):
            lo = idx - dist
            hi = idx + dist
            if lo >= source_shot.start and lo not in used:
                used.add(lo)
                break
            if hi <= source_shot.end and hi not in used:
                used.add(hi)
                break
    return FrameSet.of(used)


def write_feature_file(path: str | Path, features: FeatureMatrix) -> None:
    payload = features.rows.astype("<f4").tobytes()
    header = MAGIC + _HEADER.pack(features.dim, features.count, features.fps)
    Path(path).write_bytes(header + payload)


def read_feature_file(path: str | Path) -> FeatureMatrix:
    """Decode a feature file, or raise a FeatureFileError subclass.

    Never crashes on garbage input: any undersized, oversized, or
    corrupt file maps to a typed error naming the file.
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: not a VCF1 feature file")
    if len(blob) < len(MAGIC) + _HEADER.size:
        raise TruncatedFileError(f"{path}: header cut short")
    dim, count, fps = _HEADER.unpack_from(blob, len(MAGIC))
    if dim == 0 or count == 0:
        raise DimMismatchError(f"{path}: header declares {count} rows of dim {dim}")
    expected = len(MAGIC) + _HEADER.size + 4 * dim * count
    if len(blob) < expected:
        raise TruncatedFileError(
            f"{path}: expected {expected} bytes for {count} rows of dim {dim}, "
            f"got {len(blob)}"
        )
    if len(blob) > expected:
        raise FeatureFileError(f"{path}: {len(blob) - expected} trailing bytes")
    if not (np.isfinite(fps) and fps > 0):
        raise FeatureFileError(f"{path}: bad fps {fps}")
    rows = np.frombuffer(blob, dtype="<f4", offset=len(MAGIC) + _HEADER.size)
    rows = rows.reshape(count, dim)
    if not np.all(np.isfinite(rows)):
        raise FeatureFileError(f"{path}: payload contains non-finite values")
    return FeatureMatrix(rows=rows, fps=fps)


@dataclass(frozen=True, slots=True)
class FramePayload:
    """One frame image ready to attach to a model request."""

    index: int
    data: bytes
    mime: str = "image/jpeg"


@dataclass(frozen=True, slots=True)
class VideoSource:
    """A video bundle on disk. ``duration`` is in whole seconds and
    always equals the feature row count (features are 1 fps)."""

    id: str
    feature_file: Path
    frame_dir: Path | None
    duration: int

    @classmethod
    def from_dir(cls, path: str | Path) -> "VideoSource":
        path = Path(path)
        feature_file = path / FEATURES_NAME
        if not feature_file.is_file():
            raise InvalidInputError(f"{path}: no {FEATURES_NAME} present")
        features = read_feature_file(feature_file)
        frame_dir = path / "frames"
        return cls(
            id=path.name,
            feature_file=feature_file,
            frame_dir=frame_dir if frame_dir.is_dir() else None,
            duration=features.count,
        )

    def features(self) -> FeatureMatrix:
        return read_feature_file(self.feature_file)


@dataclass(frozen=True, slots=True)
class SourceReport:
    ok: bool
    violations: tuple[str, ...] = ()


def validate_video_source(src: VideoSource) -> SourceReport:
    """Check the bundle is internally consistent: decodable features,
    row count matching the duration, and one image per second when a
    frame directory exists."""
    violations: list[str] = []
    try:
        features = read_feature_file(src.feature_file)
    except FeatureFileError as exc:
        return SourceReport(ok=False, violations=(str(exc),))
    if features.count != src.duration:
        violations.append(
            f"{src.id}: duration {src.duration} but {features.count} feature rows"
        )
    if src.frame_dir is not None:
        missing = [
            t
            for t in range(src.duration)
            if not (src.frame_dir / FRAME_NAME.format(t)).is_file()
        ]
        if missing:
            head = ", ".join(str(t) for t in missing[:5])
            violations.append(
                f"{src.id}: {len(missing)} frame images missing (first: {head})"
            )
    return SourceReport(ok=not violations, violations=tuple(violations))


def load_frame_images(src: VideoSource, indices: Sequence[int]) -> list[FramePayload]:
    """Read the requested frame images, ascending and deduplicated."""
    if src.frame_dir is None:
        raise MissingFrameError(f"{src.id}: bundle has no frame images")
    payloads: list[FramePayload] = []
    for idx in sorted(set(int(i) for i in indices)):
        if not 0 <= idx < src.duration:
            raise MissingFrameError(
                f"{src.id}: frame {idx} outside video of {src.duration}s"
            )
        path = src.frame_dir / FRAME_NAME.format(idx)
        if not path.is_file():
            raise MissingFrameError(f"{src.id}: missing image {path.name}")
        payloads.append(FramePayload(index=idx, data=path.read_bytes()))
    return payloads
