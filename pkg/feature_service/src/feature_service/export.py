"""Video to frame-bundle export.

Samples a video at a fixed rate (1 frame per second by default), writes
the sampled frames as JPEGs, and writes their embeddings as a VCF1
feature file: magic ``VCF1``, then little-endian u32 dim, u32 count,
f32 fps, then count*dim float32 values row-major. Frame i of the output
corresponds to feature row i.
"""

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from .encoders import Encoder, load_encoder
from .errors import DecodeError, EncoderError

log = logging.getLogger(__name__)

MAGIC = b"VCF1"
_HEADER = struct.Struct("<IIf")
FRAME_NAME = "frame_{:06d}.jpg"


@dataclass(frozen=True)
class ExportJob:
    video: Path
    frame_dir: Path
    feature_file: Path
    model: str = "tiny"
    fps: float = 1.0
    jpeg_quality: int = 90


@dataclass(frozen=True)
class ExportResult:
    frame_count: int
    dim: int
    frame_dir: Path
    feature_file: Path


def write_vcf1(path: Path, rows: np.ndarray, fps: float) -> None:
    rows = np.asarray(rows, dtype="<f4")
    if rows.ndim != 2 or rows.shape[0] == 0 or rows.shape[1] == 0:
        raise EncoderError(f"feature rows must be a non-empty 2d array, got {rows.shape}")
    header = MAGIC + _HEADER.pack(rows.shape[1], rows.shape[0], fps)
    path.write_bytes(header + rows.tobytes())


def _sample_video(video: Path, fps: float) -> list[np.ndarray]:
    """Decoded BGR frames at the requested rate, one per output tick.

    Tick i sits at time i/fps; every tick strictly inside the clip gets
    the nearest source frame. A truncated stream yields the frames that
    decoded; an unreadable one raises.
    """
    cap = cv2.VideoCapture(str(video))
    try:
        if not cap.isOpened():
            raise DecodeError(f"{video}: cannot open video")
        src_fps = cap.get(cv2.CAP_PROP_FPS)
        total = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        if src_fps <= 0 or total <= 0:
            raise DecodeError(f"{video}: no decodable frames")
        duration = total / src_fps
        n_ticks = int(math.ceil(duration * fps - 1e-9))
        wanted = [
            min(int(round(i / fps * src_fps)), total - 1) for i in range(n_ticks)
        ]

        frames: list[np.ndarray] = []
        current = None
        idx = -1
        for target in wanted:
            while idx < target:
                ok, frame = cap.read()
                if not ok:
                    break
                current = frame
                idx += 1
            if idx < target or current is None:
                break
            frames.append(current.copy())
        if not frames:
            raise DecodeError(f"{video}: no decodable frames")
        return frames
    finally:
        cap.release()


def export_features(job: ExportJob, encoder: Encoder | None = None) -> ExportResult:
    """Sample, save frames, embed, save features. Returns what was written."""
    if job.fps <= 0:
        raise DecodeError(f"sample rate must be positive, got {job.fps}")
    if not Path(job.video).is_file():
        raise DecodeError(f"{job.video}: no such file")
    if encoder is None:
        encoder = load_encoder(job.model)

    frames = _sample_video(Path(job.video), job.fps)
    job.frame_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        target = job.frame_dir / FRAME_NAME.format(i)
        ok = cv2.imwrite(
            str(target), frame, [cv2.IMWRITE_JPEG_QUALITY, job.jpeg_quality]
        )
        if not ok:
            raise DecodeError(f"cannot write {target}")

    rgb: Sequence[np.ndarray] = [
        cv2.cvtColor(frame, cv2.COLOR_BGR2RGB) for frame in frames
    ]
    rows = encoder.encode_images(rgb)
    job.feature_file.parent.mkdir(parents=True, exist_ok=True)
    write_vcf1(Path(job.feature_file), rows, job.fps)
    log.info(
        "exported %d frames from %s (%s, dim %d)",
        len(frames),
        job.video,
        encoder.name,
        encoder.dim,
    )
    return ExportResult(
        frame_count=len(frames),
        dim=int(rows.shape[1]),
        frame_dir=Path(job.frame_dir),
        feature_file=Path(job.feature_file),
    )
