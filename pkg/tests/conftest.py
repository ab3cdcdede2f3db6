"""Shared builders for the test suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from shotchain.core import FeatureMatrix
from shotchain.frames import FRAME_NAME, FEATURES_NAME, write_feature_file

# not a real image; the engine treats frame files as opaque bytes
FAKE_JPEG = b"\xff\xd8\xff\xe0fake-jpeg-payload"


def make_features(count: int, dim: int, seed: int, fps: float = 1.0) -> FeatureMatrix:
    rng = np.random.default_rng(seed)
    return FeatureMatrix(rng.uniform(-1.0, 1.0, size=(count, dim)), fps=fps)


def build_bundle(
    root: Path, name: str, features: FeatureMatrix, images: bool = False
) -> Path:
    bundle = root / name
    bundle.mkdir(parents=True)
    write_feature_file(bundle / FEATURES_NAME, features)
    if images:
        frame_dir = bundle / "frames"
        frame_dir.mkdir()
        for t in range(features.count):
            (frame_dir / FRAME_NAME.format(t)).write_bytes(FAKE_JPEG + bytes([t % 251]))
    return bundle


@pytest.fixture
def bundle_root(tmp_path: Path) -> Path:
    return tmp_path


# the six bundles backing tests/data/mock_bench; regenerated from fixed
# seeds so only the dataset, rules, and expected report live in git
MOCK_BENCH_VIDEOS = (
    ("vid_a", 120, 11),
    ("vid_b", 90, 22),
    ("vid_c", 60, 33),
    ("vid_d", 100, 44),
    ("vid_e", 80, 55),
    ("vid_f", 110, 66),
)


@pytest.fixture(scope="session")
def mock_bench_root(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("mock_bench_videos")
    for name, duration, seed in MOCK_BENCH_VIDEOS:
        build_bundle(root, name, make_features(duration, 4, seed=seed))
    return root
