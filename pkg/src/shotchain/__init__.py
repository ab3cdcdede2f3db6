"""Chain-of-shot question answering for long videos.

The engine answers multiple-choice questions about hour-scale videos by
glancing first, then iteratively zooming into the most question-relevant
shots: select by text-to-shot similarity, partition into subshots around
key frames, sample fresh evidence frames, answer, and self-grade until
confident or out of rounds.
"""

from .core import (
    FeatureMatrix,
    FrameSet,
    QaItem,
    RoundRecord,
    Shot,
    ShotSet,
    Verdict,
    validate_shot_set,
)
from .frames import VideoSource, read_feature_file, write_feature_file
from .harness import Dataset, RunReport, load_dataset, run_benchmark
from .orchestrator import AgentConfig, run_question
from .providers import Providers, ScriptedProvider

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "Dataset",
    "FeatureMatrix",
    "FrameSet",
    "Providers",
    "QaItem",
    "RoundRecord",
    "RunReport",
    "ScriptedProvider",
    "Shot",
    "ShotSet",
    "Verdict",
    "VideoSource",
    "load_dataset",
    "read_feature_file",
    "run_benchmark",
    "run_question",
    "validate_shot_set",
    "write_feature_file",
]
