"""Text-to-shot retrieval by cosine similarity of pooled frame features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FeatureMatrix, Shot, ShotSet
from .errors import DimMismatchError, InvalidInputError
from .frames import sample_uniform


@dataclass(frozen=True, slots=True)
class RankedShot:
    shot_id: int
    score: float


def aggregate_shot_embedding(
    features: FeatureMatrix, shot: Shot, n_frames: int = 16
) -> np.ndarray:
    """Mean of up to n_frames uniformly sampled frame features,
    L2-normalized. A zero mean comes back as the zero vector."""
    picked = sample_uniform(shot, n_frames)
    pooled = features.rows[picked].astype(np.float64).mean(axis=0)
    norm = float(np.linalg.norm(pooled))
    if norm == 0.0:
        return pooled
    return pooled / norm


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimMismatchError(f"cosine of {a.shape[0]}-dim vs {b.shape[0]}-dim vector")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise InvalidInputError("cosine similarity undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


def rank_shots(
    query: np.ndarray,
    shot_set: ShotSet,
    features: FeatureMatrix,
    n_frames: int = 16,
) -> list[RankedShot]:
    """All shots scored against the query embedding, best first.

    Equal scores are ordered by shot start so ranking is deterministic.
    """
    scored: list[tuple[float, int, int]] = []
    for shot in shot_set.shots:
        emb = aggregate_shot_embedding(features, shot, n_frames)
        score = cosine_similarity(query, emb)
        scored.append((score, shot.start, shot.id))
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [RankedShot(shot_id=sid, score=score) for score, _, sid in scored]


def select_candidates(
    ranked: Sequence[RankedShot], threshold: float, top_n: int
) -> list[int]:
    """Ids of shots scoring >= threshold, capped at top_n. When nothing
    clears the threshold the top_n best shots are used instead so a
    round always has somewhere to look."""
    if top_n < 1:
        raise InvalidInputError(f"top_n must be >= 1, got {top_n}")
    if not ranked:
        raise InvalidInputError("cannot select candidates from an empty ranking")
    passing = [r.shot_id for r in ranked if r.score >= threshold]
    if not passing:
        return [r.shot_id for r in ranked[:top_n]]
    return passing[:top_n]


def select_initial_subshot(
    query: np.ndarray,
    subshots: Sequence[Shot],
    features: FeatureMatrix,
    n_frames: int = 16,
) -> Shot:
    """The subshot most similar to the query; ties go to the earliest."""
    if not subshots:
        raise InvalidInputError("no subshots to choose from")
    best: Shot | None = None
    best_score = -np.inf
    for shot in sorted(subshots, key=lambda s: s.start):
        score = cosine_similarity(
            query, aggregate_shot_embedding(features, shot, n_frames)
        )
        if score > best_score:
            best = shot
            best_score = score
    assert best is not None
    return best
