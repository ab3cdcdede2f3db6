"""Shot partitioning: cluster frames, pick key frames, cut at boundaries.

A shot is split by clustering its frame features, taking the frame
closest to each centroid as that cluster's key frame, and then cutting
between temporally adjacent key frames at the frame whose feature is
jointly farthest from both keys (the point of highest semantic
deviation). The boundary frame starts the following subshot.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .core import FeatureMatrix, Shot, ShotSet, validate_shot_set
from .errors import InvalidInputError

log = logging.getLogger(__name__)

# Assignment enumeration is exact but exponential; above this many
# candidate assignments we fall back to seeded k-means++ plus Lloyd.
EXACT_ENUM_LIMIT = 20_000

LLOYD_MAX_ITER = 100


@dataclass(frozen=True, slots=True)
class Clustering:
    """Cluster labels for the frames of one shot.

    ``labels[i]`` is the cluster of absolute frame ``start + i``. Every
    cluster in [0, k) is non-empty; k may be lower than requested when
    the shot has fewer distinct feature rows than clusters asked for.
    """

    k: int
    start: int
    labels: tuple[int, ...]
    centroids: np.ndarray
    seed: int

    def members(self, cluster: int) -> list[int]:
        if not 0 <= cluster < self.k:
            raise InvalidInputError(f"cluster {cluster} outside [0, {self.k})")
        return [self.start + i for i, c in enumerate(self.labels) if c == cluster]


@dataclass(frozen=True, slots=True)
class KeyFrameList:
    """Absolute key-frame indices in strictly increasing temporal order."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        for prev, cur in zip(self.indices, self.indices[1:]):
            if cur <= prev:
                raise InvalidInputError("key frames must be strictly increasing")

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


def _sse_of(labels: np.ndarray, rows: np.ndarray, k: int) -> float:
    total = 0.0
    for c in range(k):
        pts = rows[labels == c]
        mu = pts.mean(axis=0)
        total += float(((pts - mu) ** 2).sum())
    return total


def _exact_assignment(rows: np.ndarray, k: int) -> np.ndarray:
    """Minimum-SSE assignment by enumerating all surjective labelings.

    Ties resolve to the first labeling in lexicographic order, which
    makes the result independent of the seed.
    """
    n = len(rows)
    combos = np.stack(
        np.unravel_index(np.arange(k**n), (k,) * n), axis=1
    ).astype(np.int64)
    valid = np.ones(len(combos), dtype=bool)
    for c in range(k):
        valid &= (combos == c).any(axis=1)
    combos = combos[valid]
    # SSE = sum ||x||^2 - sum_c ||sum of cluster c||^2 / |c|
    sse = np.full(len(combos), (rows * rows).sum(), dtype=np.float64)
    for c in range(k):
        mask = (combos == c).astype(np.float64)
        counts = mask.sum(axis=1)
        sums = mask @ rows
        sse -= (sums * sums).sum(axis=1) / counts
    return combos[int(np.argmin(sse))]


def _plusplus_init(rows: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding. Stops early once every remaining distance is
    zero, which caps the cluster count at the number of distinct rows."""
    n = len(rows)
    chosen = [int(rng.integers(n))]
    d2 = ((rows - rows[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = float(d2.sum())
        if total <= 0.0:
            break
        nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((rows - rows[nxt]) ** 2).sum(axis=1))
    return rows[chosen].copy()


def _lloyd(rows: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = len(centroids)
    labels = np.full(len(rows), -1, dtype=np.int64)
    for _ in range(LLOYD_MAX_ITER):
        dists = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(dists, axis=1)
        # repair empty clusters with the point farthest from its centroid
        for c in range(k):
            if (new_labels == c).any():
                continue
            spread = dists[np.arange(len(rows)), new_labels]
            counts = np.bincount(new_labels, minlength=k)
            spread = np.where(counts[new_labels] > 1, spread, -np.inf)
            new_labels[int(np.argmax(spread))] = c
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            centroids[c] = rows[labels == c].mean(axis=0)
    return labels, centroids


def kmeans(features: FeatureMatrix, shot: Shot, k: int, seed: int) -> Clustering:
    """Cluster the shot's frames into at most k groups.

    Small problems are solved exactly (global SSE minimum); larger ones
    use seeded k-means++ with Lloyd iterations. Same inputs and seed
    always give the same clustering.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    rows = features.rows_for(shot).astype(np.float64)
    n = len(rows)
    k_eff = min(k, len(np.unique(rows, axis=0)))
    if k_eff == 1:
        labels = np.zeros(n, dtype=np.int64)
        centroids = rows.mean(axis=0, keepdims=True)
    elif k_eff**n <= EXACT_ENUM_LIMIT:
        labels = _exact_assignment(rows, k_eff)
        centroids = np.stack([rows[labels == c].mean(axis=0) for c in range(k_eff)])
    else:
        rng = np.random.default_rng(seed)
        centroids = _plusplus_init(rows, k_eff, rng)
        k_eff = len(centroids)
        labels, centroids = _lloyd(rows, centroids)
    return Clustering(
        k=k_eff,
        start=shot.start,
        labels=tuple(int(c) for c in labels),
        centroids=centroids,
        seed=seed,
    )


def select_key_frames(features: FeatureMatrix, clustering: Clustering) -> KeyFrameList:
    """Per cluster, the member frame closest to the centroid (L2).

    Distance ties go to the smallest frame index. The result is sorted
    temporally and deduplicated.
    """
    keys: set[int] = set()
    labels = np.asarray(clustering.labels)
    for c in range(clustering.k):
        members = np.flatnonzero(labels == c)
        rows = features.rows[clustering.start + members].astype(np.float64)
        dists = ((rows - clustering.centroids[c]) ** 2).sum(axis=1)
        keys.add(int(clustering.start + members[int(np.argmin(dists))]))
    return KeyFrameList(indices=tuple(sorted(keys)))


def find_boundary(features: FeatureMatrix, left_key: int, right_key: int) -> int:
    """Frame in (left_key, right_key] with the largest summed L2
    distance to both key frames' features. Ties go to the smallest
    index. The returned frame starts the subshot that follows the cut."""
    if left_key < 0:
        raise InvalidInputError(f"key frame {left_key} is negative")
    if right_key <= left_key:
        raise InvalidInputError(
            f"right key {right_key} must come after left key {left_key}"
        )
    if right_key >= features.count:
        raise InvalidInputError(f"key frame {right_key} outside the feature matrix")
    span = features.rows[left_key + 1 : right_key + 1].astype(np.float64)
    left = features.rows[left_key].astype(np.float64)
    right = features.rows[right_key].astype(np.float64)
    dev = np.sqrt(((span - left) ** 2).sum(axis=1)) + np.sqrt(
        ((span - right) ** 2).sum(axis=1)
    )
    return left_key + 1 + int(np.argmax(dev))


def partition_shot(
    features: FeatureMatrix,
    shot: Shot,
    k: int,
    seed: int,
    id_source: Iterator[int],
) -> list[Shot]:
    """Split a shot into up to k contiguous subshots.

    Single-frame shots come back unchanged. When clustering collapses to
    one key frame the shot yields a single child covering the same span
    (one level deeper). Otherwise each adjacent key-frame pair is cut at
    its deviation boundary and the boundary frame starts the next child.
    """
    if shot.length == 1:
        return [shot]
    clustering = kmeans(features, shot, k, seed)
    keys = select_key_frames(features, clustering)
    cuts = [
        find_boundary(features, a, b)
        for a, b in zip(keys.indices, keys.indices[1:])
    ]
    edges = [shot.start, *cuts, shot.end + 1]
    children = [
        Shot(
            id=next(id_source),
            start=lo,
            end=hi - 1,
            depth=shot.depth + 1,
            parent=shot.id,
        )
        for lo, hi in zip(edges, edges[1:])
    ]
    log.debug(
        "partitioned shot %d [%d..%d] into %d subshots",
        shot.id,
        shot.start,
        shot.end,
        len(children),
    )
    return children


def update_shot_set(
    shot_set: ShotSet, replacements: Mapping[int, Sequence[Shot]]
) -> ShotSet:
    """Replace shots by id with their subshots, keeping the tiling valid.

    Each replacement list must cover exactly the span of the shot it
    replaces. Passing a shot's own singleton list is allowed and leaves
    it in place (the single-frame case).
    """
    for shot_id, subs in replacements.items():
        parent = shot_set.find(shot_id)
        if not subs:
            raise InvalidInputError(f"empty replacement for shot {shot_id}")
        ordered = sorted(subs, key=lambda s: s.start)
        if ordered[0].start != parent.start or ordered[-1].end != parent.end:
            raise InvalidInputError(
                f"replacement for shot {shot_id} does not cover [{parent.start}, {parent.end}]"
            )
        for a, b in zip(ordered, ordered[1:]):
            if b.start != a.end + 1:
                raise InvalidInputError(
                    f"replacement for shot {shot_id} is not contiguous at frame {a.end + 1}"
                )
    kept = [s for s in shot_set.shots if s.id not in replacements]
    for subs in replacements.values():
        kept.extend(subs)
    result = ShotSet(shots=tuple(kept), video_len=shot_set.video_len)
    report = validate_shot_set(result)
    if not report.ok:
        raise InvalidInputError("; ".join(report.violations))
    return result
