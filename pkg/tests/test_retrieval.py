import numpy as np
import pytest

from shotchain.core import FeatureMatrix, Shot, ShotSet
from shotchain.errors import DimMismatchError, InvalidInputError
from shotchain.retrieval import (
    RankedShot,
    aggregate_shot_embedding,
    cosine_similarity,
    rank_shots,
    select_candidates,
    select_initial_subshot,
)

from conftest import make_features


def test_aggregate_single_frame_is_normalized_row():
    m = FeatureMatrix([[3.0, 4.0]])
    emb = aggregate_shot_embedding(m, Shot(id=0, start=0, end=0), n_frames=4)
    assert np.allclose(emb, [0.6, 0.8])


def test_aggregate_identical_frames():
    m = FeatureMatrix([[2.0, 0.0]] * 5)
    emb = aggregate_shot_embedding(m, Shot(id=0, start=0, end=4), n_frames=3)
    assert np.allclose(emb, [1.0, 0.0])


def test_aggregate_mean_pool_hand_case():
    m = FeatureMatrix([[1.0], [1.0], [3.0], [3.0]])
    emb = aggregate_shot_embedding(m, Shot(id=0, start=0, end=3), n_frames=4)
    assert np.allclose(emb, [1.0])


def test_aggregate_zero_mean_stays_zero():
    m = FeatureMatrix([[1.0], [-1.0]])
    emb = aggregate_shot_embedding(m, Shot(id=0, start=0, end=1), n_frames=2)
    assert np.allclose(emb, [0.0])


def test_cosine_identity_and_orthogonal():
    v = np.array([0.3, 0.4, 1.2])
    assert cosine_similarity(v, v) == pytest.approx(1.0)
    assert cosine_similarity([1.0, 0.0], [0.0, 2.0]) == pytest.approx(0.0)


def test_cosine_hand_value():
    assert cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(
        0.70711, abs=1e-5
    )


def test_cosine_rejects_mismatched_dims_and_zero():
    with pytest.raises(DimMismatchError):
        cosine_similarity([1.0], [1.0, 2.0])
    with pytest.raises(InvalidInputError):
        cosine_similarity([0.0, 0.0], [1.0, 0.0])


def test_rank_shots_single_shot():
    m = make_features(10, 3, seed=0)
    shot_set = ShotSet.whole_video(10)
    ranked = rank_shots(np.array([1.0, 0.0, 0.0]), shot_set, m)
    assert len(ranked) == 1
    assert ranked[0].shot_id == 0


def test_rank_shots_ties_broken_by_start():
    m = FeatureMatrix([[1.0, 0.0]] * 6)
    shots = [Shot(id=7, start=3, end=5), Shot(id=9, start=0, end=2)]
    shot_set = ShotSet(shots=tuple(shots), video_len=6)
    ranked = rank_shots(np.array([1.0, 1.0]), shot_set, m)
    assert [r.shot_id for r in ranked] == [9, 7]
    assert ranked[0].score == pytest.approx(ranked[1].score)


def test_rank_shots_orders_by_score():
    m = FeatureMatrix([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    shots = [Shot(id=1, start=0, end=1), Shot(id=2, start=2, end=3)]
    shot_set = ShotSet(shots=tuple(shots), video_len=4)
    ranked = rank_shots(np.array([0.0, 1.0]), shot_set, m)
    assert [r.shot_id for r in ranked] == [2, 1]
    assert ranked[0].score > ranked[1].score


def test_rank_shots_matches_brute_force_oracle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n_shots = int(rng.integers(1, 8))
        lengths = rng.integers(1, 6, size=n_shots)
        total = int(lengths.sum())
        m = make_features(total, 4, seed=int(rng.integers(0, 10**6)))
        shots, cursor = [], 0
        for i, ln in enumerate(lengths):
            shots.append(Shot(id=i, start=cursor, end=cursor + int(ln) - 1))
            cursor += int(ln)
        shot_set = ShotSet(shots=tuple(shots), video_len=total)
        query = rng.normal(size=4)

        expected = []
        for s in shots:
            idxs = list(range(s.start, s.end + 1))
            if len(idxs) > 16:
                idxs = [s.start + ((2 * i + 1) * s.length) // 32 for i in range(16)]
            pooled = np.mean([m.rows[i] for i in idxs], axis=0)
            pooled = pooled / np.linalg.norm(pooled)
            score = float(
                np.dot(query, pooled) / (np.linalg.norm(query) * np.linalg.norm(pooled))
            )
            expected.append((s.id, score))
        expected.sort(key=lambda t: (-t[1], shots[t[0]].start))

        got = rank_shots(query, shot_set, m)
        assert [r.shot_id for r in got] == [e[0] for e in expected]
        for r, e in zip(got, expected):
            assert r.score == pytest.approx(e[1], abs=1e-6)


def test_select_candidates_threshold_and_cap():
    ranked = [RankedShot(1, 0.9), RankedShot(2, 0.85), RankedShot(3, 0.7)]
    assert select_candidates(ranked, threshold=0.8, top_n=2) == [1, 2]


def test_select_candidates_cap_applies_above_threshold():
    ranked = [RankedShot(1, 0.95), RankedShot(2, 0.9), RankedShot(3, 0.85)]
    assert select_candidates(ranked, threshold=0.8, top_n=2) == [1, 2]


def test_select_candidates_fallback_when_none_pass():
    ranked = [RankedShot(4, 0.5), RankedShot(5, 0.4)]
    assert select_candidates(ranked, threshold=0.8, top_n=2) == [4, 5]
    assert select_candidates(ranked, threshold=0.8, top_n=1) == [4]


def test_select_candidates_rejects_bad_args():
    with pytest.raises(InvalidInputError):
        select_candidates([], threshold=0.5, top_n=2)
    with pytest.raises(InvalidInputError):
        select_candidates([RankedShot(1, 0.5)], threshold=0.5, top_n=0)


def test_select_initial_subshot_picks_best():
    m = FeatureMatrix([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    subshots = [Shot(id=1, start=0, end=1), Shot(id=2, start=2, end=3)]
    best = select_initial_subshot(np.array([0.0, 1.0]), subshots, m)
    assert best.id == 2


def test_select_initial_subshot_tie_takes_earliest():
    m = FeatureMatrix([[1.0, 0.0]] * 4)
    subshots = [Shot(id=2, start=2, end=3), Shot(id=1, start=0, end=1)]
    best = select_initial_subshot(np.array([1.0, 0.0]), subshots, m)
    assert best.id == 1


def test_select_initial_subshot_rejects_empty():
    with pytest.raises(InvalidInputError):
        select_initial_subshot(np.array([1.0]), [], FeatureMatrix([[1.0]]))
