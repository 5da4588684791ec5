import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmgnn.dataset import build_dataset
from mmgnn.evaluation import (
    SkipUser,
    evaluate_scores,
    format_report,
    ndcg_at_k,
    precision_at_k,
    random_baseline,
    recall_at_k,
    write_metrics_csv,
)


def brute_force_metrics(scores, train, test, k):
    """Independent oracle: sort by (-score, index) with plain python."""
    n_users, n_songs = scores.shape
    prec, rec, ndcg, n = 0.0, 0.0, 0.0, 0
    for u in range(n_users):
        rel = {i for uu, i in test if uu == u}
        seen = {i for uu, i in train if uu == u}
        if not rel or not seen:
            continue
        order = sorted((i for i in range(n_songs) if i not in seen), key=lambda i: (-scores[u, i], i))[:k]
        hits = [1 if i in rel else 0 for i in order]
        prec += sum(hits) / k
        rec += sum(hits) / len(rel)
        dcg = sum(h / math.log2(r + 2) for r, h in enumerate(hits))
        ndcg += dcg / sum(1 / math.log2(r + 2) for r in range(min(k, len(rel))))
        n += 1
    return prec / n, rec / n, ndcg / n


def dataset_from(train, test, n_users, n_songs, cold=()):
    pairs = {(f"u{u}", f"s{i:02d}") for u, i in list(train) + list(test)}
    base = build_dataset(pairs, user_ids=[f"u{u}" for u in range(n_users)], song_ids=[f"s{i:02d}" for i in range(n_songs)])
    return dataclasses.replace(
        base,
        train=np.array(sorted(train), dtype=np.int64).reshape(-1, 2),
        test=np.array(sorted(test), dtype=np.int64).reshape(-1, 2),
        cold_songs=np.array(sorted(cold), dtype=np.int64),
    )


# -- per-user metrics -------------------------------------------------------


def test_metric_examples():
    assert precision_at_k([7, 3], {3}, 2) == 0.5
    assert recall_at_k([7, 3], {3}, 2) == 1.0
    assert ndcg_at_k([7, 3], {3}, 2) == pytest.approx(1 / math.log2(3), abs=1e-12)
    assert ndcg_at_k([7, 3], {3}, 2) == pytest.approx(0.630930, abs=1e-6)


def test_metric_perfect():
    ranked = [4, 1, 9, 0]
    rel = {4, 1, 9}
    assert precision_at_k(ranked, rel, 3) == 1.0
    assert recall_at_k(ranked, rel, 3) == 1.0
    assert ndcg_at_k(ranked, rel, 3) == pytest.approx(1.0)


def test_metric_k_larger_than_list():
    assert precision_at_k([1, 2], {1}, 5) == pytest.approx(0.2)
    assert recall_at_k([1, 2], {1}, 5) == 1.0
    assert precision_at_k([], {1}, 5) == 0.0


def test_metric_empty_relevant_skips():
    with pytest.raises(SkipUser):
        recall_at_k([1, 2], set(), 2)
    with pytest.raises(SkipUser):
        ndcg_at_k([1, 2], set(), 2)


def test_metric_bad_k():
    with pytest.raises(ValueError):
        precision_at_k([1], {1}, 0)


@settings(max_examples=60, deadline=None)
@given(
    perm=st.permutations(list(range(12))),
    rel=st.sets(st.integers(0, 11), min_size=1, max_size=6),
)
def test_recall_monotone_ndcg_bounded(perm, rel):
    recalls = [recall_at_k(perm, rel, k) for k in range(1, 13)]
    assert all(a <= b for a, b in zip(recalls, recalls[1:]))
    assert recalls[-1] == 1.0
    for k in range(1, 13):
        assert 0.0 <= ndcg_at_k(perm, rel, k) <= 1.0 + 1e-12


# -- report level -----------------------------------------------------------


def test_evaluate_matches_brute_force(rng):
    n_users, n_songs = 15, 25
    inter = np.argwhere(rng.random((n_users, n_songs)) < 0.3)
    mask = rng.random(len(inter)) < 0.3
    train = [tuple(x) for x in inter[~mask].tolist()]
    test = [tuple(x) for x in inter[mask].tolist()]
    ds = dataset_from(train, test, n_users, n_songs)
    scores = np.round(rng.normal(size=(n_users, n_songs)), 1)  # rounding forces ties
    rep = evaluate_scores(scores, ds, (3, 10), splits=("all",))
    for k in (3, 10):
        p, r, n = brute_force_metrics(scores, train, test, k)
        assert rep.get("precision", k) == pytest.approx(p, abs=1e-12)
        assert rep.get("recall", k) == pytest.approx(r, abs=1e-12)
        assert rep.get("ndcg", k) == pytest.approx(n, abs=1e-12)


def test_perfect_scores_give_one():
    train = [(0, 0), (1, 1)]
    test = [(0, 2), (1, 3)]
    ds = dataset_from(train, test, 2, 5)
    scores = np.zeros((2, 5))
    scores[0, 2] = scores[1, 3] = 10.0
    rep = evaluate_scores(scores, ds, (1, 2), splits=("all",))
    assert rep.get("recall", 1) == 1.0
    assert rep.get("ndcg", 2) == 1.0
    assert rep.get("precision", 1) == 1.0


def test_train_items_excluded():
    train = [(0, 0)]
    test = [(0, 1)]
    ds = dataset_from(train, test, 1, 3)
    scores = np.array([[100.0, 1.0, 0.0]])  # the train song scores highest
    rep = evaluate_scores(scores, ds, (1,), splits=("all",))
    assert rep.get("recall", 1) == 1.0


def test_k_larger_than_catalog():
    ds = dataset_from([(0, 0)], [(0, 1)], 1, 3)
    rep = evaluate_scores(np.zeros((1, 3)), ds, (50,), splits=("all",))
    assert rep.get("recall", 50) == 1.0
    assert rep.get("precision", 50) == pytest.approx(1 / 50)


def test_skipped_and_dropped_users():
    train = [(0, 0), (2, 1)]
    test = [(0, 1), (1, 2)]  # user 1 has no train data, user 2 has no test data
    ds = dataset_from(train, test, 3, 3)
    rep = evaluate_scores(np.zeros((3, 3)), ds, (1,), splits=("all",))
    assert rep.n_skipped == 1
    assert rep.n_dropped == 1
    assert rep.blocks["all"].n_users == 1


def test_cold_block_ranks_only_cold_songs():
    # song 3 is cold; warm songs 1 and 2 outscore it but cannot crowd it out
    train = [(0, 0)]
    test = [(0, 2), (0, 3)]
    ds = dataset_from(train, test, 1, 5, cold=[3, 4])
    scores = np.array([[0.0, 9.0, 8.0, 1.0, 0.5]])
    rep = evaluate_scores(scores, ds, (1,), splits=("all", "cold", "cold_full"))
    assert rep.get("recall", 1, "cold") == 1.0
    assert rep.get("recall", 1, "cold_full") == 0.0
    assert rep.get("recall", 1, "all") == 0.0


def test_cold_block_absent_without_cold_songs():
    ds = dataset_from([(0, 0)], [(0, 1)], 1, 3)
    rep = evaluate_scores(np.zeros((1, 3)), ds, (1,))
    assert "cold" not in rep.blocks
    assert "all" in rep.blocks


def test_unknown_split():
    ds = dataset_from([(0, 0)], [(0, 1)], 1, 3)
    with pytest.raises(ValueError):
        evaluate_scores(np.zeros((1, 3)), ds, (1,), splits=("warm",))


def test_random_baseline_deterministic_and_sane(small_data):
    a = random_baseline(small_data, (5,), seed=3, trials=4)
    b = random_baseline(small_data, (5,), seed=3, trials=4)
    assert a.get("recall", 5) == b.get("recall", 5)
    # expected recall of a random ranking is about K / |candidates|
    n_cand = small_data.n_songs - small_data.train_degree_users().mean()
    assert 0 < a.get("recall", 5) < 3 * 5 / n_cand


def test_metrics_csv_and_format(tmp_path, small_data):
    rep = random_baseline(small_data, (5, 10), seed=0, trials=1)
    path = tmp_path / "m.csv"
    write_metrics_csv(path, rep)
    lines = path.read_text().splitlines()
    assert lines[0] == "split,k,precision,recall,ndcg,n_users"
    assert len(lines) == 1 + 2 * len(rep.blocks)
    assert "Recall@K" in format_report(rep)
