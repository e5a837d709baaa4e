"""Event aggregation: RBF similarity, spectral clustering vs planted
partitions and exhaustive normalized cuts, cluster averaging, sector features."""

import itertools
import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.metrics import adjusted_rand_score

from fleetsim.events import (EmptyClusterError, EventRecord, NoEventsError,
                             SpectralClusterer, _fill_empty_clusters,
                             build_sector_features, cluster_average,
                             event_representation, load_events, rbf_similarity,
                             load_sector_features, sector_feature,
                             similarity_matrix, spectral_cluster,
                             write_sector_features)


def planted_blobs(rng, n_blobs=3, per_blob=10, d=8, separation=20.0, spread=0.1):
    centers = np.zeros((n_blobs, d))
    for i in range(n_blobs):
        centers[i, i] = separation
    points = []
    labels = []
    for i in range(n_blobs):
        for _ in range(per_blob):
            points.append(centers[i] + rng.normal(0, spread / math.sqrt(d), size=d))
            labels.append(i)
    return np.array(points), np.array(labels)


def test_rbf_trivial_values():
    a = np.array([1.0, 2.0, 3.0])
    assert rbf_similarity(a, a) == 1.0
    c = a + np.array([math.sqrt(math.log(2)), 0, 0])
    assert rbf_similarity(a, c) == pytest.approx(0.5)
    rng = np.random.default_rng(0)
    for _ in range(10):
        x, y = rng.normal(size=(2, 5))
        assert rbf_similarity(x, y) == pytest.approx(rbf_similarity(y, x))
        assert 0 < rbf_similarity(x, y) <= 1


def test_rbf_rejects_mismatch_and_bad_gamma():
    with pytest.raises(ValueError):
        rbf_similarity([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        rbf_similarity([1.0], [1.0], gamma=0.0)


def test_laplacian_smallest_eigenvalue_is_zero():
    rng = np.random.default_rng(5)
    points = rng.normal(size=(12, 4))
    w = similarity_matrix(points)
    deg = w.sum(axis=1)
    inv = 1.0 / np.sqrt(deg)
    lap = np.eye(12) - inv[:, None] * w * inv[None, :]
    eigvals = np.linalg.eigvalsh(lap)
    assert abs(eigvals[0]) < 1e-9


def test_spectral_single_cluster_identical_points():
    points = np.ones((5, 3))
    labels = spectral_cluster(points, 1, seed=0)
    assert set(labels) == {1}


def test_spectral_planted_three_blobs_ari_one():
    rng = np.random.default_rng(42)
    points, truth = planted_blobs(rng)
    labels = spectral_cluster(points, 3, seed=7)
    assert adjusted_rand_score(truth, labels) == 1.0


def _ncut(w, in_a):
    a = np.where(in_a)[0]
    b = np.where(~in_a)[0]
    cut = w[np.ix_(a, b)].sum()
    deg = w.sum(axis=1)
    return cut * (1.0 / deg[a].sum() + 1.0 / deg[b].sum())


def test_spectral_two_blobs_minimizes_normalized_cut():
    rng = np.random.default_rng(3)
    points, _ = planted_blobs(rng, n_blobs=2, per_blob=5, d=4)
    n = len(points)
    labels = spectral_cluster(points, 2, seed=1)
    w = similarity_matrix(points)
    mine = _ncut(w, labels == 1)
    best = min(
        _ncut(w, np.array([i in subset for i in range(n)]))
        for size in range(1, n // 2 + 1)
        for subset in (set(c) for c in itertools.combinations(range(n), size))
    )
    assert mine <= best + 1e-12


def test_spectral_permutation_invariance():
    rng = np.random.default_rng(11)
    points, _ = planted_blobs(rng, per_blob=6)
    labels = spectral_cluster(points, 3, seed=2)
    perm = rng.permutation(len(points))
    labels_perm = spectral_cluster(points[perm], 3, seed=2)
    assert np.array_equal(labels_perm, labels[perm])


def test_spectral_rejects_bad_counts():
    points = np.zeros((2, 3))
    with pytest.raises(ValueError):
        spectral_cluster(points, 3, seed=0)
    with pytest.raises(ValueError):
        spectral_cluster(points, 0, seed=0)


def test_estimator_wrapper_matches_function():
    rng = np.random.default_rng(9)
    points, _ = planted_blobs(rng, per_blob=4)
    est = SpectralClusterer(n_clusters=3, random_state=5)
    labels = est.fit_predict(points)
    assert np.array_equal(labels, spectral_cluster(points, 3, seed=5))
    assert est.get_params()["n_clusters"] == 3
    cloned = clone(est)
    assert cloned.get_params() == est.get_params()


def test_cluster_average_singletons_and_midpoint():
    points = np.array([[0.0, 0.0], [2.0, 2.0], [10.0, 0.0]])
    r = cluster_average(points, np.array([1, 1, 2]), 2)
    assert np.allclose(r, [1.0, 1.0, 10.0, 0.0])
    one_per = cluster_average(points, np.array([1, 2, 3]), 3)
    assert np.allclose(one_per, points.ravel())


def test_cluster_average_order_free_given_labels():
    rng = np.random.default_rng(1)
    points = rng.normal(size=(6, 3))
    labels = np.array([1, 2, 1, 2, 1, 2])
    r1 = cluster_average(points, labels, 2)
    perm = np.array([3, 0, 5, 2, 1, 4])
    r2 = cluster_average(points[perm], labels[perm], 2)
    assert np.allclose(r1, r2)


def test_cluster_average_empty_cluster_raises():
    points = np.zeros((3, 2))
    with pytest.raises(EmptyClusterError):
        cluster_average(points, np.array([1, 1, 1]), 2)


def test_fill_empty_clusters_splits_largest():
    points = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]])
    labels = np.array([1, 1, 1, 1])
    fixed = _fill_empty_clusters(points, labels, 2)
    assert set(fixed) == {1, 2}
    r = cluster_average(points, fixed, 2)
    assert r.shape == (4,)


def test_event_representation_pads_short_events():
    points = np.array([[1.0, 0.0], [3.0, 0.0]])
    r = event_representation(points, b=3, seed=0)
    # singleton clusters in canonical order, padded with the overall mean
    assert np.allclose(r, [1.0, 0.0, 3.0, 0.0, 2.0, 0.0])


def test_sector_feature_single_event():
    z = np.array([0.5, -1.0])
    reviews = [np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([10.0, 10.0])]
    ev = EventRecord("e1", 0, z, reviews)
    f = sector_feature([ev], b=2, seed=0)
    r = event_representation(np.array(reviews), b=2, seed=0)
    assert np.allclose(f, np.concatenate([z, r]))
    assert f.shape == ((2 + 1) * 2,)


def test_sector_feature_opposite_titles_cancel():
    z = np.array([1.5, -2.0])
    reviews = [np.array([0.0, 0.0]), np.array([0.2, 0.0])]
    e1 = EventRecord("a", 3, z, reviews)
    e2 = EventRecord("b", 3, -z, reviews)
    f = sector_feature([e1, e2], b=1, seed=0)
    assert np.allclose(f[:2], 0.0)


def test_sector_feature_hand_computed_three_events():
    e1 = EventRecord("a", 1, np.array([1.0, 0.0]),
                     [np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([10.0, 10.0])])
    e2 = EventRecord("b", 1, np.array([0.0, 1.0]),
                     [np.array([-5.0, -5.0]), np.array([-5.0, -4.0]), np.array([7.0, 7.0])])
    e3 = EventRecord("c", 1, np.array([2.0, 2.0]),
                     [np.array([0.0, 1.0]), np.array([0.0, 1.0]),
                      np.array([4.0, 5.0]), np.array([4.0, 6.0])])
    f = sector_feature([e1, e2, e3], b=2, seed=0)
    expected = [1.0, 1.0,                       # mean titles
                (0.5 - 5.0 + 0.0) / 3, (0.0 - 4.5 + 1.0) / 3,
                (10.0 + 7.0 + 4.0) / 3, (10.0 + 7.0 + 5.5) / 3]
    assert np.allclose(f, expected)


def test_sector_feature_error_paths():
    with pytest.raises(NoEventsError):
        sector_feature([], b=2)
    e1 = EventRecord("a", 0, np.zeros(2), [np.zeros(2)])
    e2 = EventRecord("b", 1, np.zeros(2), [np.zeros(2)])
    with pytest.raises(ValueError, match="sectors"):
        sector_feature([e1, e2], b=1)
    with pytest.raises(ValueError, match="reviews"):
        sector_feature([EventRecord("c", 0, np.zeros(2), [])], b=1)


def test_feature_dimension_contract():
    rng = np.random.default_rng(8)
    for b in (1, 2, 3, 5):
        for d in (2, 8, 16):
            reviews = [rng.normal(size=d) for _ in range(max(b, 4))]
            ev = EventRecord("x", 0, rng.normal(size=d), reviews)
            f = sector_feature([ev], b=b, seed=1)
            assert f.shape == ((b + 1) * d,)


def _write_events_csv(path, rows, d):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event_id", "sector", "kind", "date", "start_hour"]
                        + [f"v{i}" for i in range(d)])
        writer.writerows(rows)


def test_load_events_caps_reviews_and_drops_reviewless(tmp_path):
    d = 3
    rows = [["e1", 0, "title", "2022-01-01", 17, 1.0, 0.0, 0.0]]
    for i in range(8):
        rows.append(["e1", 0, "review", "2022-01-01", 17, float(i), 0.0, 0.0])
    rows.append(["e2", 1, "title", "2022-01-01", 19, 0.0, 1.0, 0.0])
    path = tmp_path / "events.csv"
    _write_events_csv(path, rows, d)
    with pytest.warns(UserWarning, match="e2"):
        events = load_events(path, max_reviews=5)
    assert len(events) == 1
    assert len(events[0].review_embeddings) == 5
    assert [v[0] for v in events[0].review_embeddings] == [0.0, 1.0, 2.0, 3.0, 4.0]


def test_feature_file_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    feats = {("2022-01-01", 0): rng.normal(size=6),
             ("2022-01-02", 3): rng.normal(size=6)}
    path = tmp_path / "features.csv"
    write_sector_features(feats, path)
    loaded = load_sector_features(path)
    assert set(loaded) == set(feats)
    for key in feats:
        assert np.allclose(loaded[key], feats[key])


def test_build_sector_features_groups_by_date_and_sector():
    rng = np.random.default_rng(4)
    events = [
        EventRecord("a", 0, rng.normal(size=4), [rng.normal(size=4) for _ in range(4)],
                    date="2022-01-01"),
        EventRecord("b", 0, rng.normal(size=4), [rng.normal(size=4) for _ in range(4)],
                    date="2022-01-02"),
        EventRecord("c", 1, rng.normal(size=4), [rng.normal(size=4) for _ in range(4)],
                    date="2022-01-01"),
    ]
    feats = build_sector_features(events, b=2, seed=0)
    assert set(feats) == {("2022-01-01", 0), ("2022-01-02", 0), ("2022-01-01", 1)}
    for v in feats.values():
        assert v.shape == (3 * 4,)
