import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose
from sklearn.metrics import normalized_mutual_info_score, rand_score

from logic.downstream import (IsolationForest, LinearSvm, accuracy, average_path_length, cluster_accuracy,
                              f1_best_threshold, iforest_fit, iforest_score, kmeans, nmi, rand_index, svm_fit,
                              svm_predict)
from logic.errors import BatchSizeError, ConfigError, LabelError


def blobs(rng, centers, per_class=20, spread=0.1):
    centers = np.asarray(centers, dtype=float)
    z = np.concatenate([c + spread * rng.standard_normal((per_class, centers.shape[1])) for c in centers])
    y = np.repeat(np.arange(len(centers)), per_class)
    return z, y


# ---------------------------------------------------------------- SVM ----

def test_svm_separates_two_blobs():
    z, y = blobs(np.random.default_rng(0), [[-3, 0], [3, 0]])
    model = svm_fit(z, y, C=1.0, n_iter=500)
    assert accuracy(y, svm_predict(model, z)) == 1.0


def test_svm_multiclass_one_vs_rest():
    z, y = blobs(np.random.default_rng(1), [[-4, 0], [4, 0], [0, 6]])
    model = svm_fit(z, y, n_iter=500)
    assert model.weights.shape == (3, 2)
    assert accuracy(y, svm_predict(model, z)) == 1.0


def test_svm_string_labels():
    z, y = blobs(np.random.default_rng(2), [[-3, 0], [3, 0]])
    names = np.array(["neg", "pos"])[y]
    model = svm_fit(z, names, n_iter=300)
    assert set(svm_predict(model, z)) == {"neg", "pos"}


def test_svm_duplicated_points_keep_decision_function():
    z, y = blobs(np.random.default_rng(3), [[-1, 0], [1, 0]], spread=0.6)
    single = svm_fit(z, y, n_iter=300)
    doubled = svm_fit(np.concatenate([z, z]), np.concatenate([y, y]), n_iter=300)
    assert_allclose(single.decision_function(z), doubled.decision_function(z), atol=1e-6)


def test_svm_averaged_objective_settles():
    z, y = blobs(np.random.default_rng(4), [[-1, 0], [1, 0]], spread=0.8)
    (history,) = svm_fit(z, y, n_iter=400).objective_history
    assert len(history) == 400
    assert history[-1] <= history[0]
    assert history[-1] <= 1.1 * min(history) + 1e-6


def test_svm_is_deterministic():
    z, y = blobs(np.random.default_rng(5), [[-1, 0], [1, 1]], spread=0.5)
    assert_allclose(svm_fit(z, y).weights, svm_fit(z, y).weights, rtol=0, atol=0)


def test_svm_rejects_bad_input():
    z = np.zeros((4, 2))
    with pytest.raises(LabelError):
        svm_fit(z, [1, 1, 1, 1])
    with pytest.raises(LabelError):
        svm_fit(z, [0, 1, 0])
    with pytest.raises(ConfigError):
        svm_fit(z, [0, 1, 0, 1], C=0.0)
    with pytest.raises(ConfigError):
        LinearSvm().predict(z)


# ------------------------------------------------------------- k-means ----

def test_kmeans_one_cluster_per_point():
    z = np.random.default_rng(6).standard_normal((6, 3))
    model = kmeans(z, k=6, seed=0)
    assert model.inertia == pytest.approx(0.0, abs=1e-12)
    assert len(set(model.labels)) == 6


def test_kmeans_recovers_blobs():
    z, y = blobs(np.random.default_rng(7), [[-5, -5], [5, 5], [5, -5]])
    model = kmeans(z, k=3, seed=1)
    assert rand_index(y, model.labels) == 1.0
    assert cluster_accuracy(y, model.labels) == 1.0


def test_kmeans_inertia_never_increases():
    z = np.random.default_rng(8).standard_normal((60, 4))
    model = kmeans(z, k=5, seed=2, n_init=3)
    assert np.all(np.diff(model.inertia_history) <= 1e-9)
    assert len(model.restart_inertias) == 3
    assert model.inertia == pytest.approx(min(model.restart_inertias))


def test_kmeans_is_reproducible():
    z = np.random.default_rng(9).standard_normal((30, 2))
    a, b = kmeans(z, 4, seed=3), kmeans(z, 4, seed=3)
    assert np.array_equal(a.labels, b.labels)
    assert a.inertia == b.inertia


def test_kmeans_rejects_bad_k():
    z = np.zeros((3, 2))
    with pytest.raises(ConfigError):
        kmeans(z, k=4)
    with pytest.raises(ConfigError):
        kmeans(z, k=0)


# ------------------------------------------------------------- metrics ----

def test_partition_metric_examples():
    a, b = [0, 0, 1, 1], [0, 1, 0, 1]
    assert rand_index(a, b) == pytest.approx(2 / 6)
    assert nmi(a, b) == pytest.approx(0.0, abs=1e-12)
    assert rand_index(a, [5, 5, 7, 7]) == 1.0
    assert nmi(a, [5, 5, 7, 7]) == pytest.approx(1.0)


def test_nmi_degenerate_partitions():
    assert nmi([0, 0, 0], [1, 1, 1]) == 1.0
    assert nmi([0, 0, 0], [0, 1, 2]) == 0.0


@pytest.mark.parametrize("method", ["geometric", "arithmetic"])
def test_metrics_match_scikit_learn(method):
    rng = np.random.default_rng(10)
    for _ in range(20):
        a = rng.integers(0, 4, 30)
        b = rng.integers(0, 3, 30)
        assert rand_index(a, b) == pytest.approx(rand_score(a, b))
        assert nmi(a, b, method) == pytest.approx(normalized_mutual_info_score(a, b, average_method=method))


def brute_force_rand_index(a, b):
    pairs = list(itertools.combinations(range(len(a)), 2))
    agree = sum((a[i] == a[j]) == (b[i] == b[j]) for i, j in pairs)
    return agree / len(pairs)


def brute_force_nmi(a, b):
    n = len(a)
    pa = {x: np.mean(a == x) for x in set(a)}
    pb = {y: np.mean(b == y) for y in set(b)}
    mi = 0.0
    for x in pa:
        for y in pb:
            pxy = np.mean((a == x) & (b == y))
            if pxy > 0:
                mi += pxy * np.log(pxy / (pa[x] * pb[y]))
    h_a = -sum(p * np.log(p) for p in pa.values())
    h_b = -sum(p * np.log(p) for p in pb.values())
    return mi / np.sqrt(h_a * h_b)


def test_metrics_match_brute_force():
    rng = np.random.default_rng(17)
    for _ in range(100):
        a = rng.integers(0, 3, 12)
        b = rng.integers(0, 4, 12)
        a[:3], b[:4] = [0, 1, 2], [0, 1, 2, 3]
        assert rand_index(a, b) == brute_force_rand_index(a, b)
        assert abs(nmi(a, b) - brute_force_nmi(a, b)) < 1e-9


def test_metric_input_checks():
    with pytest.raises(LabelError):
        rand_index([0, 1], [0, 1, 1])
    with pytest.raises(ConfigError):
        nmi([0, 1], [1, 0], average_method="max")


def test_cluster_accuracy_matches_best_permutation():
    rng = np.random.default_rng(11)
    y = rng.integers(0, 3, 25)
    pred = rng.integers(0, 3, 25)
    best = max(np.mean(np.array(perm)[pred] == y) for perm in itertools.permutations(range(3)))
    assert cluster_accuracy(y, pred) == pytest.approx(best)


# ---------------------------------------------------- isolation forest ----

def test_average_path_length():
    assert average_path_length(1) == 0.0
    assert average_path_length(2) == 1.0
    for n in (3, 10, 256):
        harmonic = sum(1.0 / i for i in range(1, n))
        assert average_path_length(n) == pytest.approx(2 * harmonic - 2 * (n - 1) / n)


def test_outlier_scores_highest():
    rng = np.random.default_rng(12)
    z = np.concatenate([rng.standard_normal((99, 3)), [[10.0, 10.0, 10.0]]])
    scores = iforest_score(iforest_fit(z, seed=0), z)
    assert int(np.argmax(scores)) == 99
    assert np.all((scores > 0) & (scores < 1))


def test_identical_rows_score_identically():
    rng = np.random.default_rng(13)
    z = rng.standard_normal((50, 2))
    z[7] = z[3]
    scores = iforest_fit(z, n_trees=50).score(z)
    assert scores[7] == scores[3]


def test_forest_is_seeded():
    z = np.random.default_rng(14).standard_normal((40, 2))
    assert_allclose(iforest_fit(z, seed=4).score(z), iforest_fit(z, seed=4).score(z), rtol=0, atol=0)


def test_more_trees_reduce_score_variance():
    z = np.random.default_rng(15).standard_normal((128, 2))
    queries = z[:10]

    def spread(n_trees):
        runs = np.array([iforest_fit(z, n_trees=n_trees, seed=s).score(queries) for s in range(8)])
        return runs.std(axis=0).mean()

    assert spread(200) < spread(10)


def test_forest_constant_data_and_small_input():
    z = np.ones((10, 2))
    scores = IsolationForest(n_trees=5).fit(z).score(z)
    assert np.all(scores == scores[0])
    with pytest.raises(BatchSizeError):
        iforest_fit(np.zeros((1, 2)))
    with pytest.raises(ConfigError):
        IsolationForest().score(z)


# ----------------------------------------------------------------- F1 ----

def test_f1_example():
    f1, threshold = f1_best_threshold([0.9, 0.8, 0.2, 0.1], [1, 0, 1, 0])
    assert f1 == pytest.approx(0.8)
    assert threshold == 0.2


def test_f1_perfect_and_all_positive():
    labels = np.array([0, 1, 0, 1, 1])
    assert f1_best_threshold(labels.astype(float), labels)[0] == 1.0
    f1, threshold = f1_best_threshold([0.3, 0.1, 0.7], [1, 1, 1])
    assert f1 == 1.0
    assert threshold == 0.1


def test_f1_matches_brute_force():
    rng = np.random.default_rng(16)
    for _ in range(20):
        scores = rng.integers(0, 6, 15).astype(float)
        labels = rng.integers(0, 2, 15)
        labels[0] = 1
        best = 0.0
        for t in np.unique(scores):
            pred = scores >= t
            tp = np.sum(pred & (labels == 1))
            best = max(best, 2 * tp / (pred.sum() + labels.sum()))
        assert f1_best_threshold(scores, labels)[0] == pytest.approx(best)


def test_f1_needs_positives():
    with pytest.raises(LabelError):
        f1_best_threshold([0.1, 0.2], [0, 0])
    with pytest.raises(LabelError):
        f1_best_threshold([0.1, 0.2], [0, 2])
