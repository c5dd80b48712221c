"""
Task heads and metrics on frozen representations: linear SVM, k-means
with RI/NMI, isolation forest with best-threshold F1.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import comb, digamma

from logic.errors import BatchSizeError, ConfigError, LabelError

EULER_GAMMA = 0.5772156649015329


def _as_matrix(z):
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise ValueError(f"expected an (N, F) matrix, got shape {z.shape}")
    return z


def _check_rows(z, y):
    if len(z) != len(y):
        raise LabelError(f"{len(y)} labels for {len(z)} representations")


# ---------------------------------------------------------------- SVM ----

@dataclass
class LinearSvm:
    """One-vs-rest linear SVM trained by full-batch Pegasos with Polyak
    averaging. Objective per binary problem (lambda = 1 / C):

        lambda / 2 * ||w||^2 + mean_i max(0, 1 - y_i (w.x_i + b))

    The bias is not regularized. Training is deterministic.
    """

    C: float = 1.0
    n_iter: int = 1000
    classes: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None          # (n_models, F)
    biases: Optional[np.ndarray] = None           # (n_models,)
    objective_history: List[float] = field(default_factory=list)

    def _objective(self, w, b, x, signs):
        lam = 1.0 / self.C
        hinge = np.maximum(0.0, 1.0 - signs * (x @ w + b))
        return 0.5 * lam * float(w @ w) + float(hinge.mean())

    def _fit_binary(self, x, signs):
        lam = 1.0 / self.C
        n, f = x.shape
        w, b = np.zeros(f), 0.0
        w_sum, b_sum = np.zeros(f), 0.0
        history = []
        for k in range(1, self.n_iter + 1):
            eta = 1.0 / (lam * k)
            violated = signs * (x @ w + b) < 1.0
            g_w = lam * w - (signs[violated, None] * x[violated]).sum(axis=0) / n
            g_b = -signs[violated].sum() / n
            w = w - eta * g_w
            b = b - eta * g_b
            w_sum += w
            b_sum += b
            history.append(self._objective(w_sum / k, b_sum / k, x, signs))
        return w_sum / self.n_iter, b_sum / self.n_iter, history

    def fit(self, z, y):
        if self.C <= 0 or self.n_iter < 1:
            raise ConfigError("SVM needs C > 0 and at least one iteration")
        x = _as_matrix(z)
        y = np.asarray(y)
        _check_rows(x, y)
        self.classes = np.unique(y)
        if len(self.classes) < 2:
            raise LabelError("SVM training needs at least two classes")

        targets = [self.classes[1]] if len(self.classes) == 2 else list(self.classes)
        weights, biases, self.objective_history = [], [], []
        for target in targets:
            signs = np.where(y == target, 1.0, -1.0)
            w, b, history = self._fit_binary(x, signs)
            weights.append(w)
            biases.append(b)
            self.objective_history.append(history)
        self.weights = np.array(weights)
        self.biases = np.array(biases)
        return self

    def decision_function(self, z):
        if self.weights is None:
            raise ConfigError("SVM is not fitted")
        scores = _as_matrix(z) @ self.weights.T + self.biases
        return scores[:, 0] if len(self.classes) == 2 else scores

    def predict(self, z):
        scores = self.decision_function(z)
        if len(self.classes) == 2:
            return np.where(scores > 0, self.classes[1], self.classes[0])
        return self.classes[np.argmax(scores, axis=1)]


def svm_fit(z, y, C=1.0, n_iter=1000):
    return LinearSvm(C=C, n_iter=n_iter).fit(z, y)


def svm_predict(model, z):
    return model.predict(z)


def accuracy(y_true, y_pred):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    _check_rows(y_true, y_pred)
    return float(np.mean(y_true == y_pred))


# ------------------------------------------------------------- k-means ----

@dataclass
class KMeansModel:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: List[float] = field(default_factory=list)
    restart_inertias: List[float] = field(default_factory=list)


def _squared_distances(x, centroids):
    return ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _kmeans_plus_plus(x, k, rng):
    n = len(x)
    centroids = [x[rng.integers(n)]]
    closest = ((x - centroids[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            pick = rng.choice(n, p=closest / total)
        else:
            pick = rng.integers(n)
        centroids.append(x[pick])
        closest = np.minimum(closest, ((x - x[pick]) ** 2).sum(axis=1))
    return np.array(centroids)


def _lloyd(x, centroids, max_iter):
    labels = None
    history = []
    for iteration in range(1, max_iter + 1):
        d2 = _squared_distances(x, centroids)
        new_labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(x)), new_labels].sum()))
        if labels is not None and np.array_equal(labels, new_labels):
            return centroids, labels, history, iteration
        labels = new_labels
        for j in range(len(centroids)):
            members = x[labels == j]
            # Empty cluster keeps its centroid
            if len(members):
                centroids[j] = members.mean(axis=0)
    d2 = _squared_distances(x, centroids)
    labels = np.argmin(d2, axis=1)
    history.append(float(d2[np.arange(len(x)), labels].sum()))
    return centroids, labels, history, max_iter


def kmeans(z, k, seed=0, n_init=10, max_iter=300):
    """k-means++ seeding, Lloyd iterations, best of n_init restarts by inertia"""
    x = _as_matrix(z)
    if k < 1 or k > len(x):
        raise ConfigError(f"k must lie in [1, N={len(x)}], got {k}")
    best = None
    restart_inertias = []
    for child in np.random.SeedSequence(seed).spawn(n_init):
        rng = np.random.default_rng(child)
        centroids, labels, history, n_iter = _lloyd(x, _kmeans_plus_plus(x, k, rng), max_iter)
        inertia = history[-1]
        restart_inertias.append(inertia)
        if best is None or inertia < best.inertia:
            best = KMeansModel(centroids, labels, inertia, n_iter, history)
    best.restart_inertias = restart_inertias
    return best


# ------------------------------------------------------------- metrics ----

def _contingency(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise LabelError(f"partitions differ in length: {a.shape} vs {b.shape}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def rand_index(a, b):
    """Fraction of sample pairs on which the two partitions agree"""
    table = _contingency(a, b)
    n = int(table.sum())
    pairs = comb(n, 2, exact=True)
    if pairs == 0:
        return 1.0
    both = sum(comb(int(v), 2, exact=True) for v in table.ravel())
    rows = sum(comb(int(v), 2, exact=True) for v in table.sum(axis=1))
    cols = sum(comb(int(v), 2, exact=True) for v in table.sum(axis=0))
    return (pairs + 2 * both - rows - cols) / pairs


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(a, b, average_method="geometric"):
    """Mutual information normalized by the geometric (default) or
    arithmetic mean of the entropies, natural logs"""
    table = _contingency(a, b)
    n = table.sum()
    h_a = _entropy(table.sum(axis=1), n)
    h_b = _entropy(table.sum(axis=0), n)
    if h_a == 0 and h_b == 0:
        return 1.0
    if h_a == 0 or h_b == 0:
        return 0.0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    nz = table > 0
    mi = float((table[nz] / n * np.log(table[nz] * n / outer[nz])).sum())
    if average_method == "geometric":
        norm = math.sqrt(h_a * h_b)
    elif average_method == "arithmetic":
        norm = 0.5 * (h_a + h_b)
    else:
        raise ConfigError(f"unknown NMI average_method {average_method!r}")
    return max(0.0, mi / norm)


def cluster_accuracy(y_true, y_pred):
    """Accuracy under the best one-to-one matching of clusters to classes"""
    table = _contingency(y_pred, y_true)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / table.sum())


# ---------------------------------------------------- isolation forest ----

def average_path_length(n):
    """c(n): mean unsuccessful-search path length in a binary search tree of n points"""
    n = np.asarray(n, dtype=float)
    harmonic = digamma(np.maximum(n, 2.0)) + EULER_GAMMA      # H(n - 1)
    c = 2.0 * harmonic - 2.0 * (n - 1.0) / np.maximum(n, 1.0)
    c = np.where(n == 2, 1.0, c)
    c = np.where(n <= 1, 0.0, c)
    return c if c.ndim else float(c)


@dataclass
class _Node:
    size: int
    feature: int = -1
    threshold: float = 0.0
    inclusive: bool = False
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None

    @property
    def is_leaf(self):
        return self.left is None


def _grow(x, depth, height_limit, rng):
    n = len(x)
    if depth >= height_limit or n <= 1:
        return _Node(size=n)
    spread = x.max(axis=0) - x.min(axis=0)
    candidates = np.flatnonzero(spread > 0)
    if candidates.size == 0:
        return _Node(size=n)
    feature = int(candidates[rng.integers(candidates.size)])
    low, high = x[:, feature].min(), x[:, feature].max()
    threshold = rng.uniform(low, high)
    inclusive = False
    mask = x[:, feature] < threshold
    if not mask.any():
        # uniform() returned the minimum exactly
        inclusive = True
        mask = x[:, feature] <= threshold
    return _Node(size=n, feature=feature, threshold=threshold, inclusive=inclusive,
                 left=_grow(x[mask], depth + 1, height_limit, rng),
                 right=_grow(x[~mask], depth + 1, height_limit, rng))


def _path_lengths(node, x, index, depth, out):
    if node.is_leaf:
        out[index] = depth + average_path_length(node.size)
        return
    column = x[index, node.feature]
    go_left = column <= node.threshold if node.inclusive else column < node.threshold
    _path_lengths(node.left, x, index[go_left], depth + 1, out)
    _path_lengths(node.right, x, index[~go_left], depth + 1, out)


@dataclass
class IsolationForest:
    """Random axis-aligned isolation trees; s(x) = 2^(-E[h(x)] / c(psi))"""

    n_trees: int = 100
    psi: int = 256
    seed: int = 0
    trees: List[_Node] = field(default_factory=list)
    sample_size: int = 0

    def fit(self, z):
        x = _as_matrix(z)
        if len(x) < 2:
            raise BatchSizeError(f"isolation forest needs at least 2 rows, got {len(x)}")
        if self.n_trees < 1 or self.psi < 2:
            raise ConfigError("isolation forest needs n_trees >= 1 and psi >= 2")
        self.sample_size = min(self.psi, len(x))
        height_limit = math.ceil(math.log2(self.sample_size))
        self.trees = []
        for child in np.random.SeedSequence(self.seed).spawn(self.n_trees):
            rng = np.random.default_rng(child)
            rows = rng.choice(len(x), size=self.sample_size, replace=False)
            self.trees.append(_grow(x[rows], 0, height_limit, rng))
        return self

    def path_length(self, z):
        """Mean path length E[h(x)] over the trees"""
        if not self.trees:
            raise ConfigError("isolation forest is not fitted")
        x = _as_matrix(z)
        total = np.zeros(len(x))
        for tree in self.trees:
            lengths = np.zeros(len(x))
            _path_lengths(tree, x, np.arange(len(x)), 0, lengths)
            total += lengths
        return total / len(self.trees)

    def score(self, z):
        """Anomaly scores in (0, 1); higher is more anomalous"""
        return np.power(2.0, -self.path_length(z) / average_path_length(self.sample_size))


def iforest_fit(z, n_trees=100, psi=256, seed=0):
    return IsolationForest(n_trees=n_trees, psi=psi, seed=seed).fit(z)


def iforest_score(forest, z):
    return forest.score(z)


# ----------------------------------------------------------------- F1 ----

def f1_best_threshold(scores, labels):
    """Best F1 of the rule `score >= threshold` over every distinct score.

    Returns (f1, threshold); ties go to the smallest threshold.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    _check_rows(scores, labels)
    if not np.isin(labels, (0, 1)).all():
        raise LabelError("labels must be binary")
    positives = int(labels.sum())
    if positives == 0:
        raise LabelError("F1 needs at least one positive label")
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    suffix = np.concatenate((np.cumsum(labels[order][::-1])[::-1], [0]))
    thresholds = np.unique(sorted_scores)
    first = np.searchsorted(sorted_scores, thresholds, side="left")
    predicted = len(scores) - first
    tp = suffix[first]
    f1 = 2.0 * tp / (predicted + positives)
    best = int(np.argmax(f1))
    return float(f1[best]), float(thresholds[best])
