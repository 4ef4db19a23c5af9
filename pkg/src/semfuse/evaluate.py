"""Downstream evaluation: k-means clustering with Hungarian-matched accuracy,
NMI, pairwise F-score, and seeded 5-NN classification over stratified splits.

All operations are pure given their seed; trial seeds derive from a master
seed so whole reports reproduce bitwise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import ConfigError, ShapeError
from .rng import substream


# ---------------------------------------------------------------------------
# k-means (Lloyd with k-means++ seeding and farthest-point reseeding)
# ---------------------------------------------------------------------------

def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = x[rng.integers(n)]
        else:
            centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iters: int):
    k = centers.shape[0]
    assign = np.full(x.shape[0], -1)
    for _ in range(max_iters):
        d2 = cdist(x, centers, metric="sqeuclidean")
        new_assign = d2.argmin(axis=1)
        point_d2 = d2[np.arange(x.shape[0]), new_assign]
        for j in range(k):
            mask = new_assign == j
            if mask.any():
                centers[j] = x[mask].mean(axis=0)
            else:
                far = int(point_d2.argmax())
                centers[j] = x[far]
                new_assign[far] = j
                point_d2[far] = 0.0
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    d2 = cdist(x, centers, metric="sqeuclidean")
    assign = d2.argmin(axis=1)
    wcss = float(d2[np.arange(x.shape[0]), assign].sum())
    return assign, wcss


def kmeans(x, k: int, restarts: int = 10, max_iters: int = 300, seed: int = 0) -> np.ndarray:
    """Cluster rows of ``x`` into k groups; best of ``restarts`` runs by WCSS."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < k:
        raise ShapeError(f"cannot form {k} clusters from {x.shape[0]} points")
    best_assign, best_wcss = None, np.inf
    for r in range(restarts):
        rng = substream(seed, "kmeans", r)
        centers = _kmeanspp_centers(x, k, rng)
        assign, wcss = _lloyd(x, centers, max_iters)
        if wcss < best_wcss:
            best_assign, best_wcss = assign, wcss
    return best_assign


# ---------------------------------------------------------------------------
# Partition-comparison metrics
# ---------------------------------------------------------------------------

def _contingency(pred, truth) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ShapeError(f"partition lengths differ: {pred.size} vs {truth.size}")
    kp, kt = pred.max() + 1, truth.max() + 1
    table = np.zeros((kp, kt), dtype=np.int64)
    np.add.at(table, (pred, truth), 1)
    return table


def hungarian_acc(pred, truth) -> float:
    """Fraction matched under the best bijection of cluster ids to classes."""
    table = _contingency(pred, truth)
    size = max(table.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return float(padded[rows, cols].sum()) / float(np.asarray(pred).size)


def _canonical(labels: np.ndarray) -> np.ndarray:
    _, canon = np.unique(labels, return_inverse=True)
    first = {}
    out = np.empty_like(canon)
    for i, v in enumerate(canon):
        if v not in first:
            first[v] = len(first)
        out[i] = first[v]
    return out


def nmi(pred, truth) -> float:
    """Mutual information normalized by the geometric mean of entropies.

    When either partition has zero entropy the value is 1 if the two are
    identical as set partitions, else 0.
    """
    table = _contingency(pred, truth).astype(np.float64)
    n = table.sum()
    pi = table.sum(axis=1) / n
    pj = table.sum(axis=0) / n
    h_pred = float(-(pi[pi > 0] * np.log(pi[pi > 0])).sum())
    h_truth = float(-(pj[pj > 0] * np.log(pj[pj > 0])).sum())
    if h_pred == 0.0 or h_truth == 0.0:
        same = np.array_equal(_canonical(np.asarray(pred)), _canonical(np.asarray(truth)))
        return 1.0 if same else 0.0
    p = table / n
    outer = pi[:, None] * pj[None, :]
    mask = p > 0
    mi = float((p[mask] * np.log(p[mask] / outer[mask])).sum())
    return float(min(max(mi / np.sqrt(h_pred * h_truth), 0.0), 1.0))


def pairwise_fscore(pred, truth) -> float:
    """F-measure over co-clustered sample pairs.

    Identical all-singleton partitions score 1; otherwise degenerate
    precision/recall fall back to 0.
    """
    table = _contingency(pred, truth)

    def pairs(counts):
        c = counts.astype(np.float64)
        return float((c * (c - 1) / 2).sum())

    tp = pairs(table.ravel())
    pred_pairs = pairs(table.sum(axis=1))
    truth_pairs = pairs(table.sum(axis=0))
    fp = pred_pairs - tp
    fn = truth_pairs - tp
    if tp + fp + fn == 0:
        return 1.0
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# k-nearest-neighbor classification
# ---------------------------------------------------------------------------

def knn_classify(train_x, train_y, test_x, k_neighbors: int = 5):
    """Euclidean majority-vote k-NN; returns predicted labels for ``test_x``.

    Vote ties break by summed inverse distance, then by smallest label;
    exact duplicate distances order by training index.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    test_x = np.asarray(test_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    if train_x.shape[0] == 0:
        raise ShapeError("empty training set")
    if train_x.shape[0] < k_neighbors:
        raise ShapeError(f"need at least {k_neighbors} training points, got {train_x.shape[0]}")
    dist = cdist(test_x, train_x)
    # stable sort keeps equal distances in training-index order
    order = np.argsort(dist, axis=1, kind="stable")[:, :k_neighbors]
    pred = np.empty(test_x.shape[0], dtype=np.int64)
    for i in range(test_x.shape[0]):
        idx = order[i]
        labels = train_y[idx]
        votes = np.bincount(labels)
        winners = np.flatnonzero(votes == votes.max())
        if winners.size == 1:
            pred[i] = winners[0]
            continue
        d = dist[i, idx]
        with np.errstate(divide="ignore"):
            inv = np.where(d > 0, 1.0 / np.maximum(d, 1e-300), np.inf)
        weight = {int(c): float(inv[labels == c].sum()) for c in winners}
        best = max(weight.values())
        pred[i] = min(c for c, wgt in weight.items() if wgt == best)
    return pred


def stratified_split(labels: np.ndarray, train_fraction: float, rng: np.random.Generator):
    """Per-class shuffled split keeping at least one training sample per class."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train fraction must lie in (0,1)")
    labels = np.asarray(labels, dtype=np.int64)
    train_idx, test_idx = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_train = max(1, int(round(train_fraction * idx.size)))
        n_train = min(n_train, idx.size)
        train_idx.append(idx[:n_train])
        test_idx.append(idx[n_train:])
    return np.concatenate(train_idx), np.concatenate(test_idx)


# ---------------------------------------------------------------------------
# Protocol-level evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalProtocol:
    cluster_trials: int = 10
    split_trials: int = 30
    split_fractions: tuple = (0.8, 0.5, 0.2)
    knn_k: int = 5
    kmeans_restarts: int = 10
    kmeans_max_iters: int = 300
    seed: int = 0


@dataclass
class MetricSummary:
    mean: float
    std: float
    trials: int


@dataclass
class EvalReport:
    clustering: dict = field(default_factory=dict)   # metric -> MetricSummary
    classification: dict = field(default_factory=dict)  # fraction -> MetricSummary
    seed: int = 0


def evaluate_representation(x, labels, k: int, protocol: EvalProtocol | None = None) -> EvalReport:
    """Clustering and k-NN classification metrics of one representation."""
    protocol = protocol or EvalProtocol()
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    report = EvalReport(seed=protocol.seed)

    scores = {"acc": [], "nmi": [], "fscore": []}
    for trial in range(protocol.cluster_trials):
        pred = kmeans(x, k, restarts=protocol.kmeans_restarts,
                      max_iters=protocol.kmeans_max_iters,
                      seed=_trial_seed(protocol.seed, 0, trial))
        scores["acc"].append(hungarian_acc(pred, labels))
        scores["nmi"].append(nmi(pred, labels))
        scores["fscore"].append(pairwise_fscore(pred, labels))
    for name, vals in scores.items():
        report.clustering[name] = MetricSummary(float(np.mean(vals)), float(np.std(vals)), len(vals))

    for fi, frac in enumerate(protocol.split_fractions):
        accs = []
        for trial in range(protocol.split_trials):
            rng = substream(protocol.seed, "splits", fi, trial)
            train_idx, test_idx = stratified_split(labels, frac, rng)
            pred = knn_classify(x[train_idx], labels[train_idx], x[test_idx],
                                k_neighbors=protocol.knn_k)
            accs.append(float((pred == labels[test_idx]).mean()))
        report.classification[frac] = MetricSummary(float(np.mean(accs)), float(np.std(accs)), len(accs))
    return report


def _trial_seed(seed: int, purpose: int, trial: int) -> int:
    # distinct deterministic 63-bit seed per trial
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(purpose, trial))
               .generate_state(1, np.uint64)[0] >> 1)


def fusion_baseline(z_per_view: list[np.ndarray], mode: str) -> np.ndarray:
    """Naive multi-view fusions of latent codes: 'concat' or 'average'."""
    if mode == "concat":
        return np.concatenate(z_per_view, axis=1)
    if mode == "average":
        acc = z_per_view[0].copy()
        for z in z_per_view[1:]:
            acc += z
        return acc / len(z_per_view)
    raise ConfigError(f"unknown fusion mode {mode!r}")


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

def metric_rows(dataset: str, variant: str, report: EvalReport) -> list[list]:
    rows = []
    for name, s in report.clustering.items():
        rows.append([dataset, variant, name, repr(s.mean), repr(s.std), s.trials, report.seed])
    for frac, s in report.classification.items():
        label = f"knn_acc_{int(round(frac * 100))}_{int(round((1 - frac) * 100))}"
        rows.append([dataset, variant, label, repr(s.mean), repr(s.std), s.trials, report.seed])
    return rows


def write_metrics_csv(path, rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "variant", "metric", "mean", "std", "trials", "seed"])
        writer.writerows(rows)


def write_embedding_csv(path, x: np.ndarray, labels: np.ndarray | None) -> None:
    x = np.asarray(x, dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = [f"h_{j}" for j in range(x.shape[1])]
        if labels is not None:
            header.append("label")
        writer.writerow(header)
        for i in range(x.shape[0]):
            row = [repr(float(v)) for v in x[i]]
            if labels is not None:
                row.append(int(labels[i]))
            writer.writerow(row)
