"""Downstream analyses of DI matrices: clustering, embedding, classification.

A symmetrized DI matrix becomes a distance matrix through a heat kernel;
k-means groups channels from the distance rows, classical MDS embeds them,
and a nearest-neighbor rule classifies whole matrices by Frobenius
distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import (
    BadDims,
    BadInput,
    BadK,
    BadLabels,
    EmptyCorpus,
    NumericalError,
    ShapeError,
)
from .estimator import DiMatrix


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric nonnegative distances with a zero diagonal."""

    labels: tuple[str, ...]
    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        k = len(self.labels)
        if entries.shape != (k, k):
            raise ShapeError("entries must be K x K")
        if np.any(entries < 0):
            raise BadInput("distances must be nonnegative")
        if np.max(np.abs(entries - entries.T)) > 0:
            raise BadInput("distance matrix must be symmetric")
        if np.any(np.diag(entries) != 0):
            raise BadInput("diagonal must be zero")

    @property
    def k(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class LabeledCorpus:
    """DI matrices with class labels, all sharing one channel set."""

    items: tuple[tuple[DiMatrix, object], ...]
    class_count: int

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if not self.items:
            raise EmptyCorpus("corpus has no items")
        labels = self.items[0][0].labels
        for mat, _ in self.items:
            if mat.labels != labels:
                raise ShapeError("all corpus matrices must share channel labels")
        classes = {c for _, c in self.items}
        if len(classes) != self.class_count:
            raise BadLabels(
                f"class_count={self.class_count} but {len(classes)} distinct labels"
            )

    def __len__(self) -> int:
        return len(self.items)


def heat_kernel_distance(di, sigma: float = 0.5, labels=None) -> DistanceMatrix:
    """Turn a DI matrix into distances via d = exp(-S / sigma).

    S is the symmetrized DI rescaled to [0, 1] over the off-diagonal
    entries, so strong interaction means small distance; the diagonal is
    forced to zero.
    """
    if sigma <= 0:
        raise BadInput("sigma must be positive")
    if isinstance(di, DiMatrix):
        values = di.values()
        labels = di.labels
    else:
        values = np.asarray(di, dtype=float)
        if labels is None:
            labels = tuple(f"ch{i:02d}" for i in range(values.shape[0]))
    k = values.shape[0]
    sym = 0.5 * (values + values.T)
    off = ~np.eye(k, dtype=bool)
    lo, hi = sym[off].min(), sym[off].max()
    scaled = np.zeros_like(sym)
    if hi > lo:
        scaled[off] = (sym[off] - lo) / (hi - lo)
    dist = np.exp(-scaled / sigma)
    np.fill_diagonal(dist, 0.0)
    return DistanceMatrix(tuple(labels), dist)


def _kmeans_once(points: np.ndarray, k: int, rng: np.random.Generator):
    """One seeded k-means++ run; returns (assignment, objective)."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    closest = ((points - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            centroids[c] = points[int(rng.integers(n))]
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r))
            centroids[c] = points[min(idx, n - 1)]
        closest = np.minimum(closest, ((points - centroids[c]) ** 2).sum(axis=1))

    prev_objective = np.inf
    assign = np.zeros(n, dtype=int)
    for _ in range(300):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        objective = float(d2[np.arange(n), assign].sum())
        if objective > prev_objective * (1 + 1e-12):
            raise NumericalError("k-means objective increased")
        for c in range(k):
            members = assign == c
            if members.any():
                centroids[c] = points[members].mean(axis=0)
            else:
                # deterministic re-seed: farthest point from its centroid
                far = int(np.argmax(d2[np.arange(n), assign]))
                centroids[c] = points[far]
        if prev_objective - objective <= 1e-12 * max(prev_objective, 1.0):
            break
        prev_objective = objective
    return assign, objective


def kmeans(
    dist: DistanceMatrix,
    k: int,
    seed: int = 0,
    restarts: int = 10,
    return_objective: bool = False,
):
    """Cluster channels by treating distance-matrix rows as coordinates.

    Runs ``restarts`` seeded k-means++ starts and keeps the assignment with
    the lowest within-cluster sum of squared point-to-centroid distances.
    """
    if not 1 <= k <= dist.k:
        raise BadK(f"k={k} outside [1, {dist.k}]")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        assign, objective = _kmeans_once(dist.entries, k, rng)
        if best is None or objective < best[1]:
            best = (assign, objective)
    if return_objective:
        return best
    return best[0]


def choose_k_elbow(dist: DistanceMatrix, k_max: int, seed: int = 0) -> int:
    """Pick k by the largest relative drop of the k-means objective."""
    k_max = min(k_max, dist.k)
    if k_max < 2:
        return 1
    objectives = []
    for k in range(1, k_max + 1):
        _, obj = kmeans(dist, k, seed=seed, return_objective=True)
        objectives.append(obj)
    drops = [
        (objectives[i - 1] - objectives[i]) / max(objectives[i - 1], 1e-300)
        for i in range(1, len(objectives))
    ]
    return int(np.argmax(drops)) + 2


def mds(dist: DistanceMatrix, dims: int) -> np.ndarray:
    """Classical multidimensional scaling of a distance matrix.

    Double-centers the squared distances and takes the top spectral
    coordinates; columns come out ordered by decreasing eigenvalue, with a
    deterministic sign convention.
    """
    k = dist.k
    if not 1 <= dims < k:
        raise BadDims(f"dims={dims} must lie in [1, {k - 1}]")
    d2 = dist.entries**2
    j = np.eye(k) - np.ones((k, k)) / k
    b = -0.5 * j @ d2 @ j
    w, v = np.linalg.eigh(b)
    idx = np.argsort(w)[::-1][:dims]
    coords = v[:, idx] * np.sqrt(np.clip(w[idx], 0.0, None))
    for c in range(coords.shape[1]):
        col = coords[:, c]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            coords[:, c] = -col
    return coords


def embedding_stress(dist: DistanceMatrix, coords: np.ndarray) -> float:
    """Normalized residual between input distances and embedded distances."""
    k = dist.k
    diff = coords[:, None, :] - coords[None, :, :]
    emb = np.sqrt((diff**2).sum(axis=2))
    iu = np.triu_indices(k, 1)
    num = float(((dist.entries - emb)[iu] ** 2).sum())
    den = float((dist.entries[iu] ** 2).sum())
    if den == 0:
        return 0.0
    return float(np.sqrt(num / den))


def _matrix_distance(a: DiMatrix, b: DiMatrix) -> float:
    va, vb = a.values(), b.values()
    sa, sb = 0.5 * (va + va.T), 0.5 * (vb + vb.T)
    return float(np.linalg.norm(sa - sb))


def knn_classify(corpus: LabeledCorpus, query: DiMatrix, k: int):
    """Majority vote among the k nearest corpus matrices.

    Distance is the Frobenius norm between symmetrized DI matrices.  Vote
    ties break toward the class with the smallest mean distance inside the
    neighborhood, then toward the lowest class in sort order.
    """
    if k < 1 or k > len(corpus):
        raise BadK(f"k={k} outside [1, {len(corpus)}]")
    if query.labels != corpus.items[0][0].labels:
        raise ShapeError("query must share the corpus channel labels")
    dists = np.array([_matrix_distance(mat, query) for mat, _ in corpus.items])
    nearest = np.argsort(dists, kind="stable")[:k]
    votes: dict[object, list[float]] = {}
    for idx in nearest:
        votes.setdefault(corpus.items[idx][1], []).append(float(dists[idx]))
    best_count = max(len(v) for v in votes.values())
    tied = [c for c, v in votes.items() if len(v) == best_count]
    if len(tied) == 1:
        return tied[0]
    means = {c: float(np.mean(votes[c])) for c in tied}
    best_mean = min(means.values())
    tied = sorted((c for c in tied if means[c] == best_mean), key=str)
    return tied[0]


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the tie-corrected rank statistic."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel().astype(int)
    if scores.size != labels.size:
        raise ShapeError("scores and labels must have equal length")
    if not set(np.unique(labels)) <= {0, 1}:
        raise BadLabels("labels must be binary 0/1")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise BadLabels("both classes must be present")
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(scores, labels) -> np.ndarray:
    """(fpr, tpr) pairs at every score threshold, ends pinned at (0,0)/(1,1)."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel().astype(int)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise BadLabels("both classes must be present")
    order = np.argsort(-scores, kind="stable")
    sorted_labels = labels[order]
    sorted_scores = scores[order]
    tps = np.cumsum(sorted_labels)
    fps = np.cumsum(1 - sorted_labels)
    # keep only the last point of each tied-score run
    keep = np.r_[np.flatnonzero(np.diff(sorted_scores) != 0), labels.size - 1]
    pts = np.column_stack([fps[keep] / n_neg, tps[keep] / n_pos])
    return np.vstack([[0.0, 0.0], pts])
