"""Clustering validity indices and least-squares regression statistics.

All geometric indices use Euclidean distance. Degenerate conventions:
silhouette of a singleton is 0, homogeneity is 1 when there is a single true
class, completeness is 1 when there is a single cluster.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform


class DegenerateClusters(ValueError):
    pass


class ZeroDiameter(ValueError):
    pass


class SingularDesign(ValueError):
    pass


def _labels(labels: Sequence) -> np.ndarray:
    # list() keeps a string like "AABB" from collapsing into one scalar
    return np.asarray(list(labels))


def _relabel(labels: Sequence) -> np.ndarray:
    return np.unique(_labels(labels), return_inverse=True)[1].ravel()


def davies_bouldin(data: np.ndarray, assignments: Sequence[int], centroids: np.ndarray) -> float:
    """Mean over clusters of the worst (s_i + s_j) / d(c_i, c_j); lower is better."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    labels = _labels(assignments)
    centroids = np.atleast_2d(np.asarray(centroids, dtype=np.float64))
    used = np.unique(labels)
    if used.size < 2:
        raise DegenerateClusters("need at least two non-empty clusters")
    c = centroids[used]
    scatter = np.array([np.linalg.norm(data[labels == j] - centroids[j], axis=1).mean() for j in used])
    sep = cdist(c, c)
    off = ~np.eye(used.size, dtype=bool)
    if np.any(sep[off] == 0):
        raise DegenerateClusters("coincident centroids")
    ratio = np.where(off, (scatter[:, None] + scatter[None, :]) / np.where(off, sep, 1.0), -np.inf)
    return float(ratio.max(axis=1).mean())


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def contingency(truth: Sequence, predicted: Sequence) -> np.ndarray:
    t, p = _relabel(truth), _relabel(predicted)
    table = np.zeros((t.max() + 1, p.max() + 1), dtype=np.int64)
    np.add.at(table, (t, p), 1)
    return table


def homogeneity_completeness(truth: Sequence, predicted: Sequence) -> tuple[float, float]:
    """h = 1 - H(C|K)/H(C), c = 1 - H(K|C)/H(K)."""
    if len(truth) != len(predicted) or len(truth) == 0:
        raise ValueError("truth and predicted must be equal-length and non-empty")
    table = contingency(truth, predicted).astype(np.float64)
    n = table.sum()
    h_c = _entropy(table.sum(axis=1))
    h_k = _entropy(table.sum(axis=0))
    nz = table > 0
    joint = table[nz] / n
    row = np.broadcast_to(table.sum(axis=1, keepdims=True), table.shape)[nz]
    col = np.broadcast_to(table.sum(axis=0, keepdims=True), table.shape)[nz]
    h_c_given_k = float(-(joint * np.log(table[nz] / col)).sum())
    h_k_given_c = float(-(joint * np.log(table[nz] / row)).sum())
    h = 1.0 if h_c == 0 else 1.0 - h_c_given_k / h_c
    c = 1.0 if h_k == 0 else 1.0 - h_k_given_c / h_k
    return float(np.clip(h, 0.0, 1.0)), float(np.clip(c, 0.0, 1.0))


def jaccard_similarity(truth: Sequence, predicted: Sequence) -> float:
    """Pair-counting Jaccard: pairs together in both / pairs together in either.

    Two all-singleton partitions have no co-assigned pairs and count as identical (1.0).
    """
    if len(truth) != len(predicted) or len(truth) < 2:
        raise ValueError("need two equal-length sequences with at least 2 samples")
    table = contingency(truth, predicted)
    pairs = lambda m: float((m * (m - 1) // 2).sum())  # noqa: E731
    both = pairs(table)
    same_class = pairs(table.sum(axis=1))
    same_cluster = pairs(table.sum(axis=0))
    union = same_class + same_cluster - both
    return 1.0 if union == 0 else both / union


def silhouette(data: np.ndarray, assignments: Sequence[int]) -> float:
    """Mean silhouette (b - a) / max(a, b); singletons and a = b = 0 score 0."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    labels = _relabel(assignments)
    k = labels.max() + 1
    if k < 2:
        raise DegenerateClusters("silhouette needs at least two clusters")
    dist = squareform(pdist(data))
    sizes = np.bincount(labels, minlength=k)
    # sum of distances from each point to each cluster
    sums = np.zeros((data.shape[0], k))
    for j in range(k):
        sums[:, j] = dist[:, labels == j].sum(axis=1)
    idx = np.arange(data.shape[0])
    own = sizes[labels]
    a = np.where(own > 1, sums[idx, labels] / np.maximum(own - 1, 1), 0.0)
    means = sums / sizes[None, :]
    means[idx, labels] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def dunn_index(data: np.ndarray, assignments: Sequence[int]) -> float:
    """Smallest between-cluster point distance over the largest cluster diameter."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    labels = _relabel(assignments)
    if labels.max() < 1:
        raise DegenerateClusters("dunn index needs at least two clusters")
    dist = squareform(pdist(data))
    same = labels[:, None] == labels[None, :]
    diameter = dist[same].max()
    if diameter == 0:
        raise ZeroDiameter("every cluster has zero diameter")
    return float(dist[~same].min() / diameter)


@dataclass(frozen=True)
class RegressionStats:
    multiple_r: float
    r_square: float
    adjusted_r_square: float
    standard_error: float
    n: int
    coefficients: tuple[float, ...]  # intercept first


def ols_regression(x, y) -> RegressionStats:
    """Least squares with intercept; `x` is a 1-D predictor or an (n, p) design."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    if n != y.size:
        raise ValueError("x and y lengths differ")
    if n <= p + 1:
        raise ValueError(f"need n > p + 1 observations, got n={n}, p={p}")
    design = np.column_stack([np.ones(n), x])
    if np.linalg.matrix_rank(design) < p + 1:
        raise SingularDesign("design matrix is rank deficient")
    # centered normal equations: the intercept drops out, exact fits give exact zeros
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    slopes = np.linalg.solve(xc.T @ xc, xc.T @ yc)
    beta = np.concatenate([[y.mean() - x.mean(axis=0) @ slopes], slopes])
    resid = yc - xc @ slopes
    sse = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 0.0 if sst == 0 else max(0.0, 1.0 - sse / sst)
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)
    return RegressionStats(
        multiple_r=float(np.sqrt(r2)),
        r_square=r2,
        adjusted_r_square=adj,
        standard_error=float(np.sqrt(sse / (n - p - 1))),
        n=n,
        coefficients=tuple(float(b) for b in beta),
    )


@dataclass
class EvaluationReport:
    davies_bouldin: float
    homogeneity: float
    completeness: float
    jaccard: float
    silhouette: float
    dunn: float
    accuracy: float
    seed: int
    training_percent: int
    epochs: int
    method: str
    n_train: int
    n_test: int
    excluded_clips: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @staticmethod
    def csv_header() -> list[str]:
        return [f.name for f in fields(EvaluationReport)]

    def csv_row(self) -> list:
        return [getattr(self, name) for name in self.csv_header()]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        w.writerow(self.csv_row())
        return buf.getvalue()
