"""Batch and incremental k-means, FFI-optimized centroids and fusion into BP classes."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .audio_io import BPLabel
from .optimizer import FFIConfig, OptimizeResult, optimize

MEMBERSHIP_EPS = 1e-9


class BPClass(IntEnum):
    LOW = 0
    NORMAL = 1
    HIGH = 2


class LengthMismatch(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class EmptyClusterRepaired(UserWarning):
    pass


class DegenerateMapping(UserWarning):
    pass


def bp_class_from_label(label: BPLabel) -> BPClass:
    """Clinical cutoffs: High if >= 140/90, else Low if < 90/60, else Normal."""
    if label.systolic_mmhg >= 140 or label.diastolic_mmhg >= 90:
        return BPClass.HIGH
    if label.systolic_mmhg < 90 or label.diastolic_mmhg < 60:
        return BPClass.LOW
    return BPClass.NORMAL


@dataclass
class ClusterModel:
    centroids: np.ndarray  # (k, d)
    counts: np.ndarray  # (k,) int
    sums: np.ndarray  # (k, d)
    class_map: Optional[np.ndarray] = None  # cluster -> BPClass value

    def __post_init__(self):
        self.centroids = np.array(self.centroids, dtype=np.float64, ndmin=2)
        self.sums = np.array(self.sums, dtype=np.float64, ndmin=2)
        self.counts = np.array(self.counts, dtype=np.int64)
        if self.centroids.shape != self.sums.shape or self.counts.shape != (self.k,):
            raise ShapeMismatch("centroids, sums and counts disagree on k or d")
        if self.class_map is not None:
            self.class_map = np.asarray(self.class_map, dtype=np.int64)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]

    @classmethod
    def from_assignments(cls, data: np.ndarray, labels: np.ndarray, k: int, fallback: Optional[np.ndarray] = None) -> "ClusterModel":
        """Sums, counts and centroids from a hard partition; empty clusters keep `fallback` rows."""
        data = np.asarray(data, dtype=np.float64)
        labels = np.asarray(labels)
        sums = np.zeros((k, data.shape[1]))
        np.add.at(sums, labels, data)
        counts = np.bincount(labels, minlength=k)
        centroids = np.zeros_like(sums) if fallback is None else np.array(fallback, dtype=np.float64)
        filled = counts > 0
        centroids[filled] = sums[filled] / counts[filled, None]
        return cls(centroids, counts, sums)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "d": self.d,
            "centroids": self.centroids.tolist(),
            "counts": self.counts.tolist(),
            "sums": self.sums.tolist(),
            "class_map": None if self.class_map is None else self.class_map.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ClusterModel":
        model = cls(obj["centroids"], obj["counts"], obj["sums"], obj.get("class_map"))
        if model.k != obj["k"] or model.d != obj["d"]:
            raise ShapeMismatch("snapshot k/d do not match centroid array")
        return model

    def to_json(self) -> str:
        # json writes floats with repr(), the shortest string that round-trips exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ClusterModel":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "ClusterModel":
        return cls.from_json(Path(path).read_text())


# ---------------------------------------------------------------------------
# distances and assignment


def squared_distances(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    diff = data[:, None, :] - np.asarray(centroids)[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def assign(model: ClusterModel, point: np.ndarray) -> tuple[int, float]:
    """Nearest centroid and its Euclidean distance; ties go to the lowest index."""
    d2 = squared_distances(point, model.centroids)[0]
    j = int(np.argmin(d2))
    return j, float(np.sqrt(d2[j]))


def assign_all(centroids: np.ndarray, data: np.ndarray) -> np.ndarray:
    return np.argmin(squared_distances(data, centroids), axis=1)


def kmeans_loss(data: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    diff = np.asarray(data) - np.asarray(centroids)[labels]
    return float(np.sum(diff * diff))


def soft_membership(model: ClusterModel, point: np.ndarray) -> np.ndarray:
    """Inverse squared distance weights 1 / (d_j^2 + eps), normalized to sum to 1."""
    return soft_memberships(model, np.atleast_2d(point))[0]


def soft_memberships(model: ClusterModel, data: np.ndarray) -> np.ndarray:
    w = 1.0 / (squared_distances(data, model.centroids) + MEMBERSHIP_EPS)
    return w / w.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# batch k-means


def kmeans_pp_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding; picks k distinct rows whenever the data has k distinct points."""
    n = data.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = squared_distances(data, data[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            remaining = np.setdiff1d(np.arange(n), chosen)
            j = int(rng.choice(remaining))
        else:
            j = int(rng.choice(n, p=d2 / total))
        chosen.append(j)
        d2 = np.minimum(d2, squared_distances(data, data[j : j + 1])[:, 0])
    return data[chosen].copy()


def lloyd(data: np.ndarray, centroids: np.ndarray, max_iters: int = 100) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations until assignments stop changing.

    Returns final centroids, labels and the loss after each assignment step.
    An empty cluster is reseeded at the point farthest from its centroid.
    """
    data = np.asarray(data, dtype=np.float64)
    centroids = np.array(centroids, dtype=np.float64)
    k = centroids.shape[0]
    labels = assign_all(centroids, data)
    losses = [kmeans_loss(data, centroids, labels)]
    for _ in range(max_iters):
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            d2 = np.sum((data - centroids[labels]) ** 2, axis=1)
            # never steal the last member of another cluster
            d2[np.bincount(labels, minlength=k)[labels] <= 1] = -1.0
            far = int(np.argmax(d2))
            warnings.warn(f"cluster {j} empty, reseeded at sample {far}", EmptyClusterRepaired, stacklevel=2)
            labels[far] = j
        model = ClusterModel.from_assignments(data, labels, k, fallback=centroids)
        centroids = model.centroids
        new_labels = assign_all(centroids, data)
        losses.append(kmeans_loss(data, centroids, new_labels))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centroids, labels, losses


def kmeans_batch(data: np.ndarray, k: int, max_iters: int = 100, seed: int = 0) -> ClusterModel:
    data = np.asarray(data, dtype=np.float64)
    if data.shape[0] < k:
        raise ValueError(f"need at least k={k} samples, got {data.shape[0]}")
    rng = np.random.default_rng(seed)
    init = kmeans_pp_init(data, k, rng)
    centroids, labels, _ = lloyd(data, init, max_iters)
    return ClusterModel.from_assignments(data, labels, k, fallback=centroids)


# ---------------------------------------------------------------------------
# incremental k-means


def incremental_update(model: ClusterModel, point: np.ndarray, cluster: Optional[int] = None) -> int:
    """Add one point to its nearest cluster (or `cluster` if given) in place.

    The receiving centroid becomes (sum + point) / (count + 1); nothing else
    changes. Returns the cluster index.
    """
    point = np.asarray(point, dtype=np.float64)
    j = assign(model, point)[0] if cluster is None else int(cluster)
    model.sums[j] += point
    model.counts[j] += 1
    model.centroids[j] = model.sums[j] / model.counts[j]
    return j


def replay(model: ClusterModel, data: np.ndarray, epochs: int) -> ClusterModel:
    """Stream `data` through `incremental_update` `epochs` times."""
    for _ in range(epochs):
        for x in np.asarray(data, dtype=np.float64):
            incremental_update(model, x)
    return model


# ---------------------------------------------------------------------------
# class mapping, fitness and fusion


def majority_class_map(labels: np.ndarray, truth: Sequence[int], k: int, n_classes: int = 3) -> np.ndarray:
    """Each cluster's most frequent true class (ties: lowest class id).

    Clusters with no training members get the overall most frequent class.
    """
    labels = np.asarray(labels)
    truth = np.asarray(truth, dtype=np.int64)
    overall = int(np.argmax(np.bincount(truth, minlength=n_classes)))
    out = np.full(k, overall, dtype=np.int64)
    for j in range(k):
        members = truth[labels == j]
        if members.size:
            out[j] = int(np.argmax(np.bincount(members, minlength=n_classes)))
        else:
            warnings.warn(f"cluster {j} has no training samples", DegenerateMapping, stacklevel=2)
    return out


def confusion_counts(predicted: Sequence, truth: Sequence, n_classes: Optional[int] = None) -> tuple[int, int, int, int]:
    """One-vs-rest (tp, tn, fp, fn) summed over classes."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise LengthMismatch(f"predicted {predicted.shape} vs truth {truth.shape}")
    if predicted.size == 0:
        raise LengthMismatch("empty inputs")
    classes = np.union1d(predicted, truth)
    n_cls = max(len(classes), n_classes or 0)
    n = predicted.size
    correct = int(np.count_nonzero(predicted == truth))
    wrong = n - correct
    # each error is one fp (predicted class) and one fn (true class)
    tn = n * n_cls - correct - 2 * wrong
    return correct, tn, wrong, wrong


def fitness_from_counts(tp: float, tn: float, fp: float, fn: float) -> float:
    return (tp + tn) / (tp + tn + fp + fn)


def accuracy_fitness(predicted: Sequence, truth: Sequence, n_classes: Optional[int] = None) -> float:
    """(tp + tn) / (tp + tn + fp + fn) with counts summed one-vs-rest over classes."""
    return fitness_from_counts(*confusion_counts(predicted, truth, n_classes))


def clustering_objective(data: np.ndarray, truth: np.ndarray, k: int, n_classes: int = 3):
    """1 - fitness of the partition induced by a flattened centroid vector."""
    data = np.asarray(data, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    d = data.shape[1]

    def objective(flat: np.ndarray) -> float:
        labels = assign_all(flat.reshape(k, d), data)
        # vectorized majority vote: contingency table cluster x class
        table = np.zeros((k, n_classes), dtype=np.int64)
        np.add.at(table, (labels, truth), 1)
        cmap = np.argmax(table, axis=1)
        empty = table.sum(axis=1) == 0
        cmap[empty] = np.argmax(np.bincount(truth, minlength=n_classes))
        return 1.0 - accuracy_fitness(cmap[labels], truth, n_classes)

    return objective


@dataclass
class FFIClusterResult:
    model: ClusterModel
    optimization: OptimizeResult = field(repr=False)


def ffi_cluster(
    data: np.ndarray,
    truth: Sequence[int],
    k: int = 3,
    ffi_cfg: Optional[FFIConfig] = None,
    n_classes: int = 3,
) -> ClusterModel:
    """Centroids chosen by the FFI optimizer to maximize training fitness."""
    return ffi_cluster_full(data, truth, k, ffi_cfg, n_classes).model


def ffi_cluster_full(data, truth, k=3, ffi_cfg=None, n_classes=3) -> FFIClusterResult:
    data = np.asarray(data, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if data.shape[0] != truth.shape[0]:
        raise LengthMismatch("data and truth lengths differ")
    lo, hi = data.min(axis=0), data.max(axis=0)
    flat_lo = np.tile(lo, k)
    flat_hi = np.tile(np.where(hi > lo, hi, lo + 1.0), k)
    base = ffi_cfg or FFIConfig()
    cfg = FFIConfig(
        population_size=base.population_size,
        max_iterations=base.max_iterations,
        bounds=list(zip(flat_lo, flat_hi)),
        objective_tolerance=base.objective_tolerance,
        a4_epsilon=base.a4_epsilon,
        rng_seed=base.rng_seed,
        mode=base.mode,
    )
    result = optimize(clustering_objective(data, truth, k, n_classes), cfg)
    centroids = result.best.position.reshape(k, data.shape[1])
    labels = assign_all(centroids, data)
    # occupied clusters move to the mean of their members; empty ones keep the optimized centroid
    model = ClusterModel.from_assignments(data, labels, k, fallback=centroids)
    model.class_map = majority_class_map(labels, truth, k, n_classes)
    return FFIClusterResult(model, result)


def class_memberships(membership: np.ndarray, class_map: np.ndarray, n_classes: int = 3) -> np.ndarray:
    """Sum cluster columns into class columns via the cluster -> class map."""
    membership = np.atleast_2d(np.asarray(membership, dtype=np.float64))
    out = np.zeros((membership.shape[0], n_classes))
    for j, c in enumerate(class_map):
        out[:, c] += membership[:, j]
    return out


def fuse(m1: np.ndarray, m2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise product of two class-aligned membership matrices, renormalized.

    Rows whose product vanishes fall back to `m2`. Class = argmax, ties to the
    lower index.
    """
    m1 = np.atleast_2d(np.asarray(m1, dtype=np.float64))
    m2 = np.atleast_2d(np.asarray(m2, dtype=np.float64))
    if m1.shape != m2.shape:
        raise ShapeMismatch(f"{m1.shape} vs {m2.shape}")
    prod = m1 * m2
    totals = prod.sum(axis=1, keepdims=True)
    dead = totals[:, 0] <= 0
    combined = np.empty_like(prod)
    combined[~dead] = prod[~dead] / totals[~dead]
    combined[dead] = m2[dead] / m2[dead].sum(axis=1, keepdims=True)
    return combined, np.argmax(combined, axis=1)


def predict_classes(model: ClusterModel, data: np.ndarray) -> np.ndarray:
    if model.class_map is None:
        raise ValueError("model has no class mapping")
    return model.class_map[assign_all(model.centroids, data)]
