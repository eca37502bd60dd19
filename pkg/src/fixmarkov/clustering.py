"""k-means and agglomerative clustering of fixation locations.

Labels are 0-based: a model with ``k`` clusters uses labels ``0..k-1``.
Every tie (equal distances, equal merge costs, equal vote counts) is broken
in favour of the lowest index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Metric(str, enum.Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Distance matrix between the rows of ``a`` and the rows of ``b``."""
        diff = np.abs(np.asarray(a, float)[:, None, :] - np.asarray(b, float)[None, :, :])
        if self is Metric.L1:
            return diff.sum(axis=-1)
        if self is Metric.L2:
            return np.sqrt((diff ** 2).sum(axis=-1))
        return diff.max(axis=-1)

    def distance(self, p, q) -> float:
        return float(self.pairwise(np.atleast_2d(p), np.atleast_2d(q))[0, 0])


class Linkage(str, enum.Enum):
    WARD = "ward"
    COMPLETE = "complete"
    UPGMA = "upgma"


class AssignmentRule(str, enum.Enum):
    NEAREST_CENTRE = "nearest_centre"
    KNN = "knn"


@dataclass(frozen=True, eq=False)
class ClusterModel:
    k: int
    labels: np.ndarray
    training_points: np.ndarray
    centres: np.ndarray
    rule: AssignmentRule = AssignmentRule.NEAREST_CENTRE
    metric: Metric = Metric.L2
    neighbour_count: int = 5
    method: str = "kmeans"
    linkage: Linkage | None = None
    objective: float = float("nan")
    history: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if self.k < 1:
            raise ValueError("k must be positive")
        if len(labels) != len(self.training_points):
            raise ValueError("one label per training point is required")
        if labels.min() < 0 or labels.max() >= self.k or len(np.unique(labels)) != self.k:
            raise ValueError("every label in 0..k-1 must be used by some training point")
        if self.rule is AssignmentRule.KNN and self.neighbour_count < 1:
            raise ValueError("neighbour_count must be positive")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "training_points", np.asarray(self.training_points, float))
        object.__setattr__(self, "centres", np.asarray(self.centres, float).reshape(self.k, 2))

    def members(self, label: int) -> np.ndarray:
        return self.training_points[self.labels == label]

    def assign(self, points) -> np.ndarray:
        """Cluster label for each row of ``points``."""
        points = np.atleast_2d(np.asarray(points, float))
        if self.rule is AssignmentRule.NEAREST_CENTRE:
            # argmin returns the first minimum, i.e. the lowest label on ties
            return Metric.L2.pairwise(points, self.centres).argmin(axis=1)
        m = min(self.neighbour_count, len(self.training_points))
        dist = self.metric.pairwise(points, self.training_points)
        # stable sort keeps equal distances in training order
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :m]
        votes = np.zeros((len(points), self.k), dtype=int)
        np.add.at(votes, (np.repeat(np.arange(len(points)), m), self.labels[nearest].ravel()), 1)
        return votes.argmax(axis=1)

    def relabel(self, permutation) -> "ClusterModel":
        """Model whose label ``permutation[i]`` denotes this model's cluster ``i``."""
        perm = np.asarray(permutation, dtype=int)
        centres = np.empty_like(self.centres)
        centres[perm] = self.centres
        return ClusterModel(k=self.k, labels=perm[self.labels], training_points=self.training_points,
                            centres=centres, rule=self.rule, metric=self.metric,
                            neighbour_count=self.neighbour_count, method=self.method,
                            linkage=self.linkage, objective=self.objective)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "method": self.method,
            "rule": self.rule.value,
            "metric": self.metric.value,
            "linkage": self.linkage.value if self.linkage else None,
            "neighbour_count": self.neighbour_count,
            "centres": self.centres.tolist(),
            "labels": self.labels.tolist(),
            "training_points": self.training_points.tolist(),
            "objective": None if np.isnan(self.objective) else self.objective,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "ClusterModel":
        linkage = payload.get("linkage")
        objective = payload.get("objective")
        return cls(k=payload["k"], labels=payload["labels"],
                   training_points=np.asarray(payload["training_points"], float).reshape(-1, 2),
                   centres=payload["centres"], rule=AssignmentRule(payload["rule"]),
                   metric=Metric(payload["metric"]), neighbour_count=payload["neighbour_count"],
                   method=payload["method"], linkage=Linkage(linkage) if linkage else None,
                   objective=float("nan") if objective is None else objective)


def _check(points: np.ndarray, k: int) -> np.ndarray:
    points = np.asarray(points, float).reshape(-1, 2)
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if len(points) < k:
        raise ValueError(f"cannot form {k} clusters from {len(points)} points")
    return points


def sse(points: np.ndarray, labels: np.ndarray, centres: np.ndarray) -> float:
    return float(((points - centres[labels]) ** 2).sum())


def _lloyd(points, k, rng, max_iter):
    n = len(points)
    centres = points[rng.choice(n, size=k, replace=False)].copy()
    labels = None
    history = []
    for _ in range(max_iter):
        new = Metric.L2.pairwise(points, centres).argmin(axis=1)
        # an empty cluster takes the point farthest from its current centre
        for _ in range(k):
            empty = np.setdiff1d(np.arange(k), new)
            if not len(empty):
                break
            j = empty[0]
            far = int(np.argmax(((points - centres[new]) ** 2).sum(axis=1)))
            new[far] = j
            centres[j] = points[far]
        history.append(sse(points, new, centres))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centres = np.array([points[labels == j].mean(axis=0) for j in range(k)])
        history.append(sse(points, labels, centres))
    return labels, centres, history


def kmeans(points, k: int, restarts: int = 10, seed: int = 0, max_iter: int = 100) -> ClusterModel:
    """Multi-start Lloyd k-means with uniformly chosen distinct starting points.

    Restart ``i`` draws from a generator seeded by ``(seed, i)``, so adding
    restarts never changes the earlier ones. The restart with the smallest
    within-cluster sum of squares wins; ties go to the earliest restart.
    """
    points = _check(points, k)
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        labels, centres, history = _lloyd(points, k, np.random.default_rng(child), max_iter)
        objective = sse(points, labels, centres)
        if best is None or objective < best[0]:
            best = (objective, labels, centres, history)
    objective, labels, centres, history = best
    return ClusterModel(k=k, labels=labels, training_points=points, centres=centres,
                        objective=objective, history=tuple(history))


def _lance_williams(linkage: Linkage, d_ki, d_kj, d_ij, n_i, n_j, n_k):
    if linkage is Linkage.COMPLETE:
        return np.maximum(d_ki, d_kj)
    if linkage is Linkage.UPGMA:
        return (n_i * d_ki + n_j * d_kj) / (n_i + n_j)
    total = n_i + n_j + n_k
    return ((n_i + n_k) * d_ki + (n_j + n_k) * d_kj - n_k * d_ij) / total


def agglomerate(points, k: int, linkage: Linkage, metric: Metric) -> np.ndarray:
    """Bottom-up merging until ``k`` clusters remain; returns 0-based labels.

    Ward works on squared dissimilarities of the chosen metric. A cluster is
    identified by its smallest member index, and among equal merge costs the
    lexicographically smallest pair of identifiers merges first. Final labels
    are numbered in order of each cluster's smallest member.
    """
    points = _check(points, k)
    linkage, metric = Linkage(linkage), Metric(metric)
    n = len(points)
    d = metric.pairwise(points, points)
    if linkage is Linkage.WARD:
        d = d ** 2
    np.fill_diagonal(d, np.inf)
    active = np.ones(n, dtype=bool)
    size = np.ones(n)
    owner = np.arange(n)
    for _ in range(n - k):
        # d is symmetric with inactive rows/columns at inf, so the first
        # minimum in row-major order is the lexicographically smallest pair i < j
        i, j = np.unravel_index(np.argmin(d), d.shape)
        others = active.copy()
        others[[i, j]] = False
        d_new = _lance_williams(linkage, d[others, i], d[others, j], d[i, j], size[i], size[j], size[others])
        d[others, i] = d_new
        d[i, others] = d_new
        d[j, :] = np.inf
        d[:, j] = np.inf
        size[i] += size[j]
        active[j] = False
        owner[owner == j] = i
    roots = np.flatnonzero(active)
    return np.searchsorted(roots, owner)


def hierarchical(points, k: int, linkage: Linkage = Linkage.WARD, metric: Metric = Metric.L2,
                 rule: AssignmentRule = AssignmentRule.KNN, neighbour_count: int = 5) -> ClusterModel:
    points = _check(points, k)
    labels = agglomerate(points, k, linkage, metric)
    centres = np.array([points[labels == j].mean(axis=0) for j in range(k)])
    return ClusterModel(k=k, labels=labels, training_points=points, centres=centres,
                        rule=AssignmentRule(rule), metric=Metric(metric),
                        neighbour_count=neighbour_count, method="hier", linkage=Linkage(linkage),
                        objective=sse(points, labels, centres))


@dataclass(frozen=True)
class ClusterConfig:
    method: str = "kmeans"
    metric: Metric = Metric.L2
    linkage: Linkage = Linkage.WARD
    neighbour_count: int | None = None
    restarts: int = 10

    def fit(self, points, k: int, seed: int = 0) -> ClusterModel:
        if self.method == "kmeans":
            model = kmeans(points, k, restarts=self.restarts, seed=seed)
            if self.neighbour_count:
                model = ClusterModel(k=k, labels=model.labels, training_points=model.training_points,
                                     centres=model.centres, rule=AssignmentRule.KNN,
                                     metric=Metric.L2, neighbour_count=self.neighbour_count,
                                     objective=model.objective)
            return model
        if self.method == "hier":
            return hierarchical(points, k, self.linkage, self.metric, AssignmentRule.KNN,
                                self.neighbour_count or 5)
        raise ValueError(f"unknown clustering method {self.method!r}")

    def to_json(self) -> dict:
        return {"method": self.method, "metric": self.metric.value, "linkage": self.linkage.value,
                "neighbour_count": self.neighbour_count, "restarts": self.restarts}
