"""Feature extraction and partitional clustering (k-means, PAM, CLARA)."""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import ConstantFeature, InvalidDissimilarity, InvalidK, InvalidLength, PolyclustError
from .polyspectra import DEFAULT_WEIGHTS, Weight, polyspectral_means
from .series import TimeSeries, difference, dominant_period

log = logging.getLogger(__name__)

SUMMARY_FEATURES = ("period", "mean_diff", "max_diff", "diff_end_start")
DEFAULT_FEATURES = tuple(DEFAULT_WEIGHTS) + SUMMARY_FEATURES
MAX_ITER = 300
EXACT_PAM_SUBSETS = 1000


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    labels: tuple[str, ...]
    feature_names: tuple[str, ...] = DEFAULT_FEATURES
    standardized: bool = False
    column_means: np.ndarray | None = None
    column_sds: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, ndmin=2)
        if v.shape != (len(self.labels), len(self.feature_names)):
            raise ValueError(
                f"matrix shape {v.shape} does not match {len(self.labels)} labels "
                f"x {len(self.feature_names)} features"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("feature matrix contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(name)]

    def select(self, rows: Sequence[int]) -> "FeatureMatrix":
        rows = list(rows)
        return replace(self, values=self.values[rows], labels=tuple(self.labels[i] for i in rows))


@dataclass
class ClusteringResult:
    """Outcome of one clustering run.

    ``assignments`` holds cluster ids 1..k per row. ``centers`` is a k x p
    array of centroids for k-means, or the k medoid row indices for PAM and
    CLARA (then ``medoid_coordinates`` may also be filled in).
    """

    algorithm: str
    k: int
    assignments: np.ndarray
    centers: np.ndarray
    objective: float
    objective_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    seed: int | None = None
    medoid_coordinates: np.ndarray | None = None

    def center_coordinates(self) -> np.ndarray:
        if self.algorithm == "kmeans":
            return self.centers
        if self.medoid_coordinates is None:
            raise ValueError("medoid coordinates unavailable for a dissimilarity-only result")
        return self.medoid_coordinates

    def to_dict(self, labels: Sequence[str] | None = None) -> dict:
        labels = labels if labels is not None else [str(i) for i in range(len(self.assignments))]
        centers = self.centers.tolist()
        if self.algorithm != "kmeans":
            centers = [{"index": int(i), "label": labels[int(i)]} for i in self.centers]
        return {
            "algorithm": self.algorithm,
            "k": self.k,
            "seed": self.seed,
            "objective": float(self.objective),
            "iterations": self.iterations,
            "objective_trace": [float(v) for v in self.objective_trace],
            "assignments": [
                {"label": lab, "cluster": int(c)} for lab, c in zip(labels, self.assignments)
            ],
            "centers": centers,
        }


# ---------------------------------------------------------------------------
# features


def series_features(series: TimeSeries, weights: Mapping[str, Weight] | None = None) -> np.ndarray:
    """The feature row of one raw series: weighted means then summary features."""
    weights = DEFAULT_WEIGHTS if weights is None else weights
    if len(series) < 4:
        raise InvalidLength(f"series {series.label!r} needs at least 4 points")
    diff = difference(series)
    means = [e.value for e in polyspectral_means(diff, weights.values())]
    x = diff.values
    summary = [dominant_period(x), float(np.mean(x)), float(np.max(x)), float(x[-1] - x[0])]
    return np.array(means + summary)


def build_feature_matrix(
    series: Sequence[TimeSeries],
    weights: Mapping[str, Weight] | None = None,
    threads: int = 1,
) -> FeatureMatrix:
    """Stack :func:`series_features` rows for a collection of raw series.

    Parameters
    ----------
    series : sequence of TimeSeries
        Undifferenced input; each series is differenced once internally.
    weights : mapping of feature name to weight, optional
        Defaults to the eight shipped spectral and bispectral weights.
    threads : int
        Worker threads for per-series extraction. Rows are computed
        independently, so the result does not depend on this value.
    """
    weights = dict(DEFAULT_WEIGHTS if weights is None else weights)

    def one(s: TimeSeries) -> np.ndarray:
        try:
            return series_features(s, weights)
        except PolyclustError as exc:
            raise type(exc)(f"series {s.label!r}: {exc}") from exc

    if threads > 1 and len(series) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, series))
    else:
        rows = [one(s) for s in series]
    names = tuple(weights) + SUMMARY_FEATURES
    values = np.vstack(rows) if rows else np.empty((0, len(names)))
    return FeatureMatrix(values, tuple(s.label for s in series), names)


def standardize(m: FeatureMatrix) -> FeatureMatrix:
    """Z-score every column (population sd), keeping the means and sds."""
    v = m.values
    mu = v.mean(axis=0)
    sd = v.std(axis=0)
    for name, s, col in zip(m.feature_names, sd, v.T):
        # sd of a constant column can come out as rounding noise
        if s == 0.0 or s <= 1e-12 * max(1.0, float(np.max(np.abs(col)))):
            raise ConstantFeature(name)
    return replace(
        m,
        values=(v - mu) / sd,
        standardized=True,
        column_means=mu,
        column_sds=sd,
    )


def euclidean_dissimilarity(m: FeatureMatrix | np.ndarray) -> np.ndarray:
    x = m.values if isinstance(m, FeatureMatrix) else np.asarray(m, dtype=np.float64)
    return squareform(pdist(x))


def _values(m) -> np.ndarray:
    return m.values if isinstance(m, FeatureMatrix) else np.asarray(m, dtype=np.float64)


# ---------------------------------------------------------------------------
# k-means


def _restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(restart,)))


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first center uniform, the rest sampled by squared distance."""
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return cdist(x, centers, "sqeuclidean")


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int):
    n, k = x.shape[0], centers.shape[0]
    labels = None
    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dists(x, centers)
        new = np.argmin(d, axis=1)
        counts = np.bincount(new, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            # reseed at the point farthest from its current centroid
            dist_own = d[np.arange(n), new]
            donors = counts[new] > 1
            cand = np.where(donors, dist_own, -1.0)
            far = int(np.argmax(cand))
            counts[new[far]] -= 1
            new[far] = empty
            counts[empty] = 1
            d[far, :] = np.inf
            d[far, empty] = 0.0
        # sequential accumulation keeps the summation order fixed
        sums = np.zeros((k, x.shape[1]))
        np.add.at(sums, new, x)
        centers = sums / counts[:, None]
        trace.append(float(np.sum((x - centers[new]) ** 2)))
        if labels is not None and np.array_equal(new, labels):
            labels = new
            break
        labels = new
    return labels, centers, trace, it


def kmeans(
    m: FeatureMatrix | np.ndarray,
    k: int,
    seed: int = 0,
    n_init: int = 25,
    max_iter: int = MAX_ITER,
) -> ClusteringResult:
    """Lloyd's algorithm with k-means++ seeding and ``n_init`` restarts.

    Restart ``r`` draws from its own stream derived from ``(seed, r)``; the
    lowest within-cluster sum of squares wins, ties going to the earlier
    restart. Cluster ids in the result are 1..k.
    """
    x = _values(m)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise InvalidK(f"k must lie in [1, {n}], got {k}")
    best = None
    for r in range(max(1, n_init)):
        rng = _restart_rng(seed, r)
        labels, centers, trace, it = _lloyd(x, kmeans_plusplus(x, k, rng), max_iter)
        if best is None or trace[-1] < best[2][-1]:
            best = (labels, centers, trace, it)
    labels, centers, trace, it = best
    return ClusteringResult("kmeans", k, labels + 1, centers, trace[-1], trace, it, seed)


def wss(x: np.ndarray, assignments: np.ndarray) -> float:
    """Within-cluster sum of squared distances to cluster means."""
    x = _values(x)
    total = 0.0
    for c in np.unique(assignments):
        pts = x[assignments == c]
        total += float(np.sum((pts - pts.mean(axis=0)) ** 2))
    return total


# ---------------------------------------------------------------------------
# k-medoids


def check_dissimilarity(d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise InvalidDissimilarity(f"dissimilarity must be square, got shape {d.shape}")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise InvalidDissimilarity("dissimilarity entries must be finite and non-negative")
    if not np.allclose(d, d.T, rtol=1e-12, atol=1e-12):
        raise InvalidDissimilarity("dissimilarity matrix is not symmetric")
    if np.any(np.diag(d) != 0):
        raise InvalidDissimilarity("dissimilarity matrix must have a zero diagonal")
    return d


def medoid_cost(d: np.ndarray, medoids: Sequence[int]) -> float:
    return float(np.sum(np.min(d[:, list(medoids)], axis=1)))


def _assign_to_medoids(d: np.ndarray, medoids: Sequence[int]) -> np.ndarray:
    return np.argmin(d[:, list(medoids)], axis=1) + 1


def pam(dissimilarity, k: int, seed: int | None = None) -> ClusteringResult:
    """Partitioning around medoids: greedy BUILD, then SWAP to a local optimum.

    Each SWAP round applies the single medoid/non-medoid exchange with the
    largest strict decrease in total dissimilarity, stopping when none
    decreases it. When there are at most ``EXACT_PAM_SUBSETS`` candidate
    medoid sets the swap optimum is then checked against all of them, so
    tiny problems come back globally optimal. Deterministic; ``seed`` is
    only recorded.
    """
    d = check_dissimilarity(dissimilarity)
    n = d.shape[0]
    if not 1 <= k <= n:
        raise InvalidK(f"k must lie in [1, {n}], got {k}")

    medoids = [int(np.argmin(d.sum(axis=1)))]
    nearest = d[:, medoids[0]].copy()
    while len(medoids) < k:
        gains = np.maximum(nearest[:, None] - d, 0.0).sum(axis=0)
        gains[medoids] = -np.inf
        c = int(np.argmax(gains))
        medoids.append(c)
        nearest = np.minimum(nearest, d[:, c])
    cost = medoid_cost(d, medoids)
    trace = [cost]

    rounds = 0
    while k < n:
        best_delta, best_swap = 0.0, None
        non_medoids = [h for h in range(n) if h not in medoids]
        for pos in range(k):
            others = medoids[:pos] + medoids[pos + 1:]
            base = np.min(d[:, others], axis=1) if others else np.full(n, np.inf)
            # cost with medoid at pos replaced by each candidate h at once
            new_costs = np.minimum(base[:, None], d[:, non_medoids]).sum(axis=0)
            j = int(np.argmin(new_costs))
            delta = float(new_costs[j]) - cost
            if delta < best_delta - 1e-12 * max(1.0, cost):
                best_delta, best_swap = delta, (pos, non_medoids[j])
        if best_swap is None:
            break
        pos, h = best_swap
        medoids[pos] = h
        cost = medoid_cost(d, medoids)
        trace.append(cost)
        rounds += 1

    if math.comb(n, k) <= EXACT_PAM_SUBSETS:
        combos = np.array(list(itertools.combinations(range(n), k)))
        costs = np.min(d[:, combos], axis=2).sum(axis=0)
        j = int(np.argmin(costs))
        if costs[j] < cost - 1e-12 * max(1.0, cost):
            medoids = [int(v) for v in combos[j]]
            cost = medoid_cost(d, medoids)
            trace.append(cost)

    return ClusteringResult(
        "pam", k, _assign_to_medoids(d, medoids), np.array(medoids), cost, trace, rounds, seed
    )


def clara(
    m: FeatureMatrix | np.ndarray,
    k: int,
    n_samples: int = 5,
    sample_size: int | None = None,
    seed: int = 0,
) -> ClusteringResult:
    """CLARA: PAM on random subsamples, scored on the full data set.

    Sample ``s`` uses the stream ``(seed, s)``; sampled indices are sorted
    before running PAM so a full-size sample reproduces :func:`pam` exactly.
    """
    x = _values(m)
    n = x.shape[0]
    if sample_size is None:
        sample_size = min(n, 40 + 2 * k)
    if not k <= sample_size <= n:
        raise InvalidK(f"sample_size must lie in [k, n] = [{k}, {n}], got {sample_size}")
    best = None
    trace = []
    for s in range(max(1, n_samples)):
        rng = _restart_rng(seed, s)
        idx = np.sort(rng.choice(n, size=sample_size, replace=False))
        sub = pam(euclidean_dissimilarity(x[idx]), k)
        medoids = idx[sub.centers]
        dist = cdist(x, x[medoids])
        cost = float(np.sum(np.min(dist, axis=1)))
        if best is None or cost < best[0]:
            best = (cost, medoids, np.argmin(dist, axis=1) + 1)
        trace.append(best[0])
    cost, medoids, labels = best
    return ClusteringResult(
        "clara", k, labels, medoids, cost, trace, len(trace), seed, medoid_coordinates=x[medoids]
    )


def cluster(m: FeatureMatrix, k: int, algorithm: str = "kmeans", seed: int = 0, **kwargs) -> ClusteringResult:
    """Dispatch to :func:`kmeans`, :func:`pam` or :func:`clara` on a feature matrix."""
    if algorithm == "kmeans":
        return kmeans(m, k, seed=seed, **kwargs)
    if algorithm == "pam":
        res = pam(euclidean_dissimilarity(m), k, seed=seed)
        res.medoid_coordinates = _values(m)[res.centers]
        return res
    if algorithm == "clara":
        return clara(m, k, seed=seed, **kwargs)
    raise ValueError(f"unknown clustering algorithm {algorithm!r}")
