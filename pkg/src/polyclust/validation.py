"""Cluster tendency and cluster-count diagnostics.

All distances are Euclidean. Indices that need at least two clusters
(silhouette, Dunn, Davies-Bouldin, Calinski-Harabasz) are reported as
``None`` for k = 1.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.spatial.distance import cdist

from .clustering import FeatureMatrix, euclidean_dissimilarity, kmeans, wss
from .errors import DegenerateCentroids, InvalidK, InvalidSampleSize

GAP_STREAM = 1
HOPKINS_STREAM = 2
ELBOW_FLAT_FRACTION = 0.05


def _values(m) -> np.ndarray:
    return m.values if isinstance(m, FeatureMatrix) else np.asarray(m, dtype=np.float64)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def _dissimilarity(m_or_d, is_dissimilarity: bool) -> np.ndarray:
    if is_dissimilarity:
        return np.asarray(m_or_d, dtype=np.float64)
    return euclidean_dissimilarity(_values(m_or_d))


def _labels(assignments) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(assignments)
    ids, inv = np.unique(a, return_inverse=True)
    return ids, inv


# ---------------------------------------------------------------------------
# tendency


def hopkins(m, m_samples: int | None = None, reps: int = 100, seed: int = 0) -> dict[str, float]:
    """Hopkins statistic; values near 1 indicate clustered data, 0.5 uniform.

    Per repetition ``m_samples`` uniform probes are drawn in the data's
    bounding box and ``m_samples`` data points are drawn without
    replacement. With ``u`` the probe-to-data nearest distances, ``w`` the
    sampled points' nearest distances to other data points and ``d`` the
    dimension, ``H = sum(u^d) / (sum(u^d) + sum(w^d))``. The reported
    statistic is the mean over repetitions; the p-value is the two-sided
    tail of Beta(m_samples, m_samples) at that mean.
    """
    x = _values(m)
    n, dim = x.shape
    if m_samples is None:
        m_samples = max(5, math.ceil(n / 10))
    if not 1 <= m_samples < n:
        raise InvalidSampleSize(f"m_samples must lie in [1, {n - 1}], got {m_samples}")
    lo, hi = x.min(axis=0), x.max(axis=0)
    values = []
    for r in range(reps):
        rng = _stream(seed, HOPKINS_STREAM, r)
        probes = lo + (hi - lo) * rng.random((m_samples, dim))
        u = cdist(probes, x).min(axis=1)
        idx = rng.choice(n, size=m_samples, replace=False)
        dw = cdist(x[idx], x)
        dw[np.arange(m_samples), idx] = np.inf
        w = dw.min(axis=1)
        # rescale before powering to keep u^d and w^d in range
        scale = max(u.max(), w.max()) or 1.0
        su, sw = np.sum((u / scale) ** dim), np.sum((w / scale) ** dim)
        values.append(su / (su + sw) if su + sw > 0 else 0.5)
    h = float(np.mean(values))
    null = stats.beta(m_samples, m_samples)
    p = float(min(1.0, 2.0 * min(null.cdf(h), null.sf(h))))
    return {"statistic": h, "p_value": p, "m_samples": m_samples, "reps": reps}


def vat_order(dissimilarity) -> list[int]:
    """VAT ordering: Prim's traversal from one end of the most distant pair.

    Ties are broken by the lowest index.
    """
    d = np.asarray(dissimilarity, dtype=np.float64)
    n = d.shape[0]
    if n == 0:
        return []
    start = int(np.argmax(d)) // n
    order = [start]
    visited = np.zeros(n, dtype=bool)
    visited[start] = True
    best = d[start].copy()
    for _ in range(n - 1):
        cand = np.where(visited, np.inf, best)
        nxt = int(np.argmin(cand))
        order.append(nxt)
        visited[nxt] = True
        best = np.minimum(best, d[nxt])
    return order


# ---------------------------------------------------------------------------
# internal indices


def silhouette(m_or_d, assignments, is_dissimilarity: bool = False) -> dict:
    """Per-point silhouette widths and their mean.

    A point alone in its cluster gets 0, as does a point with a = b = 0.
    """
    d = _dissimilarity(m_or_d, is_dissimilarity)
    ids, lab = _labels(assignments)
    k = ids.shape[0]
    if k < 2:
        raise InvalidK("silhouette needs at least 2 clusters")
    n = d.shape[0]
    onehot = np.zeros((n, k))
    onehot[np.arange(n), lab] = 1.0
    sizes = onehot.sum(axis=0)
    sums = np.stack([d[:, lab == c].sum(axis=1) for c in range(k)], axis=1)
    own = sizes[lab]
    a = np.where(own > 1, sums[np.arange(n), lab] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / sizes
    mean_other[np.arange(n), lab] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return {"per_point": s, "average": float(np.mean(s))}


def dunn(m_or_d, assignments, is_dissimilarity: bool = True) -> float:
    """Smallest between-cluster gap over the largest cluster diameter.

    Returns ``math.inf`` when every diameter is 0 but clusters are apart.
    """
    d = _dissimilarity(m_or_d, is_dissimilarity)
    ids, lab = _labels(assignments)
    if ids.shape[0] < 2:
        raise InvalidK("Dunn index needs at least 2 clusters")
    same = lab[:, None] == lab[None, :]
    diameter = float(np.max(np.where(same, d, 0.0)))
    separation = float(np.min(np.where(same, np.inf, d)))
    if diameter == 0.0:
        return math.inf if separation > 0 else 0.0
    return separation / diameter


def _centroids(x: np.ndarray, lab: np.ndarray, k: int) -> np.ndarray:
    return np.vstack([x[lab == c].mean(axis=0) for c in range(k)])


def davies_bouldin(m, assignments) -> float:
    x = _values(m)
    ids, lab = _labels(assignments)
    k = ids.shape[0]
    if k < 2:
        raise InvalidK("Davies-Bouldin needs at least 2 clusters")
    c = _centroids(x, lab, k)
    spread = np.array([np.mean(np.linalg.norm(x[lab == i] - c[i], axis=1)) for i in range(k)])
    sep = cdist(c, c)
    off = ~np.eye(k, dtype=bool)
    if np.any(sep[off] == 0.0):
        raise DegenerateCentroids("two clusters share a centroid")
    ratio = np.where(off, (spread[:, None] + spread[None, :]) / np.where(off, sep, 1.0), -np.inf)
    return float(np.mean(ratio.max(axis=1)))


def calinski_harabasz(m, assignments) -> float:
    x = _values(m)
    ids, lab = _labels(assignments)
    k = ids.shape[0]
    n = x.shape[0]
    if not 2 <= k < n:
        raise InvalidK(f"Calinski-Harabasz needs 2 <= k < n, got k={k}, n={n}")
    c = _centroids(x, lab, k)
    sizes = np.bincount(lab, minlength=k)
    between = float(np.sum(sizes * np.sum((c - x.mean(axis=0)) ** 2, axis=1)))
    within = float(np.sum((x - c[lab]) ** 2))
    if within == 0.0:
        return math.inf
    return (between / (k - 1)) / (within / (n - k))


# ---------------------------------------------------------------------------
# number of clusters


def elbow_k(curve: dict[int, float]) -> int | None:
    """k with the largest second difference of the WSS curve, or None if flat."""
    ks = sorted(curve)
    if len(ks) < 3:
        return None
    ref = curve[2] if 2 in curve else curve[ks[0]]
    second = {ks[i]: curve[ks[i - 1]] - 2 * curve[ks[i]] + curve[ks[i + 1]] for i in range(1, len(ks) - 1)}
    k_best = max(second, key=lambda k: (second[k], -k))
    if second[k_best] < ELBOW_FLAT_FRACTION * ref:
        return None
    return k_best


def wss_curve(m, k_range: Sequence[int], seed: int = 0, n_init: int = 25) -> dict[int, float]:
    x = _values(m)
    return {int(k): kmeans(x, int(k), seed=seed, n_init=n_init).objective for k in k_range}


def gap_statistic(
    m,
    k_range: Sequence[int],
    B: int = 100,
    seed: int = 0,
    n_init: int = 10,
    threads: int = 1,
) -> dict:
    """Gap statistic with references uniform over each feature's observed range.

    Returns ``{"gap": {k: ...}, "se": {k: ...}, "log_wk": {k: ...},
    "recommended_k": ...}`` where ``se`` already includes the
    ``sqrt(1 + 1/B)`` factor. The recommendation is the smallest k with
    ``gap(k) >= gap(k+1) - se(k+1)``, or the largest k if none qualifies.
    """
    if B < 10:
        raise ValueError(f"B must be at least 10, got {B}")
    x = _values(m)
    ks = [int(k) for k in k_range]
    lo, hi = x.min(axis=0), x.max(axis=0)

    def log_w(data: np.ndarray, k: int, s: int) -> float:
        with np.errstate(divide="ignore"):
            return float(np.log(kmeans(data, k, seed=s, n_init=n_init).objective))

    log_wk = {k: log_w(x, k, seed) for k in ks}

    def reference(b: int) -> list[float]:
        rng = _stream(seed, GAP_STREAM, b)
        ref = lo + (hi - lo) * rng.random(x.shape)
        return [log_w(ref, k, seed + 1 + b) for k in ks]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            ref_logs = np.array(list(pool.map(reference, range(B))))
    else:
        ref_logs = np.array([reference(b) for b in range(B)])

    gap, se = {}, {}
    for i, k in enumerate(ks):
        gap[k] = float(ref_logs[:, i].mean() - log_wk[k])
        se[k] = float(ref_logs[:, i].std() * math.sqrt(1.0 + 1.0 / B))
    recommended = ks[-1]
    for k, k_next in zip(ks, ks[1:]):
        if gap[k] >= gap[k_next] - se[k_next]:
            recommended = k
            break
    return {"gap": gap, "se": se, "log_wk": log_wk, "recommended_k": recommended}


# ---------------------------------------------------------------------------
# importance


@dataclass
class FeatureImportance:
    scores: dict[str, float]
    f_statistics: dict[str, float]
    flagged: list[str] = field(default_factory=list)


def feature_importance(m: FeatureMatrix, assignments) -> FeatureImportance:
    """One-way ANOVA F of each feature against the clusters, normalized to sum 1.

    A feature with no within-cluster variance but some between-cluster
    variance has infinite F; it is flagged, and the infinite features share
    the total score equally.
    """
    x = m.values
    ids, lab = _labels(assignments)
    k = ids.shape[0]
    n = x.shape[0]
    if not 2 <= k < n:
        raise InvalidK(f"feature importance needs 2 <= k < n, got k={k}")
    c = _centroids(x, lab, k)
    sizes = np.bincount(lab, minlength=k)
    ssb = np.sum(sizes[:, None] * (c - x.mean(axis=0)) ** 2, axis=0)
    ssw = np.sum((x - c[lab]) ** 2, axis=0)
    tol = 1e-12 * np.maximum(1.0, np.sum(x ** 2, axis=0))
    f = np.zeros(x.shape[1])
    flagged = []
    for j, name in enumerate(m.feature_names):
        if ssb[j] <= tol[j]:
            f[j] = 0.0
        elif ssw[j] <= tol[j]:
            f[j] = math.inf
            flagged.append(name)
        else:
            f[j] = (ssb[j] / (k - 1)) / (ssw[j] / (n - k))
    if flagged:
        scores = np.where(np.isinf(f), 1.0 / len(flagged), 0.0)
    else:
        total = f.sum()
        scores = f / total if total > 0 else np.zeros_like(f)
    return FeatureImportance(
        dict(zip(m.feature_names, scores.tolist())),
        dict(zip(m.feature_names, f.tolist())),
        flagged,
    )


# ---------------------------------------------------------------------------
# report


@dataclass
class ValidationReport:
    hopkins: dict
    per_k: dict[int, dict]
    recommended_k: dict
    seed: int
    B: int
    k_range: tuple[int, int]

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v

        per_k = {}
        for k, row in self.per_k.items():
            out = {key: clean(val) for key, val in row.items()}
            flags = [key for key, val in row.items() if isinstance(val, float) and math.isinf(val)]
            if flags:
                out["infinite"] = flags
            per_k[str(k)] = out
        return {
            "hopkins": self.hopkins,
            "per_k": per_k,
            "recommended_k": self.recommended_k,
            "seed": self.seed,
            "B": self.B,
            "k_range": list(self.k_range),
        }

    def rows(self) -> list[dict]:
        cols = ("wss", "silhouette_avg", "gap", "gap_se", "dunn", "davies_bouldin", "calinski_harabasz")
        return [{"k": k, **{c: self.per_k[k].get(c) for c in cols}} for k in sorted(self.per_k)]


def validate(
    m: FeatureMatrix,
    k_min: int = 2,
    k_max: int = 10,
    B: int = 100,
    seed: int = 0,
    n_init: int = 25,
    gap_n_init: int = 10,
    hopkins_reps: int = 100,
    hopkins_m: int | None = None,
    threads: int = 1,
) -> ValidationReport:
    x = m.values
    n = x.shape[0]
    k_max = min(k_max, n - 1)
    if not 1 <= k_min <= k_max:
        raise InvalidK(f"empty k range [{k_min}, {k_max}] for {n} rows")
    ks = list(range(k_min, k_max + 1))
    d = euclidean_dissimilarity(x)
    per_k: dict[int, dict] = {}
    for k in ks:
        res = kmeans(x, k, seed=seed, n_init=n_init)
        row = {"wss": res.objective}
        if k >= 2:
            row["silhouette_avg"] = silhouette(d, res.assignments, is_dissimilarity=True)["average"]
            row["dunn"] = dunn(d, res.assignments)
            try:
                row["davies_bouldin"] = davies_bouldin(x, res.assignments)
            except DegenerateCentroids:
                row["davies_bouldin"] = None
            row["calinski_harabasz"] = calinski_harabasz(x, res.assignments)
        else:
            row.update(silhouette_avg=None, dunn=None, davies_bouldin=None, calinski_harabasz=None)
        per_k[k] = row
    # the gap rule looks one step beyond k_max when possible
    gap_ks = ks + ([k_max + 1] if k_max + 1 < n else [])
    g = gap_statistic(x, gap_ks, B=B, seed=seed, n_init=gap_n_init, threads=threads)
    for k in ks:
        per_k[k]["gap"] = g["gap"][k]
        per_k[k]["gap_se"] = g["se"][k]
    gap_rule = ks[-1]
    for k in ks:
        if k + 1 in g["gap"] and g["gap"][k] >= g["gap"][k + 1] - g["se"][k + 1]:
            gap_rule = k
            break
    multi = [k for k in ks if k >= 2]
    recommended = {
        "elbow": elbow_k({k: per_k[k]["wss"] for k in ks}),
        "silhouette": max(multi, key=lambda k: (per_k[k]["silhouette_avg"], -k)) if multi else None,
        "gap_rule": gap_rule,
        "dunn": max(multi, key=lambda k: (per_k[k]["dunn"], -k)) if multi else None,
    }
    h = hopkins(x, m_samples=hopkins_m, reps=hopkins_reps, seed=seed)
    return ValidationReport(h, per_k, recommended, seed, B, (k_min, k_max))
