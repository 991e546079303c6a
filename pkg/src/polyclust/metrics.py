"""Accuracy measures for clusterings with known ground truth."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

from .errors import InputMismatch, UndefinedAUC


@dataclass(frozen=True)
class AlignedConfusion:
    """Confusion counts with predicted clusters reordered to match true classes.

    ``matrix[i, j]`` counts points of ``classes[i]`` placed in cluster
    ``clusters[j]``. Matched clusters come first, in the order of their
    classes, followed by unmatched clusters in id order. When every class
    is matched the diagonal holds the correct counts.
    """

    matrix: np.ndarray
    classes: tuple
    clusters: tuple
    mapping: dict
    n: int

    def matched_column(self, i: int) -> int | None:
        """Column of the cluster matched to ``classes[i]``, or None."""
        for j, cid in enumerate(self.clusters):
            if self.mapping.get(cid) == self.classes[i]:
                return j
        return None

    @property
    def accuracy(self) -> float:
        hits = 0
        for i in range(len(self.classes)):
            j = self.matched_column(i)
            if j is not None:
                hits += int(self.matrix[i, j])
        return hits / self.n


def confusion_counts(true_labels, assignments):
    classes = tuple(sorted(set(true_labels), key=str))
    clusters = tuple(sorted(set(assignments)))
    ci = {c: i for i, c in enumerate(classes)}
    ki = {c: i for i, c in enumerate(clusters)}
    counts = np.zeros((len(classes), len(clusters)), dtype=np.int64)
    for t, a in zip(true_labels, assignments):
        counts[ci[t], ki[a]] += 1
    return counts, classes, clusters


def align_clusters(true_labels: Sequence, assignments: Sequence) -> AlignedConfusion:
    """Match cluster ids to true classes so that accuracy is maximal.

    Solved exactly as a rectangular assignment problem on the confusion
    counts. Classes are ordered by ``sorted(str)``; the first class is the
    positive class for binary measures.
    """
    true_labels = list(true_labels)
    assignments = [a.item() if hasattr(a, "item") else a for a in assignments]
    if len(true_labels) != len(assignments):
        raise InputMismatch(f"{len(true_labels)} labels vs {len(assignments)} assignments")
    if not true_labels:
        raise InputMismatch("no points to align")
    counts, classes, clusters = confusion_counts(true_labels, assignments)
    rows, cols = linear_sum_assignment(counts, maximize=True)
    # order matched columns by class, then leftover clusters
    order = [c for _, c in sorted(zip(rows, cols))]
    rest = [j for j in range(len(clusters)) if j not in order]
    mapping = {clusters[c]: classes[r] for r, c in zip(rows, cols)}
    return AlignedConfusion(
        counts[:, order + rest],
        classes,
        tuple(clusters[j] for j in order + rest),
        mapping,
        len(true_labels),
    )


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.nan


def one_vs_rest(conf: AlignedConfusion, i: int) -> dict[str, float]:
    m = conf.matrix
    j = conf.matched_column(i)
    tp = float(m[i, j]) if j is not None else 0.0
    fn = float(m[i].sum()) - tp
    col = float(m[:, j].sum()) if j is not None else 0.0
    fp = col - tp
    tn = conf.n - tp - fn - fp
    sens = _ratio(tp, tp + fn)
    spec = _ratio(tn, tn + fp)
    return {
        "sensitivity": sens,
        "specificity": spec,
        "f1": _ratio(2 * tp, 2 * tp + fp + fn),
        "balanced_accuracy": (sens + spec) / 2,
    }


def binary_measures(conf: AlignedConfusion) -> dict[str, float]:
    """Sensitivity, specificity, F1 and balanced accuracy for the first class.

    Undefined ratios (an empty class) come back as NaN with the reason listed
    under ``"undefined"``.
    """
    if len(conf.classes) != 2:
        raise InputMismatch(f"binary measures need 2 true classes, got {len(conf.classes)}")
    out = one_vs_rest(conf, 0)
    undefined = [k for k, v in out.items() if math.isnan(v)]
    if undefined:
        out["undefined"] = f"empty class or prediction for: {', '.join(undefined)}"
    return out


def multiclass_measures(conf: AlignedConfusion) -> dict:
    if len(conf.classes) < 2:
        raise InputMismatch("multiclass measures need at least 2 true classes")
    per_class = {c: one_vs_rest(conf, i) for i, c in enumerate(conf.classes)}
    sizes = conf.matrix.sum(axis=1)
    weighted_f1 = sum(
        (sizes[i] / conf.n) * (0.0 if math.isnan(v["f1"]) else v["f1"])
        for i, v in enumerate(per_class.values())
    )
    return {"per_class": per_class, "weighted_f1": float(weighted_f1)}


def auc(true_labels: Sequence[bool], scores: Sequence[float]) -> float:
    """Area under the ROC curve as the Mann-Whitney U statistic over n1*n0.

    ``true_labels`` are truthy for positives. Ties count one half.
    """
    y = np.asarray(true_labels, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise InputMismatch(f"{y.shape[0]} labels vs {s.shape[0]} scores")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    n1 = int(y.sum())
    n0 = y.shape[0] - n1
    if n1 == 0 or n0 == 0:
        raise UndefinedAUC("AUC needs both positive and negative labels")
    ranks = rankdata(s)
    u = ranks[y].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def _center_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2))


def cluster_scores(x: np.ndarray, centers: np.ndarray, conf: AlignedConfusion) -> np.ndarray:
    """Per-class membership scores from distances to the aligned centers.

    Column ``i`` scores class ``conf.classes[i]`` as the normalized inverse
    distance to that class's matched center (0 if no cluster is matched).
    Center row ``c - 1`` belongs to cluster id ``c``.
    """
    d = _center_distances(x, centers)
    d = np.maximum(d, 1e-300)
    inv = 1.0 / d
    inv /= inv.sum(axis=1, keepdims=True)
    out = np.zeros((x.shape[0], len(conf.classes)))
    back = {lab: cid for cid, lab in conf.mapping.items()}
    for i, c in enumerate(conf.classes):
        if c in back:
            out[:, i] = inv[:, back[c] - 1]
    return out


def center_auc(x, centers: np.ndarray, assignments: Sequence, true_labels: Sequence) -> float:
    """AUC of a hard clustering using center-distance scores.

    Binary truth: the positive (first) class gets
    ``d(x, c_neg) / (d(x, c_pos) + d(x, c_neg))``. More classes: mean of the
    one-vs-rest AUCs with normalized inverse-distance scores.

    ``centers`` rows are ordered by cluster id (1..k).
    """
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    conf = align_clusters(true_labels, assignments)
    centers = np.asarray(centers, dtype=np.float64)
    truth = list(true_labels)
    if len(conf.classes) == 2:
        back = {lab: cid for cid, lab in conf.mapping.items()}
        pos, neg = conf.classes
        if pos not in back or neg not in back:
            return 0.5
        d = _center_distances(x, centers)
        dp = d[:, back[pos] - 1]
        dn = d[:, back[neg] - 1]
        denom = dp + dn
        score = np.where(denom > 0, dn / np.where(denom > 0, denom, 1.0), 0.5)
        return auc([t == pos for t in truth], score)
    scores = cluster_scores(x, centers, conf)
    return float(np.mean([auc([t == c for t in truth], scores[:, i]) for i, c in enumerate(conf.classes)]))


def cluster_auc(m, result, true_labels: Sequence) -> float:
    """:func:`center_auc` for a clustering result on feature matrix ``m``."""
    return center_auc(m, result.center_coordinates(), result.assignments, true_labels)
