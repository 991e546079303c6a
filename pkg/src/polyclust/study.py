"""Simulation studies: generate, extract features, cluster, score."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Mapping, Sequence

import numpy as np

from .clustering import build_feature_matrix, cluster, standardize
from .metrics import align_clusters, binary_measures, cluster_auc, multiclass_measures
from .polyspectra import Weight
from .series import TimeSeries
from .simgen import ScenarioSpec, gen_scenario

METRIC_COLUMNS = ("sensitivity", "specificity", "f1", "balanced_accuracy", "auc")


def derived_seed(seed: int, *key: int) -> int:
    """Deterministic 32-bit seed for the sub-task identified by ``key``."""
    return int(np.random.SeedSequence(int(seed), spawn_key=key).generate_state(1)[0])


def evaluate_clustering(
    series: Sequence[TimeSeries],
    groups: Sequence[str],
    seed: int = 0,
    algorithm: str = "kmeans",
    weights: Mapping[str, Weight] | None = None,
) -> dict:
    """Cluster labelled series into as many groups as there are true classes.

    Returns one flat record with the columns of :data:`METRIC_COLUMNS`.
    Binary truth uses the first class (sorted) as positive. With more
    classes, ``sensitivity``/``specificity``/``balanced_accuracy`` are
    class means, ``f1`` is the size-weighted F1 and ``auc`` the mean
    one-vs-rest AUC; the per-class values go under ``per_class``.
    """
    m = standardize(build_feature_matrix(series, weights))
    k = len(set(groups))
    res = cluster(m, k, algorithm=algorithm, seed=seed)
    conf = align_clusters(groups, res.assignments)
    record = {"accuracy": conf.accuracy, "auc": cluster_auc(m, res, groups)}
    if k == 2:
        record.update({c: v for c, v in binary_measures(conf).items() if c in METRIC_COLUMNS})
    else:
        mc = multiclass_measures(conf)
        per = mc["per_class"]

        def mean_of(key):
            return float(np.mean([v[key] for v in per.values()]))

        record.update(
            sensitivity=mean_of("sensitivity"),
            specificity=mean_of("specificity"),
            f1=mc["weighted_f1"],
            balanced_accuracy=mean_of("balanced_accuracy"),
            weighted_f1=mc["weighted_f1"],
            per_class={str(c): v for c, v in per.items()},
        )
    record["assignments"] = res.assignments.tolist()
    return record


def run_study(
    spec: ScenarioSpec,
    reps: int = 20,
    algorithm: str = "kmeans",
    threads: int = 1,
    weights: Mapping[str, Weight] | None = None,
) -> list[dict]:
    """Evaluate ``reps`` replications of a scenario; one record per replication."""

    def one(rep: int) -> dict:
        data = gen_scenario(spec, rep)
        rec = evaluate_clustering(
            [d.series for d in data],
            [d.group for d in data],
            seed=derived_seed(spec.seed, rep),
            algorithm=algorithm,
            weights=weights,
        )
        rec.update(rep=rep, scenario=spec.scenario, split=",".join(map(str, spec.group_sizes)))
        return rec

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(reps)))
    return [one(r) for r in range(reps)]


def perfect(record: dict) -> bool:
    return all(
        not math.isnan(record[c]) and record[c] == 1.0
        for c in ("sensitivity", "specificity", "f1", "balanced_accuracy")
    )


def summarize(records: Sequence[dict]) -> dict:
    cols = [c for c in (*METRIC_COLUMNS, "weighted_f1", "accuracy") if c in records[0]]
    return {c: float(np.nanmean([r[c] for r in records])) for c in cols} | {
        "n_reps": len(records),
        "n_perfect": sum(perfect(r) for r in records),
    }
