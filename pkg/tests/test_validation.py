import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyclust.clustering import FeatureMatrix, euclidean_dissimilarity
from polyclust.errors import DegenerateCentroids, InvalidK, InvalidSampleSize
from polyclust.validation import (
    calinski_harabasz,
    davies_bouldin,
    dunn,
    elbow_k,
    feature_importance,
    gap_statistic,
    hopkins,
    silhouette,
    validate,
    vat_order,
    wss_curve,
)


def blobs(seed, centers, n_each, sd=1.0):
    rng = np.random.default_rng(seed)
    return np.vstack([rng.normal(c, sd, size=(n_each, len(c))) for c in centers])


def labels_for(n, k, seed):
    rng = np.random.default_rng(seed)
    lab = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
    rng.shuffle(lab)
    return lab + 1


def dist(a, b):
    return math.sqrt(sum((p - q) ** 2 for p, q in zip(a, b)))


# definitional recomputations with explicit loops


def silhouette_oracle(x, lab):
    n = len(x)
    out = []
    for i in range(n):
        own = [j for j in range(n) if lab[j] == lab[i] and j != i]
        if not own:
            out.append(0.0)
            continue
        a = sum(dist(x[i], x[j]) for j in own) / len(own)
        b = min(
            sum(dist(x[i], x[j]) for j in range(n) if lab[j] == c) / sum(1 for j in range(n) if lab[j] == c)
            for c in set(lab) if c != lab[i]
        )
        out.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return out


def dunn_oracle(x, lab):
    n = len(x)
    sep = min(dist(x[i], x[j]) for i in range(n) for j in range(n) if lab[i] != lab[j])
    diam = max(dist(x[i], x[j]) for i in range(n) for j in range(n) if lab[i] == lab[j])
    return sep / diam


def centroid(x, lab, c):
    pts = [x[i] for i in range(len(x)) if lab[i] == c]
    return [sum(col) / len(pts) for col in zip(*pts)], pts


def db_oracle(x, lab):
    cs = sorted(set(lab))
    info = {c: centroid(x, lab, c) for c in cs}
    s = {c: sum(dist(p, info[c][0]) for p in info[c][1]) / len(info[c][1]) for c in cs}
    return sum(
        max((s[i] + s[j]) / dist(info[i][0], info[j][0]) for j in cs if j != i) for i in cs
    ) / len(cs)


def ch_oracle(x, lab):
    n, cs = len(x), sorted(set(lab))
    grand = [sum(col) / n for col in zip(*x)]
    between = within = 0.0
    for c in cs:
        cen, pts = centroid(x, lab, c)
        between += len(pts) * dist(cen, grand) ** 2
        within += sum(dist(p, cen) ** 2 for p in pts)
    k = len(cs)
    return (between / (k - 1)) / (within / (n - k))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 30), st.integers(2, 4))
def test_indices_match_definitions(seed, n, k):
    k = min(k, n - 1)
    x = np.random.default_rng(seed).normal(size=(n, 3))
    lab = labels_for(n, k, seed)
    xl, ll = x.tolist(), lab.tolist()
    s = silhouette(x, lab)
    np.testing.assert_allclose(s["per_point"], silhouette_oracle(xl, ll), atol=1e-9)
    assert s["average"] == pytest.approx(np.mean(silhouette_oracle(xl, ll)), abs=1e-9)
    assert dunn(euclidean_dissimilarity(x), lab) == pytest.approx(dunn_oracle(xl, ll), rel=1e-9)
    assert davies_bouldin(x, lab) == pytest.approx(db_oracle(xl, ll), rel=1e-9)
    assert calinski_harabasz(x, lab) == pytest.approx(ch_oracle(xl, ll), rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(-100, 100))
def test_indices_permutation_and_translation_invariant(seed, shift):
    x = np.random.default_rng(seed).normal(size=(20, 2))
    lab = labels_for(20, 3, seed)
    perm = {1: 3, 2: 1, 3: 2}
    lab2 = np.array([perm[v] for v in lab])
    y = x + shift
    d = euclidean_dissimilarity(x)
    for f in (lambda a, l: silhouette(a, l)["average"], davies_bouldin, calinski_harabasz):
        base = f(x, lab)
        assert f(x, lab2) == pytest.approx(base, rel=1e-9)
        assert f(y, lab) == pytest.approx(base, rel=1e-6, abs=1e-9)
    assert dunn(d, lab2) == pytest.approx(dunn(d, lab))
    assert dunn(euclidean_dissimilarity(y), lab) == pytest.approx(dunn(d, lab), rel=1e-6)


def test_silhouette_limits():
    x = np.array([[0.0, 0.0], [0.0, 0.1], [100.0, 0.0], [100.0, 0.1]])
    assert silhouette(x, [1, 1, 2, 2])["average"] == pytest.approx(1.0, abs=0.01)
    same = np.ones((6, 2))
    assert silhouette(same, [1, 1, 2, 2, 3, 3])["average"] == 0.0
    with pytest.raises(InvalidK):
        silhouette(x, [1, 1, 1, 1])


def test_dunn_contrast_and_scale():
    x = blobs(1, [(0, 0), (20, 20)], 10, sd=0.5)
    d = euclidean_dissimilarity(x)
    good = np.repeat([1, 2], 10)
    bad = labels_for(20, 2, 3)
    assert dunn(d, good) > 5
    assert dunn(d, bad) < 0.1
    assert dunn(3.5 * d, good) == pytest.approx(dunn(d, good))


def test_dunn_zero_diameter():
    x = np.array([[0.0], [0.0], [5.0], [5.0]])
    assert dunn(euclidean_dissimilarity(x), [1, 1, 2, 2]) == math.inf


def test_db_ch_contrast_and_degenerate():
    x = blobs(2, [(0, 0), (30, 0)], 15)
    good = np.repeat([1, 2], 15)
    bad = labels_for(30, 2, 0)
    assert davies_bouldin(x, good) < 0.2 < davies_bouldin(x, bad)
    assert calinski_harabasz(x, good) > 100 * calinski_harabasz(x, bad)
    sym = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
    with pytest.raises(DegenerateCentroids):
        davies_bouldin(sym, [1, 1, 2, 2])


def test_ch_orderings_match_oracle():
    x = np.random.default_rng(4).normal(size=(12, 2))
    lab2 = labels_for(12, 2, 1)
    lab11 = labels_for(12, 11, 1)
    ours = calinski_harabasz(x, lab2) < calinski_harabasz(x, lab11)
    theirs = ch_oracle(x.tolist(), lab2.tolist()) < ch_oracle(x.tolist(), lab11.tolist())
    assert ours == theirs


# --- hopkins --------------------------------------------------------------------


def test_hopkins_uniform_and_clustered():
    vals = [hopkins(np.random.default_rng(s).random((200, 2)), reps=20, seed=s)["statistic"] for s in range(10)]
    assert 0.45 <= np.mean(vals) <= 0.58
    clustered = np.vstack([np.random.default_rng(0).normal(c, 0.05, size=(50, 2)) for c in ((0, 0), (5, 5))])
    h = hopkins(clustered, reps=20, seed=1)
    assert h["statistic"] > 0.8
    assert h["p_value"] < 0.05


def test_hopkins_bounds_and_errors():
    x = np.random.default_rng(1).normal(size=(30, 4))
    h = hopkins(x, m_samples=5, reps=10, seed=3)
    assert 0 < h["statistic"] < 1
    assert 0 <= h["p_value"] <= 1
    assert h == hopkins(x, m_samples=5, reps=10, seed=3)
    with pytest.raises(InvalidSampleSize):
        hopkins(x, m_samples=30)


# --- k selection ------------------------------------------------------------------


def test_wss_curve_and_elbow():
    x = blobs(3, [(0, 0), (10, 0), (5, 9)], 20, sd=0.7)
    curve = wss_curve(x, range(1, 9), seed=0)
    ks = sorted(curve)
    assert all(curve[b] <= curve[a] + 1e-9 for a, b in zip(ks, ks[1:]))
    assert elbow_k(curve) == 3
    assert wss_curve(x[:5], [5])[5] == pytest.approx(0.0, abs=1e-20)


def test_elbow_flat_curve():
    assert elbow_k({2: 10.0, 3: 9.9, 4: 9.8, 5: 9.7}) is None


def test_gap_statistic_structure():
    x = blobs(0, [(0, 0), (0, 5), (5, -3)], 20)
    g = gap_statistic(x, range(1, 6), B=20, seed=4)
    assert set(g["gap"]) == set(range(1, 6))
    assert all(v > 0 for v in g["se"].values())
    assert g["recommended_k"] == 3
    assert g == gap_statistic(x, range(1, 6), B=20, seed=4, threads=3)
    with pytest.raises(ValueError):
        gap_statistic(x, range(1, 3), B=5)


# --- VAT and importance -------------------------------------------------------------


def test_vat_groups_blocks():
    x = blobs(5, [(0, 0), (50, 50)], 8, sd=0.5)
    perm = np.random.default_rng(0).permutation(16)
    d = euclidean_dissimilarity(x[perm])
    order = vat_order(d)
    assert sorted(order) == list(range(16))
    groups = [int(perm[i] >= 8) for i in order]
    assert sum(a != b for a, b in zip(groups, groups[1:])) == 1


def test_vat_identical_rows_deterministic():
    d = np.zeros((5, 5))
    assert vat_order(d) == [0, 1, 2, 3, 4]


def test_feature_importance():
    rng = np.random.default_rng(0)
    lab = np.repeat([1, 2], 10)
    x = np.column_stack([
        np.where(lab == 1, -3.0, 3.0) + rng.normal(0, 0.1, 20),
        rng.normal(size=20),
        np.full(20, 2.0),
    ])
    m = FeatureMatrix(x, tuple(map(str, range(20))), ("sep", "noise", "flat"))
    imp = feature_importance(m, lab)
    assert sum(imp.scores.values()) == pytest.approx(1.0)
    assert imp.scores["flat"] == 0.0
    assert imp.scores["sep"] > imp.scores["noise"]
    exact = FeatureMatrix(np.column_stack([np.where(lab == 1, 0.0, 1.0), rng.normal(size=20)]),
                          m.labels, ("step", "noise"))
    imp2 = feature_importance(exact, lab)
    assert imp2.flagged == ["step"]
    assert math.isinf(imp2.f_statistics["step"])
    assert imp2.scores["step"] == 1.0


def test_validate_report():
    x = blobs(1, [(0, 0), (6, 0), (3, 5)], 10, sd=0.6)
    m = FeatureMatrix(x, tuple(map(str, range(30))), ("a", "b"))
    rep = validate(m, k_min=2, k_max=5, B=10, seed=2, n_init=5, hopkins_reps=10)
    assert sorted(rep.per_k) == [2, 3, 4, 5]
    rows = rep.rows()
    assert [r["k"] for r in rows] == [2, 3, 4, 5]
    for r in rows:
        assert -1 <= r["silhouette_avg"] <= 1
        assert r["dunn"] >= 0
        assert r["gap_se"] > 0
    w = [r["wss"] for r in rows]
    assert all(b <= a + 1e-9 for a, b in zip(w, w[1:]))
    assert rep.recommended_k["silhouette"] == 3
    d = rep.to_dict()
    assert d["k_range"] == [2, 5]
    assert set(d["recommended_k"]) == {"elbow", "silhouette", "gap_rule", "dunn"}
