import csv
import datetime as dt
import json
import logging
import shutil

import numpy as np
import pytest

from polyclust import __version__
from polyclust.cli import RunConfig, ingest, main, read_features, run_pipeline
from polyclust.errors import DuplicateDate, ParseError, SchemaError


def write_stock(path, symbol, n, seed, dayfirst=False, extra_cols=True):
    rng = np.random.default_rng(seed)
    price = 100 * np.exp(np.cumsum(rng.normal(0, 0.01 + 0.01 * (seed % 3), n)))
    start = dt.date(2018, 1, 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Date", "Symbol", "Series", "VWAP"] if extra_cols else ["Date", "Symbol", "VWAP"])
        for t in range(n):
            day = start + dt.timedelta(days=t)
            ds = day.strftime("%d-%m-%Y") if dayfirst else day.isoformat()
            row = [ds, symbol, "EQ", f"{price[t]:.4f}"] if extra_cols else [ds, symbol, f"{price[t]:.4f}"]
            w.writerow(row)


@pytest.fixture
def stock_dir(tmp_path):
    d = tmp_path / "stocks"
    d.mkdir()
    for i in range(10):
        write_stock(d / f"stock{i:02d}.csv", f"SYM{i}", 120, seed=i, dayfirst=bool(i % 2))
    return d


def test_ingest_window_and_scaling(stock_dir):
    series = ingest(stock_dir, window_days=100)
    assert list(series) == sorted(f"SYM{i}" for i in range(10))
    for s in series.values():
        assert len(s) == 100
        assert s.values[0] == 1.0


def test_ingest_uses_latest_rows(tmp_path):
    d = tmp_path / "one"
    d.mkdir()
    rows = [("2020-01-03", 3.0), ("2020-01-01", 1.0), ("2020-01-02", 2.0)] + [
        (f"2020-02-{k:02d}", 4.0 + k) for k in range(1, 10)
    ]
    with open(d / "x.csv", "w") as fh:
        fh.write("Date,Symbol,VWAP\n")
        for day, v in rows:
            fh.write(f"{day},X,{v}\n")
    s = ingest(d, window_days=10)["X"]
    # sorted by date, then the last 10 rows, scaled by the first kept value
    np.testing.assert_allclose(s.values * 3.0, [3.0] + [4.0 + k for k in range(1, 10)])


def test_ingest_short_and_tiny_files(tmp_path, caplog):
    d = tmp_path / "short"
    d.mkdir()
    write_stock(d / "a.csv", "A", 50, seed=1)
    write_stock(d / "b.csv", "B", 5, seed=2)
    with caplog.at_level(logging.WARNING, logger="polyclust"):
        series = ingest(d, window_days=100)
    assert list(series) == ["A"]
    assert len(series["A"]) == 50
    assert "fewer than" in caplog.text and "skipping B" in caplog.text


def test_ingest_errors(tmp_path):
    d = tmp_path / "bad"
    d.mkdir()
    (d / "novwap.csv").write_text("Date,Symbol,Close\n2020-01-01,X,1\n")
    with pytest.raises(SchemaError, match="novwap.csv"):
        ingest(d)
    (d / "novwap.csv").unlink()
    (d / "baddate.csv").write_text("Date,Symbol,VWAP\n2020-01-01,X,1\n2020-13-45,X,2\n")
    with pytest.raises(ParseError, match="row 3"):
        ingest(d)
    (d / "baddate.csv").unlink()
    (d / "dup.csv").write_text("Date,Symbol,VWAP\n2020-01-01,X,1\n2020-01-02,X,2\n2020-01-01,X,3\n")
    with pytest.raises(DuplicateDate, match="2020-01-01"):
        ingest(d)
    (d / "dup.csv").unlink()
    (d / "neg.csv").write_text("Date,Symbol,VWAP\n2020-01-01,X,1\n2020-01-02,X,-2\n")
    with pytest.raises(ParseError, match="positive"):
        ingest(d)


def test_ingest_order_independent(stock_dir, tmp_path):
    other = tmp_path / "renamed"
    other.mkdir()
    for i, f in enumerate(sorted(stock_dir.glob("*.csv"))[::-1]):
        shutil.copy(f, other / f"z{i:02d}.csv")
    a, b = ingest(stock_dir, 100), ingest(other, 100)
    assert list(a) == list(b)
    for k in a:
        assert a[k].values.tobytes() == b[k].values.tobytes()


def test_run_pipeline_artifacts(stock_dir, tmp_path):
    cfg = RunConfig(input_dir=str(stock_dir), output_dir=str(tmp_path / "out"), window_days=100, k=3,
                    k_range=(2, 4), gap_B=10, hopkins_reps=10)
    out = run_pipeline(cfg, threads=1)
    expected = {
        "features.csv", "features_standardized.csv", "descriptive_stats.csv", "hopkins.json",
        "validation.csv", "validation.json", "clusters_kmeans_k3.json", "vat_order.json",
        "feature_importance.csv", "manifest.json",
    }
    assert expected <= {p.name for p in out.iterdir()}
    clusters = json.loads((out / "clusters_kmeans_k3.json").read_text())
    assert len(clusters["assignments"]) == 10
    assert {a["cluster"] for a in clusters["assignments"]} == {1, 2, 3}
    with open(out / "validation.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["k"]) for r in rows] == [2, 3, 4]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["version"] == __version__
    assert [w["name"] for w in manifest["config"]["weights"]][:2] == ["spec_band_lo", "spec_band_hi"]
    m = read_features(out / "features.csv")
    assert m.values.shape == (10, 12)


def test_manifest_rerun_is_byte_identical(stock_dir, tmp_path, monkeypatch):
    out1 = tmp_path / "r1"
    assert main(["run", "--input", str(stock_dir), "--output", str(out1), "--window", "100", "--k", "3",
                 "--kmax", "4", "--B", "10", "--reps", "10"]) == 0
    out2 = tmp_path / "r2"
    monkeypatch.setenv("POLYCLUST_THREADS", "4")
    assert main(["run", "--manifest", str(out1 / "manifest.json"), "--output", str(out2)]) == 0
    for f in out1.iterdir():
        if f.name != "manifest.json":
            assert f.read_bytes() == (out2 / f.name).read_bytes(), f.name


def test_weight_override(stock_dir, tmp_path):
    out = tmp_path / "w"
    code = main(["features", "--input", str(stock_dir), "--window", "100", "--output", str(out),
                 "--weight", "bispec_disc=disc_indicator{r: 1.0}"])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    disc = [w for w in manifest["config"]["weights"] if w["name"] == "bispec_disc"][0]
    assert disc["params"] == {"r": 1.0}


def test_subcommands_chain(stock_dir, tmp_path):
    out = tmp_path / "chain"
    assert main(["features", "--input", str(stock_dir), "--window", "100", "--output", str(out)]) == 0
    feats = str(out / "features.csv")
    for algo in ("kmeans", "pam", "clara"):
        assert main(["cluster", "--features", feats, "--k", "2", "--algo", algo, "--output", str(out)]) == 0
        assert (out / f"clusters_{algo}_k2.json").exists()
    assert main(["validate", "--features", feats, "--kmin", "2", "--kmax", "4", "--B", "10",
                 "--reps", "5", "--output", str(out)]) == 0
    with open(out / "validation.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 3
    assert main(["hopkins", "--features", feats, "--m", "5", "--reps", "10", "--output", str(out)]) == 0
    h = json.loads((out / "hopkins.json").read_text())
    assert 0 < h["statistic"] < 1 and h["m_samples"] == 5


def test_simulate_and_evaluate(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--scenario", "1", "--sizes", "5,5", "--reps", "3", "--seed", "4",
                 "--output", str(sim)]) == 0
    assert sorted(p.name for p in sim.glob("rep_*.csv")) == ["rep_000.csv", "rep_001.csv", "rep_002.csv"]
    with open(sim / "rep_000.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["series_id", "label", "t", "value"]
    assert len(rows) == 10 * 100
    assert main(["evaluate", "--scenario-dir", str(sim)]) == 0
    with open(sim / "metrics.csv") as fh:
        metrics = list(csv.DictReader(fh))
    assert len(metrics) == 3
    assert list(metrics[0]) == ["rep", "scenario", "split", "sensitivity", "specificity", "f1",
                                "balanced_accuracy", "auc"]
    summary = json.loads((sim / "metrics_summary.json").read_text())
    assert summary["summary"]["n_reps"] == 3


def test_errors_and_usage(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["cluster", "--bogus"])
    assert exc.value.code == 2
    assert main(["cluster", "--features", str(tmp_path / "missing.csv")]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "FileNotFoundError"
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "x.csv").write_text("Date,Symbol\n2020-01-01,X\n")
    assert main(["features", "--input", str(bad), "--output", str(tmp_path / "o")]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "SchemaError" and "x.csv" in err["message"]


def test_runconfig_validation():
    with pytest.raises(ValueError):
        RunConfig(window_days=5)
    with pytest.raises(ValueError):
        RunConfig(algorithm="fanny")
    cfg = RunConfig(k=4)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
