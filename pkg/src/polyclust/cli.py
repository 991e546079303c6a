"""Command-line driver: ingestion, feature extraction, clustering, validation and simulation.

Usage::

    polyclust run --input DATA_DIR --output OUT
    polyclust run --manifest OUT/manifest.json --output OUT2
    polyclust features --input DATA_DIR --window 1000 --output OUT
    polyclust cluster --features OUT/features.csv --k 5 --algo kmeans
    polyclust validate --features OUT/features.csv --kmin 2 --kmax 10 --B 100
    polyclust hopkins --features OUT/features.csv --m 5 --reps 100
    polyclust simulate --scenario 1 --sizes 25,25 --reps 20 --seed 7 --output SIM
    polyclust evaluate --scenario-dir SIM

Environment:
    POLYCLUST_THREADS - cap on worker threads (0 or unset = all cores)
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .clustering import FeatureMatrix, build_feature_matrix, cluster, euclidean_dissimilarity, standardize
from .errors import DuplicateDate, ParseError, PolyclustError, SchemaError
from .polyspectra import DEFAULT_WEIGHTS, WeightFunction
from .series import TimeSeries, descriptive_stats, scale_to_initial
from .simgen import GarchSpec, ScenarioSpec, gen_scenario
from .study import METRIC_COLUMNS, derived_seed, evaluate_clustering, summarize
from .validation import feature_importance, hopkins, validate, vat_order

log = logging.getLogger("polyclust")

MIN_ROWS = 8
DATE_FORMATS = ("%Y-%m-%d", "%d-%m-%Y")


# ---------------------------------------------------------------------------
# config


@dataclass
class RunConfig:
    input_dir: str | None = None
    output_dir: str = "polyclust_out"
    window_days: int = 1000
    k: int = 5
    algorithm: str = "kmeans"
    seed: int = 0
    k_range: tuple[int, int] = (2, 10)
    gap_B: int = 100
    hopkins_reps: int = 100
    hopkins_m: int | None = None
    weights: dict[str, WeightFunction] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def __post_init__(self):
        if self.window_days < MIN_ROWS:
            raise ValueError(f"window_days must be at least {MIN_ROWS}")
        if self.algorithm not in ("kmeans", "pam", "clara"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        self.k_range = tuple(self.k_range)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k_range"] = list(self.k_range)
        # a list, so column order survives sort_keys serialization
        d["weights"] = [{"name": name, **w.to_dict()} for name, w in self.weights.items()]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        d = dict(d)
        if "weights" in d:
            d["weights"] = {
                w["name"]: WeightFunction.from_dict({k: v for k, v in w.items() if k != "name"})
                for w in d["weights"]
            }
        return cls(**d)


def thread_count() -> int:
    raw = os.environ.get("POLYCLUST_THREADS", "0").strip() or "0"
    n = int(raw)
    return n if n > 0 else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# ingestion


def _parse_date(text: str, fmt: str | None, where: str) -> tuple[date, str]:
    formats = (fmt,) if fmt else DATE_FORMATS
    for f in formats:
        try:
            return datetime.strptime(text.strip(), f).date(), f
        except ValueError:
            continue
    raise ParseError(f"{where}: unparseable date {text!r}")


def read_stock_file(path: Path) -> tuple[str, list[tuple[date, float]]]:
    """Parse one per-stock CSV into ``(symbol, [(date, vwap), ...])`` sorted by date.

    The symbol is taken from the most recent row, since listings can be
    renamed over a file's history.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = {c.strip(): c for c in (reader.fieldnames or [])}
        for required in ("Date", "Symbol", "VWAP"):
            if required not in cols:
                raise SchemaError(f"{path.name}: missing required column {required!r}")
        rows = []
        fmt = None
        for line_no, row in enumerate(reader, start=2):
            where = f"{path.name} row {line_no}"
            day, fmt = _parse_date(row[cols["Date"]] or "", fmt, where)
            try:
                vwap = float(row[cols["VWAP"]])
            except (TypeError, ValueError):
                raise ParseError(f"{where}: VWAP {row[cols['VWAP']]!r} is not a number") from None
            if not math.isfinite(vwap) or vwap <= 0:
                raise ParseError(f"{where}: VWAP must be positive, got {vwap}")
            rows.append((day, vwap, (row[cols["Symbol"]] or "").strip()))
    rows.sort(key=lambda r: r[0])
    for prev, cur in zip(rows, rows[1:]):
        if prev[0] == cur[0]:
            raise DuplicateDate(f"{path.name}: duplicate date {cur[0].isoformat()}")
    symbol = rows[-1][2] if rows and rows[-1][2] else path.stem
    return symbol, [(d, v) for d, v, _ in rows]


def ingest(input_dir, window_days: int = 1000) -> dict[str, TimeSeries]:
    """Load every ``*.csv`` stock file as an initial-value-scaled VWAP window.

    Files are read in sorted name order and the result is keyed and ordered
    by symbol, so enumeration order never matters.
    """
    out: dict[str, TimeSeries] = {}
    for path in sorted(Path(input_dir).glob("*.csv")):
        symbol, rows = read_stock_file(path)
        if len(rows) < MIN_ROWS:
            log.warning("skipping %s: only %d rows (< %d)", symbol, len(rows), MIN_ROWS)
            continue
        if len(rows) < window_days:
            log.warning("%s has %d rows, fewer than the %d-day window; using all", symbol, len(rows), window_days)
        if symbol in out:
            raise SchemaError(f"{path.name}: symbol {symbol!r} appears in more than one file")
        window = rows[-window_days:]
        series = TimeSeries([v for _, v in window], label=symbol)
        out[symbol] = scale_to_initial(series)
    return dict(sorted(out.items()))


# ---------------------------------------------------------------------------
# serialization


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return _plain(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if not math.isfinite(v) else repr(float(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_features(path: Path, m: FeatureMatrix) -> None:
    write_csv(path, ("label", *m.feature_names), ([lab, *row] for lab, row in zip(m.labels, m.values)))


def read_features(path) -> FeatureMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        labels, rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            labels.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise ParseError(f"{path}: row {line_no} has a non-numeric feature") from None
    return FeatureMatrix(np.array(rows).reshape(len(rows), len(header) - 1), tuple(labels), tuple(header[1:]))


# ---------------------------------------------------------------------------
# pipeline steps


def extract_features(series: Mapping[str, TimeSeries], weights, threads: int) -> FeatureMatrix:
    return build_feature_matrix(list(series.values()), weights, threads=threads)


def write_descriptive(path: Path, series: Mapping[str, TimeSeries]) -> None:
    rows = []
    for sym, s in series.items():
        st = descriptive_stats(s)
        rows.append((sym, st["mean_return"], st["volatility"], st["acf1"]))
    write_csv(path, ("label", "mean_return", "volatility", "acf1"), rows)


def write_clusters(out: Path, z: FeatureMatrix, k: int, algorithm: str, seed: int):
    res = cluster(z, k, algorithm=algorithm, seed=seed)
    write_json(out / f"clusters_{algorithm}_k{k}.json", res.to_dict(list(z.labels)))
    return res


def write_validation(out: Path, z: FeatureMatrix, cfg: RunConfig, threads: int):
    report = validate(
        z,
        k_min=cfg.k_range[0],
        k_max=cfg.k_range[1],
        B=cfg.gap_B,
        seed=cfg.seed,
        hopkins_reps=cfg.hopkins_reps,
        hopkins_m=cfg.hopkins_m,
        threads=threads,
    )
    write_json(out / "validation.json", report.to_dict())
    cols = ("k", "wss", "silhouette_avg", "gap", "gap_se", "dunn", "davies_bouldin", "calinski_harabasz")
    write_csv(out / "validation.csv", ("k", "wss", "silhouette", "gap", "gap_se", "dunn", "db", "ch"),
              ([r[c] for c in cols] for r in report.rows()))
    return report


def run_pipeline(cfg: RunConfig, threads: int | None = None) -> Path:
    """Run ingestion through validation and write every artifact to ``cfg.output_dir``."""
    threads = threads or thread_count()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.input_dir is None:
        raise ValueError("run_pipeline needs input_dir")
    series = ingest(cfg.input_dir, cfg.window_days)
    log.info("ingested %d series", len(series))
    raw = extract_features(series, cfg.weights, threads)
    z = standardize(raw)
    write_features(out / "features.csv", raw)
    write_features(out / "features_standardized.csv", z)
    write_descriptive(out / "descriptive_stats.csv", series)

    report = write_validation(out, z, cfg, threads)
    write_json(out / "hopkins.json", report.hopkins)
    res = write_clusters(out, z, cfg.k, cfg.algorithm, cfg.seed)

    order = vat_order(euclidean_dissimilarity(z))
    write_json(out / "vat_order.json", {"order": order, "labels": [z.labels[i] for i in order]})
    imp = feature_importance(z, res.assignments)
    write_csv(out / "feature_importance.csv", ("feature", "score", "f_statistic", "flagged"),
              ((f, imp.scores[f], imp.f_statistics[f], f in imp.flagged) for f in z.feature_names))
    write_manifest(out, "run", cfg.to_dict())
    return out


def write_manifest(out: Path, command: str, config: dict) -> None:
    write_json(out / "manifest.json", {"command": command, "config": config, "version": __version__})


# ---------------------------------------------------------------------------
# simulation files


def write_replication(path: Path, data) -> None:
    rows = []
    for i, item in enumerate(data):
        for t, v in enumerate(item.series.values, start=1):
            rows.append((i, item.group, t, float(v)))
    write_csv(path, ("series_id", "label", "t", "value"), rows)


def read_replication(path: Path) -> tuple[list[TimeSeries], list[str]]:
    values: dict[int, list[float]] = {}
    groups: dict[int, str] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            sid = int(row["series_id"])
            values.setdefault(sid, []).append((int(row["t"]), float(row["value"])))
            groups[sid] = row["label"]
    series = [
        TimeSeries([v for _, v in sorted(values[sid])], label=f"{groups[sid]}{sid}") for sid in sorted(values)
    ]
    return series, [groups[sid] for sid in sorted(values)]


# ---------------------------------------------------------------------------
# commands


def _parse_sizes(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad group sizes {text!r}") from None


def _weights_from_args(overrides: Sequence[str] | None) -> dict[str, WeightFunction]:
    weights = dict(DEFAULT_WEIGHTS)
    for item in overrides or []:
        name, sep, spec = item.partition("=")
        if not sep:
            raise ValueError(f"weight override must look like NAME=KIND{{...}}, got {item!r}")
        weights[name.strip()] = WeightFunction.parse(spec)
    return weights


def cmd_run(args) -> None:
    if args.manifest:
        manifest = json.loads(Path(args.manifest).read_text())
        cfg = RunConfig.from_dict(manifest["config"])
        if args.output:
            cfg.output_dir = args.output
    else:
        cfg = RunConfig(
            input_dir=args.input,
            output_dir=args.output or "polyclust_out",
            window_days=args.window,
            k=args.k,
            algorithm=args.algo,
            seed=args.seed,
            k_range=(args.kmin, args.kmax),
            gap_B=args.B,
            hopkins_reps=args.reps,
            weights=_weights_from_args(args.weight),
        )
    run_pipeline(cfg)


def cmd_features(args) -> None:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    weights = _weights_from_args(args.weight)
    series = ingest(args.input, args.window)
    raw = extract_features(series, weights, thread_count())
    write_features(out / "features.csv", raw)
    write_features(out / "features_standardized.csv", standardize(raw))
    write_descriptive(out / "descriptive_stats.csv", series)
    write_manifest(out, "features", {
        "input_dir": args.input, "window_days": args.window,
        "weights": [{"name": n, **w.to_dict()} for n, w in weights.items()],
    })


def cmd_cluster(args) -> None:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    z = standardize(read_features(args.features))
    write_clusters(out, z, args.k, args.algo, args.seed)
    write_manifest(out, "cluster", {"features": args.features, "k": args.k, "algorithm": args.algo, "seed": args.seed})


def cmd_validate(args) -> None:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    z = standardize(read_features(args.features))
    cfg = RunConfig(k_range=(args.kmin, args.kmax), gap_B=args.B, seed=args.seed, hopkins_reps=args.reps)
    write_validation(out, z, cfg, thread_count())
    write_manifest(out, "validate", {
        "features": args.features, "k_range": [args.kmin, args.kmax], "B": args.B, "seed": args.seed,
        "hopkins_reps": args.reps,
    })


def cmd_hopkins(args) -> None:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    z = standardize(read_features(args.features))
    write_json(out / "hopkins.json", hopkins(z, m_samples=args.m, reps=args.reps, seed=args.seed))
    write_manifest(out, "hopkins", {"features": args.features, "m": args.m, "reps": args.reps, "seed": args.seed})


def _scenario_spec(args) -> ScenarioSpec:
    return ScenarioSpec(
        args.scenario,
        args.sizes or (),
        T=args.T,
        seed=args.seed,
        garch=GarchSpec(omega=args.omega),
    )


def cmd_simulate(args) -> None:
    spec = _scenario_spec(args)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for rep in range(args.reps):
        write_replication(out / f"rep_{rep:03d}.csv", gen_scenario(spec, rep))
    write_manifest(out, "simulate", {
        "scenario": spec.scenario, "sizes": list(spec.group_sizes), "T": spec.T, "seed": spec.seed,
        "reps": args.reps, "omega": spec.garch.omega,
    })


def cmd_evaluate(args) -> None:
    src = Path(args.scenario_dir)
    manifest = json.loads((src / "manifest.json").read_text())["config"]
    out = Path(args.output) if args.output else src
    out.mkdir(parents=True, exist_ok=True)
    files = sorted(src.glob("rep_*.csv"))
    threads = thread_count()

    def one(path: Path) -> dict:
        rep = int(path.stem.split("_")[1])
        series, groups = read_replication(path)
        rec = evaluate_clustering(series, groups, seed=derived_seed(manifest["seed"], rep), algorithm=args.algo)
        rec.update(rep=rep, scenario=manifest["scenario"], split=",".join(map(str, manifest["sizes"])))
        return rec

    if threads > 1 and len(files) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one, files))
    else:
        records = [one(p) for p in files]
    if not records:
        raise SchemaError(f"{src}: no rep_*.csv files to evaluate")
    write_csv(out / "metrics.csv", ("rep", "scenario", "split", *METRIC_COLUMNS),
              ([r["rep"], r["scenario"], r["split"], *(r[c] for c in METRIC_COLUMNS)] for r in records))
    write_json(out / "metrics_summary.json", {
        "summary": summarize(records),
        "per_replication": [{k: v for k, v in r.items() if k != "assignments"} for r in records],
        "algorithm": args.algo,
    })


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polyclust", description="Polyspectral-mean time-series clustering")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def weight_opt(sp):
        sp.add_argument("--weight", action="append", metavar="NAME=KIND{...}",
                        help="override or add a weight, e.g. bispec_disc='disc_indicator{r: 1.0}'")

    r = sub.add_parser("run", help="full pipeline on a directory of stock CSVs")
    r.add_argument("--input")
    r.add_argument("--manifest", help="re-execute the run recorded in a manifest.json")
    r.add_argument("--output")
    r.add_argument("--window", type=int, default=1000)
    r.add_argument("--k", type=int, default=5)
    r.add_argument("--algo", choices=("kmeans", "pam", "clara"), default="kmeans")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--kmin", type=int, default=2)
    r.add_argument("--kmax", type=int, default=10)
    r.add_argument("--B", type=int, default=100)
    r.add_argument("--reps", type=int, default=100, help="Hopkins repetitions")
    weight_opt(r)
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("features", help="extract the feature matrix from stock CSVs")
    f.add_argument("--input", required=True)
    f.add_argument("--window", type=int, default=1000)
    f.add_argument("--output", default=".")
    weight_opt(f)
    f.set_defaults(func=cmd_features)

    c = sub.add_parser("cluster", help="cluster a feature CSV")
    c.add_argument("--features", required=True)
    c.add_argument("--k", type=int, default=5)
    c.add_argument("--algo", choices=("kmeans", "pam", "clara"), default="kmeans")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--output", default=".")
    c.set_defaults(func=cmd_cluster)

    v = sub.add_parser("validate", help="cluster-count diagnostics for a feature CSV")
    v.add_argument("--features", required=True)
    v.add_argument("--kmin", type=int, default=2)
    v.add_argument("--kmax", type=int, default=10)
    v.add_argument("--B", type=int, default=100)
    v.add_argument("--reps", type=int, default=100, help="Hopkins repetitions")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--output", default=".")
    v.set_defaults(func=cmd_validate)

    h = sub.add_parser("hopkins", help="Hopkins clustering-tendency statistic")
    h.add_argument("--features", required=True)
    h.add_argument("--m", type=int, default=None)
    h.add_argument("--reps", type=int, default=100)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--output", default=".")
    h.set_defaults(func=cmd_hopkins)

    s = sub.add_parser("simulate", help="write simulated replications as CSV")
    s.add_argument("--scenario", type=int, choices=(1, 2, 3), required=True)
    s.add_argument("--sizes", type=_parse_sizes)
    s.add_argument("--reps", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--T", type=int, default=100)
    s.add_argument("--omega", type=float, default=0.0, help="GARCH intercept")
    s.add_argument("--output", default="simulation")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="cluster and score every replication in a simulate directory")
    e.add_argument("--scenario-dir", required=True)
    e.add_argument("--algo", choices=("kmeans", "pam", "clara"), default="kmeans")
    e.add_argument("--output")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except (PolyclustError, ValueError, OSError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
