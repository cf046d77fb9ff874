"""Command-line entry point: ``proxtrace <command> ...``.

Every output file starts with ``#`` lines carrying the command, the SHA-256
of its resolved configuration (input files enter by content hash) and the
seed.  Exit codes: 0 ok, 2 usage or file error, 3 malformed input,
4 degenerate data.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .classifiers import KINDS, evaluate_repeated, precision_recall_curve, train
from .classifiers.evaluation import holdout_split
from .errors import DataFormatError, DegenerateDataError, ScenarioError, TrainingError
from .features import (
    FEATURE_NAMES,
    RiskPolicy,
    WindowingPolicy,
    build_dataset,
    ingest_log_csv,
    read_features_csv,
    to_matrix,
    write_features_csv,
    write_log_csv,
)
from .harness import Scenario, require_two_classes, run_outbreak_drill, run_paper_replication

log = logging.getLogger("proxtrace")

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_DEGENERATE = 0, 2, 3, 4
ABLATION_ORDER = ("mean_rss", "n_samples", "max_rss", "min_rss", "rss_range")


class UsageError(Exception):
    pass


def _sha256_file(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise FileNotFoundError(f"{path}: {exc.strerror or exc}") from None


def _header(command: str, config: dict, seed) -> list[str]:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(text.encode()).hexdigest()
    return [f"proxtrace {command}", f"config_sha256={digest} seed={seed}", f"config={text}"]


def _emit(out, header: list[str], columns, rows) -> None:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    if out is None or str(out) == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(out).write_text(buf.getvalue())


def _fmt(x) -> str:
    return repr(float(x))


def _csv_list(text: str, conv=str) -> list:
    try:
        return [conv(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad list {text!r}: {exc}") from None


def _classifiers(text: str) -> list[str]:
    kinds = [k.upper() for k in _csv_list(text)]
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        raise UsageError(f"unknown classifier(s) {bad}; choose from {','.join(KINDS)}")
    return kinds


def _hyper(args, kind: str) -> dict:
    if kind == "DT":
        return {"max_depth": args.max_depth, "min_leaf": args.min_leaf, "criterion": args.criterion}
    if kind == "KNN":
        return {"k": args.k}
    return {}


def _hyper_config(args) -> dict:
    return {"max_depth": args.max_depth, "min_leaf": args.min_leaf, "criterion": args.criterion, "k": args.k}


def _windowing(args) -> WindowingPolicy:
    try:
        return WindowingPolicy(args.window_ms, args.stride_ms, args.min_samples)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_rows(path):
    rows = read_features_csv(path)
    if any(r.label is None for r in rows):
        raise DataFormatError(f"{path}: every row needs a label")
    return rows


# ---- commands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    scenario = Scenario.load(args.scenario)
    seed = scenario.seed if args.seed is None else args.seed
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = run_paper_replication(scenario, seed=seed)
    config = {"scenario": scenario.to_dict(), "seed": seed}
    header = _header("simulate", config, seed)
    status = EXIT_OK
    for geom, ds in res.datasets.items():
        write_features_csv(ds.rows, out / f"{geom.value}.csv", header + [f"geometry={geom.value}"])
        write_log_csv(res.observations[geom], out / f"{geom.value}_log.csv", header + [f"geometry={geom.value}"])
        counts = ds.class_counts
        print(f"{geom.value}: {len(ds.rows)} rows (+1: {counts[1]}, -1: {counts[-1]})", file=sys.stderr)
        if ds.single_class:
            print(f"warning: {geom.value} dataset has a single class", file=sys.stderr)
            status = EXIT_DEGENERATE
    return status


def cmd_evaluate(args) -> int:
    rows = _load_rows(args.dataset)
    require_two_classes(rows, str(args.dataset))
    kinds = _classifiers(args.classifiers)
    X, y = to_matrix(rows)
    config = {
        "dataset_sha256": _sha256_file(args.dataset), "classifiers": kinds, "reps": args.reps,
        "split": args.split, "hyper": _hyper_config(args),
    }
    out_rows = []
    for kind in kinds:
        rep = evaluate_repeated(X, y, kind, _hyper(args, kind), args.split, args.reps, args.seed)
        out_rows += [(c, m, _fmt(a), _fmt(b), _fmt(d)) for c, m, a, b, d in rep.rows()]
    _emit(args.out, _header("evaluate", config, args.seed), ("classifier", "metric", "mean", "ci_lo", "ci_hi"), out_rows)
    return EXIT_OK


def cmd_ablate_features(args) -> int:
    rows = _load_rows(args.dataset)
    require_two_classes(rows, str(args.dataset))
    order = _csv_list(args.order)
    bad = [f for f in order if f not in FEATURE_NAMES]
    if bad or len(set(order)) != len(order) or not order:
        raise UsageError(f"--order must list distinct features from {','.join(FEATURE_NAMES)}")
    kinds = _classifiers(args.classifiers)
    config = {
        "dataset_sha256": _sha256_file(args.dataset), "order": order, "classifiers": kinds,
        "reps": args.reps, "split": args.split, "hyper": _hyper_config(args),
    }
    out_rows = []
    for kind in kinds:
        for n in range(1, len(order) + 1):
            X, y = to_matrix(rows, order[:n])
            acc = evaluate_repeated(X, y, kind, _hyper(args, kind), args.split, args.reps, args.seed).accuracy
            out_rows.append((kind, n, "+".join(order[:n]), _fmt(acc.mean), _fmt(acc.ci_lo), _fmt(acc.ci_hi)))
    _emit(args.out, _header("ablate-features", config, args.seed),
          ("classifier", "n_features", "features", "accuracy_mean", "ci_lo", "ci_hi"), out_rows)
    return EXIT_OK


def _ingest(path):
    res = ingest_log_csv(path)
    for msg in res.skipped:
        print(f"warning: skipped {msg}", file=sys.stderr)
    if not res.observations:
        raise DataFormatError(f"{path}: no usable rows")
    return res.observations


def cmd_ablate_samples(args) -> int:
    caps = _csv_list(args.caps, int)
    if not caps or any(c < 1 for c in caps) or caps != sorted(set(caps)):
        raise UsageError("--caps must be positive and strictly ascending")
    obs = _ingest(args.log)
    windowing = _windowing(args)
    risk = RiskPolicy(args.threshold)
    kinds = _classifiers(args.classifiers)
    config = {
        "log_sha256": _sha256_file(args.log), "caps": caps, "windowing": vars(windowing), "threshold_m": args.threshold,
        "classifiers": kinds, "reps": args.reps, "split": args.split, "hyper": _hyper_config(args),
    }
    out_rows = []
    for cap in caps:
        rows = build_dataset(obs, windowing, risk, cap=cap)
        require_two_classes(rows, f"dataset at cap {cap}")
        X, y = to_matrix(rows)
        for kind in kinds:
            acc = evaluate_repeated(X, y, kind, _hyper(args, kind), args.split, args.reps, args.seed).accuracy
            out_rows.append((kind, cap, _fmt(acc.mean), _fmt(acc.ci_lo), _fmt(acc.ci_hi)))
    out_rows.sort(key=lambda r: (kinds.index(r[0]), r[1]))
    _emit(args.out, _header("ablate-samples", config, args.seed),
          ("classifier", "cap", "accuracy_mean", "ci_lo", "ci_hi"), out_rows)
    return EXIT_OK


def cmd_ablate_threshold(args) -> int:
    thresholds = _csv_list(args.thresholds, float)
    if not thresholds or any(t <= 0 for t in thresholds):
        raise UsageError("--thresholds must be positive")
    obs = _ingest(args.log)
    windowing = _windowing(args)
    kinds = _classifiers(args.classifiers)
    config = {
        "log_sha256": _sha256_file(args.log), "thresholds_m": thresholds, "windowing": vars(windowing),
        "classifiers": kinds, "reps": args.reps, "split": args.split, "hyper": _hyper_config(args),
    }
    out_rows = []
    degenerate = False
    for t in thresholds:
        rows = build_dataset(obs, windowing, RiskPolicy(t))
        X, y = to_matrix(rows)
        if len(set(y.tolist())) < 2:
            degenerate = True
            print(f"error: threshold {t} m leaves a single class", file=sys.stderr)
            out_rows += [(kind, _fmt(t), "", "", "", "single-class") for kind in kinds]
            continue
        for kind in kinds:
            acc = evaluate_repeated(X, y, kind, _hyper(args, kind), args.split, args.reps, args.seed).accuracy
            out_rows.append((kind, _fmt(t), _fmt(acc.mean), _fmt(acc.ci_lo), _fmt(acc.ci_hi), "ok"))
    out_rows.sort(key=lambda r: (kinds.index(r[0]), float(r[1])))
    _emit(args.out, _header("ablate-threshold", config, args.seed),
          ("classifier", "threshold_m", "accuracy_mean", "ci_lo", "ci_hi", "status"), out_rows)
    return EXIT_DEGENERATE if degenerate else EXIT_OK


def cmd_drill(args) -> int:
    scenario = Scenario.load(args.scenario)
    seed = scenario.seed if args.seed is None else args.seed
    infected = args.infected if args.infected is not None else scenario.infected
    report = run_outbreak_drill(scenario, infected, seed)
    config = {"scenario": scenario.to_dict(), "infected": infected, "seed": seed}
    rows = [(a, int(alert), n_sig, n_samp) for a, alert, n_sig, n_samp in report.rows()]
    _emit(args.out, _header("drill", config, seed), ("agent", "alerted", "matched_signatures", "matched_samples"), rows)
    return EXIT_OK


def cmd_ingest(args) -> int:
    column_map = {}
    for pair in _csv_list(args.column_map or ""):
        canon, _, actual = pair.partition("=")
        if not actual:
            raise UsageError(f"--column-map entries look like canonical=actual, got {pair!r}")
        column_map[canon] = actual
    res = ingest_log_csv(args.log, column_map)
    for msg in res.skipped:
        print(f"warning: skipped {msg}", file=sys.stderr)
    windowing = _windowing(args)
    rows = build_dataset(res.observations, windowing, RiskPolicy(args.threshold))
    config = {
        "log_sha256": _sha256_file(args.log), "column_map": column_map, "windowing": vars(windowing),
        "threshold_m": args.threshold,
    }
    write_features_csv(rows, args.out, _header("ingest", config, None) + [f"skipped_rows={len(res.skipped)}"])
    print(f"{len(res.observations)} packets -> {len(rows)} rows, {len(res.skipped)} skipped", file=sys.stderr)
    return EXIT_OK


def cmd_pr_curve(args) -> int:
    rows = _load_rows(args.dataset)
    require_two_classes(rows, str(args.dataset))
    kind = _classifiers(args.classifier)[0]
    X, y = to_matrix(rows)
    tr, te = holdout_split(len(rows), args.split, np.random.default_rng(np.random.SeedSequence(args.seed)))
    model = train(kind, X[tr], y[tr], **_hyper(args, kind))
    points = precision_recall_curve(model, X[te], y[te])
    config = {"dataset_sha256": _sha256_file(args.dataset), "classifier": kind, "split": args.split,
              "hyper": _hyper_config(args)}
    _emit(args.out, _header("pr-curve", config, args.seed), ("threshold", "recall", "precision"),
          [tuple(_fmt(v) for v in p) for p in points])
    return EXIT_OK


# ---- parser -----------------------------------------------------------------

def _add_eval_opts(p, reps: int, many: bool = True) -> None:
    if many:
        p.add_argument("--classifiers", default=",".join(KINDS), help="comma list of DT,LDA,NB,KNN")
        p.add_argument("--reps", type=int, default=reps)
    p.add_argument("--split", type=float, default=0.8, help="training fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=12)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--criterion", choices=("gini", "entropy"), default="gini")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", help="output CSV (default stdout)")


def _add_window_opts(p) -> None:
    d = WindowingPolicy()
    p.add_argument("--window-ms", type=float, default=d.window_ms)
    p.add_argument("--stride-ms", type=float, default=d.stride_ms)
    p.add_argument("--min-samples", type=int, default=d.min_samples)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="proxtrace", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate direct/crosswise feature and packet-log CSVs")
    p.add_argument("scenario")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="repeated holdout metrics per classifier")
    p.add_argument("dataset")
    _add_eval_opts(p, reps=100)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate-features", help="accuracy against number of input features")
    p.add_argument("dataset")
    p.add_argument("--order", default=",".join(ABLATION_ORDER))
    _add_eval_opts(p, reps=50)
    p.set_defaults(func=cmd_ablate_features)

    p = sub.add_parser("ablate-samples", help="accuracy against packets kept per window")
    p.add_argument("log", help="packet log CSV with ground-truth distances")
    p.add_argument("--caps", default="5,10,20,50,100,150,200")
    p.add_argument("--threshold", type=float, default=2.0)
    _add_window_opts(p)
    _add_eval_opts(p, reps=50)
    p.set_defaults(func=cmd_ablate_samples)

    p = sub.add_parser("ablate-threshold", help="accuracy against the distancing threshold")
    p.add_argument("log", help="packet log CSV with ground-truth distances")
    p.add_argument("--thresholds", default="1.0,1.25,1.5,1.75,2.0")
    _add_window_opts(p)
    _add_eval_opts(p, reps=50)
    p.set_defaults(func=cmd_ablate_threshold)

    p = sub.add_parser("drill", help="publish one agent's signatures and report who matches")
    p.add_argument("scenario")
    p.add_argument("--infected")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_drill)

    p = sub.add_parser("ingest", help="packet log CSV to labeled feature CSV")
    p.add_argument("log")
    p.add_argument("out")
    p.add_argument("--threshold", type=float, default=2.0)
    p.add_argument("--column-map", help="canonical=actual pairs, comma separated")
    _add_window_opts(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("pr-curve", help="precision/recall points from one holdout split")
    p.add_argument("dataset")
    p.add_argument("--classifier", default="DT")
    _add_eval_opts(p, reps=0, many=False)
    p.set_defaults(func=cmd_pr_curve)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, ScenarioError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (DegenerateDataError, TrainingError) as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
