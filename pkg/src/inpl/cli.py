"""Command-line experiment driver.

Subcommands::

    inpl gen-data --config C [--out FILE]
    inpl train    --config C [--out DIR]
    inpl sweep    --config C --axis {tau_c,tau_e,T,lambda_m} --values=v1,v2,... [--out DIR]
    inpl report   --in DIR[,DIR...] [--out DIR]

When ``--out`` is omitted the output lands under ``$INPL_OUT_ROOT`` (default
``./runs``), named after the config file. Every output directory receives a
``config.json`` with all defaults filled in.

Exit codes: 0 success, 1 invalid input, 2 training hit a non-finite value.

``metrics.csv`` (schema version 1) has one row per evaluation and the
columns listed in :data:`METRIC_COLUMNS`, followed by ``precision_c{k}``,
``recall_c{k}`` and ``acc_c{k}`` for every class ``k``. Floats are written
with ``repr`` so they round-trip exactly; undefined values are empty cells.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .io import FormatError, read_dataset, save_checkpoint, write_dataset
from .trainer import TrainingDiverged, run

log = logging.getLogger("inpl")

SCHEMA_VERSION = 1
OUT_ROOT_ENV = "INPL_OUT_ROOT"
METRIC_COLUMNS = (
    "schema_version",
    "iteration",
    "loss_s",
    "loss_u",
    "tau_e",
    "accept_rate",
    "micro_precision",
    "head_precision",
    "head_recall",
    "body_precision",
    "body_recall",
    "tail_precision",
    "tail_recall",
    "ood_accepted",
    "ood_accepted_cum",
    "test_acc",
    "minority_acc",
)
PER_CLASS = (("precision_c", "precision_per_class"), ("recall_c", "recall_per_class"), ("acc_c", "acc_per_class"))
SWEEP_COLUMNS = (
    "schema_version",
    "axis",
    "value",
    "run_dir",
    "final_acc",
    "best_acc",
    "minority_acc",
    "tail_recall",
    "micro_precision",
    "accept_rate",
    "ood_accepted_cum",
)
SWEEP_AXES = ("tau_c", "tau_e", "T", "lambda_m")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2


class UsageError(ValueError):
    pass


# -- formatting ----------------------------------------------------------------


def format_cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def metric_columns(K):
    cols = list(METRIC_COLUMNS)
    for prefix, _ in PER_CLASS:
        cols += [f"{prefix}{k}" for k in range(K)]
    return cols


def metrics_csv(records, K):
    """Render evaluation records as the versioned CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(metric_columns(K))
    for rec in records:
        row = [SCHEMA_VERSION] + [rec.get(c) for c in METRIC_COLUMNS[1:]]
        for _, key in PER_CLASS:
            row += list(rec[key])
        w.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- shared plumbing ---------------------------------------------------------------


def default_out(config_path, suffix=""):
    root = Path(os.environ.get(OUT_ROOT_ENV, "runs"))
    return root / (Path(config_path).stem + suffix)


def load_config(path):
    return cfgmod.load(path)


def load_dataset(exp, config_path=None):
    """Read the dataset file named in the config, or build it from the config."""
    path = exp.dataset.path
    if path is None:
        return exp.dataset.build()
    p = Path(path)
    if not p.is_absolute() and config_path is not None:
        p = Path(config_path).parent / p
    if not p.exists():
        raise UsageError(f"dataset file {p} does not exist")
    return read_dataset(p)


def run_experiment(exp, ds, out_dir):
    """Train and write ``config.json``, ``metrics.csv``, ``summary.json`` and ``checkpoint.npz``.

    Returns the summary dict. On divergence the partial metrics and a summary
    with ``status: "diverged"`` are still written before the error propagates.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "config.json", cfgmod.dumps(exp))
    try:
        metrics, state = run(exp.train, ds)
    except TrainingDiverged as exc:
        _write_text(out / "metrics.csv", metrics_csv(exc.metrics.records, ds.K))
        summary = _summary(exc.metrics.records, exp, status="diverged", error=str(exc))
        _write_json(out / "summary.json", summary)
        raise
    _write_text(out / "metrics.csv", metrics_csv(metrics.records, ds.K))
    save_checkpoint(out / "checkpoint.npz", state)
    summary = _summary(metrics.records, exp)
    _write_json(out / "summary.json", summary)
    return summary


def _summary(records, exp, status="ok", error=None):
    out = {"schema_version": SCHEMA_VERSION, "status": status, "config": cfgmod.to_dict(exp)}
    if error is not None:
        out["error"] = error
    if records:
        final = records[-1]
        best = max(records, key=lambda r: r["test_acc"])
        out["final"] = {k: final[k] for k in METRIC_COLUMNS[1:]}
        out["final_acc"] = final["test_acc"]
        out["best_acc"] = best["test_acc"]
        out["best_iteration"] = best["iteration"]
    return out


# -- sweep ------------------------------------------------------------------------


def parse_values(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise UsageError("--values needs at least one value")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"--values: {exc}") from exc


def apply_axis(exp, axis, value):
    """Config for one sweep point.

    ``tau_c`` runs use a confidence gate (keeping ``soft`` if configured);
    ``tau_e`` runs use the energy gate with a fixed threshold.
    """
    train = exp.train
    pol = train.policy
    if axis == "tau_c":
        kind = pol.kind if pol.kind in ("confidence", "soft") else "confidence"
        pol = replace(pol, kind=kind, tau_c=value)
    elif axis == "tau_e":
        pol = replace(pol, kind="energy", tau_e_mode="fixed", tau_e=value)
    elif axis == "T":
        pol = replace(pol, T=value)
    elif axis == "lambda_m":
        train = replace(train, lambda_m=value)
    else:
        raise UsageError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    exp = replace(exp, train=replace(train, policy=pol))
    return exp.validate()


def sweep_rows(axis, values, summaries, run_dirs):
    rows = []
    for v, s, d in zip(values, summaries, run_dirs):
        f = s["final"]
        rows.append({
            "schema_version": SCHEMA_VERSION,
            "axis": axis,
            "value": v,
            "run_dir": d,
            "final_acc": s["final_acc"],
            "best_acc": s["best_acc"],
            "minority_acc": f["minority_acc"],
            "tail_recall": f["tail_recall"],
            "micro_precision": f["micro_precision"],
            "accept_rate": f["accept_rate"],
            "ood_accepted_cum": f["ood_accepted_cum"],
        })
    return rows


def sweep_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([format_cell(r[c]) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def run_dir_name(axis, value):
    return f"{axis}={value!r}"


# -- commands -----------------------------------------------------------------------


def cmd_gen_data(args):
    exp = load_config(args.config)
    out = Path(args.out) if args.out else default_out(args.config, ".inplds")
    ds = exp.dataset.build()
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(out, ds)
    _write_text(out.with_name(out.name + ".config.json"), cfgmod.dumps(exp))
    counts = ds.counts()
    print(f"labeled   {counts['labeled']}")
    print(f"unlabeled {counts['unlabeled']}")
    print(f"test      {counts['test']}")
    if counts["ood"]:
        print(f"ood       {counts['ood']}")
    digest = hashlib.sha256(out.read_bytes()).hexdigest()
    print(f"wrote {out} sha256={digest}")
    return EXIT_OK


def cmd_train(args):
    exp = load_config(args.config)
    out = Path(args.out) if args.out else default_out(args.config)
    ds = load_dataset(exp, args.config)
    summary = run_experiment(exp, ds, out)
    print(f"final acc {summary['final_acc']!r}  best acc {summary['best_acc']!r}  -> {out}")
    return EXIT_OK


def cmd_sweep(args):
    exp = load_config(args.config)
    values = parse_values(args.values)
    if args.axis not in SWEEP_AXES:
        raise UsageError(f"unknown sweep axis {args.axis!r}; choose from {', '.join(SWEEP_AXES)}")
    configs = [apply_axis(exp, args.axis, v) for v in values]
    out = Path(args.out) if args.out else default_out(args.config, f"-sweep-{args.axis}")
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "config.json", cfgmod.dumps(exp))
    ds = load_dataset(exp, args.config)
    summaries, dirs = [], []
    for v, c in zip(values, configs):
        name = run_dir_name(args.axis, v)
        summaries.append(run_experiment(c, ds, out / name))
        dirs.append(name)
        print(f"{args.axis}={v!r}  final acc {summaries[-1]['final_acc']!r}")
    _write_text(out / "sweep.csv", sweep_csv(sweep_rows(args.axis, values, summaries, dirs)))
    return EXIT_OK


def cmd_report(args):
    from .report import build_report

    inputs = [p for p in args.inputs.split(",") if p]
    if not inputs:
        raise UsageError("--in needs at least one directory")
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ROOT_ENV, "runs")) / "report"
    written = build_report(inputs, out)
    for p in written:
        print(p)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="inpl", description="Imbalanced SSL pseudo-labeling experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a dataset file from a config")
    g.add_argument("--config", required=True)
    g.add_argument("--out", help="dataset file path")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one run")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="run directory")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="train once per value of one hyperparameter")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", required=True, help="one of " + ", ".join(SWEEP_AXES))
    s.add_argument("--values", required=True, help="comma-separated numbers; write --values=-9,-8 for negatives")
    s.add_argument("--out", help="sweep directory")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="render SVG figures from run or sweep directories")
    r.add_argument("--in", dest="inputs", required=True, help="comma-separated directories")
    r.add_argument("--out", help="report directory")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (cfgmod.ConfigError, UsageError, FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
