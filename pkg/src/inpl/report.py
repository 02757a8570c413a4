"""SVG figures and a summary table from run or sweep directories.

The report is a pure function of the input CSV files: SVG output is made
byte-stable by fixing matplotlib's hash salt and dropping the date stamp.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib
from matplotlib.figure import Figure

SUPPORTED_SCHEMAS = {"1"}
REQUIRED = (
    "schema_version",
    "iteration",
    "accept_rate",
    "micro_precision",
    "head_precision",
    "head_recall",
    "body_precision",
    "body_recall",
    "tail_precision",
    "tail_recall",
    "ood_accepted_cum",
    "test_acc",
    "minority_acc",
)
GROUPS = ("head", "body", "tail")
_RC = {"svg.hashsalt": "inpl-report", "svg.fonttype": "path", "figure.figsize": (6.4, 4.0)}


class SchemaError(ValueError):
    pass


def _cell(v):
    if v == "":
        return None
    try:
        return int(v)
    except ValueError:
        return float(v)


def read_metrics(path):
    """Parse a ``metrics.csv`` into ``{column: [float or None, ...]}``."""
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"{path}: missing metrics.csv")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    missing = [c for c in REQUIRED if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    if not body:
        raise SchemaError(f"{path}: no data rows")
    versions = {r[header.index("schema_version")] for r in body}
    unknown = versions - SUPPORTED_SCHEMAS
    if unknown:
        raise SchemaError(f"{path}: unknown schema version(s) {', '.join(sorted(unknown))}")
    cols = {name: [] for name in header}
    for r in body:
        if len(r) != len(header):
            raise SchemaError(f"{path}: ragged row at iteration {r[header.index('iteration')]}")
        for name, v in zip(header, r):
            cols[name].append(_cell(v))
    return cols


def collect_runs(inputs):
    """Expand inputs into ``[(label, run_dir)]``; sweep directories expand to their runs."""
    runs = []
    for d in inputs:
        d = Path(d)
        if not d.is_dir():
            raise SchemaError(f"{d}: not a directory")
        sweep = d / "sweep.csv"
        if sweep.is_file():
            with open(sweep, newline="") as fh:
                rows = list(csv.DictReader(fh))
            if not rows or "run_dir" not in rows[0]:
                raise SchemaError(f"{sweep}: missing run_dir column")
            bad = {r.get("schema_version") for r in rows} - SUPPORTED_SCHEMAS
            if bad:
                raise SchemaError(f"{sweep}: unknown schema version(s) {', '.join(sorted(map(str, bad)))}")
            runs += [(f"{d.name}/{r['run_dir']}", d / r["run_dir"]) for r in rows]
        else:
            runs.append((d.name, d))
    labels = [lab for lab, _ in runs]
    if len(set(labels)) != len(labels):
        runs = [(f"{i}:{lab}", p) for i, (lab, p) in enumerate(runs)]
    return runs


def _plot(runs, metrics, title, ylabel, path):
    fig = Figure()
    ax = fig.add_subplot()
    for label, cols in runs:
        x = cols["iteration"]
        for m in metrics:
            pts = [(a, b) for a, b in zip(x, cols[m]) if b is not None]
            xs = [a for a, _ in pts]
            ys = [b for _, b in pts]
            ax.plot(xs, ys, marker=".", label=f"{label} {m}")
    ax.set_title(title)
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="x-small")
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    Path(path).write_bytes(buf.getvalue())
    return Path(path)


def summary_csv(runs):
    keys = ("test_acc", "minority_acc", "micro_precision", "tail_recall", "accept_rate", "ood_accepted_cum")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("run", "iteration") + keys)
    for label, cols in runs:
        row = [label, cols["iteration"][-1]] + [cols[k][-1] for k in keys]
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def build_report(inputs, out_dir):
    """Write the figures and ``summary.csv`` into ``out_dir``; return the paths."""
    runs = [(label, read_metrics(Path(d) / "metrics.csv")) for label, d in collect_runs(inputs)]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with matplotlib.rc_context(_RC):
        for g in GROUPS:
            written.append(_plot(runs, [f"{g}_precision", f"{g}_recall"],
                                 f"{g} classes: pseudo-label precision / recall", "rate",
                                 out / f"pr_{g}.svg"))
        written.append(_plot(runs, ["micro_precision", "accept_rate"],
                             "pooled pseudo-label precision and acceptance", "rate",
                             out / "pr_overall.svg"))
        written.append(_plot(runs, ["test_acc", "minority_acc"], "test accuracy (EMA model)",
                             "accuracy", out / "accuracy.svg"))
        written.append(_plot(runs, ["ood_accepted_cum"], "cumulative OOD pseudo-labels",
                             "count", out / "ood.svg"))
    p = out / "summary.csv"
    p.write_text(summary_csv(runs))
    written.append(p)
    return written
