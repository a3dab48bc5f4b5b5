"""CSV artifacts.

Every file starts with one comment line ``# run_config: <json>`` holding the
full run configuration (sorted keys), followed by a header row.  Floats are
written with 17 significant digits so they parse back to the same double.

Column order is fixed:

* ``convergence.csv``: ``method, M, trial, estimate, abs_error``
* ``summary.csv``: ``method, M, trials, mean_estimate, std_estimate, mean_abs_error, analytic``
* ``qubits.csv``: ``n, T, loading, comparator, rotation, total``
* ``sweep.csv``: ``n, trials, mean, std, ci_low, ci_high, analytic``
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

CONVERGENCE_COLUMNS = ("method", "M", "trial", "estimate", "abs_error")
SUMMARY_COLUMNS = ("method", "M", "trials", "mean_estimate", "std_estimate", "mean_abs_error",
                   "analytic")
QUBIT_COLUMNS = ("n", "T", "loading", "comparator", "rotation", "total")
SWEEP_COLUMNS = ("n", "trials", "mean", "std", "ci_low", "ci_high", "analytic")

CONFIG_PREFIX = "# run_config: "


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def config_line(config):
    return CONFIG_PREFIX + json.dumps(config, sort_keys=True, separators=(",", ":")) + "\n"


def render_csv(config, columns, rows):
    buf = io.StringIO()
    buf.write(config_line(config))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, config, columns, rows):
    Path(path).write_text(render_csv(config, columns, rows), encoding="utf-8")


def read_config(path):
    """The embedded run configuration of an artifact."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.startswith(CONFIG_PREFIX):
        raise ValueError(f"{path} has no embedded run configuration")
    return json.loads(first[len(CONFIG_PREFIX):])


def read_rows(path):
    """Data rows of an artifact as dicts of strings."""
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def convergence_rows(records):
    return [(r.method, r.M, r.trial, r.estimate, r.abs_error) for r in records]


def summary_rows(records, analytic):
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.M), []).append(r)
    rows = []
    for (method, M), recs in groups.items():
        est = np.array([r.estimate for r in recs])
        err = np.array([r.abs_error for r in recs])
        std = float(np.std(est, ddof=1)) if est.size > 1 else 0.0
        rows.append((method, M, est.size, math.fsum(est) / est.size, std,
                     math.fsum(err) / err.size, analytic))
    rows.append(("analytic", 0, 1, analytic, 0.0, 0.0, analytic))
    return rows


def qubit_rows(counts):
    return [(n, T, c["loading"], c["comparator"], c["rotation"], c["total"])
            for (n, T), c in counts]


def sweep_rows(results):
    return [(r.n_qubits, r.trials, r.mean, r.std, r.ci_low, r.ci_high, r.analytic)
            for r in results]
