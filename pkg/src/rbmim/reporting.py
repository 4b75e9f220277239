"""Delimited and JSON writers for metric series, drift logs, summaries and plot data."""

from __future__ import annotations

import csv
import json
import math

LOG_FIELDS = ("t", "detector", "class", "decision", "statistic", "p_value")
METRIC_FIELDS = ("batch", "pmAUC", "pmGM", "drift")


def _cell(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def write_rows(path, rows, fields):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n",
                           extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: _cell(row.get(k, "")) for k in fields})


def write_metrics_csv(path, rows):
    write_rows(path, rows, METRIC_FIELDS)


def write_drift_log_csv(path, rows):
    write_rows(path, rows, LOG_FIELDS)


def write_drift_log_jsonl(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(_json_safe({k: row[k] for k in LOG_FIELDS}),
                                sort_keys=True) + "\n")


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_json_safe(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
