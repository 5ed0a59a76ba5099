"""Flat report rows and JSON/CSV writers."""

from __future__ import annotations

import csv
import json

import numpy as np

REPORT_FIELDS = ("model", "fold", "class", "precision", "recall", "f1", "accuracy", "macro_f1", "params", "flops", "snr_db")
HISTORY_FIELDS = ("epoch", "train_loss", "val_loss", "val_macro_f1")


def metrics_rows(model, fold, report, params=None, flops=None, snr_db=None) -> list[dict]:
    """One row per class plus a ``class = "macro"`` summary row."""
    names = report.class_names or tuple(str(i) for i in range(len(report.f1)))
    base = {"model": model, "fold": fold, "accuracy": report.accuracy, "macro_f1": report.macro_f1,
            "params": params, "flops": flops, "snr_db": snr_db}
    rows = [
        {**base, "class": name, "precision": float(report.precision[c]), "recall": float(report.recall[c]), "f1": float(report.f1[c])}
        for c, name in enumerate(names)
    ]
    rows.append({**base, "class": "macro", "precision": float(report.precision.mean()),
                 "recall": float(report.recall.mean()), "f1": report.macro_f1})
    return rows


def cv_rows(result, snr_db=None) -> list[dict]:
    rows = []
    for k, rep in enumerate(result.fold_reports):
        rows += metrics_rows(result.arch.name, k, rep, result.params, result.flops, snr_db)
    rows += metrics_rows(result.arch.name, "mean", result.aggregate, result.params, result.flops, snr_db)
    # the pooled row carries fold means for the summary metrics
    stats = result.aggregate.fold_stats
    for row in rows[-len(result.aggregate.f1) - 1 :]:
        row["accuracy"] = stats["accuracy"]["mean"]
        row["macro_f1"] = stats["macro_f1"]["mean"]
    return rows


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return "" if v is None else v


def write_csv(path, rows, fields=REPORT_FIELDS):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in fields})


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_history_csv(path, history):
    write_csv(path, history, HISTORY_FIELDS)
