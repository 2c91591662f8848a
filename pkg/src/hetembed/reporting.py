"""Benchmark report aggregation: JSON and table grids plus rendered figures.

The grid shows one row per method and one ``mean +/- std`` cell per
metric; alongside the delimited TSV a bar chart per task is rendered to
PNG so results can be skimmed without parsing numbers.
"""
from __future__ import annotations

import json
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .evaluation import EvalReport

_TASKS = ("node_classification", "link_prediction")
_METRIC_ORDER = ("macro_f1", "micro_f1", "auc", "mrr")


def _validate(reports):
    seen = set()
    for r in reports:
        if r.task not in _TASKS:
            raise ValueError(f"unknown report task {r.task!r}")
        key = (r.method or "?", r.task)
        if key in seen:
            raise ValueError(f"duplicate report for method={key[0]} task={key[1]}")
        seen.add(key)


def build_grid(reports):
    """Rows of {method, metric: {mean, std}} merged across tasks."""
    _validate(reports)
    methods = []
    rows = {}
    for r in reports:
        m = r.method or "?"
        if m not in rows:
            rows[m] = {}
            methods.append(m)
        for name in r.metrics:
            rows[m][name] = {"mean": r.mean(name), "std": r.std(name)}
    metric_cols = [c for c in _METRIC_ORDER
                   if any(c in rows[m] for m in methods)]
    extra = sorted({name for m in methods for name in rows[m]}
                   - set(metric_cols))
    return methods, metric_cols + extra, rows


def emit_report(reports, fmt, out_path):
    """Write the method-by-metric grid as ``json`` or aligned ``table``."""
    methods, cols, rows = build_grid(reports)
    if fmt == "json":
        payload = {"methods": methods, "metrics": cols,
                   "rows": {m: rows[m] for m in methods}}
        with open(out_path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return out_path
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")
    header = ["method"] + cols
    lines = [header]
    for m in methods:
        row = [m]
        for c in cols:
            cell = rows[m].get(c)
            row.append("-" if cell is None
                       else "%.4f +/- %.4f" % (cell["mean"], cell["std"]))
        lines.append(row)
    widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
    with open(out_path, "w") as fh:
        for r in lines:
            fh.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
                     + "\n")
    return out_path


def emit_tsv(reports, out_path):
    """Delimited grid: method, metric, mean, std; one line per cell."""
    methods, cols, rows = build_grid(reports)
    with open(out_path, "w") as fh:
        fh.write("method\tmetric\tmean\tstd\n")
        for m in methods:
            for c in cols:
                cell = rows[m].get(c)
                if cell is not None:
                    fh.write("%s\t%s\t%.6f\t%.6f\n"
                             % (m, c, cell["mean"], cell["std"]))
    return out_path


def render_figures(reports, out_dir):
    """One grouped bar chart per task with std error bars; returns paths."""
    _validate(reports)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for task in _TASKS:
        rs = [r for r in reports if r.task == task]
        if not rs:
            continue
        metrics = [c for c in _METRIC_ORDER if any(c in r.metrics for r in rs)]
        methods = [r.method or "?" for r in rs]
        x = np.arange(len(methods), dtype=float)
        width = 0.8 / max(len(metrics), 1)
        fig, ax = plt.subplots(figsize=(max(4.0, 1.4 * len(methods)), 3.2))
        for i, name in enumerate(metrics):
            means = [r.mean(name) if name in r.metrics else np.nan for r in rs]
            stds = [r.std(name) if name in r.metrics else 0.0 for r in rs]
            ax.bar(x + (i - (len(metrics) - 1) / 2) * width, means, width,
                   yerr=stds, capsize=3, label=name)
        ax.set_xticks(x)
        ax.set_xticklabels(methods, rotation=20, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("score")
        ax.set_title(task.replace("_", " "))
        ax.legend(fontsize="small")
        fig.tight_layout()
        path = os.path.join(out_dir, f"{task}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def load_reports(paths):
    return [EvalReport.load(p) for p in paths]
