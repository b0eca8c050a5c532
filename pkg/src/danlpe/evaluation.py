"""Classification metrics, proportion distances and result tables."""

from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

METHODS = ("dnn", "dann", "dan_lpe")
METHOD_TITLES = {"dnn": "DNN", "dann": "DANN", "dan_lpe": "DAN-LPE"}


def accuracy(labels, predictions) -> float:
    y, p = np.asarray(labels), np.asarray(predictions)
    if y.shape != p.shape or y.size == 0:
        raise ValueError("labels and predictions must be equal-length and non-empty")
    return float(np.mean(y == p))


def macro_f1(labels, predictions, L: int) -> float:
    """Unweighted mean of per-class F1; a class with no true or predicted
    members scores 0."""
    y, p = np.asarray(labels), np.asarray(predictions)
    if y.shape != p.shape or y.size == 0:
        raise ValueError("labels and predictions must be equal-length and non-empty")
    scores = []
    for c in range(L):
        tp = np.sum((y == c) & (p == c))
        denom = np.sum(y == c) + np.sum(p == c)
        scores.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def l2_distance(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("vectors differ in length")
    return float(np.linalg.norm(a - b))


@dataclass
class RunResult:
    """Scores of one (task, seed) run across methods."""

    task: str
    seed: int
    metrics: dict[str, float]
    dist_lpe: float | None = None
    dist_bbse: float | None = None
    dist_source: float | None = None
    config_hash: str = ""


@dataclass
class ExperimentReport:
    task: str
    metric_name: str
    metrics: dict[str, dict[str, float]]
    distances: dict[str, dict[str, float]]
    seeds: list[int] = field(default_factory=list)
    runtime: float = 0.0
    config_hash: str = ""


def _summary(values: Sequence[float]) -> dict[str, float]:
    v = np.asarray(values, dtype=np.float64)
    return {"median": float(np.median(v)), "min": float(v.min()), "max": float(v.max())}


def build_report(runs: Sequence[RunResult], metric_name: str = "accuracy",
                 runtime: float = 0.0) -> ExperimentReport:
    """Median (with min and max) over seeds of one task's runs."""
    if not runs:
        raise ValueError("no runs to aggregate")
    tasks = {r.task for r in runs}
    if len(tasks) != 1:
        raise ValueError(f"runs from several tasks: {sorted(tasks)}")
    hashes = {r.config_hash for r in runs}
    if len(hashes) != 1:
        raise ValueError("runs were produced by different configurations")
    metrics = {}
    for method in METHODS:
        vals = [r.metrics[method] for r in runs if method in r.metrics]
        if vals:
            for v in vals:
                if not 0 <= v <= 1:
                    raise ValueError(f"{method} metric {v} outside [0, 1]")
            metrics[method] = _summary(vals)
    distances = {}
    for key in ("dist_lpe", "dist_bbse", "dist_source"):
        vals = [getattr(r, key) for r in runs if getattr(r, key) is not None]
        if vals:
            distances[key] = _summary(vals)
    return ExperimentReport(runs[0].task, metric_name, metrics, distances,
                            sorted(r.seed for r in runs), runtime, hashes.pop())


DIST_COLUMNS = (("dist_lpe", "|b-g_dl|"), ("dist_bbse", "|b-g_b|"), ("dist_source", "|b-a|"))


def reports_to_csv(reports: Sequence[ExperimentReport]) -> str:
    """One row per task x method; distance columns repeat across a task's rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "method", "metric", "median", "min", "max",
                "dist_lpe", "dist_bbse", "dist_source", "n_seeds", "config_hash"])
    for rep in reports:
        d = {k: rep.distances.get(k, {}).get("median") for k, _ in DIST_COLUMNS}
        for method, s in rep.metrics.items():
            w.writerow([rep.task, method, rep.metric_name, _fmt(s["median"]), _fmt(s["min"]),
                        _fmt(s["max"]), *(_fmt(d[k]) for k, _ in DIST_COLUMNS),
                        len(rep.seeds), rep.config_hash])
    return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


def reports_to_table(reports: Sequence[ExperimentReport]) -> str:
    """Aligned text table: task, per-method metric, then the three distances."""
    header = ["Task", *(METHOD_TITLES[m] for m in METHODS), *(t for _, t in DIST_COLUMNS)]
    rows = []
    for rep in reports:
        cells = [rep.task]
        for m in METHODS:
            cells.append(f"{rep.metrics[m]['median']:.3f}" if m in rep.metrics else "-")
        for key, _ in DIST_COLUMNS:
            cells.append(f"{rep.distances[key]['median']:.2f}" if key in rep.distances else "-")
        rows.append(cells)
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in [header, *rows]]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"
