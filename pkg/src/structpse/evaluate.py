"""R^2 scoring, per-group median aggregation and heatmap-ready reports.

Missing values are NaN in memory and ``null`` / empty cells when serialized.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

CLIP_FLOOR = -1.0


def r_squared(pred, target) -> float:
    """Coefficient of determination; NaN when the target is constant."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: {pred.size} vs {target.size}")
    if target.size < 2:
        raise ValueError("r_squared needs at least two points")
    ss_tot = np.sum((target - np.mean(target)) ** 2)
    scale = max(1.0, float(np.max(np.abs(target))))
    if not np.isfinite(ss_tot) or ss_tot <= target.size * (1e-12 * scale) ** 2:
        return float("nan")
    ss_res = np.sum((target - pred) ** 2)
    r2 = 1.0 - ss_res / ss_tot
    return float(r2) if np.isfinite(r2) else float("nan")


def clip_for_report(r2: float) -> float:
    return max(float(r2), CLIP_FLOOR)


def median_finite(values) -> float:
    vals = np.asarray(values, dtype=np.float64)
    vals = vals[np.isfinite(vals)]
    return float(np.median(vals)) if vals.size else float("nan")


@dataclass
class Cell:
    raw: list                     # per-dimension R^2, NaN = missing

    @property
    def median(self) -> float:
        return median_finite(self.raw)

    @property
    def missing(self) -> bool:
        return not np.isfinite(self.median)

    @property
    def clipped(self) -> bool:
        return not self.missing and self.median < CLIP_FLOOR

    @property
    def reported(self) -> float:
        return float("nan") if self.missing else clip_for_report(self.median)


@dataclass
class EvalReport:
    cells: dict = field(default_factory=dict)   # (mix, dataset, group) -> Cell

    def groups(self) -> list:
        return list(dict.fromkeys(k[2] for k in self.cells))

    def mixes(self, group=None) -> list:
        return list(dict.fromkeys(k[0] for k in self.cells if group is None or k[2] == group))

    def datasets(self, group=None) -> list:
        return list(dict.fromkeys(k[1] for k in self.cells if group is None or k[2] == group))

    def merge(self, other: "EvalReport") -> "EvalReport":
        cells = dict(self.cells)
        cells.update(other.cells)
        return EvalReport(cells)

    def to_dict(self) -> dict:
        def num(x):
            return None if not np.isfinite(x) else float(x)

        return {"cells": [
            {"mix": m, "dataset": d, "group": g,
             "raw": [num(x) for x in c.raw], "median": num(c.median),
             "reported": num(c.reported), "clipped": c.clipped, "missing": c.missing}
            for (m, d, g), c in self.cells.items()
        ]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        cells = {}
        for c in d["cells"]:
            raw = [float("nan") if x is None else float(x) for x in c["raw"]]
            cells[(c["mix"], c["dataset"], c["group"])] = Cell(raw)
        return cls(cells)


def aggregate(entries) -> EvalReport:
    """Build a report from ``(mix, dataset, group, per_dim_r2)`` tuples."""
    cells = {}
    for mix, dataset, group, raw in entries:
        raw = [float(x) for x in raw]
        if not raw:
            raise ValueError(f"group {group!r} has no dimensions")
        cells[(mix, dataset, group)] = Cell(raw)
    return EvalReport(cells)


def score_tables(pred, target, groups=None) -> dict:
    """Pooled per-dimension R^2 for each block present in both tables."""
    if pred.num_rows != target.num_rows:
        raise ValueError(f"row count mismatch: {pred.num_rows} vs {target.num_rows}")
    out = {}
    for name, tb in target.blocks.items():
        if groups is not None and name not in groups:
            continue
        if name not in pred.blocks:
            continue
        pb = pred.blocks[name]
        out[name] = [r_squared(pb[:, j], tb[:, j]) for j in range(tb.shape[1])]
    return out


def evaluate(pred, target, mix: str, dataset: str, groups=None) -> EvalReport:
    scores = score_tables(pred, target, groups)
    return aggregate((mix, dataset, g, raw) for g, raw in scores.items())


def emit_heatmap(report: EvalReport, group: str, mixes=None, datasets=None) -> str:
    """CSV with mixes as rows and eval datasets as columns (clipped medians)."""
    if group not in report.groups():
        raise KeyError(f"unknown group {group!r}; report has {report.groups()}")
    mixes = list(mixes) if mixes is not None else report.mixes(group)
    datasets = list(datasets) if datasets is not None else report.datasets(group)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mix"] + datasets)
    for m in mixes:
        row = [m]
        for d in datasets:
            cell = report.cells.get((m, d, group))
            row.append("" if cell is None or cell.missing else repr(cell.reported))
        w.writerow(row)
    return buf.getvalue()
