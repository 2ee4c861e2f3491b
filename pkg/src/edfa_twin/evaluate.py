"""Error metrics, CDF/sweep exports and transfer matrices."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import feature_matrix, target_matrix
from .errors import EmptyTestSet

REPORT_SCHEMA = "1"


def nearest_rank(sorted_samples, p: float) -> float:
    """p-th percentile by nearest rank: the ceil(p/100 * n)-th smallest sample."""
    n = len(sorted_samples)
    if n == 0:
        raise EmptyTestSet("percentile of an empty sample")
    k = max(1, math.ceil(p / 100.0 * n))
    return float(sorted_samples[k - 1])


def summarize(errors) -> dict:
    """Aggregate signed per-channel errors into MAE, mean error and order statistics."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise EmptyTestSet("no error samples")
    a = np.sort(np.abs(e))
    return {"mae_db": float(a.mean()), "mean_error_db": float(e.mean()),
            "p50_db": nearest_rank(a, 50), "p95_db": nearest_rank(a, 95), "max_db": float(a[-1]),
            "n_samples": int(e.size)}


@dataclass
class EvalReport:
    overall: dict
    cells: list
    samples: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def mae(self) -> float:
        return self.overall["mae_db"]

    def cell(self, device_id=None, gain=None, config_class=None) -> dict:
        for c in self.cells:
            if (device_id is None or c["device_id"] == device_id) and \
                    (gain is None or c["gain_target_db"] == gain) and \
                    (config_class is None or c["config_class"] == config_class):
                return c
        raise KeyError((device_id, gain, config_class))

    def to_dict(self, include_samples: bool = False) -> dict:
        d = {"schema_version": REPORT_SCHEMA, "overall": self.overall, "cells": self.cells,
             "meta": self.meta}
        if include_samples:
            d["abs_error_samples_db"] = self.samples.tolist()
        return d


def prediction_errors(net, records) -> tuple[np.ndarray, np.ndarray]:
    """Signed errors (prediction - measurement) and the boolean mask they are valid on."""
    pred = net.predict(feature_matrix(records))
    Y, M = target_matrix(records)
    mask = M > 0
    return np.where(mask, pred - Y, 0.0), mask


def evaluate(net, records, meta: dict | None = None) -> EvalReport:
    """Per (device, gain setting, loading class) and overall error statistics on active channels."""
    records = list(records)
    if not records:
        raise EmptyTestSet("evaluation needs at least one record")
    if net.standardizer is None:
        raise ValueError("network has no standardizer")
    err, mask = prediction_errors(net, records)
    keys = [(r.device_id, float(r.gain_target_db), r.config_class.value) for r in records]
    cells = []
    for key in sorted(set(keys)):
        rows = [i for i, k in enumerate(keys) if k == key]
        stats = summarize(err[rows][mask[rows]])
        cells.append({"device_id": key[0], "gain_target_db": key[1], "config_class": key[2],
                      "count": len(rows), **stats})
    overall = {"count": len(records), **summarize(err[mask])}
    return EvalReport(overall, cells, np.abs(err[mask]), dict(meta or {}))


def write_report(report: EvalReport, path, include_samples: bool = False) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(include_samples), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def cdf_points(samples) -> list[tuple[float, float]]:
    s = np.sort(np.asarray(samples, dtype=np.float64))
    if s.size == 0:
        raise EmptyTestSet("CDF of an empty sample")
    n = s.size
    return [(float(v), (i + 1) / n) for i, v in enumerate(s)]


def export_cdf(report_or_samples, path) -> Path:
    """CSV of ``abs_error_db, cumulative_fraction`` sorted ascending; the last fraction is 1.0."""
    samples = report_or_samples.samples if isinstance(report_or_samples, EvalReport) else report_or_samples
    points = cdf_points(samples)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["abs_error_db", "cumulative_fraction"])
        for v, f in points:
            w.writerow([repr(v), repr(f)])
    return path


def render_cdf_svg(report_or_samples, path, width: int = 480, height: int = 320) -> Path:
    """Bare polyline CDF plot with axes and end labels."""
    samples = report_or_samples.samples if isinstance(report_or_samples, EvalReport) else report_or_samples
    points = cdf_points(samples)
    pad = 40
    x_max = points[-1][0] or 1.0
    sx = (width - 2 * pad) / x_max
    sy = height - 2 * pad
    coords = [(pad, height - pad)] + [(pad + v * sx, height - pad - f * sy) for v, f in points]
    poly = " ".join(f"{x:.2f},{y:.2f}" for x, y in coords)
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>\n'
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n'
           f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{poly}"/>\n'
           f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="end" font-size="11">'
           f'{x_max:.3f} dB</text>\n'
           f'<text x="{pad - 4}" y="{pad + 4}" text-anchor="end" font-size="11">1.0</text>\n'
           f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">'
           f'absolute error (dB)</text>\n</svg>\n')
    path = Path(path)
    path.write_text(svg, encoding="utf-8")
    return path


@dataclass
class TlMatrix:
    names: list
    mae: np.ndarray
    provenance: list

    def to_dict(self) -> dict:
        return {"schema_version": REPORT_SCHEMA, "names": list(self.names),
                "mae_db": self.mae.tolist(), "provenance": self.provenance}


def tl_matrix(devices: dict, train_fn, transfer_fn) -> TlMatrix:
    """Square MAE grid: diagonal = direct model, (i, j) = model of ``i`` transferred to ``j``.

    ``devices`` maps a name to ``(train_records, test_records)``.  ``train_fn(train)`` returns
    a network and ``transfer_fn(source_net, target_train)`` a transferred one.
    """
    names = list(devices)
    if len(names) < 2:
        raise ValueError("a transfer matrix needs at least two devices")
    direct = {n: train_fn(devices[n][0]) for n in names}
    grid = np.zeros((len(names), len(names)))
    prov = []
    for i, src in enumerate(names):
        row = []
        for j, tgt in enumerate(names):
            test = devices[tgt][1]
            if i == j:
                net, how = direct[src], "direct"
            else:
                net, how = transfer_fn(direct[src], devices[tgt][0]), "transfer"
            grid[i, j] = evaluate(net, test).mae
            row.append({"source": src, "target": tgt, "kind": how})
        prov.append(row)
    return TlMatrix(names, grid, prov)


def shot_sweep(source, target_train, target_test, shots_list, seeds, transfer_fn) -> dict:
    """MAE against shots per gain setting; ``transfer_fn(source, target_train, shots, seed)``."""
    rows = []
    for seed in seeds:
        for shots in shots_list:
            net = transfer_fn(source, target_train, int(shots), int(seed))
            rows.append({"seed": int(seed), "shots": int(shots), "mae_db": evaluate(net, target_test).mae})
    means = {int(s): float(np.mean([r["mae_db"] for r in rows if r["shots"] == s])) for s in shots_list}
    return {"rows": rows, "mean_mae_db": means}


def write_sweep_csv(sweep: dict, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "shots", "mae_db"])
        for r in sweep["rows"]:
            w.writerow([r["seed"], r["shots"], repr(r["mae_db"])])
    return path
