"""Posterior summaries and CSV output.

Every floating value written to CSV uses 6 significant digits (``%.6g``).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FLOAT_FORMAT = "%.6g"


@dataclass(frozen=True, eq=False)
class Summary:
    n: int
    mean: float
    sd: float
    quantiles: dict
    counts: np.ndarray
    edges: np.ndarray


def posterior_summary(samples, quantiles=(0.05, 0.5, 0.95), bins: int = 20, range_=None) -> Summary:
    """Mean, sd (n - 1 divisor; 0 for one sample), quantiles and a histogram."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("no samples to summarise")
    sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
    qs = {float(q): float(v) for q, v in zip(quantiles, np.quantile(x, quantiles))}
    counts, edges = np.histogram(x, bins=bins, range=range_)
    return Summary(int(x.size), float(x.mean()), sd, qs, counts, edges)


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FORMAT % v
    return str(v)


def write_csv(path, header, rows) -> str:
    """Write rows to ``path`` (or return the text when ``path`` is None)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def surface_csv(path, grid, values) -> str:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (len(grid),):
        raise ValueError("one value per grid point expected")
    rows = [(p.id, float(p.lon), float(p.lat), float(v)) for p, v in zip(grid.points, values)]
    return write_csv(path, ("grid_id", "lon", "lat", "value"), rows)


def extent_csv(path, values) -> str:
    return write_csv(path, ("replicate", "value"), ((b + 1, float(v)) for b, v in enumerate(values)))


def summary_row(label: str, region: str, s: Summary) -> tuple:
    return (label, region, s.n, s.mean, s.sd) + tuple(s.quantiles.values())


SUMMARY_HEADER = ("event", "region", "n", "mean", "sd", "q05", "q50", "q95")
