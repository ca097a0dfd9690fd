"""Report rows and their CSV / JSON serialisation.

Floats are written with ``repr`` so that parsing returns the identical value;
histograms go to a ``<path>.hist.csv`` sidecar keyed by the row number.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

CSV_COLUMNS = ("vignette", "param_name", "param_value", "mode", "statistic", "p_value", "n", "seed", "wall_ms")
HIST_COLUMNS = ("row", "bin_lo", "bin_hi", "count")


@dataclass(frozen=True)
class Histogram:
    edges: tuple
    counts: tuple

    @classmethod
    def from_arrays(cls, counts, edges) -> "Histogram":
        return cls(tuple(float(e) for e in edges), tuple(int(c) for c in counts))


@dataclass(frozen=True)
class ReportRow:
    vignette: str
    param_name: str
    param_value: float
    mode: str
    statistic: float
    p_value: float
    n: int
    seed: int
    wall_ms: int = 0
    histogram: Optional[Histogram] = field(default=None, compare=False)
    extra: dict = field(default_factory=dict, compare=False)

    def as_dict(self) -> dict:
        d = {c: getattr(self, c) for c in CSV_COLUMNS}
        d["extra"] = dict(self.extra)
        if self.histogram is not None:
            d["histogram"] = {"edges": list(self.histogram.edges), "counts": list(self.histogram.counts)}
        return d


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_safe(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_json_safe(x) for x in v]
    return v


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def histograms_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HIST_COLUMNS)
    for i, r in enumerate(rows):
        if r.histogram is None:
            continue
        e, c = r.histogram.edges, r.histogram.counts
        for j, count in enumerate(c):
            w.writerow([i, _fmt(e[j]), _fmt(e[j + 1]), count])
    return buf.getvalue()


def rows_to_json(rows) -> str:
    return json.dumps([_json_safe(r.as_dict()) for r in rows], indent=2, sort_keys=False) + "\n"


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".hist.csv")


def emit_report(rows, path, fmt: str = "csv") -> None:
    """Write rows as CSV or JSON, plus the histogram sidecar."""
    rows = list(rows)
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    body = rows_to_csv(rows) if fmt == "csv" else rows_to_json(rows)
    try:
        path.write_text(body, encoding="utf-8")
        sidecar_path(path).write_text(histograms_to_csv(rows), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def _float(s) -> float:
    return float(s) if not isinstance(s, str) else float(s.strip())


def _read_histograms(path) -> dict:
    side = sidecar_path(path)
    if not side.exists():
        return {}
    acc: dict = {}
    with open(side, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            i = int(rec["row"])
            lo, hi, c = float(rec["bin_lo"]), float(rec["bin_hi"]), int(rec["count"])
            edges, counts = acc.setdefault(i, ([], []))
            if not edges:
                edges.append(lo)
            edges.append(hi)
            counts.append(c)
    return {i: Histogram(tuple(e), tuple(c)) for i, (e, c) in acc.items()}


def parse_report(path, fmt: Optional[str] = None) -> list:
    """Inverse of ``emit_report``."""
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    hists = _read_histograms(path)
    rows = []
    if fmt == "json":
        for i, d in enumerate(json.loads(path.read_text(encoding="utf-8"))):
            h = d.get("histogram")
            rows.append(ReportRow(d["vignette"], d["param_name"], _float(d["param_value"]), d["mode"],
                                  _float(d["statistic"]), _float(d["p_value"]), int(d["n"]), int(d["seed"]),
                                  int(d["wall_ms"]),
                                  Histogram(tuple(h["edges"]), tuple(h["counts"])) if h else hists.get(i),
                                  d.get("extra", {})))
        return rows
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected header in {path}: {header}")
        for i, rec in enumerate(reader):
            d = dict(zip(CSV_COLUMNS, rec))
            rows.append(ReportRow(d["vignette"], d["param_name"], float(d["param_value"]), d["mode"],
                                  float(d["statistic"]), float(d["p_value"]), int(d["n"]), int(d["seed"]),
                                  int(d["wall_ms"]), hists.get(i)))
    return rows
