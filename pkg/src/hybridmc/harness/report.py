"""Report persistence: fixed-column CSV, JSON summary and plot-ready histograms."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import jsonschema
import numpy as np

from ..diagnostics import REPORT_COLUMNS, ReplicateSummary, RunReport
from .config import load_schema


class ReportError(OSError):
    pass


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class ReportWriter:
    """Appends report rows to a CSV as they arrive; the header is written on open."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", newline="")
        except OSError as exc:
            raise ReportError(f"cannot write reports to {str(self.path)!r}: {exc}") from None
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(REPORT_COLUMNS)
        self._fh.flush()

    def write(self, report: RunReport) -> None:
        row = report.row()
        self._csv.writerow([_cell(row[c]) for c in REPORT_COLUMNS])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_reports_csv(reports: Iterable[RunReport], path) -> Path:
    with ReportWriter(path) as w:
        for r in reports:
            w.write(r)
    return Path(path)


def read_reports_csv(path) -> list[RunReport]:
    with open(path, newline="") as fh:
        return [RunReport.from_row(row) for row in csv.DictReader(fh)]


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _finite_or_none(obj)
    return obj


def summary_document(name: str, summaries: Mapping[str, Optional[ReplicateSummary]], failures=None, extras=None) -> dict:
    failures = failures or {}
    algos = {}
    for label, s in summaries.items():
        if s is None:
            algos[label] = {"n": 0, "failures": failures.get(label, []), "mean": {}, "mse": {}, "truths": {}}
            continue
        algos[label] = {
            "n": s.n,
            "failures": failures.get(label, []),
            "mean": {k: _finite_or_none(v) for k, v in s.mean.items()},
            "mse": {k: _finite_or_none(v) for k, v in s.mse.items()},
            "truths": {k: _finite_or_none(v) for k, v in s.truths.items()},
        }
    doc = {"name": name, "columns": list(REPORT_COLUMNS), "algorithms": algos}
    if extras:
        doc["extras"] = _jsonable(extras)
    return _jsonable(doc)


def validate_summary(doc: dict) -> None:
    jsonschema.validate(doc, load_schema("summary"))


def write_histogram_csv(path, edges, counts, label: str = "count") -> Path:
    edges = np.asarray(edges)
    counts = np.asarray(counts)
    if len(edges) != len(counts) + 1:
        raise ValueError("need one more edge than counts")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", label])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([_cell(float(lo)), _cell(float(hi)), int(c)])
    return Path(path)


def write_table_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(float(v)) if isinstance(v, (float, np.floating)) else _cell(v) for v in row])
    return Path(path)


def emit_report(
    reports: Sequence[RunReport],
    summary: Optional[Mapping[str, Optional[ReplicateSummary]]],
    out_dir,
    formats: Sequence[str] = ("csv", "json"),
    name: str = "experiment",
    histograms: Optional[Mapping[str, tuple]] = None,
    failures=None,
    extras=None,
) -> list[Path]:
    """Write the report files into ``out_dir`` and return their paths.

    ``histograms`` maps a file stem to ``(edges, counts)``.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create output directory {str(out)!r}: {exc}") from None
    paths = []
    unknown = set(formats) - {"csv", "json"}
    if unknown:
        raise ValueError(f"unknown report formats {sorted(unknown)}")
    if "csv" in formats:
        paths.append(write_reports_csv(reports, out / "reports.csv"))
    if "json" in formats:
        doc = summary_document(name, summary or {}, failures, extras)
        validate_summary(doc)
        p = out / "summary.json"
        p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        paths.append(p)
    for stem, (edges, counts) in (histograms or {}).items():
        paths.append(write_histogram_csv(out / f"{stem}.csv", edges, counts))
    return paths
