"""Serialization of run/grid records to JSON, CSV and markdown, plus figures.

JSON keeps full float precision and round-trips losslessly; the CSV and
markdown tables print two decimals. All files are written atomically
(temp file + rename). Figures land in <out>/figures next to the tables.
"""

from __future__ import annotations

import csv
import io
import json
import os

import numpy as np

from . import plots
from .experiment import GridCell, GridRecord, RunRecord
from .metrics import MetricsReport

RUN_SCHEMA = "sflpoison/run-v1"
GRID_SCHEMA = "sflpoison/grid-v1"
FORMATS = ("json", "csv", "markdown")


def _atomic_write(path: str, payload: str | bytes) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    mode = "wb" if isinstance(payload, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(payload)
    os.replace(tmp, path)


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "epoch": int(report.epoch),
        "accuracy": float(report.accuracy),
        "accuracy_drop": None if report.accuracy_drop is None else float(report.accuracy_drop),
        "per_class": [{"class": i, "precision": float(p), "recall": float(r), "fscore": float(f)}
                      for i, (p, r, f) in enumerate(report.per_class)],
        "confusion": [[int(v) for v in row] for row in report.confusion],
    }


def report_from_dict(d: dict, fingerprint: str = "") -> MetricsReport:
    return MetricsReport(
        accuracy=d["accuracy"],
        per_class=[(c["precision"], c["recall"], c["fscore"]) for c in d["per_class"]],
        confusion=np.asarray(d["confusion"], dtype=np.int64),
        epoch=d["epoch"],
        accuracy_drop=d["accuracy_drop"],
        fingerprint=fingerprint,
    )


def run_record_to_dict(record: RunRecord) -> dict:
    return {
        "schema": RUN_SCHEMA,
        "config": record.config,
        "fingerprint": record.fingerprint,
        "baseline_fingerprint": record.baseline_fingerprint,
        "model_checksum": record.model_checksum,
        "final": {
            "accuracy": float(record.final_accuracy),
            "accuracy_drop": None if record.final_accuracy_drop is None
            else float(record.final_accuracy_drop),
        },
        "epochs": [report_to_dict(r) for r in record.reports],
    }


def run_record_from_dict(d: dict) -> RunRecord:
    fp = d["fingerprint"]
    return RunRecord(
        config=d["config"],
        fingerprint=fp,
        reports=[report_from_dict(r, fp) for r in d["epochs"]],
        model_checksum=d["model_checksum"],
        final_accuracy=d["final"]["accuracy"],
        final_accuracy_drop=d["final"]["accuracy_drop"],
        baseline_fingerprint=d["baseline_fingerprint"],
    )


def grid_to_dict(grid: GridRecord) -> dict:
    return {
        "schema": GRID_SCHEMA,
        "cells": [{"version": c.version, "malicious_pct": c.malicious_pct,
                   "attack": c.attack_kind, "record": run_record_to_dict(c.record)}
                  for c in grid.cells],
    }


def grid_from_dict(d: dict) -> GridRecord:
    return GridRecord([GridCell(c["version"], c["malicious_pct"], c["attack"],
                                run_record_from_dict(c["record"]))
                       for c in d["cells"]])


def load_report(path: str) -> RunRecord | GridRecord:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("schema") == GRID_SCHEMA:
        return grid_from_dict(d)
    if d.get("schema") == RUN_SCHEMA:
        return run_record_from_dict(d)
    raise ValueError(f"{path}: unknown report schema {d.get('schema')!r}")


def _json_text(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.2f}"


def _summary_rows(cells: list[tuple[str, int, str, RunRecord]],
                  header=("version", "malicious_pct", "attack", "accuracy", "accuracy_drop"),
                  ) -> list[list[str]]:
    rows = [list(header)]
    for version, pct, attack, record in cells:
        rows.append([version, str(pct), attack,
                     _fmt(record.final_accuracy), _fmt(record.final_accuracy_drop)])
    return rows


MD_HEADER = ("version", "pct", "attack", "A", "A_d")


def _csv_text(rows: list[list[str]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _md_table(rows: list[list[str]]) -> str:
    head, *body = rows
    lines = ["| " + " | ".join(head) + " |",
             "| " + " | ".join("---" for _ in head) + " |"]
    lines += ["| " + " | ".join(r) + " |" for r in body]
    return "\n".join(lines) + "\n"


def _prf_rows(report: MetricsReport) -> list[list[str]]:
    rows = [["class", "precision", "recall", "fscore"]]
    for i, (p, r, f) in enumerate(report.per_class):
        rows.append([str(i), _fmt(p), _fmt(r), _fmt(f)])
    return rows


def _run_markdown(title: str, cells, prf_sections) -> str:
    parts = [f"# {title}\n", _md_table(_summary_rows(cells, header=MD_HEADER))]
    for caption, report in prf_sections:
        parts.append(f"\n## {caption}\n")
        parts.append(_md_table(_prf_rows(report)))
    return "\n".join(parts)


def _cell_tuple(record: RunRecord) -> tuple[str, int, str, RunRecord]:
    return (record.config["model_version"], record.config["malicious_pct"],
            record.config["attack"]["kind"], record)


def emit_run_report(record: RunRecord, out_dir: str,
                    formats=FORMATS, figures: bool = True) -> list[str]:
    """Write report.json / table.csv / table.md (per `formats`) and figures."""
    written = []
    cells = [_cell_tuple(record)]
    if "json" in formats:
        path = os.path.join(out_dir, "report.json")
        _atomic_write(path, _json_text(run_record_to_dict(record)))
        written.append(path)
    if "csv" in formats:
        path = os.path.join(out_dir, "table.csv")
        _atomic_write(path, _csv_text(_summary_rows(cells)))
        written.append(path)
    if "markdown" in formats:
        path = os.path.join(out_dir, "table.md")
        text = _run_markdown("Run report", cells,
                             [("Per-class precision/recall/f-score (final epoch)",
                               record.reports[-1])])
        _atomic_write(path, text)
        written.append(path)
    if figures:
        fig_dir = os.path.join(out_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        label = f"{record.config['model_version']} {record.config['attack']['kind']}"
        written.append(plots.accuracy_curves(
            [(label, record)], os.path.join(fig_dir, "accuracy_curve.png")))
    return written


def emit_grid_report(grid: GridRecord, out_dir: str,
                     formats=FORMATS, figures: bool = True) -> list[str]:
    written = []
    cells = [(c.version, c.malicious_pct, c.attack_kind, c.record) for c in grid.cells]
    if "json" in formats:
        path = os.path.join(out_dir, "report.json")
        _atomic_write(path, _json_text(grid_to_dict(grid)))
        written.append(path)
    if "csv" in formats:
        path = os.path.join(out_dir, "table.csv")
        _atomic_write(path, _csv_text(_summary_rows(cells)))
        written.append(path)
    if "markdown" in formats:
        prf = [(f"{c.version} pct={c.malicious_pct} attack={c.attack_kind}: "
                "per-class precision/recall/f-score", c.record.reports[-1])
               for c in grid.cells]
        path = os.path.join(out_dir, "table.md")
        _atomic_write(path, _run_markdown("Attack grid", cells, prf))
        written.append(path)
    if figures:
        fig_dir = os.path.join(out_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        written.append(plots.drop_vs_malicious(grid, os.path.join(fig_dir, "drop_vs_malicious.png")))
        written.append(plots.drop_vs_cut(grid, os.path.join(fig_dir, "drop_vs_cut.png")))
        curves = [(f"{c.version} {c.attack_kind}@{c.malicious_pct}", c.record)
                  for c in grid.cells]
        written.append(plots.accuracy_curves(curves, os.path.join(fig_dir, "accuracy_curves.png")))
    return written
