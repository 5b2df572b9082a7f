"""Result files: long-form records, epoch x model pivots and a JSON summary.

Pivots and best-accuracy figures are rendered from the formatted record rows
(never from raw floats), so regenerating them from ``records.csv`` reproduces
the originals byte for byte.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .data import atomic_write_text
from .models import DISPLAY_NAMES
from .train import ExperimentResult

RECORD_FIELDS = ("epoch", "model", "mode", "augmented", "accuracy", "epoch_seconds", "loss")
PIVOT_METRICS = {"accuracy": "pivot_accuracy.csv", "epoch_seconds": "pivot_seconds.csv", "loss": "pivot_loss.csv"}


def result_rows(results: Sequence[ExperimentResult]) -> list[dict]:
    if not results:
        raise ValueError("no results to report")
    epochs = {len(r.records) for r in results}
    if len(epochs) != 1:
        raise ValueError(f"results have inconsistent epoch counts {sorted(epochs)}")
    rows = []
    for r in results:
        for rec in r.records:
            rows.append({
                "epoch": str(rec.epoch),
                "model": r.model,
                "mode": r.mode,
                "augmented": "true" if r.augmented else "false",
                "accuracy": f"{rec.test_accuracy:.3f}",
                "epoch_seconds": repr(float(rec.epoch_seconds)),
                "loss": repr(float(rec.train_loss)),
            })
    return rows


def _series_key(row: dict) -> tuple:
    return row["model"], row["mode"], row["augmented"]


def column_labels(rows: Iterable[dict]) -> dict[tuple, str]:
    """Display label per (model, mode, augmented) series, in first-seen order.

    Plain model names are used unless a model appears in several series.
    """
    keys = list(dict.fromkeys(_series_key(r) for r in rows))
    per_model: dict[str, int] = {}
    for model, _, _ in keys:
        per_model[model] = per_model.get(model, 0) + 1
    labels = {}
    for model, mode, aug in keys:
        name = DISPLAY_NAMES.get(model, model)
        if per_model[model] > 1:
            name += f"[{mode}{'+aug' if aug == 'true' else ''}]"
        labels[(model, mode, aug)] = name
    return labels


def _csv_text(header: Sequence[str], body: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(body)
    return buf.getvalue()


def render_records(rows: Sequence[dict]) -> str:
    return _csv_text(RECORD_FIELDS, ([r[f] for f in RECORD_FIELDS] for r in rows))


def render_pivot(rows: Sequence[dict], metric: str) -> str:
    labels = column_labels(rows)
    epochs = sorted({int(r["epoch"]) for r in rows})
    cell = {(int(r["epoch"]), _series_key(r)): r[metric] for r in rows}
    body = [[str(e)] + [cell.get((e, k), "") for k in labels] for e in epochs]
    return _csv_text(["epoch"] + list(labels.values()), body)


def best_summary(rows: Sequence[dict]) -> list[dict]:
    labels = column_labels(rows)
    out = []
    for key, label in labels.items():
        series = [r for r in rows if _series_key(r) == key]
        best = max(float(r["accuracy"]) for r in series)
        best_epoch = min(int(r["epoch"]) for r in series if float(r["accuracy"]) == best)
        out.append({"label": label, "model": key[0], "mode": key[1], "augmented": key[2] == "true",
                    "best_accuracy": best, "best_epoch": best_epoch, "epochs": len(series)})
    return out


def render_summary(rows: Sequence[dict], config: Optional[dict]) -> str:
    best = best_summary(rows)
    doc = {
        "config": config,
        "best_accuracy": {b["label"]: b["best_accuracy"] for b in best},
        "results": best,
    }
    return json.dumps(doc, indent=2) + "\n"


def _write_all(rows: Sequence[dict], out: Path, config: Optional[dict], records: bool) -> dict[str, Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    if records:
        paths["records"] = out / "records.csv"
        atomic_write_text(paths["records"], render_records(rows))
    for metric, fname in PIVOT_METRICS.items():
        paths[metric] = out / fname
        atomic_write_text(paths[metric], render_pivot(rows, metric))
    paths["summary"] = out / "summary.json"
    atomic_write_text(paths["summary"], render_summary(rows, config))
    return paths


def emit_report(results: Sequence[ExperimentResult], path, config: Optional[dict] = None) -> dict[str, Path]:
    """Write records.csv, one pivot per metric and summary.json under ``path``."""
    return _write_all(result_rows(results), Path(path), config, records=True)


def read_records(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_FIELDS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no records")
    return rows


def regenerate_report(run_dir) -> dict[str, Path]:
    """Rebuild pivots and summary from ``run_dir/records.csv``."""
    run_dir = Path(run_dir)
    rows = read_records(run_dir / "records.csv")
    config = None
    summary = run_dir / "summary.json"
    if summary.is_file():
        config = json.loads(summary.read_text(encoding="utf-8")).get("config")
    return _write_all(rows, run_dir, config, records=False)
