"""Delimited outputs and rendered figures for evaluation runs.

Curve CSVs and their matplotlib SVG renderings are written side by side so a
run directory is self-describing. Absent values (undefined precision/recall,
frames with nothing reported) become empty CSV fields.
"""

import csv
import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .evaluation import PenaltyPoint, PRPoint
from .geometry import BoundingBox
from .tracker import FrameVerdict


def _fmt(value: float | None) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.6f}"


def write_pr_csv(points: Sequence[PRPoint], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "precision", "recall", "tp", "fp", "fn"])
        for p in points:
            writer.writerow([_fmt(p.threshold), _fmt(p.precision), _fmt(p.recall), p.tp, p.fp, p.fn])


def write_penalty_csv(points: Sequence[PenaltyPoint], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "mean_penalty", "frames"])
        for p in points:
            writer.writerow([_fmt(p.threshold), _fmt(p.mean_penalty), p.frames_counted])


def write_verdict_csv(verdicts: Sequence[FrameVerdict], path: str | Path) -> None:
    """One row per frame: reported box (empty when none), source, raw objectness."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "x", "y", "w", "h", "source", "objectness"])
        for i, verdict in enumerate(verdicts):
            box = verdict.reported
            obj = verdict.raw_best.objectness if verdict.raw_best is not None else None
            writer.writerow(
                [
                    i,
                    _fmt(box.x) if box else "",
                    _fmt(box.y) if box else "",
                    _fmt(box.w) if box else "",
                    _fmt(box.h) if box else "",
                    verdict.source,
                    _fmt(obj),
                ]
            )


def read_verdict_csv(path: str | Path) -> list[BoundingBox | None]:
    """Reported boxes back out of a verdict log, None where fields are empty."""
    boxes: list[BoundingBox | None] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            if row["x"] == "":
                boxes.append(None)
            else:
                boxes.append(
                    BoundingBox(float(row["x"]), float(row["y"]), float(row["w"]), float(row["h"]))
                )
    return boxes


def plot_pr_curve(points: Sequence[PRPoint], path: str | Path) -> None:
    """Precision against recall, one marker per threshold with both defined."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    recalls = [p.recall for p in points if p.precision is not None and p.recall is not None]
    precisions = [p.precision for p in points if p.precision is not None and p.recall is not None]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(recalls, precisions, marker=".", linewidth=1)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_penalty_curve(points: Sequence[PenaltyPoint], path: str | Path) -> None:
    """Mean penalty against detection threshold."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    thresholds = [p.threshold for p in points if p.mean_penalty is not None]
    penalties = [p.mean_penalty for p in points if p.mean_penalty is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(thresholds, penalties, marker=".", linewidth=1)
    ax.set_xlabel("detection threshold")
    ax.set_ylabel("mean prediction penalty")
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
