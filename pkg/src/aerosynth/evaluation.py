"""Evaluation metrics: precision/recall over thresholds and prediction penalty.

A reported box matches ground truth only when their overlap exceeds half the
union area (strictly). A localization miss counts as both a false positive
and a false negative, which keeps tp + fn equal to the number of frames with
ground truth at every threshold. The penalty of a report is the area of the
smallest rectangle enclosing both boxes divided by the ground-truth area;
frames with nothing to report fall back to the one-pixel origin box, which is
what makes missed detections expensive.
"""

from dataclasses import dataclass
from typing import Sequence

from .geometry import BoundingBox, Detection, enclosing_box, iou
from .tracker import TrackerState, detection_score, fallback_box, select_best, step


class DegenerateGroundTruth(Exception):
    """Raised when a ground-truth box has no area to normalize by."""


@dataclass(frozen=True)
class PRPoint:
    """Counts and ratios at one detection threshold.

    Ratios with a zero denominator are None, never 0 or 1.
    """

    threshold: float
    tp: int
    fp: int
    fn: int
    precision: float | None
    recall: float | None

    @classmethod
    def from_counts(cls, threshold: float, tp: int, fp: int, fn: int) -> "PRPoint":
        precision = tp / (tp + fp) if tp + fp > 0 else None
        recall = tp / (tp + fn) if tp + fn > 0 else None
        return cls(threshold, tp, fp, fn, precision, recall)


@dataclass(frozen=True)
class PenaltyPoint:
    threshold: float
    mean_penalty: float | None
    frames_counted: int


def match_frame(
    pred: BoundingBox | None, gt: BoundingBox | None
) -> tuple[int, int, int]:
    """(tp, fp, fn) contribution of one frame; overlap must exceed 0.5 strictly."""
    if pred is None and gt is None:
        return (0, 0, 0)
    if pred is None:
        return (0, 0, 1)
    if gt is None:
        return (0, 1, 0)
    return (1, 0, 0) if iou(pred, gt) > 0.5 else (0, 1, 1)


def penalty(pred: BoundingBox, gt: BoundingBox) -> float:
    """Area of the joint enclosing rectangle over the ground-truth area, >= 1."""
    if gt.area <= 0.0:
        raise DegenerateGroundTruth(f"ground truth {gt} has zero area")
    # the enclosing rectangle contains the ground truth, so the ratio is >= 1
    # up to rounding; clamp so the invariant holds bit-for-bit
    return max(1.0, enclosing_box(pred, gt).area / gt.area)


def default_thresholds(count: int = 101) -> tuple[float, ...]:
    """Evenly spaced detection thresholds covering [0, 1]."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if count == 1:
        return (0.0,)
    return tuple(i / (count - 1) for i in range(count))


def _check_thresholds(thresholds: Sequence[float]) -> None:
    if not thresholds:
        raise ValueError("no thresholds given")
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")


def _champions(
    frames: Sequence[tuple[Sequence[Detection], BoundingBox | None]], use_combined_score: bool
) -> list[Detection | None]:
    # the per-frame argmax survives any threshold it clears, so one scan
    # per frame covers the whole threshold sweep
    return [select_best(detections, 0.0, use_combined_score) for detections, _ in frames]


def _reported_boxes(
    champions: Sequence[Detection | None],
    threshold: float,
    limit: int,
    use_tracker: bool,
    use_combined_score: bool,
) -> list[BoundingBox | None]:
    reported: list[BoundingBox | None] = []
    state = TrackerState(limit=limit)
    for champion in champions:
        best = (
            champion
            if champion is not None and detection_score(champion, use_combined_score) > threshold
            else None
        )
        if use_tracker:
            state, verdict = step(state, best)
            reported.append(verdict.reported)
        else:
            reported.append(best.box if best is not None else None)
    return reported


def pr_curve(
    frames: Sequence[tuple[Sequence[Detection], BoundingBox | None]],
    thresholds: Sequence[float],
    limit: int = 10,
    use_tracker: bool = True,
    use_combined_score: bool = False,
) -> list[PRPoint]:
    """Sweep detection thresholds over an ordered frame stream.

    Each frame pairs its raw detections with the drone ground-truth box (or
    None). Per threshold the stream is re-run through selection and, by
    default, the temporal filter, and match counts are accumulated.
    """
    _check_thresholds(thresholds)
    champions = _champions(frames, use_combined_score)
    points = []
    for threshold in thresholds:
        tp = fp = fn = 0
        reported = _reported_boxes(champions, threshold, limit, use_tracker, use_combined_score)
        for box, (_, gt) in zip(reported, frames):
            dtp, dfp, dfn = match_frame(box, gt)
            tp += dtp
            fp += dfp
            fn += dfn
        points.append(PRPoint.from_counts(threshold, tp, fp, fn))
    return points


def penalty_curve(
    frames: Sequence[tuple[Sequence[Detection], BoundingBox | None]],
    thresholds: Sequence[float],
    resolution: tuple[int, int] = (850, 480),
    limit: int = 10,
    use_tracker: bool = True,
    use_combined_score: bool = False,
) -> list[PenaltyPoint]:
    """Mean prediction penalty per threshold; every frame must carry ground truth.

    Frames that end up with nothing to report are scored against the
    one-pixel origin fallback box for `resolution`.
    """
    _check_thresholds(thresholds)
    if any(gt is None for _, gt in frames):
        raise ValueError("penalty curve needs ground truth on every frame")
    champions = _champions(frames, use_combined_score)
    origin = fallback_box(resolution)
    points = []
    for threshold in thresholds:
        reported = _reported_boxes(champions, threshold, limit, use_tracker, use_combined_score)
        total = 0.0
        for box, (_, gt) in zip(reported, frames):
            total += penalty(box if box is not None else origin, gt)
        count = len(frames)
        points.append(PenaltyPoint(threshold, total / count if count else None, count))
    return points
