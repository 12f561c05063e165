"""Per-frame prediction selection and temporal jump filtering.

Each frame keeps only drone detections above a confidence threshold and
reports the single most confident one. A temporal filter then suppresses
implausible jumps: a new box must overlap a same-center 3x expansion of the
previously reported box, on the assumption that the target cannot travel
farther than its own extent between frames. Implausible boxes are overridden
by the previous report for at most `limit` consecutive frames; once the limit
is hit the filter stands down for `limit` frames so a genuine scene change
can take over. A frame with no surviving detection clears the memory.
"""

from dataclasses import dataclass, replace
from typing import Sequence

from .geometry import BIRD, BoundingBox, Detection, expand_box, intersects

EXPANSION_FACTOR = 3.0

SOURCE_CURRENT = "current"
SOURCE_HELD = "held-previous"
SOURCE_FALLBACK = "fallback"


@dataclass(frozen=True)
class TrackerState:
    """Filter memory: last reported box, override streak, stand-down counter."""

    prev: BoundingBox | None = None
    ignore_count: int = 0
    cooldown: int = 0
    limit: int = 10

    def __post_init__(self) -> None:
        if self.limit < 0:
            raise ValueError("limit must be >= 0")
        if not 0 <= self.ignore_count <= self.limit:
            raise ValueError(f"ignore_count {self.ignore_count} outside [0, {self.limit}]")
        if not 0 <= self.cooldown <= self.limit:
            raise ValueError(f"cooldown {self.cooldown} outside [0, {self.limit}]")
        if self.cooldown > 0 and self.ignore_count != 0:
            raise ValueError("cooldown and ignore_count cannot both be active")


@dataclass(frozen=True)
class FrameVerdict:
    """What one frame reports and where the box came from."""

    reported: BoundingBox | None
    source: str  # SOURCE_CURRENT | SOURCE_HELD | SOURCE_FALLBACK
    raw_best: Detection | None


def detection_score(detection: Detection, use_combined_score: bool = False) -> float:
    """Objectness, optionally multiplied by the winning class probability."""
    if use_combined_score:
        return detection.objectness * detection.class_probs[detection.class_index]
    return detection.objectness


def select_best(
    detections: Sequence[Detection], threshold: float, use_combined_score: bool = False
) -> Detection | None:
    """Drop birds and sub-threshold detections, then take the confidence argmax.

    Survival requires score strictly above `threshold`. Ties keep the earliest
    detection, which for decoded grids is (row, col, anchor) order.
    """
    best: Detection | None = None
    best_score = threshold
    for detection in detections:
        if detection.class_index == BIRD:
            continue
        score = detection_score(detection, use_combined_score)
        if score > best_score:
            best = detection
            best_score = score
    return best


def step(state: TrackerState, best: Detection | None) -> tuple[TrackerState, FrameVerdict]:
    """Advance the filter by one frame.

    Rules, in order: during a stand-down the current best is reported as-is;
    with no memory the best is reported directly; with no detection the
    memory is cleared; otherwise the best is accepted when it overlaps the 3x
    expansion of the previous report, held back in favor of the previous box
    while the override streak is below the limit, and reported directly (with
    a fresh stand-down) once the streak is exhausted.
    """
    if state.cooldown > 0:
        reported = best.box if best is not None else None
        new_state = replace(state, prev=reported, cooldown=state.cooldown - 1)
        source = SOURCE_CURRENT if best is not None else SOURCE_FALLBACK
        return new_state, FrameVerdict(reported, source, best)

    if state.prev is None:
        reported = best.box if best is not None else None
        new_state = replace(state, prev=reported, ignore_count=0)
        source = SOURCE_CURRENT if best is not None else SOURCE_FALLBACK
        return new_state, FrameVerdict(reported, source, best)

    if best is None:
        return replace(state, prev=None, ignore_count=0), FrameVerdict(None, SOURCE_FALLBACK, None)

    if intersects(best.box, expand_box(state.prev, EXPANSION_FACTOR)):
        return replace(state, prev=best.box, ignore_count=0), FrameVerdict(best.box, SOURCE_CURRENT, best)

    if state.ignore_count < state.limit:
        new_state = replace(state, ignore_count=state.ignore_count + 1)
        return new_state, FrameVerdict(state.prev, SOURCE_HELD, best)

    new_state = replace(state, prev=best.box, ignore_count=0, cooldown=state.limit)
    return new_state, FrameVerdict(best.box, SOURCE_CURRENT, best)


def run_sequence(
    detections_per_frame: Sequence[Sequence[Detection]],
    threshold: float,
    limit: int = 10,
    use_combined_score: bool = False,
) -> list[FrameVerdict]:
    """Select and filter an ordered stream of frames with a fresh state."""
    state = TrackerState(limit=limit)
    verdicts = []
    for detections in detections_per_frame:
        best = select_best(detections, threshold, use_combined_score)
        state, verdict = step(state, best)
        verdicts.append(verdict)
    return verdicts


def fallback_box(resolution: tuple[int, int] = (850, 480)) -> BoundingBox:
    """The one-pixel box at the image origin, as fractions of `resolution`."""
    width, height = resolution
    return BoundingBox(0.0, 0.0, 1.0 / width, 1.0 / height)
