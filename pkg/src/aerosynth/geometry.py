"""Axis-aligned bounding-box primitives shared by every pipeline stage.

Boxes are stored as (left, top, width, height) with continuous float
coordinates. The same type serves pixel-space boxes during compositing and
normalized image-fraction boxes during detection; callers keep track of which
unit convention a box is in, and conversion happens exactly once when
annotations are emitted.
"""

from dataclasses import dataclass

DRONE = 0
BIRD = 1
CLASS_NAMES = ("drone", "bird")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle with strictly positive extent."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box needs positive extent, got w={self.w}, h={self.h}")

    @property
    def right(self) -> float:
        return self.x + self.w

    @property
    def bottom(self) -> float:
        return self.y + self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    """Overlap area of two boxes in their common unit; 0 when disjoint."""
    iw = min(a.right, b.right) - max(a.x, b.x)
    ih = min(a.bottom, b.bottom) - max(a.y, b.y)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def intersects(a: BoundingBox, b: BoundingBox) -> bool:
    return intersection_area(a, b) > 0.0


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area, in [0, 1]."""
    if a == b:
        return 1.0
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    # edge arithmetic like (x + w) - x can overshoot w, so keep the ratio in range
    return min(1.0, inter / (a.area + b.area - inter))


def enclosing_box(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    """Smallest axis-aligned rectangle containing both inputs.

    When one input already contains the other it is returned as-is, keeping
    containment cases exact instead of leaking edge-arithmetic rounding.
    """
    if contains(a, b):
        return a
    if contains(b, a):
        return b
    x = min(a.x, b.x)
    y = min(a.y, b.y)
    return BoundingBox(x, y, max(a.right, b.right) - x, max(a.bottom, b.bottom) - y)


def expand_box(box: BoundingBox, factor: float) -> BoundingBox:
    """Scale a box about its own center. No clamping to image bounds."""
    if factor <= 0:
        raise ValueError(f"factor must be positive, got {factor}")
    cx, cy = box.center
    w = box.w * factor
    h = box.h * factor
    return BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h)


def contains(outer: BoundingBox, inner: BoundingBox, eps: float = 0.0) -> bool:
    """True when `inner` lies inside `outer`, up to `eps` slack per edge."""
    return (
        outer.x <= inner.x + eps
        and outer.y <= inner.y + eps
        and inner.right <= outer.right + eps
        and inner.bottom <= outer.bottom + eps
    )


def normalize_box(box: BoundingBox, width: float, height: float) -> BoundingBox:
    """Convert a pixel-space box to image fractions."""
    return BoundingBox(box.x / width, box.y / height, box.w / width, box.h / height)


def denormalize_box(box: BoundingBox, width: float, height: float) -> BoundingBox:
    """Convert an image-fraction box back to pixels."""
    return BoundingBox(box.x * width, box.y * height, box.w * width, box.h * height)


def fits_unit_square(box: BoundingBox, eps: float = 1e-9) -> bool:
    """True when a normalized box lies inside [0, 1] x [0, 1], up to eps."""
    return box.x >= -eps and box.y >= -eps and box.right <= 1.0 + eps and box.bottom <= 1.0 + eps


@dataclass(frozen=True)
class Detection:
    """One candidate box with objectness and per-class probabilities."""

    box: BoundingBox
    objectness: float
    class_probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness outside [0, 1]: {self.objectness}")
        if any(p < 0.0 or p > 1.0 for p in self.class_probs):
            raise ValueError("class probabilities outside [0, 1]")
        total = sum(self.class_probs)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"class probabilities sum to {total}, expected 1")

    @property
    def class_index(self) -> int:
        best = 0
        for i, p in enumerate(self.class_probs):
            if p > self.class_probs[best]:
                best = i
        return best

    @property
    def class_label(self) -> str:
        idx = self.class_index
        return CLASS_NAMES[idx] if idx < len(CLASS_NAMES) else f"class{idx}"
