"""Anchor prior estimation.

Box priors come from K-means over the (width, height) pairs of ground-truth
annotations, plain squared-Euclidean Lloyd iterations on normalized
dimensions. Centers are seeded farthest-point from the data and the result is
reported in canonical area-ascending order so anchor indices stay stable.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class TooFewSamples(Exception):
    """Raised when there are fewer boxes than requested clusters."""


@dataclass(frozen=True)
class AnchorSet:
    """Normalized (w, h) priors sorted by area, plus the final inertia."""

    anchors: tuple[tuple[float, float], ...]
    inertia: float

    def __post_init__(self) -> None:
        if not self.anchors:
            raise ValueError("anchor set is empty")
        areas = []
        for w, h in self.anchors:
            if not (0.0 < w <= 1.0 and 0.0 < h <= 1.0):
                raise ValueError(f"anchor ({w}, {h}) outside (0, 1]")
            areas.append(w * h)
        if any(a > b for a, b in zip(areas, areas[1:])):
            raise ValueError("anchors must be sorted by area ascending")

    @property
    def count(self) -> int:
        return len(self.anchors)

    def widths(self) -> np.ndarray:
        return np.array([w for w, _ in self.anchors])

    def heights(self) -> np.ndarray:
        return np.array([h for _, h in self.anchors])


def _farthest_point_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Pick k seed centers: a random point, then repeated farthest points."""
    centers = [points[int(rng.integers(len(points)))]]
    min_d2 = ((points - centers[0]) ** 2).sum(axis=1)
    while len(centers) < k:
        candidate = int(min_d2.argmax())
        centers.append(points[candidate])
        min_d2 = np.minimum(min_d2, ((points - centers[-1]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


def cluster_anchors(
    boxes: Sequence[tuple[float, float]],
    k: int = 5,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-6,
    inertia_history: list[float] | None = None,
) -> AnchorSet:
    """Lloyd's K-means over (w, h) pairs with squared-Euclidean distance.

    Empty clusters are re-seeded with the point farthest from its current
    center. Stops when the largest center movement drops below `tol` or after
    `max_iter` iterations. `inertia_history`, when given, receives the
    inertia (sum of squared distances) after every update step.
    """
    points = np.asarray(boxes, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError(f"expected (n, 2) box dimensions, got shape {points.shape}")
    if len(points) < k:
        raise TooFewSamples(f"{len(points)} boxes for k={k}")
    if (points <= 0).any():
        raise ValueError("box dimensions must be positive")
    # canonical input order makes the result invariant under permutation
    points = points[np.lexsort((points[:, 1], points[:, 0]))]

    rng = np.random.default_rng(seed)
    centers = _farthest_point_init(points, k, rng)
    n = len(points)
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        own_d2 = d2[np.arange(n), assign].copy()
        for c in range(k):
            if (assign == c).any():
                continue
            far = int(own_d2.argmax())
            assign[far] = c
            own_d2[far] = 0.0
        new_centers = np.array([points[assign == c].mean(axis=0) for c in range(k)])
        if inertia_history is not None:
            inertia_history.append(float(((points - new_centers[assign]) ** 2).sum()))
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < tol:
            break

    inertia = float(((points - centers[assign]) ** 2).sum())
    order = np.argsort(centers[:, 0] * centers[:, 1], kind="stable")
    ordered = tuple((float(w), float(h)) for w, h in centers[order])
    return AnchorSet(anchors=ordered, inertia=inertia)


def write_anchor_file(path: str | Path, anchor_set: AnchorSet) -> None:
    """One `w h` pair per line, 6 decimals."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{w:.6f} {h:.6f}\n" for w, h in anchor_set.anchors))


def read_anchor_file(path: str | Path) -> AnchorSet:
    """Load anchors from disk; inertia is unknown for loaded sets (NaN)."""
    anchors = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'w h'")
        anchors.append((float(parts[0]), float(parts[1])))
    if not anchors:
        raise ValueError(f"{path}: no anchors")
    return AnchorSet(anchors=tuple(anchors), inertia=float("nan"))
