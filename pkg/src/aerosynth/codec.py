"""Encoding and decoding of detector output grids.

A grid is an S x S map of cells; each cell owns `n_anchors` slots and every
slot stores (tx, ty, tw, th, to) followed by one logit per class. Slots turn
into boxes through logistic cell offsets and exponential anchor scaling,
which makes the ground-truth encoder an exact inverse of the decoder. The
encoder, optionally with Gaussian noise on the raw values, stands in for a
trained network so the downstream pipeline can be driven from annotations
alone.
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .anchors import AnchorSet
from .geometry import CLASS_NAMES, BoundingBox, Detection, iou

EDGE_EPS = 1e-6  # keeps cell-boundary centers away from infinite logits

_MAGIC = b"DGRD"


class AnchorMismatch(Exception):
    """Raised when an anchor set does not match a grid's anchor count."""


class CellCollision(Exception):
    """Raised when two annotations land in the same (cell, anchor) slot."""


@dataclass(frozen=True, eq=False)
class DetectionGrid:
    """Raw detector output tensor of shape (S, S, (n_classes + n_coords + 1) * n_anchors)."""

    grid_side: int
    n_classes: int
    n_coords: int
    n_anchors: int
    values: np.ndarray  # float32, row-major (row, col, channel)

    def __post_init__(self) -> None:
        expected = (self.grid_side, self.grid_side, self.depth)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape}, expected {expected}")
        if not np.isfinite(self.values).all():
            raise ValueError("grid values must be finite")

    @property
    def depth(self) -> int:
        return output_depth(self.n_classes, self.n_coords, self.n_anchors)


def output_depth(n_classes: int, n_coords: int, n_anchors: int) -> int:
    """Channels per cell: coordinates plus one confidence per anchor, plus classes."""
    if n_classes < 1 or n_coords < 1 or n_anchors < 1:
        raise ValueError("all counts must be >= 1")
    return (n_classes + n_coords + 1) * n_anchors


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _logit(p: float) -> float:
    return float(np.log(p / (1.0 - p)))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _check_transform_shape(grid: DetectionGrid, anchors: AnchorSet) -> None:
    if anchors.count != grid.n_anchors:
        raise AnchorMismatch(f"{anchors.count} anchors for a grid expecting {grid.n_anchors}")
    if grid.n_coords != 4:
        raise ValueError(f"box transform needs 4 coordinates, grid has {grid.n_coords}")


def decode_arrays(grid: DetectionGrid, anchors: AnchorSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized decode: (boxes (N, 4) as x/y/w/h, objectness (N,), class_probs (N, C)).

    N = S * S * n_anchors, ordered row-major with the anchor index fastest,
    matching decode().
    """
    _check_transform_shape(grid, anchors)
    side = grid.grid_side
    block = grid.n_coords + 1 + grid.n_classes
    vals = grid.values.astype(np.float64).reshape(side, side, grid.n_anchors, block)
    cols = np.arange(side, dtype=np.float64)[None, :, None]
    rows = np.arange(side, dtype=np.float64)[:, None, None]
    cx = (cols + _sigmoid(vals[..., 0])) / side
    cy = (rows + _sigmoid(vals[..., 1])) / side
    w = anchors.widths()[None, None, :] * np.exp(vals[..., 2])
    h = anchors.heights()[None, None, :] * np.exp(vals[..., 3])
    boxes = np.stack([cx - w / 2.0, cy - h / 2.0, w, h], axis=-1).reshape(-1, 4)
    objectness = _sigmoid(vals[..., 4]).reshape(-1)
    class_probs = _softmax(vals[..., 5:]).reshape(-1, grid.n_classes)
    return boxes, objectness, class_probs


def decode(grid: DetectionGrid, anchors: AnchorSet) -> list[Detection]:
    """Turn every (cell, anchor) slot into a Detection. No thresholding."""
    boxes, objectness, class_probs = decode_arrays(grid, anchors)
    return [
        Detection(
            box=BoundingBox(float(b[0]), float(b[1]), float(b[2]), float(b[3])),
            objectness=float(o),
            class_probs=tuple(float(p) for p in probs),
        )
        for b, o, probs in zip(boxes, objectness, class_probs)
    ]


def _responsible_slot(box: BoundingBox, grid_side: int, anchors: AnchorSet) -> tuple[int, int, int]:
    cx, cy = box.center
    col = min(int(cx * grid_side), grid_side - 1)
    row = min(int(cy * grid_side), grid_side - 1)
    best_anchor = 0
    best_iou = -1.0
    for a, (aw, ah) in enumerate(anchors.anchors):
        candidate = BoundingBox(cx - aw / 2.0, cy - ah / 2.0, aw, ah)
        overlap = iou(box, candidate)
        if overlap > best_iou:
            best_iou = overlap
            best_anchor = a
    return row, col, best_anchor


def encode(
    annotations: Sequence[tuple[str, BoundingBox]],
    grid_side: int,
    anchors: AnchorSet,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | int | None = None,
    on_collision: str = "error",
    n_classes: int = 2,
) -> DetectionGrid:
    """Exact inverse of decode for a list of normalized annotations.

    Each annotation claims the cell containing its center and the anchor with
    the highest same-center overlap; the slot's raw values are chosen so that
    decoding recovers the box. Unassigned slots get an objectness logit of
    sigma_inverse(EDGE_EPS). `on_collision` picks between raising
    CellCollision and dropping the later annotation ("error" | "drop").
    Gaussian noise of `noise_sigma` is added to every raw value afterwards.
    """
    if grid_side < 1:
        raise ValueError("grid_side must be >= 1")
    if on_collision not in ("error", "drop"):
        raise ValueError(f"on_collision must be 'error' or 'drop', got {on_collision!r}")
    block = 4 + 1 + n_classes
    vals = np.zeros((grid_side, grid_side, anchors.count, block), dtype=np.float64)
    vals[..., 4] = _logit(EDGE_EPS)

    occupied: set[tuple[int, int, int]] = set()
    for label, box in annotations:
        cls = CLASS_NAMES.index(label)
        cx, cy = box.center
        if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
            raise ValueError(f"annotation center ({cx}, {cy}) outside the unit square")
        row, col, anchor = _responsible_slot(box, grid_side, anchors)
        if (row, col, anchor) in occupied:
            if on_collision == "drop":
                continue
            raise CellCollision(f"two annotations claim cell ({row}, {col}) anchor {anchor}")
        occupied.add((row, col, anchor))
        fx = min(max(cx * grid_side - col, EDGE_EPS), 1.0 - EDGE_EPS)
        fy = min(max(cy * grid_side - row, EDGE_EPS), 1.0 - EDGE_EPS)
        aw, ah = anchors.anchors[anchor]
        vals[row, col, anchor, 0] = _logit(fx)
        vals[row, col, anchor, 1] = _logit(fy)
        vals[row, col, anchor, 2] = np.log(box.w / aw)
        vals[row, col, anchor, 3] = np.log(box.h / ah)
        vals[row, col, anchor, 4] = _logit(1.0 - EDGE_EPS)
        vals[row, col, anchor, 5:] = -10.0
        vals[row, col, anchor, 5 + cls] = 10.0

    if noise_sigma > 0.0:
        generator = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        vals = vals + generator.normal(0.0, noise_sigma, size=vals.shape)

    return DetectionGrid(
        grid_side=grid_side,
        n_classes=n_classes,
        n_coords=4,
        n_anchors=anchors.count,
        values=vals.reshape(grid_side, grid_side, -1).astype(np.float32),
    )


def write_grid(path: str | Path, grid: DetectionGrid) -> None:
    """Binary layout: b"DGRD", four u32 LE (S, n_classes, n_coords, n_anchors), f32 LE values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<4I", grid.grid_side, grid.n_classes, grid.n_coords, grid.n_anchors))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f4").tobytes())


def read_grid(path: str | Path) -> DetectionGrid:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    grid_side, n_classes, n_coords, n_anchors = struct.unpack_from("<4I", data, 4)
    depth = output_depth(n_classes, n_coords, n_anchors)
    expected = 20 + 4 * grid_side * grid_side * depth
    if len(data) != expected:
        raise ValueError(f"{path}: {len(data)} bytes, expected {expected}")
    values = np.frombuffer(data, dtype="<f4", offset=20).reshape(grid_side, grid_side, depth)
    return DetectionGrid(
        grid_side=grid_side,
        n_classes=n_classes,
        n_coords=n_coords,
        n_anchors=n_anchors,
        values=values.astype(np.float32),
    )
