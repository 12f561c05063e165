"""Foreground sprite extraction and frame compositing.

Source photographs are keyed against a per-image reference color: pixels
within a per-channel tolerance of that color become fully transparent, the
rest fully opaque. Resampling runs on alpha-premultiplied values so the key
color never bleeds into composites. Background footage is ingested as
directories of numbered PNG frames, which keeps every byte deterministic.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import CLASS_NAMES, BoundingBox


class EmptyForeground(Exception):
    """Raised when background subtraction leaves no opaque pixel."""


class OutOfBounds(Exception):
    """Raised when a sprite would extend past the frame it is composited onto."""


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


@dataclass(frozen=True, eq=False)
class ForegroundAsset:
    """Background-subtracted sprite, cropped to its opaque support.

    `tight_box` records where the support sat in the source image; for
    resized assets the offsets are carried along at the new scale. Its width
    and height always equal the raster dimensions.
    """

    pixels: np.ndarray  # (H, W, 3) uint8
    alpha: np.ndarray  # (H, W) float32 in [0, 1]
    class_label: str
    tight_box: BoundingBox
    asset_id: str

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"pixels must be (H, W, 3), got {self.pixels.shape}")
        if self.alpha.shape != self.pixels.shape[:2]:
            raise ValueError("alpha shape does not match pixels")
        if self.class_label not in CLASS_NAMES:
            raise ValueError(f"unknown class label {self.class_label!r}")
        support = self.alpha > 0
        if not support.any():
            raise EmptyForeground(f"asset {self.asset_id!r} has no opaque pixel")
        # crop must be tight: every border row/column carries some support
        if not (support[0].any() and support[-1].any() and support[:, 0].any() and support[:, -1].any()):
            raise ValueError(f"asset {self.asset_id!r} is not cropped to its support")
        if (round(self.tight_box.w), round(self.tight_box.h)) != (self.width, self.height):
            raise ValueError("tight_box extent does not match raster dimensions")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class BackgroundVideo:
    """Ordered background frames of identical resolution."""

    frames: tuple[np.ndarray, ...]  # each (H, W, 3) uint8
    video_id: str

    def __post_init__(self) -> None:
        if not self.frames:
            raise ValueError(f"video {self.video_id!r} has no frames")
        shape = self.frames[0].shape
        for i, frame in enumerate(self.frames):
            if frame.shape != shape:
                raise ValueError(f"frame {i} of video {self.video_id!r} has shape {frame.shape}, expected {shape}")

    @property
    def resolution(self) -> tuple[int, int]:
        h, w = self.frames[0].shape[:2]
        return (w, h)


def extract_foreground(
    image: np.ndarray,
    background_color: tuple[int, int, int],
    tolerance: int,
    *,
    class_label: str = "drone",
    asset_id: str = "",
) -> ForegroundAsset:
    """Key out `background_color` and crop the result to its opaque support.

    A pixel is background when its per-channel max-abs distance to the key
    color is at most `tolerance`. Raises EmptyForeground when everything
    matches, which flags an unusable source image.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    key = np.asarray(background_color, dtype=np.int64).reshape(1, 1, 3)
    distance = np.abs(image.astype(np.int64) - key).max(axis=2)
    alpha = (distance > tolerance).astype(np.float32)
    ys, xs = np.nonzero(alpha)
    if ys.size == 0:
        raise EmptyForeground(f"every pixel within tolerance {tolerance} of {background_color}")
    top, bottom = int(ys.min()), int(ys.max()) + 1
    left, right = int(xs.min()), int(xs.max()) + 1
    return ForegroundAsset(
        pixels=np.ascontiguousarray(image[top:bottom, left:right]),
        alpha=np.ascontiguousarray(alpha[top:bottom, left:right]),
        class_label=class_label,
        tight_box=BoundingBox(float(left), float(top), float(right - left), float(bottom - top)),
        asset_id=asset_id,
    )


def _resample_bilinear(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of an (H, W, C) float array, half-pixel centers."""
    in_h, in_w = values.shape[:2]
    if (out_h, out_w) == (in_h, in_w):
        return values.copy()
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    y0c = np.clip(y0, 0, in_h - 1)
    y1c = np.clip(y0 + 1, 0, in_h - 1)
    x0c = np.clip(x0, 0, in_w - 1)
    x1c = np.clip(x0 + 1, 0, in_w - 1)
    top = values[y0c][:, x0c] * (1.0 - wx) + values[y0c][:, x1c] * wx
    bottom = values[y1c][:, x0c] * (1.0 - wx) + values[y1c][:, x1c] * wx
    return top * (1.0 - wy) + bottom * wy


def resize_to_smaller_edge(asset: ForegroundAsset, target: int) -> ForegroundAsset:
    """Rescale so the smaller raster edge equals `target` pixels.

    Aspect ratio is preserved to the nearest pixel. Color and alpha are
    filtered jointly on premultiplied values, so soft edges stay free of key
    color. Returns the asset unchanged when it already matches.
    """
    if target < 1:
        raise ValueError("target must be >= 1")
    h, w = asset.alpha.shape
    if min(w, h) == target:
        return asset
    if w <= h:
        new_w = target
        new_h = max(1, _round_half_up(h * target / w))
    else:
        new_h = target
        new_w = max(1, _round_half_up(w * target / h))

    alpha = asset.alpha.astype(np.float64)[..., None]
    stacked = np.concatenate([asset.pixels.astype(np.float64) * alpha, alpha], axis=2)
    resized = _resample_bilinear(stacked, new_h, new_w)
    out_alpha = np.clip(resized[..., 3], 0.0, 1.0)
    scale = np.where(out_alpha > 0, out_alpha, 1.0)[..., None]
    rgb = resized[..., :3] / scale
    pixels = np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8)

    ys, xs = np.nonzero(out_alpha)
    if ys.size == 0:
        raise EmptyForeground(f"asset {asset.asset_id!r} lost its support while resizing")
    top, bottom = int(ys.min()), int(ys.max()) + 1
    left, right = int(xs.min()), int(xs.max()) + 1
    sx = new_w / w
    sy = new_h / h
    return ForegroundAsset(
        pixels=np.ascontiguousarray(pixels[top:bottom, left:right]),
        alpha=np.ascontiguousarray(out_alpha[top:bottom, left:right].astype(np.float32)),
        class_label=asset.class_label,
        tight_box=BoundingBox(
            asset.tight_box.x * sx + left,
            asset.tight_box.y * sy + top,
            float(right - left),
            float(bottom - top),
        ),
        asset_id=asset.asset_id,
    )


def overlay(
    frame: np.ndarray, asset: ForegroundAsset, position: tuple[int, int]
) -> tuple[np.ndarray, BoundingBox]:
    """Alpha-blend a sprite onto a copy of `frame` at a top-left position.

    Returns the composited frame and the sprite's bounding box in frame
    pixels. The input frame is left untouched.
    """
    x, y = position
    h, w = asset.alpha.shape
    fh, fw = frame.shape[:2]
    if x < 0 or y < 0 or x + w > fw or y + h > fh:
        raise OutOfBounds(f"sprite {w}x{h} at ({x}, {y}) exceeds frame {fw}x{fh}")
    out = frame.copy()
    region = out[y : y + h, x : x + w].astype(np.float64)
    alpha = asset.alpha.astype(np.float64)[..., None]
    blended = alpha * asset.pixels.astype(np.float64) + (1.0 - alpha) * region
    out[y : y + h, x : x + w] = np.clip(np.floor(blended + 0.5), 0, 255).astype(np.uint8)
    return out, BoundingBox(float(x), float(y), float(w), float(h))


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG (or any raster PIL knows) as (H, W, 3) uint8 RGB."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_image(path: str | Path, pixels: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels, mode="RGB").save(path, format="PNG")


@dataclass(frozen=True)
class AssetManifestEntry:
    path: str
    class_label: str
    background_color: tuple[int, int, int]
    tolerance: int


def parse_asset_manifest(path: str | Path) -> list[AssetManifestEntry]:
    """Parse `<path> <drone|bird> <RRGGBB> <tolerance>` lines.

    Blank lines and `#` comments are skipped. Paths are kept as written;
    relative ones are resolved against the manifest's directory by
    load_assets.
    """
    entries = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        asset_path, label, hex_color, tol = parts
        if label not in CLASS_NAMES:
            raise ValueError(f"{path}:{lineno}: class must be one of {CLASS_NAMES}, got {label!r}")
        if len(hex_color) != 6:
            raise ValueError(f"{path}:{lineno}: color must be RRGGBB hex, got {hex_color!r}")
        try:
            color = tuple(int(hex_color[i : i + 2], 16) for i in (0, 2, 4))
            tolerance = int(tol)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
        if not 0 <= tolerance <= 255:
            raise ValueError(f"{path}:{lineno}: tolerance must be in 0..255, got {tolerance}")
        entries.append(AssetManifestEntry(asset_path, label, color, tolerance))
    if not entries:
        raise ValueError(f"{path}: no asset entries")
    return entries


def load_assets(manifest_path: str | Path) -> list[ForegroundAsset]:
    """Load and key every asset listed in a manifest."""
    manifest_path = Path(manifest_path)
    assets = []
    for entry in parse_asset_manifest(manifest_path):
        image_path = Path(entry.path)
        if not image_path.is_absolute():
            image_path = manifest_path.parent / image_path
        assets.append(
            extract_foreground(
                load_image(image_path),
                entry.background_color,
                entry.tolerance,
                class_label=entry.class_label,
                asset_id=image_path.stem,
            )
        )
    return assets


def load_video(directory: str | Path, video_id: str | None = None) -> BackgroundVideo:
    """Load one video from a directory of numbered PNG frames."""
    directory = Path(directory)
    frame_paths = sorted(directory.glob("*.png"))
    if not frame_paths:
        raise ValueError(f"{directory}: no PNG frames")
    frames = tuple(load_image(p) for p in frame_paths)
    return BackgroundVideo(frames=frames, video_id=video_id or directory.name)


def load_videos(root: str | Path) -> list[BackgroundVideo]:
    """Load all videos under `root`.

    A root that directly contains PNG frames is one video; otherwise every
    subdirectory holding PNGs becomes a video named after the directory.
    """
    root = Path(root)
    if any(root.glob("*.png")):
        return [load_video(root)]
    videos = [load_video(sub) for sub in sorted(root.iterdir()) if sub.is_dir() and any(sub.glob("*.png"))]
    if not videos:
        raise ValueError(f"{root}: no videos found")
    return videos
