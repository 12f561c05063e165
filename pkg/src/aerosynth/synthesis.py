"""Synthetic dataset builder.

Enumerates every (drone, grid cell, size interval, background video)
combination, keeps a deterministic pseudo-random subset sized to a frame
budget, and composites three annotated frames per kept combination: the drone
alone, the drone plus a small bird, and the drone plus a large bird. Every
random draw is keyed to (global_seed, config_index), so output does not
depend on execution order or on how many workers ran the build.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .assets import (
    BackgroundVideo,
    ForegroundAsset,
    _round_half_up,
    overlay,
    resize_to_smaller_edge,
    save_image,
)
from .geometry import CLASS_NAMES, BoundingBox, fits_unit_square, normalize_box


class PlacementInfeasible(Exception):
    """Raised when a sprite cannot be placed under its cell constraint."""


_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1
_PLACEMENT_RETRIES = 16


def mix_seed(global_seed: int, config_index: int, stream: int = 0) -> int:
    """Avalanche (global_seed XOR config_index) into a 64-bit seed.

    `stream` selects independent substreams for the same configuration, e.g.
    the keep/drop decision versus the placement draws.
    """
    z = ((global_seed ^ config_index) + (stream + 1) * _SPLITMIX_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def default_size_intervals(count: int = 19, low: int = 5, high: int = 160) -> tuple[tuple[int, int], ...]:
    """Contiguous sprite-size intervals with geometrically spaced endpoints.

    Geometric spacing packs more intervals at small sizes, so uniform
    interval selection over-represents small sprites per pixel of range.
    """
    if count < 1 or low < 1 or high <= low:
        raise ValueError("need count >= 1 and 1 <= low < high")
    ratio = high / low
    edges = []
    for i in range(count + 1):
        edge = _round_half_up(low * ratio ** (i / count))
        if edges and edge <= edges[-1]:
            edge = edges[-1] + 1
        edges.append(edge)
    return tuple((edges[i], edges[i + 1]) for i in range(count))


@dataclass(frozen=True)
class SynthesisParams:
    """Build-wide knobs: grid shape, size intervals, budget, canvas, seed."""

    rows: int = 12
    cols: int = 10
    size_intervals: tuple[tuple[int, int], ...] = default_size_intervals()
    max_allowed_frames: int | None = None
    resolution: tuple[int, int] = (850, 480)  # (width, height)
    global_seed: int = 0

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one cell")
        if not self.size_intervals:
            raise ValueError("need at least one size interval")
        prev_hi = 0
        for lo, hi in self.size_intervals:
            if lo < 1 or hi <= lo:
                raise ValueError(f"bad size interval [{lo}, {hi})")
            if lo < prev_hi:
                raise ValueError("size intervals must be ascending and non-overlapping")
            prev_hi = hi
        width, height = self.resolution
        if width < 1 or height < 1:
            raise ValueError(f"bad resolution {self.resolution}")
        if self.max_allowed_frames is not None and self.max_allowed_frames < 0:
            raise ValueError("max_allowed_frames must be >= 0")

    @property
    def lower_half_indices(self) -> tuple[int, ...]:
        """Interval indices counted as the small half; odd counts leave the middle out."""
        return tuple(range(len(self.size_intervals) // 2))

    @property
    def upper_half_indices(self) -> tuple[int, ...]:
        n = len(self.size_intervals)
        return tuple(range((n + 1) // 2, n))


@dataclass(frozen=True)
class SynthesisConfig:
    """One point of the (drone, cell, interval, video) product."""

    drone_id: str
    cell: tuple[int, int]  # (row, col)
    interval_index: int
    video_id: str
    config_index: int


@dataclass(eq=False)
class AnnotatedFrame:
    """Composited frame plus its normalized object annotations."""

    image: np.ndarray  # (H, W, 3) uint8
    annotations: list[tuple[str, BoundingBox]]
    provenance: tuple[int, int]  # (config_index, slot)


def count_configs(n_drones: int, n_videos: int, params: SynthesisParams) -> int:
    """Size of the full configuration product."""
    return n_drones * params.rows * params.cols * len(params.size_intervals) * n_videos


def enumerate_configs(
    drone_ids: Sequence[str], video_ids: Sequence[str], params: SynthesisParams
) -> Iterator[SynthesisConfig]:
    """Yield every configuration in lexicographic order, drone-major, video-minor."""
    index = 0
    for drone_id in drone_ids:
        for row in range(params.rows):
            for col in range(params.cols):
                for interval_index in range(len(params.size_intervals)):
                    for video_id in video_ids:
                        yield SynthesisConfig(drone_id, (row, col), interval_index, video_id, index)
                        index += 1


def config_from_index(
    index: int, drone_ids: Sequence[str], video_ids: Sequence[str], params: SynthesisParams
) -> SynthesisConfig:
    """Inverse of the enumeration order (mixed-radix decode)."""
    total = count_configs(len(drone_ids), len(video_ids), params)
    if not 0 <= index < total:
        raise ValueError(f"config index {index} outside [0, {total})")
    rest, video_i = divmod(index, len(video_ids))
    rest, interval_index = divmod(rest, len(params.size_intervals))
    rest, col = divmod(rest, params.cols)
    drone_i, row = divmod(rest, params.rows)
    return SynthesisConfig(drone_ids[drone_i], (row, col), interval_index, video_ids[video_i], index)


def retention_probability(max_allowed_frames: int, total_frames: int) -> float:
    """Probability of keeping a configuration under the frame budget."""
    if total_frames <= 0:
        raise ValueError("total_frames must be positive")
    return min(1.0, max(0.0, max_allowed_frames / total_frames))


def _draw_size(rng: np.random.Generator, interval: tuple[int, int]) -> int:
    lo, hi = interval
    return int(rng.integers(lo, hi))


def _place_in_cell(
    rng: np.random.Generator,
    sprite: ForegroundAsset,
    cell: tuple[int, int],
    params: SynthesisParams,
) -> tuple[int, int]:
    """Draw a sprite center uniformly inside the cell; reject boxes leaving the frame."""
    width, height = params.resolution
    row, col = cell
    cell_w = width / params.cols
    cell_h = height / params.rows
    for _ in range(_PLACEMENT_RETRIES):
        cx = rng.uniform(col * cell_w, (col + 1) * cell_w)
        cy = rng.uniform(row * cell_h, (row + 1) * cell_h)
        left = _round_half_up(cx - sprite.width / 2.0)
        top = _round_half_up(cy - sprite.height / 2.0)
        if left >= 0 and top >= 0 and left + sprite.width <= width and top + sprite.height <= height:
            return left, top
    raise PlacementInfeasible(
        f"sprite {sprite.width}x{sprite.height} cannot sit with center in cell {cell} at {width}x{height}"
    )


def _place_anywhere(
    rng: np.random.Generator, sprite: ForegroundAsset, params: SynthesisParams
) -> tuple[int, int]:
    width, height = params.resolution
    if sprite.width > width or sprite.height > height:
        raise PlacementInfeasible(f"sprite {sprite.width}x{sprite.height} larger than frame {width}x{height}")
    left = int(rng.integers(0, width - sprite.width + 1))
    top = int(rng.integers(0, height - sprite.height + 1))
    return left, top


def _bird_interval_indices(params: SynthesisParams, upper: bool) -> tuple[int, ...]:
    indices = params.upper_half_indices if upper else params.lower_half_indices
    # degenerate single-interval setups fall back to the whole list
    return indices if indices else tuple(range(len(params.size_intervals)))


def _split_assets(
    assets: Sequence[ForegroundAsset],
) -> tuple[Mapping[str, ForegroundAsset], list[ForegroundAsset]]:
    drones = {a.asset_id: a for a in assets if a.class_label == "drone"}
    birds = sorted((a for a in assets if a.class_label == "bird"), key=lambda a: a.asset_id)
    if not drones:
        raise ValueError("no drone assets supplied")
    if not birds:
        raise ValueError("no bird assets supplied; two of the three slots need one")
    return drones, birds


def synthesize_config(
    config: SynthesisConfig,
    assets: Sequence[ForegroundAsset],
    videos: Sequence[BackgroundVideo],
    params: SynthesisParams,
) -> list[AnnotatedFrame]:
    """Composite the three frames of one configuration.

    Slot 0 carries the drone alone; slots 1 and 2 add a bird drawn from the
    small and large interval halves respectively. Bird placement may overlap
    the drone on purpose. All draws come from a generator seeded by
    mix_seed(global_seed, config_index), so any-order execution reproduces
    the same bytes.
    """
    drones, birds = _split_assets(assets)
    videos_by_id = {v.video_id: v for v in videos}
    if config.drone_id not in drones:
        raise ValueError(f"unknown drone id {config.drone_id!r}")
    if config.video_id not in videos_by_id:
        raise ValueError(f"unknown video id {config.video_id!r}")
    drone = drones[config.drone_id]
    video = videos_by_id[config.video_id]
    interval = params.size_intervals[config.interval_index]
    width, height = params.resolution
    rng = np.random.default_rng(mix_seed(params.global_seed, config.config_index))

    frames: list[AnnotatedFrame] = []
    for slot in range(3):
        size = _draw_size(rng, interval)
        background = video.frames[int(rng.integers(len(video.frames)))]
        if background.shape[0] != height or background.shape[1] != width:
            raise ValueError(
                f"video {video.video_id!r} is {background.shape[1]}x{background.shape[0]}, "
                f"params expect {width}x{height}"
            )
        sprite = resize_to_smaller_edge(drone, size)
        position = _place_in_cell(rng, sprite, config.cell, params)
        image, drone_box = overlay(background, sprite, position)
        annotations = [("drone", _emit(drone_box, width, height))]

        if slot > 0:
            bird = birds[int(rng.integers(len(birds)))]
            half = _bird_interval_indices(params, upper=(slot == 2))
            bird_interval = params.size_intervals[half[int(rng.integers(len(half)))]]
            bird_sprite = resize_to_smaller_edge(bird, _draw_size(rng, bird_interval))
            image, bird_box = overlay(image, bird_sprite, _place_anywhere(rng, bird_sprite, params))
            annotations.append(("bird", _emit(bird_box, width, height)))

        frames.append(AnnotatedFrame(image=image, annotations=annotations, provenance=(config.config_index, slot)))
    return frames


def _emit(box: BoundingBox, width: int, height: int) -> BoundingBox:
    normalized = normalize_box(box, width, height)
    if not fits_unit_square(normalized):
        raise AssertionError(f"annotation escaped the frame: {normalized}")
    return normalized


@dataclass(frozen=True)
class BuildReport:
    enumerated: int
    retained: int
    skipped_infeasible: int
    frames_written: int
    retention: float
    manifest_path: Path


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    annotation_path: str
    config_index: int
    slot: int


def write_annotation_file(path: str | Path, annotations: Sequence[tuple[str, BoundingBox]]) -> None:
    """One `<class> <cx> <cy> <w> <h>` line per object, normalized, 6 decimals."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for label, box in annotations:
        cx, cy = box.center
        lines.append(f"{CLASS_NAMES.index(label)} {cx:.6f} {cy:.6f} {box.w:.6f} {box.h:.6f}")
    path.write_text("\n".join(lines) + "\n")


def read_annotation_file(path: str | Path) -> list[tuple[str, BoundingBox]]:
    annotations = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        cls = int(parts[0])
        cx, cy, w, h = (float(p) for p in parts[1:])
        annotations.append((CLASS_NAMES[cls], BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h)))
    return annotations


def write_dataset_manifest(path: str | Path, entries: Sequence[ManifestEntry]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{e.image_path} {e.annotation_path} {e.config_index} {e.slot}" for e in entries]
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def read_dataset_manifest(path: str | Path) -> list[ManifestEntry]:
    entries = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        entries.append(ManifestEntry(parts[0], parts[1], int(parts[2]), int(parts[3])))
    return entries


def format_intervals(intervals: Sequence[tuple[int, int]]) -> str:
    return ",".join(f"{lo}:{hi}" for lo, hi in intervals)


def parse_intervals(text: str) -> tuple[tuple[int, int], ...]:
    intervals = []
    for chunk in text.split(","):
        lo, _, hi = chunk.partition(":")
        intervals.append((int(lo), int(hi)))
    return tuple(intervals)


def parse_resolution(text: str) -> tuple[int, int]:
    w, _, h = text.lower().partition("x")
    return (int(w), int(h))


def write_params_file(path: str | Path, params: SynthesisParams) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"rows {params.rows}",
        f"cols {params.cols}",
        f"intervals {format_intervals(params.size_intervals)}",
        f"max_frames {'none' if params.max_allowed_frames is None else params.max_allowed_frames}",
        f"resolution {params.resolution[0]}x{params.resolution[1]}",
        f"seed {params.global_seed}",
    ]
    path.write_text("\n".join(lines) + "\n")


def read_params_file(path: str | Path) -> dict[str, str]:
    """Flat `key value` pairs; `#` comments and blank lines allowed."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(" ")
        if not value:
            raise ValueError(f"{path}:{lineno}: expected 'key value'")
        values[key.strip()] = value.strip()
    return values


def params_from_mapping(raw: Mapping[str, str], base: SynthesisParams | None = None) -> SynthesisParams:
    """Overlay textual params-file values onto `base` (defaults when None)."""
    params = base or SynthesisParams()
    known = {"rows", "cols", "intervals", "max_frames", "resolution", "seed"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown params keys: {sorted(unknown)}")
    updates: dict = {}
    if "rows" in raw:
        updates["rows"] = int(raw["rows"])
    if "cols" in raw:
        updates["cols"] = int(raw["cols"])
    if "intervals" in raw:
        updates["size_intervals"] = parse_intervals(raw["intervals"])
    if "max_frames" in raw:
        updates["max_allowed_frames"] = None if raw["max_frames"] == "none" else int(raw["max_frames"])
    if "resolution" in raw:
        updates["resolution"] = parse_resolution(raw["resolution"])
    if "seed" in raw:
        updates["global_seed"] = int(raw["seed"])
    return replace(params, **updates)


def _keep_config(params: SynthesisParams, config_index: int, keep_probability: float) -> bool:
    # one avalanche output doubles as the config's uniform keep/drop variate
    u = mix_seed(params.global_seed, config_index, stream=1) / float(1 << 64)
    return u < keep_probability


def build_dataset(
    assets: Sequence[ForegroundAsset],
    videos: Sequence[BackgroundVideo],
    params: SynthesisParams,
    out_dir: str | Path,
    workers: int = 1,
) -> BuildReport:
    """Run the full build: enumerate, subsample, composite, write to disk.

    Produces `images/` and `labels/` trees plus `manifest.txt` (sorted by
    config index and slot) and `params.txt` echoing the resolved parameters.
    Infeasible placements skip the whole configuration and are counted.
    """
    out_dir = Path(out_dir)
    drones, _ = _split_assets(assets)
    drone_ids = sorted(drones)
    video_ids = sorted(v.video_id for v in videos)
    enumerated = count_configs(len(drone_ids), len(video_ids), params)
    total_frames = 3 * enumerated
    if params.max_allowed_frames is None:
        keep_probability = 1.0
    else:
        keep_probability = retention_probability(params.max_allowed_frames, total_frames)

    kept = [
        config
        for config in enumerate_configs(drone_ids, video_ids, params)
        if _keep_config(params, config.config_index, keep_probability)
    ]

    def job(config: SynthesisConfig) -> list[ManifestEntry] | None:
        try:
            frames = synthesize_config(config, assets, videos, params)
        except PlacementInfeasible:
            return None
        entries = []
        for frame in frames:
            slot = frame.provenance[1]
            stem = f"cfg{config.config_index:08d}_s{slot}"
            image_rel = f"images/{stem}.png"
            annotation_rel = f"labels/{stem}.txt"
            save_image(out_dir / image_rel, frame.image)
            write_annotation_file(out_dir / annotation_rel, frame.annotations)
            entries.append(ManifestEntry(image_rel, annotation_rel, config.config_index, slot))
        return entries

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, kept))
    else:
        results = [job(config) for config in kept]

    skipped = sum(1 for r in results if r is None)
    manifest_entries = sorted(
        (entry for r in results if r is not None for entry in r),
        key=lambda e: (e.config_index, e.slot),
    )
    manifest_path = out_dir / "manifest.txt"
    write_dataset_manifest(manifest_path, manifest_entries)
    write_params_file(out_dir / "params.txt", params)
    return BuildReport(
        enumerated=enumerated,
        retained=len(kept),
        skipped_infeasible=skipped,
        frames_written=len(manifest_entries),
        retention=keep_probability,
        manifest_path=manifest_path,
    )


def split_dataset(
    entries: Sequence[ManifestEntry], train_fraction: float = 0.85, seed: int = 0
) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Deterministic shuffled partition keeping all slots of a config together."""
    if not entries:
        raise ValueError("manifest is empty")
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError("train_fraction must be in [0, 1]")
    config_ids = sorted({e.config_index for e in entries})
    order = np.random.default_rng(seed).permutation(len(config_ids))
    shuffled = [config_ids[i] for i in order]
    n_train = int(math.floor(train_fraction * len(config_ids) + 0.5))
    train_set = set(shuffled[:n_train])
    train = [e for e in entries if e.config_index in train_set]
    val = [e for e in entries if e.config_index not in train_set]
    return train, val
