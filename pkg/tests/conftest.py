import numpy as np
import pytest

from aerosynth.assets import BackgroundVideo, ForegroundAsset, extract_foreground
from aerosynth.geometry import BoundingBox

KEY_COLOR = (0, 255, 0)


def solid_sprite(width, height, color, label, asset_id):
    """Fully opaque rectangular sprite."""
    pixels = np.full((height, width, 3), color, dtype=np.uint8)
    return ForegroundAsset(
        pixels=pixels,
        alpha=np.ones((height, width), dtype=np.float32),
        class_label=label,
        tight_box=BoundingBox(0.0, 0.0, float(width), float(height)),
        asset_id=asset_id,
    )


def keyed_sprite(width, height, color, label, asset_id, pad=2):
    """Sprite extracted via the real chroma-key path, with a keyed border."""
    canvas = np.full((height + 2 * pad, width + 2 * pad, 3), KEY_COLOR, dtype=np.uint8)
    canvas[pad : pad + height, pad : pad + width] = color
    return extract_foreground(canvas, KEY_COLOR, 0, class_label=label, asset_id=asset_id)


def toy_video(n_frames, width, height, seed=7, video_id="vid0"):
    rng = np.random.default_rng(seed)
    frames = tuple(
        rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8) for _ in range(n_frames)
    )
    return BackgroundVideo(frames=frames, video_id=video_id)


@pytest.fixture
def toy_assets():
    return [
        keyed_sprite(12, 8, (200, 30, 30), "drone", "drone_a"),
        keyed_sprite(9, 15, (30, 30, 200), "drone", "drone_b"),
        keyed_sprite(10, 6, (40, 40, 40), "bird", "bird_a"),
        keyed_sprite(7, 7, (90, 70, 50), "bird", "bird_b"),
    ]
