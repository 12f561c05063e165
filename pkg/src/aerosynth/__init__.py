"""Synthetic aerial-target dataset builder and detection post-processing toolkit."""

from .anchors import AnchorSet, cluster_anchors
from .assets import BackgroundVideo, ForegroundAsset, extract_foreground, overlay, resize_to_smaller_edge
from .codec import DetectionGrid, decode, encode, output_depth
from .evaluation import PenaltyPoint, PRPoint, match_frame, penalty, penalty_curve, pr_curve
from .geometry import BoundingBox, Detection, enclosing_box, expand_box, iou
from .synthesis import (
    AnnotatedFrame,
    BuildReport,
    SynthesisConfig,
    SynthesisParams,
    build_dataset,
    enumerate_configs,
    retention_probability,
    split_dataset,
    synthesize_config,
)
from .tracker import FrameVerdict, TrackerState, fallback_box, select_best, step

__version__ = "0.1.0"

__all__ = [
    "AnchorSet",
    "AnnotatedFrame",
    "BackgroundVideo",
    "BoundingBox",
    "BuildReport",
    "Detection",
    "DetectionGrid",
    "ForegroundAsset",
    "FrameVerdict",
    "PenaltyPoint",
    "PRPoint",
    "SynthesisConfig",
    "SynthesisParams",
    "TrackerState",
    "build_dataset",
    "cluster_anchors",
    "decode",
    "enclosing_box",
    "encode",
    "enumerate_configs",
    "expand_box",
    "extract_foreground",
    "fallback_box",
    "iou",
    "match_frame",
    "output_depth",
    "overlay",
    "penalty",
    "penalty_curve",
    "pr_curve",
    "resize_to_smaller_edge",
    "retention_probability",
    "select_best",
    "split_dataset",
    "step",
    "synthesize_config",
]
