"""Command-line entry point wiring the pipeline stages together.

Subcommands: synthesize, anchors, simulate, evaluate, split. Exit codes are
0 on success, 2 for usage or validation problems, 3 for I/O failures. For
`synthesize`, flag values override the params file, which overrides built-in
defaults; the AEROSYNTH_SEED environment variable supplies the seed default
everywhere.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import anchors as anchors_mod
from . import codec, evaluation, reports, synthesis, tracker
from .assets import load_assets, load_videos
from .geometry import BoundingBox

log = logging.getLogger("aerosynth")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3


class UsageError(Exception):
    """Bad inputs or arguments; maps to exit code 2."""


def _env_seed() -> int:
    raw = os.environ.get("AEROSYNTH_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise UsageError(f"AEROSYNTH_SEED must be an integer, got {raw!r}") from exc


def _resolve_thresholds(args: argparse.Namespace) -> tuple[float, ...]:
    if getattr(args, "thresholds", None):
        try:
            values = tuple(float(v) for v in args.thresholds.split(","))
        except ValueError as exc:
            raise UsageError(f"bad --thresholds value: {exc}") from exc
        if any(b < a for a, b in zip(values, values[1:])):
            raise UsageError("--thresholds must be sorted ascending")
        return values
    return evaluation.default_thresholds(args.threshold_count)


def _echo_config(name: str, resolved: dict) -> None:
    log.info("resolved %s config: %s", name, " ".join(f"{k}={v}" for k, v in sorted(resolved.items())))


def _load_frame_annotations(
    manifest_path: Path,
) -> tuple[list[synthesis.ManifestEntry], list[list]]:
    try:
        entries = synthesis.read_dataset_manifest(manifest_path)
    except (OSError, ValueError) as exc:
        if isinstance(exc, OSError):
            raise
        raise UsageError(f"malformed manifest {manifest_path}: {exc}") from exc
    if not entries:
        raise UsageError(f"manifest {manifest_path} is empty")
    root = manifest_path.parent
    per_frame = []
    for entry in entries:
        try:
            per_frame.append(synthesis.read_annotation_file(root / entry.annotation_path))
        except ValueError as exc:
            raise UsageError(f"malformed annotation file {entry.annotation_path}: {exc}") from exc
    return entries, per_frame


def _drone_gt(annotations: list) -> BoundingBox | None:
    for label, box in annotations:
        if label == "drone":
            return box
    return None


def cmd_synthesize(args: argparse.Namespace) -> int:
    file_values = {}
    if args.params:
        if not Path(args.params).is_file():
            raise UsageError(f"params file not found: {args.params}")
        try:
            file_values = synthesis.read_params_file(args.params)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    try:
        params = synthesis.params_from_mapping(file_values)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    overrides: dict = {}
    if args.rows is not None:
        overrides["rows"] = args.rows
    if args.cols is not None:
        overrides["cols"] = args.cols
    if args.intervals is not None:
        try:
            overrides["size_intervals"] = synthesis.parse_intervals(args.intervals)
        except ValueError as exc:
            raise UsageError(f"bad --intervals value: {exc}") from exc
    if args.max_frames is not None:
        overrides["max_allowed_frames"] = args.max_frames
    if args.resolution is not None:
        try:
            overrides["resolution"] = synthesis.parse_resolution(args.resolution)
        except ValueError as exc:
            raise UsageError(f"bad --resolution value: {exc}") from exc
    if args.seed is not None:
        overrides["global_seed"] = args.seed
    elif "seed" not in file_values:
        overrides["global_seed"] = _env_seed()
    try:
        params = replace(params, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    if not Path(args.assets).is_file():
        raise UsageError(f"asset manifest not found: {args.assets}")
    if not Path(args.videos).is_dir():
        raise UsageError(f"videos directory not found: {args.videos}")
    try:
        assets = load_assets(args.assets)
        videos = load_videos(args.videos)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    _echo_config(
        "synthesize",
        {
            "rows": params.rows,
            "cols": params.cols,
            "intervals": synthesis.format_intervals(params.size_intervals),
            "max_frames": params.max_allowed_frames,
            "resolution": f"{params.resolution[0]}x{params.resolution[1]}",
            "seed": params.global_seed,
            "workers": args.workers,
            "out": args.out,
        },
    )
    try:
        report = synthesis.build_dataset(assets, videos, params, args.out, workers=args.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(f"enumerated {report.enumerated}")
    print(f"retained {report.retained}")
    print(f"skipped_infeasible {report.skipped_infeasible}")
    print(f"frames_written {report.frames_written}")
    print(f"retention_probability {report.retention:.6f}")
    return EXIT_OK


def cmd_anchors(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.is_file():
        raise UsageError(f"manifest not found: {manifest_path}")
    _, per_frame = _load_frame_annotations(manifest_path)
    boxes = [(box.w, box.h) for annotations in per_frame for _, box in annotations]
    seed = args.seed if args.seed is not None else _env_seed()
    _echo_config("anchors", {"manifest": args.manifest, "k": args.k, "seed": seed, "out": args.out})
    try:
        anchor_set = anchors_mod.cluster_anchors(boxes, k=args.k, seed=seed)
    except anchors_mod.TooFewSamples as exc:
        raise UsageError(str(exc)) from exc
    anchors_mod.write_anchor_file(args.out, anchor_set)
    print(f"boxes {len(boxes)}")
    print(f"inertia {anchor_set.inertia:.6f}")
    for w, h in anchor_set.anchors:
        print(f"anchor {w:.6f} {h:.6f}")
    return EXIT_OK


def _read_anchors(path: str) -> anchors_mod.AnchorSet:
    if not Path(path).is_file():
        raise UsageError(f"anchor file not found: {path}")
    try:
        return anchors_mod.read_anchor_file(path)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_simulate(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.is_file():
        raise UsageError(f"manifest not found: {manifest_path}")
    entries, per_frame = _load_frame_annotations(manifest_path)
    anchor_set = _read_anchors(args.anchors)
    thresholds = _resolve_thresholds(args)
    seed = args.seed if args.seed is not None else _env_seed()
    out_dir = Path(args.out)
    _echo_config(
        "simulate",
        {
            "manifest": args.manifest,
            "anchors": args.anchors,
            "frames": len(entries),
            "grid_side": args.grid_side,
            "noise_sigma": args.noise_sigma,
            "limit": args.limit,
            "verdict_threshold": args.verdict_threshold,
            "thresholds": len(thresholds),
            "seed": seed,
            "out": args.out,
        },
    )

    rng = np.random.default_rng(seed)
    frames = []
    for i, annotations in enumerate(per_frame):
        grid = codec.encode(
            annotations,
            args.grid_side,
            anchor_set,
            noise_sigma=args.noise_sigma,
            rng=rng,
            on_collision="drop",
        )
        codec.write_grid(out_dir / "tensors" / f"frame_{i:05d}.dgrd", grid)
        frames.append((codec.decode(grid, anchor_set), _drone_gt(annotations)))

    verdicts = tracker.run_sequence([dets for dets, _ in frames], args.verdict_threshold, limit=args.limit)
    reports.write_verdict_csv(verdicts, out_dir / "verdicts.csv")

    pr_points = evaluation.pr_curve(frames, thresholds, limit=args.limit)
    reports.write_pr_csv(pr_points, out_dir / "pr.csv")
    reports.plot_pr_curve(pr_points, out_dir / "pr_curve.svg")

    if all(gt is not None for _, gt in frames):
        penalty_points = evaluation.penalty_curve(
            frames, thresholds, resolution=tuple(synthesis.parse_resolution(args.penalty_resolution)), limit=args.limit
        )
        reports.write_penalty_csv(penalty_points, out_dir / "penalty.csv")
        reports.plot_penalty_curve(penalty_points, out_dir / "penalty_curve.svg")
    else:
        log.warning("skipping penalty curve: not every frame has drone ground truth")

    print(f"frames {len(frames)}")
    print(f"tensors_written {len(frames)}")
    print(f"thresholds {len(thresholds)}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.is_file():
        raise UsageError(f"manifest not found: {manifest_path}")
    _, per_frame = _load_frame_annotations(manifest_path)
    gts = [_drone_gt(annotations) for annotations in per_frame]
    out_dir = Path(args.out)
    thresholds = _resolve_thresholds(args)
    resolution = tuple(synthesis.parse_resolution(args.penalty_resolution))

    if args.tensors:
        anchor_set = _read_anchors(args.anchors)
        tensor_paths = sorted(Path(args.tensors).glob("*.dgrd"))
        if len(tensor_paths) != len(gts):
            raise UsageError(f"{len(tensor_paths)} tensors but {len(gts)} ground-truth frames")
        _echo_config(
            "evaluate",
            {"tensors": args.tensors, "manifest": args.manifest, "frames": len(gts), "limit": args.limit},
        )
        frames = []
        for path, gt in zip(tensor_paths, gts):
            try:
                grid = codec.read_grid(path)
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
            frames.append((codec.decode(grid, anchor_set), gt))
        pr_points = evaluation.pr_curve(frames, thresholds, limit=args.limit)
        reports.write_pr_csv(pr_points, out_dir / "pr.csv")
        reports.plot_pr_curve(pr_points, out_dir / "pr_curve.svg")
        if all(gt is not None for gt in gts):
            penalty_points = evaluation.penalty_curve(frames, thresholds, resolution=resolution, limit=args.limit)
            reports.write_penalty_csv(penalty_points, out_dir / "penalty.csv")
            reports.plot_penalty_curve(penalty_points, out_dir / "penalty_curve.svg")
        else:
            log.warning("skipping penalty curve: not every frame has drone ground truth")
        print(f"frames {len(frames)}")
        return EXIT_OK

    # verdict mode: fixed reported boxes, so the curves collapse to one row
    reported = reports.read_verdict_csv(args.verdicts)
    if len(reported) != len(gts):
        raise UsageError(f"{len(reported)} verdicts but {len(gts)} ground-truth frames")
    _echo_config(
        "evaluate",
        {"verdicts": args.verdicts, "manifest": args.manifest, "frames": len(gts), "limit": args.limit},
    )
    tp = fp = fn = 0
    for box, gt in zip(reported, gts):
        dtp, dfp, dfn = evaluation.match_frame(box, gt)
        tp, fp, fn = tp + dtp, fp + dfp, fn + dfn
    pr_points = [evaluation.PRPoint.from_counts(float("nan"), tp, fp, fn)]
    reports.write_pr_csv(pr_points, out_dir / "pr.csv")
    if all(gt is not None for gt in gts):
        origin = tracker.fallback_box(resolution)
        total = sum(evaluation.penalty(box if box is not None else origin, gt) for box, gt in zip(reported, gts))
        penalty_points = [evaluation.PenaltyPoint(float("nan"), total / len(gts), len(gts))]
        reports.write_penalty_csv(penalty_points, out_dir / "penalty.csv")
    print(f"frames {len(gts)}")
    print(f"tp {tp}")
    print(f"fp {fp}")
    print(f"fn {fn}")
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.is_file():
        raise UsageError(f"manifest not found: {manifest_path}")
    try:
        entries = synthesis.read_dataset_manifest(manifest_path)
    except ValueError as exc:
        raise UsageError(f"malformed manifest {manifest_path}: {exc}") from exc
    seed = args.seed if args.seed is not None else _env_seed()
    _echo_config(
        "split",
        {"manifest": args.manifest, "train_fraction": args.train_fraction, "seed": seed},
    )
    try:
        train, val = synthesis.split_dataset(entries, train_fraction=args.train_fraction, seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    synthesis.write_dataset_manifest(args.out_train, train)
    synthesis.write_dataset_manifest(args.out_val, val)
    print(f"train_frames {len(train)}")
    print(f"val_frames {len(val)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aerosynth", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_syn = sub.add_parser("synthesize", help="build the composited dataset")
    p_syn.add_argument("--assets", required=True, help="asset manifest (path class RRGGBB tolerance)")
    p_syn.add_argument("--videos", required=True, help="directory of background videos (PNG frame dirs)")
    p_syn.add_argument("--out", required=True, help="output dataset directory")
    p_syn.add_argument("--params", help="params file (key value lines)")
    p_syn.add_argument("--rows", type=int, help="grid rows")
    p_syn.add_argument("--cols", type=int, help="grid columns")
    p_syn.add_argument("--intervals", help="size intervals as lo:hi,lo:hi,...")
    p_syn.add_argument("--max-frames", type=int, dest="max_frames", help="frame budget for subsampling")
    p_syn.add_argument("--resolution", help="canvas as WIDTHxHEIGHT")
    p_syn.add_argument("--seed", type=int, help="global seed (default: AEROSYNTH_SEED or 0)")
    p_syn.add_argument("--workers", type=int, default=1, help="parallel compositing workers")
    p_syn.set_defaults(func=cmd_synthesize)

    p_anc = sub.add_parser("anchors", help="cluster anchor priors from a dataset manifest")
    p_anc.add_argument("--manifest", required=True)
    p_anc.add_argument("-k", type=int, default=5, help="number of anchors")
    p_anc.add_argument("--seed", type=int, help="clustering seed")
    p_anc.add_argument("--out", required=True, help="anchor file to write")
    p_anc.set_defaults(func=cmd_anchors)

    p_sim = sub.add_parser("simulate", help="oracle-encode a manifest, decode, track, evaluate")
    p_sim.add_argument("--manifest", required=True, help="dataset manifest, ordered as a video stream")
    p_sim.add_argument("--anchors", required=True, help="anchor file")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--grid-side", type=int, default=15, dest="grid_side")
    p_sim.add_argument("--noise-sigma", type=float, default=0.0, dest="noise_sigma")
    p_sim.add_argument("--limit", type=int, default=10, help="jump-filter override limit")
    p_sim.add_argument("--verdict-threshold", type=float, default=0.0, dest="verdict_threshold")
    p_sim.add_argument("--thresholds", help="explicit comma-separated threshold list")
    p_sim.add_argument("--threshold-count", type=int, default=101, dest="threshold_count")
    p_sim.add_argument("--penalty-resolution", default="850x480", dest="penalty_resolution")
    p_sim.add_argument("--seed", type=int, help="noise seed (default: AEROSYNTH_SEED or 0)")
    p_sim.set_defaults(func=cmd_simulate)

    p_eval = sub.add_parser("evaluate", help="score stored tensors or a verdict log against ground truth")
    source = p_eval.add_mutually_exclusive_group(required=True)
    source.add_argument("--tensors", help="directory of .dgrd tensors")
    source.add_argument("--verdicts", help="verdict CSV from simulate")
    p_eval.add_argument("--manifest", required=True, help="ground-truth dataset manifest")
    p_eval.add_argument("--anchors", help="anchor file (required with --tensors)")
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--limit", type=int, default=10)
    p_eval.add_argument("--thresholds", help="explicit comma-separated threshold list")
    p_eval.add_argument("--threshold-count", type=int, default=101, dest="threshold_count")
    p_eval.add_argument("--penalty-resolution", default="850x480", dest="penalty_resolution")
    p_eval.set_defaults(func=cmd_evaluate)

    p_split = sub.add_parser("split", help="partition a manifest into train and validation parts")
    p_split.add_argument("--manifest", required=True)
    p_split.add_argument("--train-fraction", type=float, default=0.85, dest="train_fraction")
    p_split.add_argument("--seed", type=int, help="shuffle seed (default: AEROSYNTH_SEED or 0)")
    p_split.add_argument("--out-train", required=True, dest="out_train")
    p_split.add_argument("--out-val", required=True, dest="out_val")
    p_split.set_defaults(func=cmd_split)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "tensors", None) and not getattr(args, "anchors", None):
        log.error("--tensors requires --anchors")
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
