import csv

import numpy as np
import pytest

from aerosynth.assets import save_image
from aerosynth.cli import main
from aerosynth.synthesis import read_dataset_manifest
from conftest import KEY_COLOR


def write_toy_inputs(root, n_drones=2, n_birds=1, n_videos=2, n_frames=3, width=128, height=96):
    """Asset manifest plus background video directories on disk."""
    rng = np.random.default_rng(0)
    lines = []
    for i in range(n_drones):
        img = np.full((14, 18, 3), KEY_COLOR, dtype=np.uint8)
        img[2:12, 3:15] = (200 - 30 * i, 40, 40)
        save_image(root / f"drone{i}.png", img)
        lines.append(f"drone{i}.png drone 00FF00 0")
    for i in range(n_birds):
        img = np.full((10, 12, 3), KEY_COLOR, dtype=np.uint8)
        img[2:8, 2:10] = (40, 40, 200 - 30 * i)
        save_image(root / f"bird{i}.png", img)
        lines.append(f"bird{i}.png bird 00FF00 0")
    manifest = root / "assets.txt"
    manifest.write_text("\n".join(lines) + "\n")
    videos = root / "videos"
    for v in range(n_videos):
        for f in range(n_frames):
            frame = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
            save_image(videos / f"clip{v}" / f"{f:03d}.png", frame)
    return manifest, videos


def run_synthesize(tmp_path, out="data", extra=()):
    manifest, videos = write_toy_inputs(tmp_path)
    args = [
        "synthesize",
        "--assets", str(manifest),
        "--videos", str(videos),
        "--out", str(tmp_path / out),
        "--rows", "2",
        "--cols", "2",
        "--intervals", "5:7,7:9,9:11",
        "--resolution", "128x96",
        "--seed", "7",
    ]
    assert main(args + list(extra)) == 0
    return tmp_path / out


class TestSynthesizeCommand:
    def test_toy_build_counts(self, tmp_path, capsys):
        out = run_synthesize(tmp_path)
        captured = capsys.readouterr().out
        # 2 drones x 2x2 grid x 3 intervals x 2 videos = 48 configs, 3 frames each
        assert "enumerated 48" in captured
        assert "frames_written 144" in captured
        assert "retention_probability 1.000000" in captured
        assert len(read_dataset_manifest(out / "manifest.txt")) == 144

    def test_missing_manifest_exits_2(self, tmp_path, capsys):
        code = main(
            [
                "synthesize",
                "--assets", str(tmp_path / "missing.txt"),
                "--videos", str(tmp_path),
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 2

    def test_unwritable_output_exits_3(self, tmp_path, capsys):
        manifest, videos = write_toy_inputs(tmp_path)
        (tmp_path / "blocker").write_text("a file, not a directory")
        code = main(
            [
                "synthesize",
                "--assets", str(manifest),
                "--videos", str(videos),
                "--out", str(tmp_path / "blocker" / "out"),
                "--rows", "1",
                "--cols", "1",
                "--intervals", "5:7",
                "--resolution", "128x96",
            ]
        )
        assert code == 3

    def test_repeat_invocation_identical(self, tmp_path, capsys):
        out_a = run_synthesize(tmp_path, out="a")
        summary_a = capsys.readouterr().out
        out_b = run_synthesize(tmp_path, out="b")
        summary_b = capsys.readouterr().out
        assert summary_a == summary_b
        assert (out_a / "manifest.txt").read_bytes() == (out_b / "manifest.txt").read_bytes()
        for entry in read_dataset_manifest(out_a / "manifest.txt")[:6]:
            assert (out_a / entry.image_path).read_bytes() == (out_b / entry.image_path).read_bytes()

    def test_params_file_layering(self, tmp_path, capsys):
        manifest, videos = write_toy_inputs(tmp_path)
        params = tmp_path / "params.txt"
        params.write_text("rows 2\ncols 2\nintervals 5:7,7:9\nresolution 128x96\nseed 3\n")
        # flag overrides the file's rows; the file's cols win over the default
        assert (
            main(
                [
                    "synthesize",
                    "--assets", str(manifest),
                    "--videos", str(videos),
                    "--out", str(tmp_path / "out"),
                    "--params", str(params),
                    "--rows", "1",
                ]
            )
            == 0
        )
        captured = capsys.readouterr().out
        assert "enumerated 16" in captured  # 2 x (1x2) x 2 x 2

    def test_env_seed_default(self, tmp_path, monkeypatch, capsys):
        manifest, videos = write_toy_inputs(tmp_path)
        monkeypatch.setenv("AEROSYNTH_SEED", "99")
        args = [
            "synthesize",
            "--assets", str(manifest),
            "--videos", str(videos),
            "--out", str(tmp_path / "env"),
            "--rows", "1",
            "--cols", "1",
            "--intervals", "5:7",
            "--resolution", "128x96",
        ]
        assert main(args) == 0
        assert "seed 99" in (tmp_path / "env" / "params.txt").read_text()


@pytest.fixture
def built_dataset(tmp_path):
    out = run_synthesize(tmp_path)
    return tmp_path, out


class TestAnchorsCommand:
    def test_writes_k_anchors(self, built_dataset, capsys):
        tmp_path, out = built_dataset
        anchor_path = tmp_path / "anchors.txt"
        code = main(["anchors", "--manifest", str(out / "manifest.txt"), "-k", "3", "--seed", "1", "--out", str(anchor_path)])
        assert code == 0
        lines = anchor_path.read_text().strip().splitlines()
        assert len(lines) == 3

    def test_k1_is_mean_box(self, built_dataset, capsys):
        tmp_path, out = built_dataset
        from aerosynth.synthesis import read_annotation_file

        dims = []
        for entry in read_dataset_manifest(out / "manifest.txt"):
            for _, box in read_annotation_file(out / entry.annotation_path):
                dims.append((box.w, box.h))
        anchor_path = tmp_path / "one.txt"
        assert main(["anchors", "--manifest", str(out / "manifest.txt"), "-k", "1", "--out", str(anchor_path)]) == 0
        w, h = (float(v) for v in anchor_path.read_text().split())
        mean = np.mean(dims, axis=0)
        assert w == pytest.approx(mean[0], abs=1e-6)
        assert h == pytest.approx(mean[1], abs=1e-6)

    def test_too_few_boxes_exits_2(self, built_dataset, capsys):
        tmp_path, out = built_dataset
        entries = read_dataset_manifest(out / "manifest.txt")[:1]
        small = tmp_path / "small_manifest.txt"
        from aerosynth.synthesis import write_dataset_manifest

        write_dataset_manifest(small, entries)
        # re-point paths relative to the small manifest's directory
        (tmp_path / "images").symlink_to(out / "images")
        (tmp_path / "labels").symlink_to(out / "labels")
        code = main(["anchors", "--manifest", str(small), "-k", "50", "--out", str(tmp_path / "a.txt")])
        assert code == 2


class TestSimulateAndEvaluate:
    def run_sim(self, built_dataset, extra=()):
        # dataset manifests are not temporally coherent streams, so these
        # CLI round trips run with the jump filter off (--limit 0)
        tmp_path, out = built_dataset
        anchor_path = tmp_path / "anchors.txt"
        assert main(["anchors", "--manifest", str(out / "manifest.txt"), "-k", "3", "--seed", "1", "--out", str(anchor_path)]) == 0
        sim_dir = tmp_path / "sim"
        code = main(
            [
                "simulate",
                "--manifest", str(out / "manifest.txt"),
                "--anchors", str(anchor_path),
                "--out", str(sim_dir),
                "--grid-side", "5",
                "--limit", "0",
                "--thresholds", "0.0,0.5,1.0",
            ]
            + list(extra)
        )
        assert code == 0
        return tmp_path, out, anchor_path, sim_dir

    def test_noise_free_simulation_is_perfect(self, built_dataset, capsys):
        tmp_path, out, _, sim_dir = self.run_sim(built_dataset)
        assert sorted(p.name for p in sim_dir.iterdir()) == [
            "penalty.csv",
            "penalty_curve.svg",
            "pr.csv",
            "pr_curve.svg",
            "tensors",
            "verdicts.csv",
        ]
        with open(sim_dir / "pr.csv", newline="") as fh:
            rows = {row["threshold"]: row for row in csv.DictReader(fh)}
        assert rows["0.500000"]["precision"] == "1.000000"
        assert rows["0.500000"]["recall"] == "1.000000"
        assert rows["1.000000"]["recall"] == "0.000000"
        assert rows["1.000000"]["precision"] == ""
        with open(sim_dir / "penalty.csv", newline="") as fh:
            penalty_rows = {row["threshold"]: row for row in csv.DictReader(fh)}
        assert float(penalty_rows["0.000000"]["mean_penalty"]) == pytest.approx(1.0, abs=1e-5)
        n_tensors = len(list((sim_dir / "tensors").glob("*.dgrd")))
        assert n_tensors == 144

    def test_noisy_simulation_degrades_but_stays_well_formed(self, built_dataset, capsys):
        tmp_path, out, anchors, sim_dir = self.run_sim(built_dataset, extra=["--noise-sigma", "5.0", "--seed", "3"])
        with open(sim_dir / "pr.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        mid = rows[1]
        assert mid["recall"] != "" and float(mid["recall"]) < 1.0
        for row in rows:
            for field in ("precision", "recall"):
                if row[field]:
                    assert 0.0 <= float(row[field]) <= 1.0

    def test_limit_zero_vs_ten_differ_exactly_at_outlier(self, tmp_path):
        # hand-built two-frame-annotation stream with one outlier in the middle
        from aerosynth.geometry import BoundingBox
        from aerosynth.synthesis import write_annotation_file, write_dataset_manifest, ManifestEntry

        out = tmp_path / "stream"
        boxes = [BoundingBox(0.4, 0.4, 0.1, 0.1)] * 5
        boxes[2] = BoundingBox(0.05, 0.05, 0.1, 0.1)  # outlier jump
        entries = []
        for i, box in enumerate(boxes):
            write_annotation_file(out / f"labels/f{i}.txt", [("drone", box)])
            entries.append(ManifestEntry(f"images/f{i}.png", f"labels/f{i}.txt", i, 0))
        write_dataset_manifest(out / "manifest.txt", entries)
        anchor_path = tmp_path / "anchors.txt"
        anchor_path.write_text("0.100000 0.100000\n")

        verdict_rows = {}
        for limit in (0, 10):
            sim_dir = tmp_path / f"sim{limit}"
            assert (
                main(
                    [
                        "simulate",
                        "--manifest", str(out / "manifest.txt"),
                        "--anchors", str(anchor_path),
                        "--out", str(sim_dir),
                        "--grid-side", "5",
                        "--limit", str(limit),
                        "--thresholds", "0.5",
                    ]
                )
                == 0
            )
            with open(sim_dir / "verdicts.csv", newline="") as fh:
                verdict_rows[limit] = list(csv.DictReader(fh))
        differing = [
            i
            for i, (a, b) in enumerate(zip(verdict_rows[0], verdict_rows[10]))
            if (a["x"], a["source"]) != (b["x"], b["source"])
        ]
        assert differing == [2]
        assert verdict_rows[0][2]["source"] == "current"
        assert verdict_rows[10][2]["source"] == "held-previous"

    def test_evaluate_tensors_matches_simulate(self, built_dataset, capsys):
        tmp_path, out, anchor_path, sim_dir = self.run_sim(built_dataset)
        eval_dir = tmp_path / "eval"
        code = main(
            [
                "evaluate",
                "--tensors", str(sim_dir / "tensors"),
                "--manifest", str(out / "manifest.txt"),
                "--anchors", str(anchor_path),
                "--out", str(eval_dir),
                "--limit", "0",
                "--thresholds", "0.0,0.5,1.0",
            ]
        )
        assert code == 0
        assert (eval_dir / "pr.csv").read_bytes() == (sim_dir / "pr.csv").read_bytes()
        assert (eval_dir / "penalty.csv").read_bytes() == (sim_dir / "penalty.csv").read_bytes()
        assert (eval_dir / "pr_curve.svg").is_file()

    def test_evaluate_verdicts_mode(self, built_dataset, capsys):
        tmp_path, out, anchor_path, sim_dir = self.run_sim(built_dataset)
        eval_dir = tmp_path / "eval_verdicts"
        code = main(
            [
                "evaluate",
                "--verdicts", str(sim_dir / "verdicts.csv"),
                "--manifest", str(out / "manifest.txt"),
                "--out", str(eval_dir),
            ]
        )
        assert code == 0
        captured = capsys.readouterr().out
        assert "tp 144" in captured
        assert "fp 0" in captured

    def test_frame_count_mismatch_exits_2(self, built_dataset, capsys):
        tmp_path, out, anchor_path, sim_dir = self.run_sim(built_dataset)
        # drop one tensor to break the frame pairing
        victim = sorted((sim_dir / "tensors").glob("*.dgrd"))[0]
        victim.unlink()
        code = main(
            [
                "evaluate",
                "--tensors", str(sim_dir / "tensors"),
                "--manifest", str(out / "manifest.txt"),
                "--anchors", str(anchor_path),
                "--out", str(tmp_path / "eval_broken"),
            ]
        )
        assert code == 2


class TestSplitCommand:
    def test_split_partitions(self, built_dataset, capsys):
        tmp_path, out = built_dataset
        code = main(
            [
                "split",
                "--manifest", str(out / "manifest.txt"),
                "--train-fraction", "0.75",
                "--seed", "4",
                "--out-train", str(tmp_path / "train.txt"),
                "--out-val", str(tmp_path / "val.txt"),
            ]
        )
        assert code == 0
        train = read_dataset_manifest(tmp_path / "train.txt")
        val = read_dataset_manifest(tmp_path / "val.txt")
        total = read_dataset_manifest(out / "manifest.txt")
        assert len(train) + len(val) == len(total)
        assert len({e.config_index for e in train} & {e.config_index for e in val}) == 0
