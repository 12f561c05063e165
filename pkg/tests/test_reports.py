import csv

from aerosynth.evaluation import PenaltyPoint, PRPoint
from aerosynth.geometry import BoundingBox, Detection
from aerosynth.reports import (
    plot_penalty_curve,
    plot_pr_curve,
    read_verdict_csv,
    write_penalty_csv,
    write_pr_csv,
    write_verdict_csv,
)
from aerosynth.tracker import FrameVerdict


def pr_points():
    return [
        PRPoint.from_counts(0.0, 10, 0, 0),
        PRPoint.from_counts(0.5, 8, 1, 2),
        PRPoint.from_counts(1.0, 0, 0, 10),  # precision undefined
    ]


class TestCurveCsvs:
    def test_pr_csv_layout(self, tmp_path):
        write_pr_csv(pr_points(), tmp_path / "pr.csv")
        with open(tmp_path / "pr.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["threshold", "precision", "recall", "tp", "fp", "fn"]
        assert rows[1] == ["0.000000", "1.000000", "1.000000", "10", "0", "0"]
        assert rows[3][1] == ""  # undefined precision stays empty, never 0 or 1
        assert rows[3][2] == "0.000000"

    def test_penalty_csv_layout(self, tmp_path):
        points = [PenaltyPoint(0.0, 1.0, 12), PenaltyPoint(1.0, 250.5, 12)]
        write_penalty_csv(points, tmp_path / "penalty.csv")
        with open(tmp_path / "penalty.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["threshold", "mean_penalty", "frames"]
        assert rows[2] == ["1.000000", "250.500000", "12"]


class TestVerdictCsv:
    def test_round_trip_with_gaps(self, tmp_path):
        box = BoundingBox(0.25, 0.5, 0.125, 0.0625)
        det = Detection(box, 0.875, (0.75, 0.25))
        verdicts = [
            FrameVerdict(box, "current", det),
            FrameVerdict(None, "fallback", None),
            FrameVerdict(box, "held-previous", det),
        ]
        write_verdict_csv(verdicts, tmp_path / "verdicts.csv")
        with open(tmp_path / "verdicts.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["frame_index", "x", "y", "w", "h", "source", "objectness"]
        assert rows[1] == ["0", "0.250000", "0.500000", "0.125000", "0.062500", "current", "0.875000"]
        assert rows[2] == ["1", "", "", "", "", "fallback", ""]
        assert rows[3][5] == "held-previous"

        boxes = read_verdict_csv(tmp_path / "verdicts.csv")
        assert boxes[1] is None
        assert boxes[0].x == 0.25 and boxes[2].w == 0.125


class TestFigures:
    def test_svg_files_rendered(self, tmp_path):
        plot_pr_curve(pr_points(), tmp_path / "pr.svg")
        plot_penalty_curve([PenaltyPoint(0.0, 1.0, 5), PenaltyPoint(1.0, 9.0, 5)], tmp_path / "pen.svg")
        pr_svg = (tmp_path / "pr.svg").read_bytes()
        pen_svg = (tmp_path / "pen.svg").read_bytes()
        assert b"<svg" in pr_svg and b"<svg" in pen_svg
