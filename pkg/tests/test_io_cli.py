import json

import numpy as np
import pytest

from famloc import FeatureStack, ValidationError, write_fstk
from famloc.cli import main, parse_iou_grid
from famloc.grids import write_weight_vector, WeightVector
from famloc.head import ConvKernelBank, SoftmaxHead, write_head
from famloc.io import (
    load_manifest,
    read_ground_truth,
    read_labeled_predictions,
    read_predictions,
    write_labeled_predictions,
    write_predictions,
)
from famloc.localize import BoundingBox
from famloc.metrics import Prediction


def passthrough_head(path):
    """1-channel identity head: the activation map equals the input map and
    the food logit equals its mean, so positive-mean stacks gate as food."""
    kernels = np.zeros((1, 1, 3, 3))
    kernels[0, 0, 1, 1] = 1.0
    bank = ConvKernelBank(kernels, np.zeros(1))
    head = SoftmaxHead([[0.0], [1.0]], [0.0, 0.0])
    write_head(bank, head, path)


def blob_stack(hot=True):
    values = np.full((1, 14, 14), -0.5)
    if hot:
        values[0, 4:9, 4:9] = 8.0
    return FeatureStack(values)


@pytest.fixture
def workspace(tmp_path):
    """Manifest with one hot (food) image and one cold (non-food) image,
    plus a passthrough head and matching ground truth."""
    write_fstk(blob_stack(hot=True), tmp_path / "hot.fstk")
    write_fstk(blob_stack(hot=False), tmp_path / "cold.fstk")
    passthrough_head(tmp_path / "head.json")
    manifest = tmp_path / "manifest.jsonl"
    manifest.write_text(
        json.dumps({"image_id": "hot", "width": 224, "height": 224, "stack": "hot.fstk"})
        + "\n"
        + json.dumps({"image_id": "cold", "width": 224, "height": 224, "stack": "cold.fstk"})
        + "\n"
    )
    return tmp_path


class TestManifest:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text("")
        assert len(load_manifest(path)) == 0

    def test_duplicate_id_names_both_lines(self, workspace):
        path = workspace / "dup.jsonl"
        entry = json.dumps(
            {"image_id": "hot", "width": 10, "height": 10, "stack": "hot.fstk"}
        )
        path.write_text(entry + "\n" + entry + "\n")
        with pytest.raises(ValidationError, match=r"hot.*line 1"):
            load_manifest(path)

    def test_missing_stack_fails_at_load(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(
            json.dumps({"image_id": "a", "width": 10, "height": 10, "stack": "ghost.fstk"})
            + "\n"
        )
        with pytest.raises(ValidationError, match="ghost.fstk"):
            load_manifest(path)

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text('{"image_id": "a"}\nnot json\n')
        with pytest.raises(ValidationError, match=r":1: missing field"):
            load_manifest(path)

    def test_missing_file_is_os_error(self, tmp_path):
        with pytest.raises(OSError):
            load_manifest(tmp_path / "absent.jsonl")


class TestRoundTrips:
    def test_predictions(self, tmp_path):
        preds = {
            "a": [
                Prediction(
                    box=BoundingBox(1.25, 2.5, 10.75, 20.125),
                    image_id="a",
                    score=0.625,
                ),
                Prediction(box=BoundingBox(5, 6, 7, 8), image_id="a", class_label="cup"),
            ],
            "b": [],
        }
        write_predictions(preds, tmp_path / "p.jsonl", sizes={"a": (224, 224), "b": (224, 224)})
        back = read_predictions(tmp_path / "p.jsonl")
        assert set(back) == {"a", "b"}
        assert back["a"][0].box == preds["a"][0].box
        assert back["a"][0].score == 0.625
        assert back["a"][1].class_label == "cup"
        assert back["b"] == []

    def test_labeled_predictions(self, tmp_path):
        from famloc.joint import LabeledPrediction

        labeled = {
            "a": [
                LabeledPrediction(
                    box=BoundingBox(0.5, 1.5, 2.5, 3.5),
                    image_id="a",
                    class_label="sushi",
                    recognition_score=0.875,
                )
            ]
        }
        write_labeled_predictions(labeled, tmp_path / "l.jsonl")
        back = read_labeled_predictions(tmp_path / "l.jsonl")
        assert back["a"][0].box == labeled["a"][0].box
        assert back["a"][0].class_label == "sushi"
        assert back["a"][0].recognition_score == 0.875

    def test_ground_truth_requires_class(self, tmp_path):
        path = tmp_path / "gt.jsonl"
        path.write_text(
            json.dumps(
                {
                    "image_id": "a",
                    "boxes": [{"x_min": 0, "y_min": 0, "x_max": 1, "y_max": 1}],
                }
            )
            + "\n"
        )
        with pytest.raises(ValidationError, match="class"):
            read_ground_truth(path)


class TestParseIouGrid:
    def test_default_spec(self):
        grid = parse_iou_grid("0.05:0.95:0.05")
        assert len(grid) == 19
        assert grid[0] == 0.05 and grid[-1] == 0.95

    def test_single_value(self):
        assert parse_iou_grid("0.5:0.5:0.1") == [0.5]

    def test_malformed_rejected(self):
        with pytest.raises(ValidationError):
            parse_iou_grid("0.5")
        with pytest.raises(ValidationError):
            parse_iou_grid("0.9:0.1:0.1")


class TestCliCommands:
    def test_fam_outputs(self, workspace):
        write_weight_vector(WeightVector([1.0]), workspace / "w.json")
        rc = main(
            [
                "fam",
                "--stack",
                str(workspace / "hot.fstk"),
                "--weights",
                str(workspace / "w.json"),
                "--out",
                str(workspace / "fam_out"),
            ]
        )
        assert rc == 0
        assert (workspace / "fam_out" / "fam.pgm").read_bytes().startswith(b"P5\n14 14\n")
        doc = json.loads((workspace / "fam_out" / "fam.json").read_text())
        assert doc["height"] == doc["width"] == 14

    def test_localize_gates_non_food(self, workspace):
        rc = main(
            [
                "localize",
                "--manifest",
                str(workspace / "manifest.jsonl"),
                "--weights",
                str(workspace / "head.json"),
                "--out",
                str(workspace / "loc"),
            ]
        )
        assert rc == 0
        preds = read_predictions(workspace / "loc" / "predictions.jsonl")
        assert preds["cold"] == []  # entry present, no boxes
        assert len(preds["hot"]) == 1

    def test_evaluate_perfect_predictions(self, workspace):
        main(
            [
                "localize",
                "--manifest",
                str(workspace / "manifest.jsonl"),
                "--weights",
                str(workspace / "head.json"),
                "--out",
                str(workspace / "loc"),
            ]
        )
        preds = read_predictions(workspace / "loc" / "predictions.jsonl")
        gt_path = workspace / "gt.jsonl"
        with open(gt_path, "w") as f:
            for image_id in sorted(preds):
                f.write(
                    json.dumps(
                        {
                            "image_id": image_id,
                            "boxes": [
                                {
                                    "class": "food",
                                    "x_min": p.box.x_min,
                                    "y_min": p.box.y_min,
                                    "x_max": p.box.x_max,
                                    "y_max": p.box.y_max,
                                }
                                for p in preds[image_id]
                            ],
                        }
                    )
                    + "\n"
                )
        rc = main(
            [
                "evaluate",
                "--predictions",
                str(workspace / "loc" / "predictions.jsonl"),
                "--gt",
                str(gt_path),
                "--out",
                str(workspace / "eval"),
            ]
        )
        assert rc == 0
        lines = (workspace / "eval" / "curves.csv").read_text().splitlines()
        assert len(lines) == 20
        assert all(line.endswith("1.000000,1.000000,1.000000") for line in lines[1:])

    def test_tune_writes_150_rows(self, workspace):
        # ground truth from the localizer's own defaults makes them win
        main(
            [
                "localize",
                "--manifest",
                str(workspace / "manifest.jsonl"),
                "--weights",
                str(workspace / "head.json"),
                "--out",
                str(workspace / "loc"),
            ]
        )
        preds = read_predictions(workspace / "loc" / "predictions.jsonl")
        gt_path = workspace / "gt.jsonl"
        with open(gt_path, "w") as f:
            for image_id in sorted(preds):
                f.write(
                    json.dumps(
                        {
                            "image_id": image_id,
                            "boxes": [
                                {
                                    "class": "food",
                                    "x_min": p.box.x_min,
                                    "y_min": p.box.y_min,
                                    "x_max": p.box.x_max,
                                    "y_max": p.box.y_max,
                                }
                                for p in preds[image_id]
                            ],
                        }
                    )
                    + "\n"
                )
        rc = main(
            [
                "tune",
                "--manifest",
                str(workspace / "manifest.jsonl"),
                "--weights",
                str(workspace / "head.json"),
                "--gt",
                str(gt_path),
                "--out",
                str(workspace / "tuned"),
            ]
        )
        assert rc == 0
        lines = (workspace / "tuned" / "tune_table.csv").read_text().splitlines()
        assert len(lines) == 151
        best = json.loads((workspace / "tuned" / "best_params.json").read_text())
        assert set(best) == {"t", "s", "e", "objective"}

    def test_classify_and_joint_eval(self, workspace):
        main(
            [
                "localize",
                "--manifest",
                str(workspace / "manifest.jsonl"),
                "--weights",
                str(workspace / "head.json"),
                "--out",
                str(workspace / "loc"),
            ]
        )
        preds = read_predictions(workspace / "loc" / "predictions.jsonl")
        gt_path = workspace / "gt.jsonl"
        with open(gt_path, "w") as f:
            for image_id in sorted(preds):
                f.write(
                    json.dumps(
                        {
                            "image_id": image_id,
                            "boxes": [
                                {
                                    "class": "food",
                                    "x_min": p.box.x_min,
                                    "y_min": p.box.y_min,
                                    "x_max": p.box.x_max,
                                    "y_max": p.box.y_max,
                                }
                                for p in preds[image_id]
                            ],
                        }
                    )
                    + "\n"
                )
        rc = main(
            [
                "classify",
                "--predictions",
                str(workspace / "loc" / "predictions.jsonl"),
                "--classifier",
                "oracle",
                "--gt",
                str(gt_path),
                "--out",
                str(workspace / "cls"),
            ]
        )
        assert rc == 0
        rc = main(
            [
                "joint-eval",
                "--predictions",
                str(workspace / "cls" / "labeled.jsonl"),
                "--gt",
                str(gt_path),
                "--out",
                str(workspace / "joint"),
            ]
        )
        assert rc == 0
        doc = json.loads((workspace / "joint" / "joint.json").read_text())
        assert doc["macro"]["precision"] == 1.0
        assert doc["macro"]["recall"] == 1.0

    def test_constant_classifier_spec(self, workspace):
        main(
            [
                "localize",
                "--manifest",
                str(workspace / "manifest.jsonl"),
                "--weights",
                str(workspace / "head.json"),
                "--out",
                str(workspace / "loc"),
            ]
        )
        rc = main(
            [
                "classify",
                "--predictions",
                str(workspace / "loc" / "predictions.jsonl"),
                "--classifier",
                "constant:ramen",
                "--out",
                str(workspace / "cls"),
            ]
        )
        assert rc == 0
        labeled = read_labeled_predictions(workspace / "cls" / "labeled.jsonl")
        assert all(
            lp.class_label == "ramen" for boxes in labeled.values() for lp in boxes
        )


class TestCliErrors:
    def test_unknown_subcommand_exits_1(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag_exits_1(self, workspace, capsys):
        rc = main(["fam", "--bogus", "x", "--out", str(workspace / "o")])
        assert rc == 1

    def test_missing_input_file_exits_2(self, tmp_path):
        rc = main(
            [
                "fam",
                "--stack",
                str(tmp_path / "ghost.fstk"),
                "--weights",
                str(tmp_path / "ghost.json"),
                "--out",
                str(tmp_path / "o"),
            ]
        )
        assert rc == 2

    def test_validation_error_exits_1(self, workspace):
        rc = main(
            [
                "localize",
                "--manifest",
                str(workspace / "manifest.jsonl"),
                "--weights",
                str(workspace / "head.json"),
                "--t",
                "5.0",
                "--out",
                str(workspace / "o"),
            ]
        )
        assert rc == 1


class TestConfigPrecedence:
    def test_config_file_overrides_defaults_and_flags_override_config(self, workspace):
        config = workspace / "config.json"
        config.write_text(json.dumps({"t": 0.6, "e": 0.8}))
        rc = main(
            [
                "localize",
                "--manifest",
                str(workspace / "manifest.jsonl"),
                "--weights",
                str(workspace / "head.json"),
                "--config",
                str(config),
                "--e",
                "0.2",
                "--out",
                str(workspace / "loc"),
            ]
        )
        assert rc == 0
        effective = json.loads(
            (workspace / "loc" / "effective_config.json").read_text()
        )
        assert effective["t"] == 0.6  # from config file
        assert effective["e"] == 0.2  # flag wins
        assert effective["s"] == 0.1  # built-in default

    def test_unknown_config_key_rejected(self, workspace):
        config = workspace / "config.json"
        config.write_text(json.dumps({"bogus": 1}))
        rc = main(
            [
                "localize",
                "--manifest",
                str(workspace / "manifest.jsonl"),
                "--weights",
                str(workspace / "head.json"),
                "--config",
                str(config),
                "--out",
                str(workspace / "loc"),
            ]
        )
        assert rc == 1
