"""File formats: dataset manifests, ground-truth/prediction annotations,
and labeled predictions. All are JSON lines, one image per line.

Coordinates are stored in image pixels as continuous reals; nothing about
the activation-grid resolution leaks into files.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .joint import LabeledPrediction
from .localize import BoundingBox
from .metrics import GroundTruthBox, Prediction


@dataclass
class ManifestEntry:
    image_id: str
    width: int
    height: int
    stack_path: Path
    gt_path: Path | None = None


@dataclass
class DatasetManifest:
    entries: list

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


def _read_jsonl(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise OSError(f"failed reading {path}: {e}") from e
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}:{lineno}: invalid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise ValidationError(f"{path}:{lineno}: expected a JSON object")
        yield lineno, doc


def _require(doc, field, path, lineno):
    if field not in doc:
        raise ValidationError(f"{path}:{lineno}: missing field '{field}'")
    return doc[field]


def load_manifest(path) -> DatasetManifest:
    """Read and eagerly validate a dataset manifest.

    Duplicate image ids and dangling file references fail at load time,
    not at first use.
    """
    base = Path(path).parent
    entries = []
    seen = {}  # image_id -> first line number
    for lineno, doc in _read_jsonl(path):
        image_id = str(_require(doc, "image_id", path, lineno))
        if image_id in seen:
            raise ValidationError(
                f"{path}:{lineno}: duplicate image_id {image_id!r} "
                f"(first seen on line {seen[image_id]})"
            )
        seen[image_id] = lineno
        width = int(_require(doc, "width", path, lineno))
        height = int(_require(doc, "height", path, lineno))
        if width <= 0 or height <= 0:
            raise ValidationError(
                f"{path}:{lineno}: field 'width'/'height' must be positive"
            )
        stack_path = base / str(_require(doc, "stack", path, lineno))
        if not stack_path.is_file():
            raise ValidationError(
                f"{path}:{lineno}: field 'stack' references missing file {stack_path}"
            )
        gt_path = None
        if doc.get("gt") is not None:
            gt_path = base / str(doc["gt"])
            if not gt_path.is_file():
                raise ValidationError(
                    f"{path}:{lineno}: field 'gt' references missing file {gt_path}"
                )
        entries.append(ManifestEntry(image_id, width, height, stack_path, gt_path))
    return DatasetManifest(entries)


def _parse_box(doc, path, lineno):
    try:
        return BoundingBox(
            x_min=float(_require(doc, "x_min", path, lineno)),
            y_min=float(_require(doc, "y_min", path, lineno)),
            x_max=float(_require(doc, "x_max", path, lineno)),
            y_max=float(_require(doc, "y_max", path, lineno)),
        )
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{path}:{lineno}: bad box: {e}") from e


def read_ground_truth(path) -> dict:
    """image_id -> list of GroundTruthBox. Every box needs a class."""
    gts = {}
    for lineno, doc in _read_jsonl(path):
        image_id = str(_require(doc, "image_id", path, lineno))
        if image_id in gts:
            raise ValidationError(f"{path}:{lineno}: duplicate image_id {image_id!r}")
        boxes = []
        for entry in _require(doc, "boxes", path, lineno):
            box = _parse_box(entry, path, lineno)
            label = _require(entry, "class", path, lineno)
            boxes.append(GroundTruthBox(box=box, class_label=str(label), image_id=image_id))
        gts[image_id] = boxes
    return gts


def read_predictions(path) -> dict:
    """image_id -> list of Prediction. Class and score are optional."""
    preds = {}
    for lineno, doc in _read_jsonl(path):
        image_id = str(_require(doc, "image_id", path, lineno))
        if image_id in preds:
            raise ValidationError(f"{path}:{lineno}: duplicate image_id {image_id!r}")
        boxes = []
        for entry in _require(doc, "boxes", path, lineno):
            box = _parse_box(entry, path, lineno)
            score = entry.get("score")
            boxes.append(
                Prediction(
                    box=box,
                    image_id=image_id,
                    score=None if score is None else float(score),
                    class_label=entry.get("class"),
                )
            )
        preds[image_id] = boxes
    return preds


def write_predictions(preds_by_image, path, sizes=None) -> None:
    """One line per image, ids in sorted order; gated-off images keep an
    entry with an empty box list."""
    try:
        with open(path, "w") as f:
            for image_id in sorted(preds_by_image):
                doc = {"image_id": image_id}
                if sizes and image_id in sizes:
                    doc["width"], doc["height"] = sizes[image_id]
                doc["boxes"] = []
                for p in preds_by_image[image_id]:
                    entry = {
                        "x_min": p.box.x_min,
                        "y_min": p.box.y_min,
                        "x_max": p.box.x_max,
                        "y_max": p.box.y_max,
                    }
                    if p.score is not None:
                        entry["score"] = p.score
                    if p.class_label is not None:
                        entry["class"] = p.class_label
                    doc["boxes"].append(entry)
                f.write(json.dumps(doc) + "\n")
    except OSError as e:
        raise OSError(f"failed writing predictions to {path}: {e}") from e


def read_labeled_predictions(path) -> dict:
    """image_id -> list of LabeledPrediction, from the classified-boxes format."""
    labeled = {}
    for lineno, doc in _read_jsonl(path):
        image_id = str(_require(doc, "image_id", path, lineno))
        if image_id in labeled:
            raise ValidationError(f"{path}:{lineno}: duplicate image_id {image_id!r}")
        out = []
        for entry in _require(doc, "predictions", path, lineno):
            box = _parse_box(entry, path, lineno)
            out.append(
                LabeledPrediction(
                    box=box,
                    image_id=image_id,
                    class_label=str(_require(entry, "class", path, lineno)),
                    recognition_score=float(entry.get("score", 1.0)),
                )
            )
        labeled[image_id] = out
    return labeled


def write_labeled_predictions(labeled_by_image, path) -> None:
    try:
        with open(path, "w") as f:
            for image_id in sorted(labeled_by_image):
                doc = {
                    "image_id": image_id,
                    "predictions": [
                        {
                            "class": lp.class_label,
                            "score": lp.recognition_score,
                            "x_min": lp.box.x_min,
                            "y_min": lp.box.y_min,
                            "x_max": lp.box.x_max,
                            "y_max": lp.box.y_max,
                        }
                        for lp in labeled_by_image[image_id]
                    ],
                }
                f.write(json.dumps(doc) + "\n")
    except OSError as e:
        raise OSError(f"failed writing labeled predictions to {path}: {e}") from e
