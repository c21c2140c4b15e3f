"""Joint localization + recognition scoring.

A prediction is a true positive only if it overlaps a ground truth of the
same class at IoU >= the minimum, so metrics run per class and are then
macro-averaged. A pluggable per-box classifier supplies the labels; the
reserved label "non-food" rejects a box outright.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError
from .metrics import (
    Metrics,
    Prediction,
    iou,
    match_detections,
    metrics_from_counts,
)

NON_FOOD_LABEL = "non-food"


@dataclass
class LabeledPrediction:
    box: object
    image_id: str
    class_label: str
    recognition_score: float = 1.0

    def __post_init__(self):
        self.class_label = self.class_label.strip()
        if not self.class_label:
            raise ValidationError("labeled prediction needs a non-empty class")
        if not math.isfinite(self.recognition_score):
            raise ValidationError("recognition score must be finite")


class ConstantClassifier:
    """Labels every box with one fixed class at score 1.0."""

    def __init__(self, label: str):
        self.label = label.strip()
        if not self.label:
            raise ValidationError("constant classifier needs a non-empty label")

    def label_for(self, pred: Prediction):
        return self.label, 1.0


class OracleClassifier:
    """Returns the class of the best-overlapping ground truth.

    Intended for pipeline testing only. Boxes overlapping nothing are
    labeled non-food and therefore dropped.
    """

    def __init__(self, gts_by_image):
        self.gts_by_image = gts_by_image

    def label_for(self, pred: Prediction):
        best_label, best_iou = NON_FOOD_LABEL, 0.0
        for gt in self.gts_by_image.get(pred.image_id, []):
            overlap = iou(pred.box, gt.box)
            if overlap > best_iou:
                best_label, best_iou = gt.class_label, overlap
        return best_label, 1.0


class FileClassifier:
    """Looks labels up from previously written labeled predictions,
    keyed by image id and box coordinates (rounded to 1e-6)."""

    def __init__(self, labeled_by_image):
        self.table = {}
        for image_id, labeled in labeled_by_image.items():
            for lp in labeled:
                self.table[self._key(image_id, lp.box)] = (
                    lp.class_label,
                    lp.recognition_score,
                )

    @staticmethod
    def _key(image_id, box):
        return (image_id,) + tuple(round(v, 6) for v in box.as_tuple())

    def label_for(self, pred: Prediction):
        key = self._key(pred.image_id, pred.box)
        if key not in self.table:
            raise ValidationError(
                f"no label on file for box {pred.box.as_tuple()} on image {pred.image_id!r}"
            )
        return self.table[key]


def classify_boxes(preds, source) -> list:
    """Label each box via the source; non-food boxes are dropped."""
    labeled = []
    for pred in preds:
        label, score = source.label_for(pred)
        if label.strip() == NON_FOOD_LABEL:
            continue
        labeled.append(
            LabeledPrediction(
                box=pred.box,
                image_id=pred.image_id,
                class_label=label,
                recognition_score=score,
            )
        )
    return labeled


@dataclass
class ClassMetrics:
    per_class: dict  # class -> Metrics
    macro: Metrics


def joint_evaluate(
    labeled_by_image, gts_by_image, min_iou: float = 0.5, class_set=None
) -> ClassMetrics:
    """Per-class matching with micro-pooled counts, then macro averaging.

    The class set defaults to every class seen in the ground truth or the
    predictions; passing one explicitly rejects predictions outside it.
    Classes with no ground truth and no predictions score 1.0 under the
    empty-denominator rule, which inflates macros on sparse splits.
    """
    gt_classes = {g.class_label for gts in gts_by_image.values() for g in gts}
    pred_classes = {p.class_label for preds in labeled_by_image.values() for p in preds}
    if class_set is None:
        declared = sorted(gt_classes | pred_classes)
    else:
        declared = sorted({c.strip() for c in class_set})
        extra = pred_classes - set(declared)
        if extra:
            raise ValidationError(
                f"predictions carry classes outside the declared set: {sorted(extra)}"
            )

    all_images = sorted(set(labeled_by_image) | set(gts_by_image))
    per_class = {}
    for cls in declared:
        tp = fp = fn = 0
        for image_id in all_images:
            preds = [
                Prediction(
                    box=p.box,
                    image_id=p.image_id,
                    score=p.recognition_score,
                    class_label=p.class_label,
                )
                for p in labeled_by_image.get(image_id, [])
                if p.class_label == cls
            ]
            gts = [g for g in gts_by_image.get(image_id, []) if g.class_label == cls]
            report = match_detections(preds, gts, min_iou=min_iou, require_class=True)
            tp += report.tp
            fp += report.fp
            fn += report.fn
        per_class[cls] = metrics_from_counts(tp, fp, fn)

    n = len(declared)
    if n == 0:
        macro = Metrics(1.0, 1.0, 1.0)
    else:
        macro = Metrics(
            precision=sum(m.precision for m in per_class.values()) / n,
            recall=sum(m.recall for m in per_class.values()) / n,
            accuracy=sum(m.accuracy for m in per_class.values()) / n,
        )
    return ClassMetrics(per_class=per_class, macro=macro)


def write_class_metrics_csv(result: ClassMetrics, path) -> None:
    try:
        with open(path, "w") as f:
            f.write("class,precision,recall,accuracy\n")
            for cls in sorted(result.per_class):
                m = result.per_class[cls]
                f.write(f"{cls},{m.precision:.6f},{m.recall:.6f},{m.accuracy:.6f}\n")
            f.write(
                f"__macro__,{result.macro.precision:.6f},"
                f"{result.macro.recall:.6f},{result.macro.accuracy:.6f}\n"
            )
    except OSError as e:
        raise OSError(f"failed writing class metrics to {path}: {e}") from e


def class_metrics_to_dict(result: ClassMetrics) -> dict:
    return {
        "per_class": {
            cls: {"precision": m.precision, "recall": m.recall, "accuracy": m.accuracy}
            for cls, m in result.per_class.items()
        },
        "macro": {
            "precision": result.macro.precision,
            "recall": result.macro.recall,
            "accuracy": result.macro.accuracy,
        },
    }
