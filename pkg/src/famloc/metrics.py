"""IoU, greedy detection matching, and precision/recall/accuracy curves.

Matching follows the PASCAL convention: each ground-truth box can absorb at
most one prediction; duplicate hits on an already-matched box are false
positives. Accuracy here is the detection trade-off metric TP/(TP+FP+FN).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .errors import ValidationError
from .localize import BoundingBox

logger = logging.getLogger(__name__)


@dataclass
class GroundTruthBox:
    box: BoundingBox
    class_label: str
    image_id: str

    def __post_init__(self):
        self.class_label = self.class_label.strip()
        if not self.class_label:
            raise ValidationError("ground-truth class_label must be non-empty")


@dataclass
class Prediction:
    box: BoundingBox
    image_id: str
    score: float | None = None
    class_label: str | None = None

    def __post_init__(self):
        if self.score is not None and not math.isfinite(self.score):
            raise ValidationError("prediction score must be finite")
        if self.class_label is not None:
            self.class_label = self.class_label.strip()


@dataclass
class MatchReport:
    tp: int
    fp: int
    fn: int
    assignments: list = field(default_factory=list)  # (pred idx, gt idx, iou)


@dataclass
class Metrics:
    precision: float
    recall: float
    accuracy: float


@dataclass
class MetricPoint:
    iou_threshold: float
    precision: float
    recall: float
    accuracy: float


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def match_detections(
    preds, gts, min_iou: float = 0.5, require_class: bool = False
) -> MatchReport:
    """Greedily match predictions to ground truths on a single image.

    Predictions are visited in descending score order (unscored ones keep
    input order, after any scored ones); each takes the unmatched GT with the
    highest IoU >= min_iou, ties to the lowest GT index.
    """
    if not 0.0 < min_iou <= 1.0:
        raise ValidationError(f"min_iou must be in (0, 1], got {min_iou}")
    image_ids = {p.image_id for p in preds} | {g.image_id for g in gts}
    if len(image_ids) > 1:
        raise ValidationError(f"mixed image_ids in one matching call: {sorted(image_ids)}")

    order = sorted(
        range(len(preds)),
        key=lambda i: -(preds[i].score if preds[i].score is not None else -math.inf),
    )
    gt_taken = [False] * len(gts)
    assignments = []
    for pi in order:
        pred = preds[pi]
        best_gi, best_iou = -1, 0.0
        for gi, gt in enumerate(gts):
            if gt_taken[gi]:
                continue
            if require_class and pred.class_label != gt.class_label:
                continue
            overlap = iou(pred.box, gt.box)
            if overlap >= min_iou and overlap > best_iou:
                best_gi, best_iou = gi, overlap
        if best_gi >= 0:
            gt_taken[best_gi] = True
            assignments.append((pi, best_gi, best_iou))
    assignments.sort()
    tp = len(assignments)
    return MatchReport(tp=tp, fp=len(preds) - tp, fn=len(gts) - tp, assignments=assignments)


def _ratio(num, den):
    # nothing to find and nothing claimed counts as perfect
    return num / den if den > 0 else 1.0


def metrics_from_counts(tp: int, fp: int, fn: int) -> Metrics:
    return Metrics(
        precision=_ratio(tp, tp + fp),
        recall=_ratio(tp, tp + fn),
        accuracy=_ratio(tp, tp + fp + fn),
    )


def metrics_from_report(report: MatchReport) -> Metrics:
    return metrics_from_counts(report.tp, report.fp, report.fn)


def default_iou_grid() -> list:
    return [round(0.05 * i, 2) for i in range(1, 20)]


def curves(preds_by_image, gts_by_image, iou_grid) -> list:
    """One MetricPoint per IoU threshold, counts summed over all images."""
    if not iou_grid:
        raise ValidationError("iou_grid must be non-empty")
    grid = [float(v) for v in iou_grid]
    if any(not 0.0 < v <= 1.0 for v in grid):
        raise ValidationError(f"iou_grid values must be in (0, 1]: {grid}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError(f"iou_grid must be strictly ascending: {grid}")

    for image_id in preds_by_image:
        if image_id not in gts_by_image:
            logger.warning(
                "predictions for unknown image %r count as false positives", image_id
            )
    all_images = sorted(set(preds_by_image) | set(gts_by_image))

    points = []
    for threshold in grid:
        tp = fp = fn = 0
        for image_id in all_images:
            report = match_detections(
                preds_by_image.get(image_id, []),
                gts_by_image.get(image_id, []),
                min_iou=threshold,
            )
            tp += report.tp
            fp += report.fp
            fn += report.fn
        m = metrics_from_counts(tp, fp, fn)
        points.append(MetricPoint(threshold, m.precision, m.recall, m.accuracy))
    return points


def write_curves_csv(points, path) -> None:
    try:
        with open(path, "w") as f:
            f.write("iou_threshold,precision,recall,accuracy\n")
            for p in points:
                f.write(
                    f"{p.iou_threshold:.6f},{p.precision:.6f},{p.recall:.6f},{p.accuracy:.6f}\n"
                )
    except OSError as e:
        raise OSError(f"failed writing curves to {path}: {e}") from e
