"""Grid search over the localizer parameters {t, s, e} on a validation set.

The objective is the unweighted mean of detection accuracy across the IoU
threshold grid. Activation grids and gate decisions are computed once by the
caller; only the box-generation steps rerun per parameter combination.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from .errors import ValidationError
from .localize import LocalizerParams, propose_boxes
from .metrics import Prediction, curves, default_iou_grid

DEFAULT_T_VALUES = [0.2, 0.4, 0.6, 0.8, 1.0]
DEFAULT_S_VALUES = [0.0, 0.02, 0.04, 0.06, 0.08, 0.10]
DEFAULT_E_VALUES = [0.2, 0.4, 0.6, 0.8, 1.0]


@dataclass
class GridSpec:
    t_values: list = field(default_factory=lambda: list(DEFAULT_T_VALUES))
    s_values: list = field(default_factory=lambda: list(DEFAULT_S_VALUES))
    e_values: list = field(default_factory=lambda: list(DEFAULT_E_VALUES))

    def __post_init__(self):
        for name, values in (("t", self.t_values), ("s", self.s_values), ("e", self.e_values)):
            if not values:
                raise ValidationError(f"{name}_values must be non-empty")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValidationError(f"{name}_values must be strictly ascending: {values}")

    def combinations(self):
        return list(itertools.product(self.t_values, self.s_values, self.e_values))


@dataclass
class ValidationItem:
    """One validation image: precomputed activation grid, gate decision,
    ground truths, and image dimensions."""

    image_id: str
    grid: object
    decision: object
    gts: list
    img_h: int
    img_w: int


@dataclass
class TuneResult:
    best: LocalizerParams
    objective: float
    table: list  # (LocalizerParams, objective) in canonical (t, s, e) order


def evaluate_params(validation, params: LocalizerParams, iou_grid) -> float:
    """Mean accuracy across the IoU grid for one parameter triple."""
    preds_by_image = {}
    gts_by_image = {}
    for item in validation:
        boxes = propose_boxes(item.grid, item.decision, params, item.img_h, item.img_w)
        preds_by_image[item.image_id] = [
            Prediction(box=b, image_id=item.image_id) for b in boxes
        ]
        gts_by_image[item.image_id] = item.gts
    points = curves(preds_by_image, gts_by_image, iou_grid)
    return sum(p.accuracy for p in points) / len(points)


def grid_search(validation, spec: GridSpec | None = None, iou_grid=None) -> TuneResult:
    """Exhaustive search; ties break to the lexicographically smallest (t, s, e)."""
    if not validation:
        raise ValidationError("validation set must be non-empty")
    spec = spec or GridSpec()
    iou_grid = iou_grid or default_iou_grid()

    table = []
    best_params = None
    best_objective = -1.0
    for t, s, e in spec.combinations():
        params = LocalizerParams(t=t, s=s, e=e)
        try:
            objective = evaluate_params(validation, params, iou_grid)
        except Exception as e_:
            raise ValidationError(
                f"evaluation failed at (t={t}, s={s}, e={e}): {e_}"
            ) from e_
        table.append((params, objective))
        # canonical iteration order makes strict > a lexicographic tie-break
        if objective > best_objective:
            best_params, best_objective = params, objective
    return TuneResult(best=best_params, objective=best_objective, table=table)


def write_table_csv(result: TuneResult, path) -> None:
    try:
        with open(path, "w") as f:
            f.write("t,s,e,objective\n")
            for params, objective in result.table:
                f.write(f"{params.t:g},{params.s:g},{params.e:g},{objective:.6f}\n")
    except OSError as e:
        raise OSError(f"failed writing tuning table to {path}: {e}") from e


def write_best_json(result: TuneResult, path) -> None:
    doc = {
        "t": result.best.t,
        "s": result.best.s,
        "e": result.best.e,
        "objective": result.objective,
    }
    try:
        with open(path, "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise OSError(f"failed writing best params to {path}: {e}") from e
