"""Scikit-learn style wrappers so the localizer composes with the wider
ecosystem: get_params/set_params/clone work, and the tuner looks like a
small GridSearchCV.

X here is a sequence of per-image items rather than a feature matrix:
(grid, decision, img_h, img_w) tuples for the localizer, ValidationItem
objects for the search.
"""
from __future__ import annotations

from sklearn.base import BaseEstimator

from .errors import ValidationError
from .localize import LocalizerParams, propose_boxes
from .metrics import default_iou_grid
from .tune import GridSpec, ValidationItem, evaluate_params, grid_search


class FamLocalizer(BaseEstimator):
    """Box-proposal transformer over activation grids.

    Stateless apart from its parameters; fit is a no-op kept for pipeline
    compatibility.
    """

    def __init__(self, t=0.4, s=0.1, e=0.2):
        self.t = t
        self.s = s
        self.e = e

    def _params(self):
        return LocalizerParams(t=self.t, s=self.s, e=self.e)

    def fit(self, X=None, y=None):
        self._params()  # validate ranges
        return self

    def transform(self, X):
        """X: iterable of (grid, decision, img_h, img_w). Returns a list of
        per-image box lists."""
        params = self._params()
        out = []
        for item in X:
            try:
                grid, decision, img_h, img_w = item
            except (TypeError, ValueError) as e:
                raise ValidationError(
                    f"expected (grid, decision, img_h, img_w) items, got {item!r}"
                ) from e
            out.append(propose_boxes(grid, decision, params, img_h, img_w))
        return out

    predict = transform

    def score(self, X, y=None, iou_grid=None):
        """Mean accuracy over the IoU grid on ValidationItem inputs."""
        items = list(X)
        if not all(isinstance(i, ValidationItem) for i in items):
            raise ValidationError("score expects ValidationItem inputs with ground truth")
        return evaluate_params(items, self._params(), iou_grid or default_iou_grid())


class LocalizerGridSearch(BaseEstimator):
    """Exhaustive {t, s, e} search maximizing mean accuracy over IoU thresholds."""

    def __init__(self, t_values=None, s_values=None, e_values=None, iou_grid=None):
        self.t_values = t_values
        self.s_values = s_values
        self.e_values = e_values
        self.iou_grid = iou_grid

    def fit(self, X, y=None):
        """X: iterable of ValidationItem."""
        spec = GridSpec(
            **{
                k: list(v)
                for k, v in (
                    ("t_values", self.t_values),
                    ("s_values", self.s_values),
                    ("e_values", self.e_values),
                )
                if v is not None
            }
        )
        result = grid_search(list(X), spec, self.iou_grid)
        self.best_params_ = {"t": result.best.t, "s": result.best.s, "e": result.best.e}
        self.best_score_ = result.objective
        self.results_ = result.table
        self.best_estimator_ = FamLocalizer(**self.best_params_)
        return self

    def transform(self, X):
        if not hasattr(self, "best_estimator_"):
            raise ValidationError("LocalizerGridSearch is not fitted")
        return self.best_estimator_.transform(X)
