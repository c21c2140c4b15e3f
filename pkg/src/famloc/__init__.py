"""famloc: activation-map food localization and detection evaluation."""

from .errors import ValidationError
from .grids import (
    ActivationGrid,
    FeatureStack,
    WeightVector,
    compute_fam,
    export_heatmap,
    grid_max,
    read_fstk,
    write_fstk,
)
from .head import (
    ConvKernelBank,
    FoodDecision,
    SoftmaxHead,
    classify,
    conv_forward,
    forward,
    gap,
    head_fam,
)
from .localize import (
    BoundingBox,
    LocalizerParams,
    Region,
    connected_components,
    expand_box,
    filter_regions,
    propose_boxes,
    region_to_box,
    threshold_mask,
)
from .metrics import (
    GroundTruthBox,
    MatchReport,
    MetricPoint,
    Metrics,
    Prediction,
    curves,
    default_iou_grid,
    iou,
    match_detections,
    metrics_from_report,
)
from .tune import GridSpec, TuneResult, ValidationItem, grid_search
from .joint import (
    ClassMetrics,
    ConstantClassifier,
    FileClassifier,
    LabeledPrediction,
    NON_FOOD_LABEL,
    OracleClassifier,
    classify_boxes,
    joint_evaluate,
)
from .estimators import FamLocalizer, LocalizerGridSearch

__version__ = "0.1.0"
