"""Feature stacks, activation grids, and the weighted-sum activation map.

The activation map is the per-pixel weighted sum of the final convolutional
feature maps, using the food-class softmax weights. All arrays are float64,
indexed (y, x) with the origin at the top-left and y growing downward.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

FSTK_MAGIC = b"FSTK"
FSTK_VERSION = 1


def _as_finite_f64(values, name):
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


@dataclass
class FeatureStack:
    """K feature maps of shape H x W, indexed (k, y, x)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = _as_finite_f64(self.values, "FeatureStack.values")
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise ValidationError(
                f"FeatureStack.values must be (K, H, W) with positive dims, got {self.values.shape}"
            )

    @property
    def k_count(self):
        return self.values.shape[0]

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def width(self):
        return self.values.shape[2]


@dataclass
class WeightVector:
    """Per-kernel softmax weights for the food class, plus the layer bias.

    The bias is never folded into the activation map; it only enters the
    logit computation in the classifier head.
    """

    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        self.weights = _as_finite_f64(self.weights, "WeightVector.weights")
        if self.weights.ndim != 1:
            raise ValidationError("WeightVector.weights must be 1-D")
        self.bias = float(self.bias)
        if not np.isfinite(self.bias):
            raise ValidationError("WeightVector.bias must be finite")


@dataclass
class ActivationGrid:
    """A single H x W real-valued map, indexed (y, x)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = _as_finite_f64(self.values, "ActivationGrid.values")
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise ValidationError(
                f"ActivationGrid.values must be (H, W) with positive dims, got {self.values.shape}"
            )

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


def compute_fam(stack: FeatureStack, w: WeightVector) -> ActivationGrid:
    """Weighted sum of feature maps: out[y, x] = sum_k w_k * f_k[y, x].

    Accumulates in ascending k order so results are bit-identical to a
    plain triple loop.
    """
    if len(w.weights) != stack.k_count:
        raise ValidationError(
            f"weight length {len(w.weights)} != stack k_count {stack.k_count}"
        )
    out = np.zeros((stack.height, stack.width), dtype=np.float64)
    for k in range(stack.k_count):
        out += w.weights[k] * stack.values[k]
    return ActivationGrid(out)


def grid_max(grid: ActivationGrid) -> float:
    return float(grid.values.max())


def export_heatmap(grid: ActivationGrid, path) -> None:
    """Write the grid as an 8-bit binary PGM (P5), min-max scaled to 0..255.

    A constant grid maps uniformly to 0. Rounding is nearest integer,
    halves away from zero.
    """
    lo = float(grid.values.min())
    hi = float(grid.values.max())
    if hi > lo:
        scaled = (grid.values - lo) * (255.0 / (hi - lo))
    else:
        scaled = np.zeros_like(grid.values)
    pixels = np.floor(scaled + 0.5).astype(np.uint8)
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(pixels.tobytes())
    except OSError as e:
        raise OSError(f"failed writing heatmap to {path}: {e}") from e


def write_fstk(stack: FeatureStack, path) -> None:
    """Binary feature-stack file: 'FSTK', u32 version/K/H/W, then
    K*H*W little-endian float32 in (k, y, x) order."""
    header = FSTK_MAGIC + struct.pack(
        "<4I", FSTK_VERSION, stack.k_count, stack.height, stack.width
    )
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(stack.values.astype("<f4").tobytes())
    except OSError as e:
        raise OSError(f"failed writing feature stack to {path}: {e}") from e


def read_fstk(path) -> FeatureStack:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise OSError(f"failed reading feature stack from {path}: {e}") from e
    if len(raw) < 20 or raw[:4] != FSTK_MAGIC:
        raise ValidationError(f"{path}: not an FSTK file (bad magic)")
    version, k, h, w = struct.unpack("<4I", raw[4:20])
    if version != FSTK_VERSION:
        raise ValidationError(f"{path}: unsupported FSTK version {version}")
    expected = 20 + 4 * k * h * w
    if len(raw) != expected:
        raise ValidationError(
            f"{path}: expected {expected} bytes for K={k} H={h} W={w}, got {len(raw)}"
        )
    values = np.frombuffer(raw[20:], dtype="<f4").reshape(k, h, w)
    return FeatureStack(values)


def write_weight_vector(w: WeightVector, path) -> None:
    with open(path, "w") as f:
        json.dump({"weights": list(w.weights), "bias": w.bias}, f)
        f.write("\n")


def read_weight_vector(path) -> WeightVector:
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise OSError(f"failed reading weights from {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(doc, dict) or "weights" not in doc:
        raise ValidationError(f"{path}: expected an object with a 'weights' field")
    return WeightVector(doc["weights"], doc.get("bias", 0.0))
