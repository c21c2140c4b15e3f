"""Forward-only classifier head: 3x3 conv -> global average pooling -> binary softmax.

Small-scale replica of the network head that gates localization and supplies
the food-class weights for the activation map. No training happens here;
weights are loaded from files.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grids import ActivationGrid, FeatureStack, WeightVector, compute_fam, _as_finite_f64

FOOD = 1
NON_FOOD = 0


@dataclass
class ConvKernelBank:
    """3x3, stride-1 convolution weights, indexed (out, in, ky, kx)."""

    kernels: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.kernels = _as_finite_f64(self.kernels, "ConvKernelBank.kernels")
        self.bias = _as_finite_f64(self.bias, "ConvKernelBank.bias")
        if self.kernels.ndim != 4 or self.kernels.shape[2:] != (3, 3):
            raise ValidationError(
                f"kernels must be (out, in, 3, 3), got {self.kernels.shape}"
            )
        if self.bias.shape != (self.kernels.shape[0],):
            raise ValidationError("bias length must equal out_channels")

    @property
    def out_channels(self):
        return self.kernels.shape[0]

    @property
    def in_channels(self):
        return self.kernels.shape[1]


@dataclass
class SoftmaxHead:
    """Binary softmax weights; row 0 is non-food, row 1 is food."""

    class_weights: np.ndarray
    class_biases: np.ndarray

    def __post_init__(self):
        self.class_weights = _as_finite_f64(self.class_weights, "SoftmaxHead.class_weights")
        self.class_biases = _as_finite_f64(self.class_biases, "SoftmaxHead.class_biases")
        if self.class_weights.ndim != 2 or self.class_weights.shape[0] != 2:
            raise ValidationError(
                f"class_weights must be (2, C), got {self.class_weights.shape}"
            )
        if self.class_biases.shape != (2,):
            raise ValidationError("class_biases must have length 2")

    @property
    def width(self):
        return self.class_weights.shape[1]

    def food_weights(self) -> WeightVector:
        return WeightVector(self.class_weights[FOOD], float(self.class_biases[FOOD]))


@dataclass
class FoodDecision:
    p_food: float
    p_nonfood: float
    is_food: bool


def conv_forward(stack: FeatureStack, bank: ConvKernelBank) -> FeatureStack:
    """3x3 cross-correlation with zero same-padding, plus per-output bias.

    Accumulates in (in_channel, ky, kx) order so results match a plain
    quadruple loop bit for bit.
    """
    if stack.k_count != bank.in_channels:
        raise ValidationError(
            f"input has {stack.k_count} channels, bank expects {bank.in_channels}"
        )
    h, w = stack.height, stack.width
    padded = np.zeros((stack.k_count, h + 2, w + 2), dtype=np.float64)
    padded[:, 1:-1, 1:-1] = stack.values
    out = np.zeros((bank.out_channels, h, w), dtype=np.float64)
    for c in range(bank.in_channels):
        for ky in range(3):
            for kx in range(3):
                window = padded[c, ky : ky + h, kx : kx + w]
                out += bank.kernels[:, c, ky, kx][:, None, None] * window
    out += bank.bias[:, None, None]
    return FeatureStack(out)


def gap(stack: FeatureStack) -> np.ndarray:
    """Global average pooling: spatial mean of each feature map."""
    return stack.values.reshape(stack.k_count, -1).mean(axis=1)


def classify(pooled: np.ndarray, head: SoftmaxHead, gate: float = 0.5) -> FoodDecision:
    """Softmax over the two class logits; food wins ties at the gate."""
    pooled = np.asarray(pooled, dtype=np.float64)
    if pooled.shape != (head.width,):
        raise ValidationError(
            f"pooled vector length {pooled.shape} does not match head width {head.width}"
        )
    if not 0.0 < gate < 1.0:
        raise ValidationError(f"gate must be in (0, 1), got {gate}")
    logits = head.class_weights @ pooled + head.class_biases
    shifted = np.exp(logits - logits.max())
    probs = shifted / shifted.sum()
    p_food = float(probs[FOOD])
    return FoodDecision(p_food=p_food, p_nonfood=float(probs[NON_FOOD]), is_food=p_food >= gate)


def head_fam(conv_out: FeatureStack, head: SoftmaxHead) -> ActivationGrid:
    """Activation map from the food row of the softmax weights."""
    if conv_out.k_count != head.width:
        raise ValidationError(
            f"conv output has {conv_out.k_count} channels, head width is {head.width}"
        )
    return compute_fam(conv_out, head.food_weights())


def forward(stack: FeatureStack, bank: ConvKernelBank, head: SoftmaxHead, gate: float = 0.5):
    """Full head pass: conv -> GAP -> softmax decision, plus the activation map."""
    conv_out = conv_forward(stack, bank)
    decision = classify(gap(conv_out), head, gate)
    return decision, head_fam(conv_out, head)


def write_head(bank: ConvKernelBank, head: SoftmaxHead, path) -> None:
    doc = {
        "conv": {
            "out": bank.out_channels,
            "in": bank.in_channels,
            "kernels": list(bank.kernels.reshape(-1)),
            "bias": list(bank.bias),
        },
        "softmax": {
            "weights": [list(row) for row in head.class_weights],
            "bias": list(head.class_biases),
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def read_head(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise OSError(f"failed reading head weights from {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON: {e}") from e
    try:
        conv = doc["conv"]
        out_ch, in_ch = int(conv["out"]), int(conv["in"])
        kernels = np.asarray(conv["kernels"], dtype=np.float64).reshape(out_ch, in_ch, 3, 3)
        bank = ConvKernelBank(kernels, conv["bias"])
        sm = doc["softmax"]
        head = SoftmaxHead(sm["weights"], sm["bias"])
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"{path}: malformed head document: {e}") from e
    if head.width != bank.out_channels:
        raise ValidationError(
            f"{path}: softmax width {head.width} != conv out channels {bank.out_channels}"
        )
    return bank, head
