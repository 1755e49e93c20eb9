"""Class-discriminative heatmaps and pixel-space saliency.

Grad-CAM weights each rectified feature map of a chosen convolutional
checkpoint by the spatially-pooled gradient of a class score, sums, and
rectifies.  CAM is the special case available only on GAP-head models,
computed from the learned head weights.  Counterfactual maps negate the
gradient before pooling.  Guided Grad-CAM fuses the upsampled heatmap with
a guided-backprop saliency map.
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import backward, grad_at_layer, one_hot
from .imaging import bilinear_resize


class CamIncompatibleError(ValueError):
    """CAM requested on a model without a GAP -> dense scoring head."""


@dataclass
class GradCamConfig:
    weight_pooling: str = "avg"          # avg | max (GMP-gradients ablation)
    apply_relu: bool = True              # final rectification of the map
    absolute_gradients: bool = False
    gradient_sign: int = 1               # -1 selects the counterfactual mode
    relu_policy: str = "standard"        # backward rule for upstream ReLUs
    score_point: str = "pre_softmax"     # pre_softmax | post_softmax

    def __post_init__(self):
        if self.weight_pooling not in ("avg", "max"):
            raise ValueError(f"weight_pooling must be avg or max, got {self.weight_pooling!r}")
        if self.gradient_sign not in (1, -1):
            raise ValueError("gradient_sign must be +1 or -1")
        if self.score_point not in ("pre_softmax", "post_softmax"):
            raise ValueError(f"bad score_point {self.score_point!r}")


def default_target_layer(spec):
    """Last rectified convolutional checkpoint (relu directly after a conv)."""
    prev_kind = None
    best = None
    for layer in spec.layers:
        if layer.kind == "relu" and prev_kind == "conv":
            best = layer.name
        prev_kind = layer.kind
    if best is None:
        for layer in spec.layers:
            if layer.kind == "conv":
                best = layer.name
    if best is None:
        raise ValueError("model has no convolutional checkpoint")
    return best


def neuron_weights(grads, config=None):
    """Pool a [K,u,v] gradient block into per-map importance weights."""
    config = config or GradCamConfig()
    g = np.asarray(grads, dtype=np.float64)
    if config.gradient_sign == -1:
        g = -g
    if config.absolute_gradients:
        g = np.abs(g)
    if config.weight_pooling == "max":
        return g.max(axis=(1, 2)).astype(np.float32)
    return g.mean(axis=(1, 2)).astype(np.float32)


def gradcam(tape, category, layer, config=None):
    """Grad-CAM heatmap [u,v] at the named spatial checkpoint."""
    config = config or GradCamConfig()
    grads = grad_at_layer(tape, category, layer,
                          policy=config.relu_policy,
                          score_point=config.score_point)
    alpha = neuron_weights(grads, config)
    amaps = tape.checkpoint(layer).astype(np.float64)
    heat = np.tensordot(alpha.astype(np.float64), amaps, axes=1)
    if config.apply_relu:
        heat = np.maximum(heat, 0)
    return heat.astype(np.float32)


def cam(tape, category, head_weights=None):
    """CAM heatmap from the learned head weights (GAP-head models only).

    No ReLU is applied; callers comparing against Grad-CAM rectify both
    sides themselves.
    """
    recs = tape.records
    if (len(recs) < 3 or recs[-1].kind != "dense" or recs[-2].kind != "gap"
            or recs[-3].y.ndim != 3):
        raise CamIncompatibleError(
            "CAM needs spatial maps -> global average pooling -> dense scores")
    amaps = recs[-3].y.astype(np.float64)
    if head_weights is None:
        head_weights = recs[-1].params["weights"]
    w = np.asarray(head_weights, dtype=np.float64)[category]
    if w.shape[0] != amaps.shape[0]:
        raise ops.DimensionError(
            f"{w.shape[0]} head weights vs {amaps.shape[0]} feature maps")
    return np.tensordot(w, amaps, axes=1).astype(np.float32)


def counterfactual(tape, category, layer, config=None):
    """Regions whose removal would raise the category score."""
    base = config or GradCamConfig()
    cfg = GradCamConfig(weight_pooling=base.weight_pooling,
                        apply_relu=True,
                        absolute_gradients=base.absolute_gradients,
                        gradient_sign=-1,
                        relu_policy=base.relu_policy,
                        score_point=base.score_point)
    return gradcam(tape, category, layer, cfg)


def pixel_saliency(tape, category, policy="guided"):
    """Gradient of the class score w.r.t. input pixels under a ReLU policy.

    policy "standard" is the plain-backprop baseline; "guided" and "deconv"
    are the sharpened variants used for fusion.
    """
    seed = one_hot(category, tape.scores.shape[0], tape.scores.dtype)
    return backward(tape, seed, policy=policy, stop_at="input")


def normalize_heatmap(heat):
    """Scale so the max positive value maps to 1; all-zero maps stay zero."""
    heat = np.asarray(heat, dtype=np.float32)
    m = float(heat.max(initial=0.0))
    if m <= 0:
        return np.zeros_like(heat)
    return heat / m


def guided_gradcam(saliency, heat):
    """Fuse pixel saliency with a coarse heatmap by pointwise product.

    The heatmap is bilinearly upsampled to the saliency resolution,
    normalized to [0,1], and multiplied into every saliency channel.
    """
    saliency = np.asarray(saliency, dtype=np.float32)
    h, w = saliency.shape[-2], saliency.shape[-1]
    up = normalize_heatmap(bilinear_resize(heat, w, h))
    return (saliency * up).astype(np.float32)


def saliency_to_heatmap(saliency):
    """Canonical scalar reduction: per-pixel channel-max of absolute values."""
    s = np.abs(np.asarray(saliency, dtype=np.float32))
    if s.ndim == 3:
        s = s.max(axis=0)
    return s
