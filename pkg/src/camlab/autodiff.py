"""Reverse-mode differentiation over a recorded forward pass.

The tape is a linear sequence of layer executions (the networks here are
plain chains), with each layer's output addressable by name as a checkpoint.
The ReLU backward rule is pluggable, which realizes standard backprop,
Guided Backpropagation and Deconvolution in one mechanism:

    standard  gradient passes where the forward input was positive
    guided    ... and the incoming gradient is positive
    deconv    gradient passes where the incoming gradient is positive
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops

RELU_POLICIES = ("standard", "guided", "deconv")


class CheckpointError(KeyError):
    """Unknown checkpoint name."""


class SeedError(ValueError):
    """Backward seed is not a one-hot vector over the score vector."""


@dataclass
class LayerRecord:
    name: str
    kind: str  # conv | relu | maxpool | gap | flatten | dense
    x: np.ndarray
    y: np.ndarray
    params: dict = field(default_factory=dict)   # weights/bias for conv, dense
    extras: dict = field(default_factory=dict)   # argmax, stride, padding, window


@dataclass
class ActivationTape:
    """Recorded forward pass; immutable once built, safe to share."""
    records: list
    input: np.ndarray
    scores: np.ndarray

    def checkpoint(self, name):
        if name == "input":
            return self.input
        for rec in self.records:
            if rec.name == name:
                return rec.y
        raise CheckpointError(f"no checkpoint named {name!r}")

    def checkpoint_names(self):
        return ["input"] + [rec.name for rec in self.records]

    def has_checkpoint(self, name):
        return name == "input" or any(r.name == name for r in self.records)


def _relu_backward(g, x, policy):
    if policy == "standard":
        return g * (x > 0)
    if policy == "guided":
        return g * (x > 0) * (g > 0)
    if policy == "deconv":
        return g * (g > 0)
    raise ValueError(f"unknown relu policy {policy!r}")


def _layer_backward(rec, g, policy, param_grads=None):
    """Cotangent w.r.t. rec's input; optionally accumulate parameter grads."""
    kind = rec.kind
    if kind == "conv":
        w = rec.params["weights"]
        if param_grads is not None:
            dk, db = ops.conv2d_param_grad(g, rec.x, w.shape,
                                           rec.extras["stride"], rec.extras["padding"])
            param_grads[rec.name] = {"weights": dk, "bias": db}
        return ops.conv2d_input_grad(g, rec.x.shape, w,
                                     rec.extras["stride"], rec.extras["padding"])
    if kind == "relu":
        return _relu_backward(g, rec.x, policy)
    if kind == "maxpool":
        return ops.maxpool2d_grad(g, rec.extras["argmax"], rec.x.shape)
    if kind == "gap":
        z = rec.x.shape[1] * rec.x.shape[2]
        return np.broadcast_to((g / z)[:, None, None], rec.x.shape).astype(g.dtype)
    if kind == "flatten":
        return g.reshape(rec.x.shape)
    if kind == "dense":
        w = rec.params["weights"]
        if param_grads is not None:
            param_grads[rec.name] = {
                "weights": np.outer(g, rec.x).astype(g.dtype),
                "bias": g.copy(),
            }
        return (w.astype(np.float64).T @ g.astype(np.float64)).astype(g.dtype)
    raise ValueError(f"unknown layer kind {kind!r}")


def backward_from_cotangent(tape, cotangent, policy="standard", stop_at="input",
                            param_grads=None):
    """Propagate an arbitrary score-vector cotangent down to `stop_at`.

    Used internally by the trainer (softmax cross-entropy) and by the
    post-softmax scoring mode; the public explanation path goes through
    `backward`, which enforces a one-hot seed.
    """
    if not tape.has_checkpoint(stop_at):
        raise CheckpointError(f"no checkpoint named {stop_at!r}")
    if policy not in RELU_POLICIES:
        raise ValueError(f"unknown relu policy {policy!r}")
    g = np.asarray(cotangent, dtype=tape.scores.dtype)
    if g.shape != tape.scores.shape:
        raise SeedError(f"seed shape {g.shape} != score shape {tape.scores.shape}")
    for rec in reversed(tape.records):
        if rec.name == stop_at:
            return g
        g = _layer_backward(rec, g, policy, param_grads)
    return g  # stop_at == "input"


def backward(tape, seed, policy="standard", stop_at="input"):
    """Gradient of one pre-softmax class score at the named checkpoint.

    The seed must be one-hot: explanations are always per-category, all
    other score gradients are held at zero.
    """
    seed = np.asarray(seed)
    if seed.ndim != 1 or seed.shape != tape.scores.shape:
        raise SeedError(f"seed shape {seed.shape} != score shape {tape.scores.shape}")
    hot = np.flatnonzero(seed)
    if hot.size != 1 or seed[hot[0]] != 1:
        raise SeedError("seed must be one-hot over the score vector")
    return backward_from_cotangent(tape, seed, policy=policy, stop_at=stop_at)


def one_hot(category, n, dtype=np.float32):
    seed = np.zeros(n, dtype=dtype)
    seed[category] = 1
    return seed


def grad_at_layer(tape, category, layer, policy="standard", score_point="pre_softmax"):
    """Full gradient of the class score w.r.t. a spatial feature-map checkpoint.

    `layer` should name the rectified feature maps of a convolutional stage;
    the result has the feature-map shape [K, u, v].
    """
    target = tape.checkpoint(layer)
    if target.ndim != 3:
        raise ops.DimensionError(
            f"checkpoint {layer!r} is not spatial (shape {target.shape})")
    n = tape.scores.shape[0]
    if score_point == "post_softmax":
        p = ops.softmax(tape.scores)
        cot = (-p[category] * p).astype(tape.scores.dtype)
        cot[category] += p[category]
        return backward_from_cotangent(tape, cot, policy=policy, stop_at=layer)
    return backward(tape, one_hot(category, n, tape.scores.dtype),
                    policy=policy, stop_at=layer)
