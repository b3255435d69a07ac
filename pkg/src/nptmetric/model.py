"""Small fully-connected embedder with hand-rolled forward/backward and SGD.

The network maps raw inputs to an unnormalized feature vector; normalization
onto the sphere happens inside the losses, so the output layer is linear.
Hidden layers use ReLU. Gradients are computed from a tape recorded during
the forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ShapeMismatch, TapeMismatch


@dataclass
class EmbedderModel:
    weights: list  # per layer, shape (fan_in, fan_out)
    biases: list  # per layer, shape (fan_out,)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeMismatch("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeMismatch(f"layer {i}: weight {w.shape} vs bias {b.shape}")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ShapeMismatch(f"layer {i} fan-in does not match layer {i-1} fan-out")

    @property
    def layer_dims(self) -> list:
        """[d_in, hidden..., d_out]"""
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def parameters(self) -> list:
        """Flat parameter list, weights and biases interleaved per layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def init_model(d_in: int, hidden=(64, 64), d_out: int = 8, rng=None) -> EmbedderModel:
    """Glorot-uniform weights, zero biases."""
    if rng is None:
        rng = np.random.default_rng(0)
    dims = [d_in, *hidden, d_out]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return EmbedderModel(weights=weights, biases=biases)


@dataclass
class ForwardTape:
    """Activations recorded by model_forward, consumed by model_backward."""

    inputs: np.ndarray
    hidden: list  # post-ReLU activation per hidden layer


def model_forward(model: EmbedderModel, x: np.ndarray):
    """Returns (raw_features, tape). x is (B, d_in)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.weights[0].shape[0]:
        raise DimensionMismatch(
            f"input {x.shape} does not feed a d_in={model.weights[0].shape[0]} model"
        )
    hidden = []
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if i != last:
            h = np.maximum(h, 0.0)
            hidden.append(h)
    return h, ForwardTape(inputs=x, hidden=hidden)


@dataclass
class ModelGrads:
    weights: list
    biases: list

    def parameters(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def model_backward(model: EmbedderModel, tape: ForwardTape, grad_out: np.ndarray) -> ModelGrads:
    """Backprop grad_out (B, d_out) through the tape; grads are batch-summed
    exactly as the loss provided them (losses already divide by B)."""
    if len(tape.hidden) != len(model.weights) - 1:
        raise TapeMismatch(
            f"tape has {len(tape.hidden)} hidden activations for "
            f"{len(model.weights)} layers"
        )
    if tape.inputs.shape[1] != model.weights[0].shape[0]:
        raise TapeMismatch("tape inputs do not match the first layer width")
    for i, h in enumerate(tape.hidden):
        if h.shape != (tape.inputs.shape[0], model.weights[i].shape[1]):
            raise TapeMismatch(f"hidden activation {i} was taped by a different model")
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (tape.inputs.shape[0], model.weights[-1].shape[1]):
        raise TapeMismatch(f"grad_out {grad_out.shape} does not match tape/model")

    gw = [None] * len(model.weights)
    gb = [None] * len(model.biases)
    g = grad_out
    for i in range(len(model.weights) - 1, -1, -1):
        below = tape.inputs if i == 0 else tape.hidden[i - 1]
        gw[i] = below.T @ g
        gb[i] = g.sum(axis=0)
        if i:
            g = g @ model.weights[i].T
            g = np.where(tape.hidden[i - 1] > 0.0, g, 0.0)
    return ModelGrads(weights=gw, biases=gb)


@dataclass
class OptimizerState:
    """Momentum buffers, one per parameter array."""

    velocities: list

    @classmethod
    def for_params(cls, params) -> "OptimizerState":
        return cls(velocities=[np.zeros_like(p) for p in params])


def sgd_step(params, grads, state: OptimizerState, lr: float, momentum: float,
             weight_decay: float) -> None:
    """In-place SGD with momentum and L2 weight decay folded into the gradient:

        v <- momentum * v + grad + weight_decay * param
        param <- param - lr * v
    """
    if not (len(params) == len(grads) == len(state.velocities)):
        raise ShapeMismatch("params, grads and velocities must align one-to-one")
    for p, g, v in zip(params, grads, state.velocities):
        if p.shape != g.shape or p.shape != v.shape:
            raise ShapeMismatch(f"shape mismatch in sgd_step: {p.shape} vs {g.shape}")
        v *= momentum
        v += g
        if weight_decay:
            v += weight_decay * p
        p -= lr * v
