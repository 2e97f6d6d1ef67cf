"""Minimal dense neural network substrate: numpy forward/backward, Adam,
and JSON checkpoints.

Sized for small policy/value heads (117-128-64-128); float64 throughout
so repeated runs stay bit-identical. Inputs may be single vectors or
batches (rows); gradients are exact sums over the supplied batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

ACTIVATIONS = ("relu", "linear", "softmax")


class CheckpointError(ValueError):
    """Raised when a weights file cannot be parsed into a network."""


@dataclass
class Layer:
    weights: np.ndarray  # [out, in]
    biases: np.ndarray  # [out]
    activation: str


@dataclass
class DenseNet:
    layers: list[Layer]

    @property
    def layer_dims(self) -> list[int]:
        dims = [self.layers[0].weights.shape[1]]
        dims.extend(layer.weights.shape[0] for layer in self.layers)
        return dims

    @property
    def activations(self) -> list[str]:
        return [layer.activation for layer in self.layers]

    def parameter_count(self) -> int:
        return sum(layer.weights.size + layer.biases.size for layer in self.layers)


def init_net(
    dims: Sequence[int], activations: Sequence[str], rng: np.random.Generator
) -> DenseNet:
    """Glorot-uniform initialisation: weights in ±sqrt(6/(fan_in+fan_out))."""
    if len(activations) != len(dims) - 1:
        raise ValueError("need one activation per layer")
    for name in activations:
        if name not in ACTIVATIONS:
            raise ValueError(f"unknown activation {name!r}")
    layers = []
    for fan_in, fan_out, activation in zip(dims, dims[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(Layer(weights, np.zeros(fan_out), activation))
    return DenseNet(layers)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax (max subtraction)."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "linear":
        return z
    return softmax(z)


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Composed affine+activation pass; shape follows the input."""
    out, _ = forward_cache(net, x)
    return out


def forward_cache(net: DenseNet, x: np.ndarray):
    """Forward pass keeping per-layer inputs and pre-activations for backprop."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    a = x[None, :] if squeeze else x
    if a.shape[1] != net.layers[0].weights.shape[1]:
        raise ValueError(
            f"input width {a.shape[1]} != first layer fan-in "
            f"{net.layers[0].weights.shape[1]}"
        )
    inputs = []  # activation entering each layer
    pre = []  # z per layer
    for layer in net.layers:
        inputs.append(a)
        z = a @ layer.weights.T + layer.biases
        pre.append(z)
        a = _activate(z, layer.activation)
    out = a[0] if squeeze else a
    return out, (inputs, pre, squeeze)


def backward(net: DenseNet, cache, grad_output: np.ndarray, *, from_logits: bool = False):
    """Exact parameter gradients given dL/d(output).

    ``from_logits`` treats ``grad_output`` as dL/dz of the final layer,
    skipping the last activation derivative (how the policy losses feed
    masked log-softmax gradients straight into the net).
    Returns one (dW, db) pair per layer, summed over the batch.
    """
    inputs, pre, squeeze = cache
    grad = np.asarray(grad_output, dtype=np.float64)
    if squeeze:
        grad = grad[None, :]
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)  # type: ignore
    for index in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[index]
        z = pre[index]
        if from_logits and index == len(net.layers) - 1:
            dz = grad
        elif layer.activation == "relu":
            dz = grad * (z > 0.0)
        elif layer.activation == "linear":
            dz = grad
        else:  # softmax Jacobian-vector product: p * (g - (g . p))
            p = softmax(z)
            dz = p * (grad - np.sum(grad * p, axis=-1, keepdims=True))
        grads[index] = (dz.T @ inputs[index], dz.sum(axis=0))
        grad = dz @ layer.weights
    return grads


@dataclass
class AdamState:
    """Bias-corrected Adam moments, one pair of slots per layer."""

    first: list[tuple[np.ndarray, np.ndarray]]
    second: list[tuple[np.ndarray, np.ndarray]]
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(net: DenseNet, lr: float = 1e-4) -> AdamState:
    zeros = lambda layer: (
        np.zeros_like(layer.weights),
        np.zeros_like(layer.biases),
    )
    return AdamState(
        first=[zeros(layer) for layer in net.layers],
        second=[zeros(layer) for layer in net.layers],
        lr=lr,
    )


def adam_step(net: DenseNet, grads, state: AdamState) -> None:
    """One in-place Adam update over all layers."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for layer, (gw, gb), (mw, mb), (vw, vb) in zip(
        net.layers, grads, state.first, state.second
    ):
        for param, grad, m, v in ((layer.weights, gw, mw, vw), (layer.biases, gb, mb, vb)):
            m *= b1
            m += (1 - b1) * grad
            v *= b2
            v += (1 - b2) * np.square(grad)
            param -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)


FORMAT_VERSION = 1


def net_to_doc(net: DenseNet, optimizer: Optional[AdamState] = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "layer_dims": net.layer_dims,
        "activations": net.activations,
        "weights": [layer.weights.tolist() for layer in net.layers],
        "biases": [layer.biases.tolist() for layer in net.layers],
    }
    if optimizer is not None:
        doc["optimizer"] = {
            "step": optimizer.step,
            "lr": optimizer.lr,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
            "first": [[m.tolist(), b.tolist()] for m, b in optimizer.first],
            "second": [[m.tolist(), b.tolist()] for m, b in optimizer.second],
        }
    return doc


def net_from_doc(doc: dict) -> DenseNet:
    try:
        if doc["format_version"] != FORMAT_VERSION:
            raise CheckpointError(f"unsupported format_version {doc['format_version']}")
        dims = doc["layer_dims"]
        activations = doc["activations"]
        layers = []
        for index, activation in enumerate(activations):
            weights = np.asarray(doc["weights"][index], dtype=np.float64)
            biases = np.asarray(doc["biases"][index], dtype=np.float64)
            if weights.shape != (dims[index + 1], dims[index]) or biases.shape != (
                dims[index + 1],
            ):
                raise CheckpointError(
                    f"layer {index}: shapes {weights.shape}/{biases.shape} do not "
                    f"match dims {dims[index]}->{dims[index + 1]}"
                )
            layers.append(Layer(weights, biases, activation))
        return DenseNet(layers)
    except (KeyError, IndexError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint document: {exc!r}") from exc


def optimizer_from_doc(doc: dict, net: DenseNet) -> AdamState:
    raw = doc["optimizer"]
    state = AdamState(
        first=[
            (np.asarray(m, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for m, b in raw["first"]
        ],
        second=[
            (np.asarray(m, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for m, b in raw["second"]
        ],
        step=raw["step"],
        lr=raw["lr"],
        beta1=raw["beta1"],
        beta2=raw["beta2"],
        eps=raw["eps"],
    )
    if len(state.first) != len(net.layers):
        raise CheckpointError("optimizer state does not match network depth")
    return state


def save_weights(
    net: DenseNet, path: str | Path, optimizer: Optional[AdamState] = None
) -> None:
    """Write a versioned JSON checkpoint; floats round-trip exactly."""
    Path(path).write_text(json.dumps(net_to_doc(net, optimizer)))


def load_weights(path: str | Path) -> DenseNet:
    """Read a checkpoint written by save_weights."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: invalid JSON at offset {exc.pos}") from exc
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: expected a JSON object")
    return net_from_doc(doc)
