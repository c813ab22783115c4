"""Decoder network mapping latent points to data space.

A plain MLP with SiLU units between hidden layers and a linear output
head.  Forward and reverse-mode gradients are written out explicitly so
the package carries its own gradient engine; correctness is pinned by
finite-difference tests.  Weights are float64 throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_HIDDEN = (16, 32, 64, 128, 256)

MSE = "mse"
BCE = "bce"

CHECKPOINT_MAGIC = "geodecoder-checkpoint"


class ShapeError(ValueError):
    """Input dimensions do not chain with the decoder layers."""


class InvalidTarget(ValueError):
    """BCE targets must be exactly 0 or 1."""


@dataclass
class DecoderParams:
    """Layer weights (fan_in, fan_out) and biases, input to output order."""

    weights: list
    biases: list

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "DecoderParams":
        return DecoderParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_decoder(input_dim: int, output_dim: int, hidden_sizes, rng: np.random.Generator) -> DecoderParams:
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases."""
    sizes = [input_dim, *hidden_sizes, output_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DecoderParams(weights, biases)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * _sigmoid(x)


def _silu_grad(x: np.ndarray) -> np.ndarray:
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def forward_with_cache(params: DecoderParams, Z: np.ndarray):
    """Forward pass keeping pre-activations for the reverse sweep."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != params.input_dim:
        raise ShapeError(f"latent dim {Z.shape[1]} != decoder input {params.input_dim}")
    inputs = [Z]  # input to each layer
    pre = []      # pre-activation of each layer
    h = Z
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = h @ w + b
        pre.append(a)
        h = a if i == last else silu(a)
        if i != last:
            inputs.append(h)
    return h, (inputs, pre)


def forward(params: DecoderParams, Z: np.ndarray) -> np.ndarray:
    out, _ = forward_with_cache(params, Z)
    return out


def backward_from_output_grad(params: DecoderParams, cache, d_out: np.ndarray):
    """Reverse sweep given dL/d(output); returns (weight grads, bias grads, dL/dZ)."""
    inputs, pre = cache
    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    delta = d_out
    for i in range(len(params.weights) - 1, -1, -1):
        if i != len(params.weights) - 1:
            delta = delta * _silu_grad(pre[i])
        gw[i] = inputs[i].T @ delta
        gb[i] = delta.sum(axis=0)
        delta = delta @ params.weights[i].T
    return gw, gb, delta


def latent_grads_from_output_grad(params: DecoderParams, cache, d_out: np.ndarray) -> np.ndarray:
    """Reverse sweep for dL/dZ only; skips the weight-gradient matmuls."""
    _, pre = cache
    delta = d_out
    for i in range(len(params.weights) - 1, -1, -1):
        if i != len(params.weights) - 1:
            delta = delta * _silu_grad(pre[i])
        delta = delta @ params.weights[i].T
    return delta


def loss(outputs: np.ndarray, targets: np.ndarray, kind: str) -> float:
    """Mean reconstruction loss over all entries.

    MSE is the plain mean squared error.  BCE treats outputs as logits and
    uses the log-sum-exp-stable form; targets must be exactly 0/1.
    """
    outputs = np.asarray(outputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if outputs.shape != targets.shape:
        raise ShapeError(f"outputs {outputs.shape} vs targets {targets.shape}")
    if kind == MSE:
        diff = outputs - targets
        return float(np.mean(diff * diff))
    if kind == BCE:
        if not np.all((targets == 0.0) | (targets == 1.0)):
            raise InvalidTarget("BCE targets must be 0 or 1")
        # max(o,0) - o*t + log(1 + exp(-|o|))
        val = np.maximum(outputs, 0.0) - outputs * targets + np.log1p(np.exp(-np.abs(outputs)))
        return float(np.mean(val))
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_output_grad(outputs: np.ndarray, targets: np.ndarray, kind: str) -> np.ndarray:
    """dL/d(outputs) for the mean-reduced losses above."""
    n_entries = outputs.size
    if kind == MSE:
        return 2.0 * (outputs - targets) / n_entries
    if kind == BCE:
        return (_sigmoid(outputs) - targets) / n_entries
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_and_backward(params: DecoderParams, Z: np.ndarray, targets: np.ndarray, kind: str):
    """One fused pass returning (loss, weight grads, bias grads, latent grads)."""
    out, cache = forward_with_cache(params, Z)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    value = loss(out, targets, kind)
    gw, gb, gz = backward_from_output_grad(params, cache, loss_output_grad(out, targets, kind))
    return value, gw, gb, gz


def backward(params: DecoderParams, Z: np.ndarray, targets: np.ndarray, kind: str):
    """Exact reverse-mode gradients of the loss: ((dW, db per layer), dZ)."""
    _, gw, gb, gz = loss_and_backward(params, Z, targets, kind)
    return list(zip(gw, gb)), gz


@dataclass
class AdamState:
    """Decoder optimizer state: per-parameter moments plus hyperparameters.

    Weight decay is decoupled and applied to weights only, never biases.
    """

    lr: float
    beta1: float
    beta2: float
    weight_decay: float = 0.0
    eps: float = 1e-8
    step: int = 0
    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)

    @staticmethod
    def for_params(params: DecoderParams, lr: float, betas=(0.9, 0.995), weight_decay: float = 0.0) -> "AdamState":
        st = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], weight_decay=weight_decay)
        st.m_w = [np.zeros_like(w) for w in params.weights]
        st.v_w = [np.zeros_like(w) for w in params.weights]
        st.m_b = [np.zeros_like(b) for b in params.biases]
        st.v_b = [np.zeros_like(b) for b in params.biases]
        return st


def adam_direction(m, v, grad, sq, step, beta1, beta2, eps):
    """Bias-corrected Adam direction; updates moments m, v in place.

    `sq` is the second-moment increment (grad*grad elementwise, or a
    broadcastable row norm for the Riemannian variant).
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * sq
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    return m_hat / (np.sqrt(v_hat) + eps)


def adam_step(state: AdamState, params: DecoderParams, grads) -> None:
    """Apply one Adam update in place; `grads` as returned by backward()[0]."""
    state.step += 1
    for i, (gw, gb) in enumerate(grads):
        dw = adam_direction(state.m_w[i], state.v_w[i], gw, gw * gw,
                            state.step, state.beta1, state.beta2, state.eps)
        params.weights[i] -= state.lr * dw + state.lr * state.weight_decay * params.weights[i]
        db = adam_direction(state.m_b[i], state.v_b[i], gb, gb * gb,
                            state.step, state.beta1, state.beta2, state.eps)
        params.biases[i] -= state.lr * db
    return None


def lr_schedule(epoch: int, base_lr: float, t0: int = 40) -> float:
    """Cosine annealing with warm restarts every t0 epochs (floor 0)."""
    phase = (epoch % t0) / t0
    return base_lr * (1.0 + np.cos(np.pi * phase)) / 2.0


def save_decoder(path, params: DecoderParams, *, activation: str = "silu", loss_kind: str = MSE) -> None:
    """JSON header line + little-endian float64 parameter block, layer order."""
    header = {
        "format": CHECKPOINT_MAGIC,
        "version": 1,
        "shapes": [[int(w.shape[0]), int(w.shape[1])] for w in params.weights],
        "activation": activation,
        "loss": loss_kind,
        "dtype": "<f8",
    }
    blocks = []
    for w, b in zip(params.weights, params.biases):
        blocks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        blocks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(b"".join(blocks))


def load_decoder(path):
    """Inverse of save_decoder; returns (DecoderParams, header dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("format") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a decoder checkpoint")
    body = raw[nl + 1:]
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in header["shapes"]:
        n = fan_in * fan_out
        weights.append(np.frombuffer(body, dtype="<f8", count=n, offset=offset).reshape(fan_in, fan_out).copy())
        offset += n * 8
        biases.append(np.frombuffer(body, dtype="<f8", count=fan_out, offset=offset).copy())
        offset += fan_out * 8
    return DecoderParams(weights, biases), header
