"""Neural building blocks on top of the tape engine.

EdgeConv applies an MLP to (center features || neighbor - center) for every
directed edge and max-aggregates per destination node; nodes with no
neighbors receive the self-message h(x || 0). GCNConv is the degree-
normalized linear aggregation with an implicit self-loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffcore import Tape, Tensor

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


@dataclass
class LinearParams:
    weight: Tensor                # fan_in x fan_out
    bias: Tensor                  # 1 x fan_out

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]


@dataclass
class MLPParams:
    layers: list[LinearParams]    # relu after every layer except the last

    @property
    def fan_in(self) -> int:
        return self.layers[0].fan_in

    @property
    def fan_out(self) -> int:
        return self.layers[-1].fan_out


@dataclass
class BatchNormParams:
    gamma: Tensor                 # 1 x channels
    beta: Tensor                  # 1 x channels
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS

    @property
    def channels(self) -> int:
        return self.gamma.shape[1]


def init_linear(fan_in: int, fan_out: int, rng: np.random.Generator) -> LinearParams:
    """Uniform weights on [-a, a] with a = sqrt(2/fan_in); zero bias."""
    a = np.sqrt(2.0 / fan_in)
    weight = Tensor(rng.uniform(-a, a, size=(fan_in, fan_out)),
                    requires_grad=True)
    bias = Tensor(np.zeros((1, fan_out)), requires_grad=True)
    return LinearParams(weight=weight, bias=bias)


def init_mlp(widths: list[int], rng: np.random.Generator) -> MLPParams:
    """widths = [in, hidden..., out]; needs at least one layer."""
    if len(widths) < 2:
        raise ValueError(f"an MLP needs >= 2 widths, got {widths}")
    layers = [init_linear(widths[i], widths[i + 1], rng)
              for i in range(len(widths) - 1)]
    return MLPParams(layers=layers)


def init_batchnorm(channels: int) -> BatchNormParams:
    return BatchNormParams(
        gamma=Tensor(np.ones((1, channels)), requires_grad=True),
        beta=Tensor(np.zeros((1, channels)), requires_grad=True),
        running_mean=np.zeros((1, channels)),
        running_var=np.ones((1, channels)))


def linear_forward(tape: Tape, params: LinearParams, x: Tensor) -> Tensor:
    return tape.add(tape.matmul(x, params.weight), params.bias)


def mlp_forward(tape: Tape, params: MLPParams, x: Tensor) -> Tensor:
    """Affine layers with relu between them; no activation after the last."""
    out = x
    last = len(params.layers) - 1
    for i, layer in enumerate(params.layers):
        out = linear_forward(tape, layer, out)
        if i != last:
            out = tape.relu(out)
    return out


def _split_edges(edges: np.ndarray, n: int):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise IndexError(f"edge index out of range [0, {n})")
    return edges[:, 0], edges[:, 1]


def edgeconv_forward(tape: Tape, x: Tensor, edges: np.ndarray,
                     h: MLPParams) -> Tensor:
    """max over neighbors j of h(x_i || x_j - x_i), per node i."""
    n, f = x.shape
    if h.fan_in != 2 * f:
        raise ValueError(f"EdgeConv MLP expects width {h.fan_in}, features give {2 * f}")
    src, dst = _split_edges(edges, n)
    isolated = np.flatnonzero(np.bincount(dst, minlength=n) == 0)
    if isolated.size:
        src = np.concatenate([src, isolated])
        dst = np.concatenate([dst, isolated])
    center = tape.gather_rows(x, dst)
    neighbor = tape.gather_rows(x, src)
    rel = tape.subtract(neighbor, center)
    messages = mlp_forward(tape, h, tape.concat_cols([center, rel]))
    return tape.segment_max(messages, dst, n)


def gcnconv_forward(tape: Tape, x: Tensor, edges: np.ndarray,
                    theta: Tensor) -> Tensor:
    """theta^T sum over j in N(i) and i of x_j / sqrt(dhat_i dhat_j).

    dhat counts the implicit self-loop, so an isolated node maps to
    theta^T x.
    """
    n, f = x.shape
    if theta.shape[0] != f:
        raise ValueError(f"GCNConv weight expects {theta.shape[0]} features, got {f}")
    src, dst = _split_edges(edges, n)
    dhat = np.bincount(dst, minlength=n) + 1.0
    weights = 1.0 / np.sqrt(dhat[dst] * dhat[src])
    messages = tape.rowscale(tape.gather_rows(x, src), weights)
    aggregated = tape.segment_sum(messages, dst, n)
    self_term = tape.rowscale(x, 1.0 / dhat)
    return tape.matmul(tape.add(aggregated, self_term), theta)


def batchnorm_forward(tape: Tape, params: BatchNormParams, x: Tensor,
                      mode: str) -> Tensor:
    """Normalize each channel; train mode uses batch statistics (population
    variance) and updates the running stats, eval mode uses running stats."""
    n, f = x.shape
    if f != params.channels:
        raise ValueError(f"batchnorm has {params.channels} channels, input {f}")
    if n == 0:
        raise ValueError("batchnorm on an empty batch")
    if mode == "train":
        mu = tape.col_mean(x)
        centered = tape.subtract(x, mu)
        var = tape.col_mean(tape.square(centered))
        std = tape.sqrt(tape.add_scalar(var, params.eps))
        xhat = tape.divide(centered, std)
        m = params.momentum
        params.running_mean = (1 - m) * params.running_mean + m * mu.values
        params.running_var = (1 - m) * params.running_var + m * var.values
    elif mode == "eval":
        mean = Tensor(params.running_mean)
        std = Tensor(np.sqrt(params.running_var + params.eps))
        xhat = tape.divide(tape.subtract(x, mean), std)
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return tape.add(tape.mul(xhat, params.gamma), params.beta)
