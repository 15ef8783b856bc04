"""Dense float64 kernels with hand-written backward passes.

Each kernel returns ``(output, backward)``. Calling ``backward(upstream)``
accumulates gradients into any :class:`Parameter` involved and returns the
gradient with respect to the plain array inputs. There is no autodiff graph;
callers chain backwards by hand. Kernels are pure given (inputs, parameter
values), so distinct gradient buffers may be used concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class KernelError(ValueError):
    """Raised on shape mismatches and degenerate kernel inputs."""


@dataclass
class Parameter:
    """A learnable tensor and its gradient buffer."""

    value: np.ndarray
    name: str
    grad: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


@dataclass
class BatchNormState:
    """Running statistics for inference-mode batch normalization."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5

    @classmethod
    def create(cls, num_features: int, momentum: float = 0.9, eps: float = 1e-5) -> "BatchNormState":
        return cls(
            running_mean=np.zeros(num_features),
            running_var=np.ones(num_features),
            momentum=momentum,
            eps=eps,
        )


def embed_lookup(table: Parameter, ids: np.ndarray):
    """Gather rows of the embedding table; PAD (id 0) rows take no gradient.

    The PAD row is pinned to zero at model construction and never updated,
    so appending padding can never change downstream activations.
    """
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.value.shape[0]):
        raise KernelError("token id out of range for embedding table")
    out = table.value[ids]

    def backward(upstream: np.ndarray) -> None:
        real = ids != 0
        np.add.at(table.grad, ids[real], upstream[real])
        return None

    return out, backward


def _conv1d(x: np.ndarray, filters: Parameter, bias: Parameter | None):
    """Sliding-window dot products (pre-activations) at every position.

    `bias` may be None for towers where a following batch norm would cancel
    any constant shift anyway.
    """
    num_filters, window, dim = filters.value.shape
    n, d = x.shape
    if d != dim:
        raise KernelError(f"input dim {d} does not match filter dim {dim}")
    if bias is not None and bias.value.shape != (num_filters,):
        raise KernelError("bias shape must be (num_filters,)")
    if n < window:
        raise KernelError("input shorter than the filter window")
    # windows: (positions, dim, window); window axis is appended last.
    windows = sliding_window_view(x, window, axis=0)
    pre = np.einsum("pdm,fmd->fp", windows, filters.value)
    if bias is not None:
        pre = pre + bias.value[:, None]

    def backward(upstream: np.ndarray) -> np.ndarray:
        if bias is not None:
            bias.grad += upstream.sum(axis=1)
        filters.grad += np.einsum("fp,pdm->fmd", upstream, windows)
        dwindows = np.einsum("fp,fmd->pdm", upstream, filters.value)
        dx = np.zeros_like(x)
        positions = dwindows.shape[0]
        for j in range(window):
            dx[j : j + positions] += dwindows[:, :, j]
        return dx

    return pre, backward


def _tanh(x: np.ndarray):
    out = np.tanh(x)

    def backward(upstream: np.ndarray) -> np.ndarray:
        return upstream * (1.0 - out * out)

    return out, backward


def conv1d_tanh(x: np.ndarray, filters: Parameter, bias: Parameter):
    """Convolution over token windows followed by tanh.

    Output row f, column i is ``tanh(sum_j x[i+j] . filters[f, j] + bias[f])``.
    """
    pre, back_conv = _conv1d(x, filters, bias)
    out, back_tanh = _tanh(pre)

    def backward(upstream: np.ndarray) -> np.ndarray:
        return back_conv(back_tanh(upstream))

    return out, backward


def maxpool_over_time(feature_map: np.ndarray, mask: np.ndarray):
    """Per-filter maximum over valid positions; argmax ties go to the lowest index."""
    mask = np.asarray(mask, dtype=bool)
    if feature_map.shape[1] != mask.shape[0]:
        raise KernelError("mask length does not match feature map width")
    if not mask.any():
        raise KernelError("empty pool")
    masked = np.where(mask[None, :], feature_map, -np.inf)
    argmax = masked.argmax(axis=1)
    rows = np.arange(feature_map.shape[0])
    out = feature_map[rows, argmax]

    def backward(upstream: np.ndarray) -> np.ndarray:
        dmap = np.zeros_like(feature_map)
        dmap[rows, argmax] = upstream
        return dmap

    return out, backward


def avgpool(x: np.ndarray, true_length: int):
    """Mean over the first `true_length` rows; padding rows are excluded."""
    if true_length < 1:
        raise KernelError("avgpool needs at least one real row")
    out = x[:true_length].mean(axis=0)

    def backward(upstream: np.ndarray) -> np.ndarray:
        dx = np.zeros_like(x)
        dx[:true_length] = upstream / true_length
        return dx

    return out, backward


def attention_pool(x: np.ndarray, attention: Parameter, true_length: int):
    """Softmax-weighted average of the real rows, weights from a learned vector."""
    if true_length < 1:
        raise KernelError("attention_pool needs at least one real row")
    rows = x[:true_length]
    logits = rows @ attention.value
    shifted = logits - logits.max()
    weights = np.exp(shifted)
    weights /= weights.sum()
    out = weights @ rows

    def backward(upstream: np.ndarray) -> np.ndarray:
        dweights = rows @ upstream
        dlogits = weights * (dweights - weights @ dweights)
        drows = np.outer(weights, upstream) + np.outer(dlogits, attention.value)
        attention.grad += rows.T @ dlogits
        dx = np.zeros_like(x)
        dx[:true_length] = drows
        return dx

    return out, backward


def batchnorm(
    x: np.ndarray,
    gamma: Parameter,
    beta: Parameter,
    state: BatchNormState,
    mode: str,
):
    """Normalize per feature over the batch axis (rows), then scale and shift.

    Train mode uses batch statistics and updates the running ones; infer mode
    uses the running statistics and is a pure elementwise transform.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "train":
        if x.shape[0] < 2:
            raise KernelError("batchnorm train mode needs batch size >= 2")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + state.eps)
        xhat = (x - mean) * inv_std
        out = gamma.value * xhat + beta.value
        m = state.momentum
        state.running_mean = m * state.running_mean + (1.0 - m) * mean
        state.running_var = m * state.running_var + (1.0 - m) * var

        def backward(upstream: np.ndarray) -> np.ndarray:
            n = x.shape[0]
            gamma.grad += (upstream * xhat).sum(axis=0)
            beta.grad += upstream.sum(axis=0)
            dxhat = upstream * gamma.value
            return (
                inv_std
                / n
                * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            )

        return out, backward

    inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
    xhat = (x - state.running_mean) * inv_std
    out = gamma.value * xhat + beta.value

    def backward(upstream: np.ndarray) -> np.ndarray:
        gamma.grad += (upstream * xhat).sum(axis=0)
        beta.grad += upstream.sum(axis=0)
        return upstream * gamma.value * inv_std

    return out, backward


def cosine(a: np.ndarray, b: np.ndarray):
    """Cosine similarity in [-1, 1]; exactly 1.0 for bitwise-identical inputs."""
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise KernelError("degenerate embedding")
    if np.array_equal(a, b):
        # sqrt(x)**2 can differ from x by an ulp; identical vectors must
        # score exactly 1.0, so skip the division.
        sim = 1.0
    else:
        sim = float(np.clip(a @ b / (norm_a * norm_b), -1.0, 1.0))

    def backward(upstream: float):
        da = upstream * (b / (norm_a * norm_b) - sim * a / (norm_a * norm_a))
        db = upstream * (a / (norm_a * norm_b) - sim * b / (norm_b * norm_b))
        return da, db

    return sim, backward


def hinge_loss(s_pos: float, s_neg: float, margin: float):
    """Ranking loss max(0, margin - s_pos + s_neg); subgradient 0 at the kink."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    raw = margin - s_pos + s_neg
    loss = max(0.0, raw)
    active = raw > 0.0

    def backward(upstream: float):
        if active:
            return -upstream, upstream
        return 0.0, 0.0

    return loss, backward


def grad_check(
    fn: Callable[[list[np.ndarray]], tuple[float, list[np.ndarray]]],
    arrays: list[np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Compare analytic gradients of a scalar function to central differences.

    `fn` takes the array list and returns ``(scalar, gradients)`` with one
    gradient per array. Arrays are perturbed in place and restored. Returns
    the max relative error, denominated by max(|analytic|, |numeric|, 1e-8).
    """
    _, grads = fn(arrays)
    max_err = 0.0
    for arr, grad in zip(arrays, grads):
        flat = arr.ravel()
        gflat = np.asarray(grad).ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            plus, _ = fn(arrays)
            flat[i] = orig - eps
            minus, _ = fn(arrays)
            flat[i] = orig
            numeric = (plus - minus) / (2.0 * eps)
            denom = max(abs(gflat[i]), abs(numeric), 1e-8)
            max_err = max(max_err, abs(gflat[i] - numeric) / denom)
    return max_err
