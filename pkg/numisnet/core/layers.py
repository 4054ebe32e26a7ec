"""
Numeric layer operations with explicit backward passes

Images are channel-last. Every op accepts either a single sample (H x W x C,
or a vector for dense layers) or a batch with a leading sample axis, and keeps
the dtype of its input so the same code serves float32 training and float64
gradient checks.
"""

import logging
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ContractViolation
from .topology import LayerSpec, layer_output_shape

logger = logging.getLogger(__name__)


class ConvCache(NamedTuple):
    input_shape: Tuple[int, ...]
    cols: np.ndarray
    out_hw: Tuple[int, int]
    squeeze: bool


class PoolCache(NamedTuple):
    input_shape: Tuple[int, ...]
    argmax: np.ndarray
    squeeze: bool


class DenseCache(NamedTuple):
    x: np.ndarray
    squeeze: bool


def _as_image_batch(x: np.ndarray) -> Tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[np.newaxis], True
    if x.ndim == 4:
        return x, False
    raise ContractViolation(f"expected H x W x C or N x H x W x C, got shape {x.shape}")


def _pad(x: np.ndarray, pad: int, value: float = 0.0) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)),
                  mode="constant", constant_values=value)


def _windows(xp: np.ndarray, k: int, s: int, out_h: int, out_w: int) -> np.ndarray:
    """Strided k x k views, shape (N, out_h, out_w, k, k, C)"""
    view = sliding_window_view(xp, (k, k), axis=(1, 2))
    view = view[:, ::s, ::s][:, :out_h, :out_w]
    return view.transpose(0, 1, 2, 4, 5, 3)


def conv2d_forward(x: np.ndarray, layer: LayerSpec, weights: np.ndarray,
                   bias: np.ndarray) -> Tuple[np.ndarray, ConvCache]:
    """Cross-correlate x with weights (k, k, C_in, D); no activation"""
    xb, squeeze = _as_image_batch(x)
    n, h, w, c = xb.shape
    k = layer.kernel_size
    if weights.shape[:3] != (k, k, c):
        raise ContractViolation(
            f"{layer.name}: weights {weights.shape} do not match kernel {k} and {c} input channels")
    depth = weights.shape[3]
    if bias.shape != (depth,):
        raise ContractViolation(f"{layer.name}: bias {bias.shape} does not match depth {depth}")
    out_h, out_w, _ = layer_output_shape(layer, (h, w, c))

    xp = _pad(xb, layer.padding)
    cols = _windows(xp, k, layer.stride, out_h, out_w).reshape(n * out_h * out_w, k * k * c)
    out = cols @ weights.reshape(k * k * c, depth) + bias
    out = out.reshape(n, out_h, out_w, depth)
    cache = ConvCache(xb.shape, cols, (out_h, out_w), squeeze)
    return (out[0] if squeeze else out), cache


def conv2d_backward(grad_out: np.ndarray, cache: ConvCache, weights: np.ndarray,
                    layer: LayerSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients with respect to input, weights and bias"""
    n, h, w, c = cache.input_shape
    out_h, out_w = cache.out_hw
    k, s, p = layer.kernel_size, layer.stride, layer.padding
    depth = weights.shape[3]
    g = grad_out[np.newaxis] if cache.squeeze else grad_out
    if g.shape != (n, out_h, out_w, depth):
        raise ContractViolation(
            f"{layer.name}: grad_out {grad_out.shape} does not match forward output "
            f"{(n, out_h, out_w, depth)}")

    g2d = g.reshape(-1, depth)
    w2d = weights.reshape(k * k * c, depth)
    grad_w = (cache.cols.T @ g2d).reshape(weights.shape)
    grad_b = g2d.sum(axis=0)

    dcols = (g2d @ w2d.T).reshape(n, out_h, out_w, k, k, c)
    dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=dcols.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + s * out_h:s, j:j + s * out_w:s, :] += dcols[:, :, :, i, j, :]
    grad_x = dxp[:, p:p + h, p:p + w, :]
    return (grad_x[0] if cache.squeeze else grad_x), grad_w, grad_b


def maxpool_forward(x: np.ndarray, layer: LayerSpec) -> Tuple[np.ndarray, PoolCache]:
    """Window maxima; ties resolve to the first element in row-major order"""
    xb, squeeze = _as_image_batch(x)
    n, h, w, c = xb.shape
    k = layer.kernel_size
    out_h, out_w, _ = layer_output_shape(layer, (h, w, c))
    xp = _pad(xb, layer.padding, value=-np.inf)
    windows = _windows(xp, k, layer.stride, out_h, out_w)
    # (N, oh, ow, C, k*k), flattened in (row, col) order
    flat = windows.transpose(0, 1, 2, 5, 3, 4).reshape(n, out_h, out_w, c, k * k)
    argmax = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, argmax[..., np.newaxis], axis=-1)[..., 0]
    cache = PoolCache(xb.shape, argmax, squeeze)
    return (out[0] if squeeze else out), cache


def maxpool_backward(grad_out: np.ndarray, cache: PoolCache, layer: LayerSpec) -> np.ndarray:
    """Route every output gradient to its recorded argmax"""
    n, h, w, c = cache.input_shape
    k, s, p = layer.kernel_size, layer.stride, layer.padding
    g = grad_out[np.newaxis] if cache.squeeze else grad_out
    if g.shape != cache.argmax.shape:
        raise ContractViolation(
            f"{layer.name}: grad_out {grad_out.shape} does not match forward output "
            f"{cache.argmax.shape}")
    _, out_h, out_w, _ = g.shape
    dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=g.dtype)
    for idx in range(k * k):
        i, j = divmod(idx, k)
        dxp[:, i:i + s * out_h:s, j:j + s * out_w:s, :] += np.where(cache.argmax == idx, g, 0)
    grad_x = dxp[:, p:p + h, p:p + w, :]
    return grad_x[0] if cache.squeeze else grad_x


def dense_forward(x: np.ndarray, weights: np.ndarray,
                  bias: np.ndarray) -> Tuple[np.ndarray, DenseCache]:
    """y = x W + b with weights stored fan_in x fan_out"""
    squeeze = x.ndim == 1
    xb = x[np.newaxis] if squeeze else x
    if xb.ndim != 2 or xb.shape[1] != weights.shape[0]:
        raise ContractViolation(
            f"dense input of length {x.shape[-1]} does not match fan-in {weights.shape[0]}")
    if bias.shape != (weights.shape[1],):
        raise ContractViolation(f"bias {bias.shape} does not match fan-out {weights.shape[1]}")
    out = xb @ weights + bias
    return (out[0] if squeeze else out), DenseCache(xb, squeeze)


def dense_backward(grad_out: np.ndarray, cache: DenseCache,
                   weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    g = grad_out[np.newaxis] if cache.squeeze else grad_out
    if g.shape != (cache.x.shape[0], weights.shape[1]):
        raise ContractViolation(
            f"grad_out {grad_out.shape} does not match dense output "
            f"{(cache.x.shape[0], weights.shape[1])}")
    grad_w = cache.x.T @ g
    grad_b = g.sum(axis=0)
    grad_x = g @ weights.T
    return (grad_x[0] if cache.squeeze else grad_x), grad_w, grad_b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Gradient passes only where x > 0; the subgradient at 0 is 0"""
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def dropout(x: np.ndarray, rate: float, mode: str,
            rng: Optional[np.random.Generator]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Inverted dropout; returns the output and the scaled mask (None when identity)"""
    if not 0.0 <= rate <= 1.0:
        raise ContractViolation(f"dropout rate must lie in [0, 1], got {rate}")
    if mode not in ("train", "eval"):
        raise ContractViolation(f"mode must be 'train' or 'eval', got '{mode}'")
    if mode == "eval" or rate == 0.0:
        return x, None
    if rate == 1.0:
        logger.warning("dropout rate 1 in train mode zeroes every activation")
        mask = np.zeros_like(x)
        return mask.copy(), mask
    if rng is None:
        raise ContractViolation("train-mode dropout needs an explicit random generator")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def dropout_backward(grad_out: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    return grad_out if mask is None else grad_out * mask


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray,
                          labels: Union[int, np.ndarray]) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient with respect to logits"""
    squeeze = logits.ndim == 1
    z = logits[np.newaxis] if squeeze else logits
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if z.ndim != 2 or y.shape != (z.shape[0],):
        raise ContractViolation(f"logits {logits.shape} do not match labels {y.shape}")
    if np.any((y < 0) | (y >= z.shape[1])):
        raise ContractViolation(f"labels must index one of {z.shape[1]} classes")
    n = z.shape[0]
    rows = np.arange(n)

    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    top = shifted.argmax(axis=1)
    # the max entry contributes exactly 1; summing the rest keeps tiny losses exact
    rest = e.copy()
    rest[rows, top] = 0
    log_norm = np.log1p(rest.sum(axis=1))
    losses = log_norm - shifted[rows, y]
    loss = float(losses.mean())

    grad = e / e.sum(axis=1, keepdims=True)
    grad[rows, y] -= 1
    grad /= n
    return loss, (grad[0] if squeeze else grad)
