"""
Feed-forward network assembled from a topology
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..errors import ContractViolation, NumericError, TopologyError
from . import layers as ops
from .topology import NetworkTopology

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]


@dataclass
class ForwardCache:
    """Per-layer caches of one forward pass, in layer order"""
    entries: List[Tuple[str, Any]] = field(default_factory=list)
    logits: Optional[np.ndarray] = None
    squeeze: bool = False


def init_weights(topology: NetworkTopology, seed: int) -> Params:
    """He-normal weights (std sqrt(2 / fan_in)) and zero biases"""
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in topology.param_shapes().items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=np.float32)
            continue
        fan_in = int(np.prod(shape[:-1]))
        std = np.float32(np.sqrt(2.0 / fan_in))
        params[name] = rng.standard_normal(shape, dtype=np.float32) * std
    return params


def _check_finite(array: np.ndarray, layer: str):
    if not np.all(np.isfinite(array)):
        raise NumericError("non-finite activation", layer=layer)


def forward_full(topology: NetworkTopology, params: Params, x: np.ndarray,
                 mode: str = "eval", rng: Optional[np.random.Generator] = None,
                 check_finite: bool = False) -> Tuple[np.ndarray, ForwardCache]:
    """Run every layer in order; returns class probabilities and the caches"""
    squeeze = x.ndim == 3
    batch = x[np.newaxis] if squeeze else x
    if batch.ndim != 4 or tuple(batch.shape[1:]) != topology.input_shape:
        raise TopologyError(
            f"input shape {x.shape} does not match topology input {topology.input_shape}")

    cache = ForwardCache(squeeze=squeeze)
    out = batch
    for layer in topology.layers:
        if layer.kind == "conv":
            out, conv_cache = ops.conv2d_forward(
                out, layer, params[f"{layer.name}.weight"], params[f"{layer.name}.bias"])
            cache.entries.append((layer.name, conv_cache))
        elif layer.kind == "maxpool":
            out, pool_cache = ops.maxpool_forward(out, layer)
            cache.entries.append((layer.name, pool_cache))
        elif layer.kind == "flatten":
            cache.entries.append((layer.name, out.shape))
            out = out.reshape(out.shape[0], -1)
        elif layer.kind == "dense":
            out, dense_cache = ops.dense_forward(
                out, params[f"{layer.name}.weight"], params[f"{layer.name}.bias"])
            cache.entries.append((layer.name, dense_cache))
        elif layer.kind == "dropout":
            out, mask = ops.dropout(out, layer.dropout_rate, mode, rng)
            cache.entries.append((layer.name, mask))

        if layer.activation == "relu":
            cache.entries.append((f"{layer.name}.relu", out))
            out = ops.relu(out)
        if check_finite:
            _check_finite(out, layer.name)

    cache.logits = out
    probs = ops.softmax(out)
    return (probs[0] if squeeze else probs), cache


def backward_full(topology: NetworkTopology, params: Params, cache: ForwardCache,
                  grad_logits: np.ndarray, check_finite: bool = False) -> Params:
    """Backpropagate a logits gradient; returns gradients keyed like params"""
    g = grad_logits[np.newaxis] if cache.squeeze else grad_logits
    if cache.logits is None or g.shape != cache.logits.shape:
        raise ContractViolation(
            f"grad_logits {grad_logits.shape} does not match the cached forward pass")

    grads: Params = {}
    entries = list(cache.entries)
    for layer in reversed(topology.layers):
        if layer.activation == "relu":
            _, pre_activation = entries.pop()
            g = ops.relu_backward(g, pre_activation)
        _, entry = entries.pop()
        if layer.kind == "conv":
            weights = params[f"{layer.name}.weight"]
            g, grad_w, grad_b = ops.conv2d_backward(g, entry, weights, layer)
            grads[f"{layer.name}.weight"] = grad_w
            grads[f"{layer.name}.bias"] = grad_b
        elif layer.kind == "maxpool":
            g = ops.maxpool_backward(g, entry, layer)
        elif layer.kind == "flatten":
            g = g.reshape(entry)
        elif layer.kind == "dense":
            weights = params[f"{layer.name}.weight"]
            g, grad_w, grad_b = ops.dense_backward(g, entry, weights)
            grads[f"{layer.name}.weight"] = grad_w
            grads[f"{layer.name}.bias"] = grad_b
        elif layer.kind == "dropout":
            g = ops.dropout_backward(g, entry)
        if check_finite:
            _check_finite(g, layer.name)
    return {name: grads[name] for name in params}


class Network:
    """Topology plus parameters with batch helpers"""

    def __init__(self, topology: NetworkTopology, params: Optional[Params] = None,
                 seed: int = 0):
        self.topology = topology
        self.params = params if params is not None else init_weights(topology, seed)
        expected = topology.param_shapes()
        for name, shape in expected.items():
            if name not in self.params:
                raise ContractViolation(f"missing parameter {name}")
            if tuple(self.params[name].shape) != shape:
                raise ContractViolation(
                    f"parameter {name} has shape {self.params[name].shape}, expected {shape}")

    def predict_proba(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Eval-mode class probabilities for a stack of inputs, shape (N, 2)"""
        chunks = []
        for start in range(0, x.shape[0], batch_size):
            probs, _ = forward_full(self.topology, self.params, x[start:start + batch_size])
            chunks.append(probs)
        if not chunks:
            return np.zeros((0, 2), dtype=np.float32)
        return np.concatenate(chunks, axis=0)

    def positive_probability(self, x: np.ndarray) -> np.ndarray:
        return self.predict_proba(x)[:, 1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Class decisions; equal probabilities resolve to the negative class"""
        probs = self.predict_proba(x)
        return (probs[:, 1] > probs[:, 0]).astype(np.int64)

    def loss_and_grads(self, x: np.ndarray, labels: np.ndarray,
                       seed_seq: np.random.SeedSequence, shard_size: int = 8,
                       jobs: int = 1) -> Tuple[float, Params, np.ndarray]:
        """Mean batch loss, its gradients and train-mode predictions

        The batch is cut into fixed shards whose gradients are summed in shard
        order, so results do not depend on the number of workers.
        """
        n = x.shape[0]
        if n == 0:
            raise ContractViolation("empty batch")
        starts = list(range(0, n, shard_size))
        shard_seeds = seed_seq.spawn(len(starts))

        def run(index: int):
            start = starts[index]
            xs = x[start:start + shard_size]
            ys = labels[start:start + shard_size]
            rng = np.random.default_rng(shard_seeds[index])
            _, cache = forward_full(self.topology, self.params, xs, "train", rng,
                                    check_finite=True)
            loss, grad_logits = ops.softmax_cross_entropy(cache.logits, ys)
            weight = xs.shape[0] / n
            grads = backward_full(self.topology, self.params, cache,
                                  grad_logits * np.float32(weight), check_finite=True)
            preds = (cache.logits[:, 1] > cache.logits[:, 0]).astype(np.int64)
            return loss * weight, grads, preds

        if jobs > 1 and len(starts) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(run, range(len(starts))))
        else:
            results = [run(i) for i in range(len(starts))]

        total_loss = 0.0
        total: Params = {}
        preds = []
        for loss, grads, shard_preds in results:
            total_loss += loss
            preds.append(shard_preds)
            for name, g in grads.items():
                if name in total:
                    total[name] = total[name] + g
                else:
                    total[name] = g.copy()
        return total_loss, total, np.concatenate(preds)
