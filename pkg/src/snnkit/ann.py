"""Constrained ANN training and ANN-to-SNN conversion.

The ANN mirrors the spiking network's layer stack with ReLU activations, no
bias terms anywhere, average pooling, and dropout as the only regularizer.
Backpropagation is hand-coded. Conversion copies the trained weights,
calibrates one firing threshold per layer from the percentile of its input
distribution (collected front-to-back while earlier layers already spike),
scales the thresholds, and starts every leak at 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import CalibrationError, ConfigurationError, ContractViolation, NumericalError, TrainingError
from .network import AvgPool, Conv, Dropout, NetworkSpec
from .neuron import LayerParams, NeuronState, lif_step


@dataclass
class AnnParams:
    """Trained bias-free weights, one tensor per weighted layer."""

    weights: list
    dropout_rates: tuple = ()


@dataclass
class CalibrationConfig:
    percentile: float = 99.7
    num_images: int = 512
    scaling: float = 0.4
    calib_timesteps: int = 100
    calib_leak: float = 1.0
    calib_encoding: str = "direct"

    def __post_init__(self):
        if not 0.0 < self.percentile <= 100.0:
            raise ConfigurationError(f"percentile must lie in (0,100], got {self.percentile}")
        if not self.scaling > 0:
            raise ConfigurationError(f"threshold scaling must be positive, got {self.scaling}")


@dataclass
class AnnTrainConfig:
    epochs: int = 30
    base_lr: float = 0.01
    batch_size: int = 64
    momentum: float = 0.9


def default_lr_schedule(epochs: int, base_lr: float = 0.01):
    """Initial LR decayed by 0.1 at 60%, 80%, and 90% of the epoch budget."""
    marks = sorted({int(epochs * f) for f in (0.6, 0.8, 0.9)})

    def lr_at(epoch: int) -> float:
        lr = base_lr
        for m in marks:
            if epoch >= m > 0:
                lr *= 0.1
        return lr

    return lr_at


def init_ann(spec: NetworkSpec, rng: np.random.Generator) -> AnnParams:
    """Fan-in variance-scaling uniform initialization."""
    weights = []
    for shape in spec.weight_shapes():
        fan_in = int(np.prod(shape[1:]))
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=shape).astype(np.float32))
    dropout = tuple(l.rate for l in spec.layers if isinstance(l, Dropout))
    return AnnParams(weights=weights, dropout_rates=dropout)


def ann_forward(spec: NetworkSpec, weights: list, x: np.ndarray, train: bool = False, rng=None):
    """ReLU network forward pass; returns logits and the backward cache."""
    batch = x.shape[0]
    cache = []
    widx = spec.weighted_indices()
    feature = spec.feature_shapes()
    w_i = 0
    for li, layer in enumerate(spec.layers):
        if isinstance(layer, AvgPool):
            cache.append(("pool", layer.window))
            x = numerics.avgpool2d(x, layer.window)
        elif isinstance(layer, Dropout):
            if train and layer.rate > 0.0:
                mask = (rng.random(x.shape) >= layer.rate).astype(x.dtype)
                x = x * mask / (1.0 - layer.rate)
                cache.append(("dropout", mask, layer.rate))
            else:
                cache.append(("dropout", None, layer.rate))
        elif isinstance(layer, Conv):
            cols = numerics.im2col(x, layer.kernel, layer.stride, layer.padding)
            pre = numerics.conv_from_cols(weights[w_i], cols, feature[li][1:])
            out = np.maximum(pre, 0.0)
            cache.append(("conv", x.shape, cols, pre > 0, layer))
            x = out
            w_i += 1
        else:
            flat = x.reshape(batch, -1)
            pre = flat @ weights[w_i].T
            last = li == widx[-1]
            cache.append(("fc", x.shape, flat, None if last else pre > 0))
            x = pre if last else np.maximum(pre, 0.0)
            w_i += 1
    return x, cache


def ann_backward(spec: NetworkSpec, weights: list, cache: list, dlogits: np.ndarray):
    """Hand-coded backward pass; returns one gradient per weighted layer."""
    grads = [None] * len(weights)
    w_i = len(weights)
    d = dlogits
    for entry in reversed(cache):
        kind = entry[0]
        if kind == "pool":
            d = numerics.avgpool2d_input_grad(d, entry[1])
        elif kind == "dropout":
            mask, rate = entry[1], entry[2]
            if mask is not None:
                d = d * mask / (1.0 - rate)
        elif kind == "conv":
            _, in_shape, cols, relu_mask, layer = entry
            w_i -= 1
            d = d * relu_mask
            b, co = d.shape[0], d.shape[1]
            dmat = np.einsum("bol,bil->oi", d.reshape(b, co, -1), cols)
            grads[w_i] = dmat.reshape(weights[w_i].shape)
            d = numerics.conv2d_input_grad(d, weights[w_i], in_shape, layer.stride, layer.padding)
        else:
            _, in_shape, flat, relu_mask = entry
            w_i -= 1
            if relu_mask is not None:
                d = d * relu_mask
            grads[w_i] = d.T @ flat
            d = (d @ weights[w_i]).reshape(in_shape)
    return grads


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean CE loss (computed in float64) and its gradient w.r.t. the logits."""
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    loss = -np.log(np.maximum(probs[np.arange(n), labels], 1e-300)).mean()
    dlogits = probs
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), (dlogits / n).astype(logits.dtype)


def ann_accuracy(spec: NetworkSpec, params: AnnParams, images: np.ndarray, labels: np.ndarray, batch: int = 256) -> float:
    hits = 0
    for s in range(0, len(images), batch):
        logits, _ = ann_forward(spec, params.weights, images[s : s + batch])
        hits += int((np.argmax(logits, axis=1) == labels[s : s + batch]).sum())
    return 100.0 * hits / len(images)


def ann_train(
    spec: NetworkSpec,
    images: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    rng: np.random.Generator,
    lr_schedule=None,
    batch_size: int = 64,
    momentum: float = 0.9,
    eval_set=None,
):
    """SGD-with-momentum training of the constrained ReLU network.

    Returns (AnnParams, history) where history holds the per-epoch mean loss
    and, when an eval set is supplied, test accuracy.
    """
    params = init_ann(spec, rng)
    if lr_schedule is None:
        lr_schedule = default_lr_schedule(epochs)
    velocity = [np.zeros_like(w) for w in params.weights]
    history = {"loss": [], "accuracy": []}
    n = len(images)
    for epoch in range(epochs):
        lr = lr_schedule(epoch)
        order = rng.permutation(n)
        losses = []
        for s in range(0, n, batch_size):
            idx = order[s : s + batch_size]
            try:
                logits, cache = ann_forward(spec, params.weights, images[idx], train=True, rng=rng)
                loss, dlogits = softmax_cross_entropy(logits, labels[idx])
            except NumericalError as exc:
                raise TrainingError(f"ANN training diverged at epoch {epoch}: {exc}") from exc
            if not math.isfinite(loss):
                raise TrainingError(f"ANN training diverged at epoch {epoch}: loss={loss}")
            grads = ann_backward(spec, params.weights, cache, dlogits)
            for w, g, v in zip(params.weights, grads, velocity):
                v *= momentum
                v += g
                w -= lr * v
            losses.append(loss)
        history["loss"].append(float(np.mean(losses)))
        if eval_set is not None:
            history["accuracy"].append(ann_accuracy(spec, params, eval_set[0], eval_set[1]))
    return params, history


def percentile_nearest_rank(values: np.ndarray, p: float) -> float:
    """Nearest-rank percentile of a sample: the ceil(p/100 * n)-th order statistic."""
    values = np.asarray(values).ravel()
    n = values.size
    if n == 0:
        raise CalibrationError("percentile of an empty sample")
    k = max(1, math.ceil(p / 100.0 * n))
    return float(np.partition(values, k - 1)[k - 1])


class _TopCollector:
    """Streaming keeper of the top-m values of a sample of known total size.

    The nearest-rank percentile at rank k equals the smallest of the largest
    m = n - k + 1 values, so only that many need to be held in memory.
    """

    def __init__(self, total_n: int, p: float):
        if total_n <= 0:
            raise CalibrationError("percentile collector needs a positive sample size")
        k = max(1, math.ceil(p / 100.0 * total_n))
        self.keep = total_n - k + 1
        self.total_n = total_n
        self.seen = 0
        self._pending = []
        self._pending_size = 0
        self._compact_at = max(self.keep, 4_000_000)

    def add(self, chunk: np.ndarray):
        chunk = np.asarray(chunk, dtype=np.float32).ravel()
        self.seen += chunk.size
        self._pending.append(chunk)
        self._pending_size += chunk.size
        if self._pending_size > self._compact_at:
            self._compact()

    def _compact(self):
        merged = np.concatenate(self._pending)
        if merged.size > self.keep:
            merged = np.partition(merged, merged.size - self.keep)[-self.keep :]
        self._pending = [merged]
        self._pending_size = merged.size

    def result(self) -> float:
        if self.seen != self.total_n:
            raise ContractViolation(f"collector saw {self.seen} values, expected {self.total_n}")
        self._compact()
        return float(self._pending[0].min())


def _simulate_layer_inputs(spec, weights, thresholds, upto, images, cfg, chunk=64):
    """Yield the per-timestep input currents arriving at weighted layer ``upto``.

    Layers before ``upto`` run as standard multi-spike LIF neurons with the
    already-calibrated thresholds and unit leak, driven by direct encoding.
    """
    widx = spec.weighted_indices()
    feature = spec.feature_shapes()
    for s in range(0, len(images), chunk):
        x0 = images[s : s + chunk]
        batch = len(x0)
        states = [NeuronState.zeros((batch,) + feature[widx[i]]) for i in range(upto)]
        prev = [np.zeros_like(st.membrane) for st in states]
        for _ in range(cfg.calib_timesteps):
            x = x0
            w_i = 0
            for li, layer in enumerate(spec.layers):
                if isinstance(layer, AvgPool):
                    x = numerics.avgpool2d(x, layer.window)
                    continue
                if isinstance(layer, Dropout):
                    continue  # inactive outside training
                if isinstance(layer, Conv):
                    current = numerics.conv2d(x, weights[w_i], layer.stride, layer.padding)
                else:
                    current = x.reshape(batch, -1) @ weights[w_i].T
                if w_i == upto:
                    yield current
                    break
                p = LayerParams(weights[w_i], thresholds[w_i], cfg.calib_leak)
                states[w_i], spikes = lif_step(states[w_i], p, current, prev[w_i])
                prev[w_i] = spikes
                x = spikes
                w_i += 1


def calibrate_thresholds(ann: AnnParams, spec: NetworkSpec, sample_images: np.ndarray, cfg: CalibrationConfig):
    """Sequential front-to-back percentile calibration of per-layer thresholds."""
    if len(sample_images) != cfg.num_images:
        raise ConfigurationError(
            f"calibration expects {cfg.num_images} sample images, got {len(sample_images)}"
        )
    widx = spec.weighted_indices()
    counts = spec.neuron_counts()
    thresholds = []
    for l in range(len(widx)):
        total = counts[l] * len(sample_images) * cfg.calib_timesteps
        collector = _TopCollector(total, cfg.percentile)
        for current in _simulate_layer_inputs(spec, ann.weights, thresholds, l, sample_images, cfg):
            collector.add(current)
        value = collector.result()
        if not value > 0:
            raise CalibrationError(
                f"layer {l} received a degenerate input distribution (percentile {value}); "
                "earlier layers may never spike"
            )
        thresholds.append(value)
    return thresholds


def convert(ann: AnnParams, thresholds: list, cfg: CalibrationConfig):
    """Copy ANN weights into spiking layers with scaled thresholds and unit leak."""
    if len(thresholds) != len(ann.weights):
        raise ConfigurationError("one calibrated threshold per weighted layer is required")
    return [
        LayerParams(weights=w.copy(), threshold=cfg.scaling * v, leak=1.0)
        for w, v in zip(ann.weights, thresholds)
    ]
