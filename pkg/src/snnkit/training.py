"""Spike-timing-dependent training: hybrid loss, BPTT gradients, optimizer.

The loss couples two softmaxes, one over the output layer's accumulated
membrane and one over the negated spike times. Weight updates for the output
layer follow the exact membrane path; the output threshold is trained
through a boxcar approximation of the spike-time derivative; hidden-layer
weights, thresholds, and leaks are trained with the triangular surrogate,
applied per timestep, while the membrane adjoint carried backward in time
(through the leak term) drives the propagation into lower layers. The gate
booleans (reset and spike history) are constants during backprop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import ConfigurationError, ContractViolation, TrainingError
from .network import (
    SINGLE_SPIKE,
    AvgPool,
    Conv,
    Dropout,
    NetworkSpec,
    TemporalTrace,
    evaluate,
    forward,
)
from .neuron import TRAIN, LayerParams, OutputState, surrogate_grad


@dataclass
class TrainConfig:
    lr: float = 1e-4
    lr_decay: float = 0.1
    lr_decay_every: int = 10
    surrogate_gain: float = 0.3
    spike_time_band: float = 0.2
    epochs: int = 20
    batch_size: int = 32
    momentum: float = 0.0
    leak_min: float = 0.0
    leak_max: float = 1.0
    threshold_floor: float = 1e-3
    # Relative step sizes for the shared per-layer threshold and leak. Their
    # gradients are sums over every neuron in a layer, so they move orders of
    # magnitude faster than individual weights at the same rate; scaling them
    # down keeps the joint optimization stable when the weight rate is raised.
    threshold_lr_scale: float = 1.0
    leak_lr_scale: float = 1.0
    # Return the parameters from the best-evaluating epoch instead of the last.
    keep_best: bool = False

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.lr}")
        if not self.surrogate_gain > 0:
            raise ConfigurationError(f"surrogate gain must be positive, got {self.surrogate_gain}")
        if not self.spike_time_band > 0:
            raise ConfigurationError(f"spike-time band must be positive, got {self.spike_time_band}")


@dataclass
class HybridLossResult:
    """Loss value with both softmaxes and their one-hot-residual gradients."""

    loss: float
    u_softmax: np.ndarray
    t_softmax: np.ndarray
    grad_u: np.ndarray
    grad_t: np.ndarray
    per_sample: np.ndarray


@dataclass
class GradientSet:
    """Per-weighted-layer gradients, batch-averaged."""

    weight: list
    threshold: list
    leak: list


def _log_softmax(v: np.ndarray) -> np.ndarray:
    shifted = v - v.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def hybrid_loss(output: OutputState, label_onehot: np.ndarray) -> HybridLossResult:
    """Cross entropy over the product of membrane and spike-time softmaxes."""
    if np.any(output.spike_time < 1):
        raise ContractViolation("output spike times are not fully populated; run all T steps first")
    y = np.asarray(label_onehot, dtype=np.float64)
    u = np.asarray(output.membrane, dtype=np.float64)
    t = np.asarray(output.spike_time, dtype=np.float64)
    log_u = _log_softmax(u)
    log_t = _log_softmax(-t)
    per_sample = -(y * (log_u + log_t)).sum(axis=-1)
    u_soft = np.exp(log_u)
    t_soft = np.exp(log_t)
    return HybridLossResult(
        loss=float(per_sample.mean()),
        u_softmax=u_soft,
        t_softmax=t_soft,
        grad_u=u_soft - y,
        grad_t=t_soft - y,
        per_sample=np.atleast_1d(per_sample),
    )


def _heaviside(x: np.ndarray) -> np.ndarray:
    return (x > 0).astype(np.float64)


def spike_time_threshold_grad(output_membranes: list, threshold: float, band: float, total_timesteps: int) -> np.ndarray:
    """Boxcar approximation of d(spike time)/d(threshold) for the output layer.

    Sums t * (H(a) * (|b| < band) - H(b) * (|a| < band)) over t = 1..T-1 with
    a = U^t - V and b = V - U^{t-1}, plus T * (|V - U^T| < band) for the
    forced-fire step.
    """
    if len(output_membranes) != total_timesteps:
        raise ContractViolation("need one recorded output membrane per timestep")
    v = float(threshold)
    u_prev = np.zeros_like(np.asarray(output_membranes[0], dtype=np.float64))
    acc = np.zeros_like(u_prev)
    for t in range(1, total_timesteps):
        u_t = np.asarray(output_membranes[t - 1], dtype=np.float64)
        a = u_t - v
        b = v - u_prev
        acc += t * (_heaviside(a) * (np.abs(b) < band) - _heaviside(b) * (np.abs(a) < band))
        u_prev = u_t
    c = v - np.asarray(output_membranes[-1], dtype=np.float64)
    acc += total_timesteps * (np.abs(c) < band)
    return acc


def output_layer_grads(trace: TemporalTrace, loss: HybridLossResult, params: list, band: float):
    """Exact-path weight gradient and boxcar threshold gradient for the output layer."""
    last = len(params) - 1
    batch = trace.layer_inputs[last][0].shape[0]
    x_sum = np.zeros_like(trace.layer_inputs[last][0].reshape(batch, -1))
    for x in trace.layer_inputs[last]:
        x_sum += x.reshape(batch, -1)
    grad_u = loss.grad_u.reshape(batch, -1)
    d_weights = np.einsum("bn,bf->nf", grad_u, x_sum) / batch
    dtdv = spike_time_threshold_grad(trace.output_membranes, params[last].threshold, band, trace.total_timesteps)
    grad_t = loss.grad_t.reshape(batch, -1)
    d_threshold = float((grad_t * dtdv).sum() / batch)
    return d_weights.astype(params[last].weights.dtype), d_threshold


def _reverse_transforms(spec: NetworkSpec, lo: int, hi: int, deltas: list, trace: TemporalTrace, target_shape):
    """Backpropagate per-timestep adjoints through the descriptors in (lo, hi)."""
    out = deltas
    for li in range(hi - 1, lo, -1):
        layer = spec.layers[li]
        if isinstance(layer, Dropout):
            mask = trace.dropout_masks[li]
            if mask is not None:
                out = [d * mask / (1.0 - layer.rate) for d in out]
        elif isinstance(layer, AvgPool):
            out = [numerics.avgpool2d_input_grad(d, layer.window) for d in out]
    return [d.reshape(d.shape[0], *target_shape) for d in out]


def bptt_hidden_grads(trace: TemporalTrace, params: list, loss: HybridLossResult, config: TrainConfig) -> GradientSet:
    """Hidden-layer gradients via backpropagation through time.

    For each hidden layer the per-timestep adjoint of the spike output is
    converted through the surrogate into a z-adjoint; parameter gradients
    use that local z-adjoint, while the membrane adjoint (z-adjoint / V plus
    the leak-carried future term) is what flows down to the layer below.
    """
    if trace.mode != TRAIN:
        raise ContractViolation("hidden-layer BPTT needs a train-mode trace")
    spec = trace.spec
    widx = spec.weighted_indices()
    n_hidden = len(widx) - 1
    total_t = trace.total_timesteps
    batch = loss.grad_u.reshape(-1, spec.num_classes).shape[0]
    feature = spec.feature_shapes()

    grads = GradientSet(weight=[None] * n_hidden, threshold=[0.0] * n_hidden, leak=[0.0] * n_hidden)

    # Adjoint of the input arriving at the layer above, per timestep. The
    # output accumulator makes it the same vector at every t.
    grad_u = loss.grad_u.reshape(batch, -1).astype(params[-1].weights.dtype, copy=False)
    d_flat = (grad_u @ params[-1].weights).reshape(trace.layer_inputs[len(widx) - 1][0].shape)
    upper_input_deltas = [d_flat] * total_t
    upper_wi = len(widx) - 1

    for h in range(n_hidden - 1, -1, -1):
        if not trace.norm_potentials[h]:
            raise ContractViolation(f"trace has no recorded state for hidden layer {h}")
        out_shape = feature[widx[h]]
        d_spikes = _reverse_transforms(spec, widx[h], widx[upper_wi], upper_input_deltas, trace, out_shape)

        p = params[h]
        v = float(p.threshold)
        d_w = np.zeros_like(p.weights)
        d_v = 0.0
        d_leak = 0.0
        d_membrane_next = np.zeros((batch,) + tuple(out_shape), dtype=p.weights.dtype)
        input_deltas = [None] * total_t
        layer = spec.layers[widx[h]]

        for t in range(total_t, 0, -1):
            z_t = trace.norm_potentials[h][t - 1]
            d_z = d_spikes[t - 1] * surrogate_grad(z_t, config.surrogate_gain)
            d_membrane = d_z / v + p.leak * d_membrane_next

            x_t = trace.layer_inputs[h][t - 1]
            u_t = trace.membranes[h][t - 1]
            u_prev = trace.membranes[h][t - 2] if t > 1 else np.zeros_like(u_t)
            gate = trace.reset_gates[h][t - 1].astype(d_z.dtype)

            if isinstance(layer, Conv):
                d_w += numerics.conv2d_weight_grad(d_z / v, x_t, layer.kernel, layer.stride, layer.padding)
                input_deltas[t - 1] = numerics.conv2d_input_grad(
                    d_membrane, p.weights, x_t.shape, layer.stride, layer.padding
                )
            else:
                flat = x_t.reshape(batch, -1)
                d_w += np.einsum("bo,bf->of", (d_z / v).reshape(batch, -1), flat)
                input_deltas[t - 1] = (d_membrane.reshape(batch, -1) @ p.weights).reshape(x_t.shape)

            d_v += float((d_z * (-v * gate - u_t)).sum() / (v * v))
            d_leak += float((d_z * u_prev).sum() / v)
            d_membrane_next = d_membrane

        grads.weight[h] = d_w / batch
        grads.threshold[h] = d_v / batch
        grads.leak[h] = d_leak / batch
        upper_input_deltas = input_deltas
        upper_wi = h

    return grads


def backward(trace: TemporalTrace, params: list, loss: HybridLossResult, config: TrainConfig) -> GradientSet:
    """Full gradient set: hidden layers via BPTT plus the output layer paths."""
    hidden = bptt_hidden_grads(trace, params, loss, config)
    d_w_out, d_v_out = output_layer_grads(trace, loss, params, config.spike_time_band)
    return GradientSet(
        weight=hidden.weight + [d_w_out],
        threshold=hidden.threshold + [d_v_out],
        leak=hidden.leak + [0.0],  # output accumulator has no leak
    )


def lr_at(config: TrainConfig, epoch: int) -> float:
    return config.lr * config.lr_decay ** (epoch // config.lr_decay_every)


def optimizer_step(params: list, grads: GradientSet, config: TrainConfig, epoch: int, velocity=None):
    """One SGD update of weights, thresholds, and leaks with clamping.

    Returns (new_params, velocity); velocity stays None when momentum is 0.
    """
    for g in grads.weight:
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite weight gradient")
    if not all(math.isfinite(g) for g in grads.threshold + grads.leak):
        raise TrainingError("non-finite threshold or leak gradient")

    lr = lr_at(config, epoch)
    if config.momentum > 0.0:
        if velocity is None:
            velocity = [np.zeros_like(p.weights) for p in params]
        for v, g in zip(velocity, grads.weight):
            v *= config.momentum
            v += g
        weight_steps = velocity
    else:
        weight_steps = grads.weight

    out = []
    last = len(params) - 1
    for i, p in enumerate(params):
        w = (p.weights - lr * weight_steps[i]).astype(p.weights.dtype)
        v = max(p.threshold - lr * config.threshold_lr_scale * grads.threshold[i], config.threshold_floor)
        if i == last:
            leak = p.leak
        else:
            leak = p.leak - lr * config.leak_lr_scale * grads.leak[i]
            leak = min(max(leak, config.leak_min), config.leak_max)
        out.append(LayerParams(weights=w, threshold=float(v), leak=float(leak)))
    return out, velocity


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    return np.eye(num_classes, dtype=np.float64)[np.asarray(labels)]


def train_snn(
    spec: NetworkSpec,
    params: list,
    images: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    encode,
    rng: np.random.Generator,
    neuron_model: str = SINGLE_SPIKE,
    eval_set=None,
    eval_encode=None,
):
    """Fine-tune converted parameters with the hybrid loss over T timesteps.

    ``encode`` maps an image batch to a SpikeInputSequence. History records
    the per-epoch mean train loss and, when an eval set is given, infer-mode
    test accuracy after each epoch.
    """
    params = list(params)
    n = len(images)
    history = {"loss": [], "accuracy": []}
    velocity = None
    best = (-1.0, params)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for s in range(0, n, config.batch_size):
            idx = order[s : s + config.batch_size]
            encoded = encode(images[idx])
            out, trace = forward(spec, params, encoded, mode=TRAIN, rng=rng, neuron_model=neuron_model)
            loss = hybrid_loss(out, one_hot(labels[idx], spec.num_classes))
            if not math.isfinite(loss.loss):
                raise TrainingError(f"SNN training diverged at epoch {epoch}: loss={loss.loss}")
            grads = backward(trace, params, loss, config)
            params, velocity = optimizer_step(params, grads, config, epoch, velocity)
            losses.append(loss.loss)
        history["loss"].append(float(np.mean(losses)))
        if eval_set is not None:
            acc = evaluate(
                spec, params, eval_set[0], eval_set[1], eval_encode or encode, neuron_model=neuron_model
            )
            history["accuracy"].append(acc)
            if acc > best[0]:
                best = (acc, params)
    if config.keep_best and eval_set is not None and best[0] >= 0:
        params = best[1]
    return params, history


@dataclass
class FdProbe:
    """One finite-difference comparison against the analytic gradient."""

    analytic: float
    numeric: float
    rel_error: float
    boundary: bool
    component: str
    index: object


def _float64_params(params: list) -> list:
    return [LayerParams(p.weights.astype(np.float64), p.threshold, p.leak) for p in params]


def _float64_encoded(encoded):
    from .encoding import SpikeInputSequence

    return SpikeInputSequence(
        mode=encoded.mode,
        total_timesteps=encoded.total_timesteps,
        analog_frame=None if encoded.analog_frame is None else encoded.analog_frame.astype(np.float64),
        spikes=None if encoded.spikes is None else encoded.spikes.astype(np.float64),
    )


def _spike_signature(trace: TemporalTrace):
    spikes = tuple(arr.tobytes() for layer in trace.hidden_spikes for arr in layer)
    return spikes, trace.output_state.spike_time.tobytes()


def _perturbed(params: list, component: str, index, delta: float) -> list:
    out = [LayerParams(p.weights.copy(), p.threshold, p.leak) for p in params]
    if component == "weight":
        layer, flat = index
        out[layer].weights.flat[flat] += delta
    elif component == "threshold":
        out[index] = LayerParams(out[index].weights, out[index].threshold + delta, out[index].leak)
    elif component == "leak":
        out[index] = LayerParams(out[index].weights, out[index].threshold, out[index].leak + delta)
    else:
        raise ConfigurationError(f"unknown component {component!r}")
    return out


def finite_difference_check(
    spec: NetworkSpec,
    params: list,
    encoded,
    label_onehot: np.ndarray,
    component: str,
    index,
    eps: float = 1e-4,
    config: TrainConfig | None = None,
    neuron_model: str = SINGLE_SPIKE,
) -> FdProbe:
    """Central-difference probe of one parameter against the analytic gradient.

    The run is repeated at theta +/- eps; if any spike (hidden trains or
    output spike times) differs from the base run the probe is flagged as a
    boundary probe, since the loss is then comparing across a discrete jump.
    Everything runs in float64 so the difference quotient is clean.
    """
    cfg = config or TrainConfig()
    base_params = _float64_params(params)
    enc = _float64_encoded(encoded)

    def run(ps):
        out, trace = forward(
            spec, ps, enc, mode=TRAIN, rng=np.random.default_rng(0), neuron_model=neuron_model
        )
        loss = hybrid_loss(out, label_onehot)
        return loss, trace

    loss0, trace0 = run(base_params)
    grads = backward(trace0, base_params, loss0, cfg)
    if component == "weight":
        layer, flat = index
        analytic = float(grads.weight[layer].flat[flat])
    elif component == "threshold":
        analytic = float(grads.threshold[index])
    else:
        analytic = float(grads.leak[index])

    sig0 = _spike_signature(trace0)
    loss_hi, trace_hi = run(_perturbed(base_params, component, index, +eps))
    loss_lo, trace_lo = run(_perturbed(base_params, component, index, -eps))
    boundary = _spike_signature(trace_hi) != sig0 or _spike_signature(trace_lo) != sig0

    numeric = (loss_hi.per_sample.sum() - loss_lo.per_sample.sum()) / (2.0 * eps)
    numeric /= loss0.per_sample.size  # match the batch-mean convention of the analytic side
    rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
    return FdProbe(analytic, float(numeric), float(rel), boundary, component, index)
