"""Feedforward spiking-network assembly and the T-timestep forward pass.

A network is an ordered stack of descriptors (conv / avgpool / fully
connected / dropout). Conv and fully-connected descriptors are "weighted"
layers backed by spiking neurons; the final fully-connected layer is the
leak-free output accumulator. The forward pass runs the chosen encoder's
per-timestep inputs through the stack, recording the temporal trace needed
by backpropagation-through-time in train mode, or lightweight activity
counters in infer mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .encoding import DIRECT, HYBRID, SpikeInputSequence
from .errors import ConfigurationError, ContractViolation
from .neuron import INFER, TRAIN, NeuronState, OutputState, lif_step, output_step, single_spike_step

SINGLE_SPIKE = "single_spike"
MULTI_SPIKE = "multi_spike"


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class AvgPool:
    window: int


@dataclass(frozen=True)
class FullyConnected:
    units: int


@dataclass(frozen=True)
class Dropout:
    rate: float


_KIND = {Conv: "conv", AvgPool: "avgpool", FullyConnected: "fc", Dropout: "dropout"}


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer descriptors plus input shape, class count, and T."""

    layers: tuple
    input_shape: tuple
    num_classes: int
    total_timesteps: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        if self.total_timesteps < 1:
            raise ConfigurationError("total_timesteps must be at least 1")
        if not self.layers or not isinstance(self.layers[-1], FullyConnected):
            raise ConfigurationError("the last descriptor must be fully connected")
        if self.layers[-1].units != self.num_classes:
            raise ConfigurationError(
                f"output layer has {self.layers[-1].units} units but num_classes is {self.num_classes}"
            )
        for layer in self.layers:
            if isinstance(layer, Dropout) and not 0.0 <= layer.rate < 1.0:
                raise ConfigurationError(f"dropout rate must lie in [0,1), got {layer.rate}")
        self.feature_shapes()  # validates conv/pool arithmetic up front

    def feature_shapes(self) -> list:
        """Shape of the feature map after each descriptor."""
        shape = self.input_shape
        shapes = []
        for layer in self.layers:
            if isinstance(layer, Conv):
                if len(shape) != 3:
                    raise ConfigurationError(f"conv needs a (C,H,W) input, got {shape}")
                ho = numerics.conv_output_extent(shape[1], layer.kernel, layer.stride, layer.padding)
                wo = numerics.conv_output_extent(shape[2], layer.kernel, layer.stride, layer.padding)
                shape = (layer.out_channels, ho, wo)
            elif isinstance(layer, AvgPool):
                if len(shape) != 3:
                    raise ConfigurationError(f"avgpool needs a (C,H,W) input, got {shape}")
                if shape[1] % layer.window or shape[2] % layer.window:
                    raise ConfigurationError(
                        f"pool window {layer.window} does not divide feature map {shape[1:]}"
                    )
                shape = (shape[0], shape[1] // layer.window, shape[2] // layer.window)
            elif isinstance(layer, FullyConnected):
                shape = (layer.units,)
            shapes.append(shape)
        return shapes

    def weighted_indices(self) -> list:
        return [i for i, l in enumerate(self.layers) if isinstance(l, (Conv, FullyConnected))]

    def weight_shapes(self) -> list:
        """Kernel / matrix shape for each weighted layer, in network order."""
        shapes = []
        feature = [self.input_shape] + self.feature_shapes()
        for i in self.weighted_indices():
            fan_in_shape = feature[i]
            layer = self.layers[i]
            if isinstance(layer, Conv):
                shapes.append((layer.out_channels, fan_in_shape[0], layer.kernel, layer.kernel))
            else:
                shapes.append((layer.units, int(np.prod(fan_in_shape))))
        return shapes

    def neuron_counts(self) -> list:
        """Neuron count of each weighted layer's output."""
        feature = self.feature_shapes()
        return [int(np.prod(feature[i])) for i in self.weighted_indices()]

    def layer_names(self) -> list:
        names = []
        counts = {"conv": 0, "fc": 0}
        for i in self.weighted_indices():
            kind = _KIND[type(self.layers[i])]
            counts[kind] += 1
            names.append(f"{kind}{counts[kind]}")
        return names

    def to_dict(self) -> dict:
        out = []
        for layer in self.layers:
            d = {"type": _KIND[type(layer)]}
            d.update(vars(layer))
            out.append(d)
        return {
            "layers": out,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "total_timesteps": self.total_timesteps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        ctor = {"conv": Conv, "avgpool": AvgPool, "fc": FullyConnected, "dropout": Dropout}
        layers = []
        for entry in d["layers"]:
            entry = dict(entry)
            kind = entry.pop("type")
            if kind not in ctor:
                raise ConfigurationError(f"unknown layer type {kind!r}")
            layers.append(ctor[kind](**entry))
        return cls(
            layers=tuple(layers),
            input_shape=tuple(d["input_shape"]),
            num_classes=int(d["num_classes"]),
            total_timesteps=int(d["total_timesteps"]),
        )


@dataclass
class TemporalTrace:
    """Per-timestep state cached by the train-mode forward pass for BPTT.

    Indexing: hidden weighted layers are 0..H-1 in network order; the output
    layer's per-step inputs and membranes are kept separately. Every list
    over time has length T.
    """

    spec: "NetworkSpec"
    mode: str
    neuron_model: str
    total_timesteps: int
    layer_inputs: list        # [weighted_idx][t-1] input fed to that layer's weights
    membranes: list           # [hidden_idx][t-1] membrane after the step
    norm_potentials: list     # [hidden_idx][t-1]
    reset_gates: list         # [hidden_idx][t-1] gate used at that step (bool)
    hidden_spikes: list       # [hidden_idx][t-1]
    output_membranes: list    # [t-1] output accumulator after the step
    output_state: OutputState
    dropout_masks: list       # per descriptor index, None when absent


@dataclass
class ActivityCounters:
    """Spike and accumulate-event tallies collected during infer-mode forwards.

    ``accumulate_events[l]`` counts weight accumulations actually triggered at
    weighted layer l: one per nonzero input element read, times that layer's
    per-read fan-out (output channels for conv, output units for fc). For the
    first layer the analog t=1 pass of hybrid/direct inputs is tallied
    separately, since the energy model charges it as a dense MAC pass.
    """

    spec: NetworkSpec
    samples: int = 0
    output_spikes: list = field(default_factory=list)        # per hidden weighted layer
    accumulate_events: list = field(default_factory=list)    # per weighted layer
    first_layer_analog_events: int = 0
    per_neuron_spikes: list | None = None

    def __post_init__(self):
        n_weighted = len(self.spec.weighted_indices())
        if not self.output_spikes:
            self.output_spikes = [0] * (n_weighted - 1)
        if not self.accumulate_events:
            self.accumulate_events = [0] * n_weighted

    def track_per_neuron(self):
        shapes = [self.spec.feature_shapes()[i] for i in self.spec.weighted_indices()[:-1]]
        self.per_neuron_spikes = [np.zeros((0,) + s, dtype=np.int32) for s in shapes]
        return self


def reset(spec: NetworkSpec, batch: int = 1, dtype=np.float32):
    """Fresh zeroed neuron states for every weighted layer."""
    feature = spec.feature_shapes()
    widx = spec.weighted_indices()
    hidden = [NeuronState.zeros((batch,) + feature[i], dtype=dtype) for i in widx[:-1]]
    out = OutputState.zeros((batch, spec.num_classes), dtype=dtype)
    return hidden, out


def check_params(spec: NetworkSpec, params: list):
    expected = spec.weight_shapes()
    if len(params) != len(expected):
        raise ConfigurationError(f"expected {len(expected)} weighted layers, got {len(params)}")
    for i, (p, shape) in enumerate(zip(params, expected)):
        if tuple(p.weights.shape) != tuple(shape):
            raise ConfigurationError(
                f"weighted layer {i} has weights {p.weights.shape}, spec requires {shape}"
            )


def _sample_dropout_masks(spec: NetworkSpec, batch: int, rng, dtype):
    """One mask per dropout descriptor, held fixed across all T timesteps."""
    masks = [None] * len(spec.layers)
    feature = spec.feature_shapes()
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dropout) and layer.rate > 0.0:
            if rng is None:
                raise ConfigurationError("train-mode forward with dropout needs an RNG")
            shape = (batch,) + (feature[i - 1] if i else spec.input_shape)
            masks[i] = (rng.random(shape) >= layer.rate).astype(dtype)
    return masks


def forward(
    spec: NetworkSpec,
    params: list,
    encoded: SpikeInputSequence,
    mode: str = INFER,
    rng=None,
    neuron_model: str = SINGLE_SPIKE,
    counters: ActivityCounters | None = None,
    with_trace: bool | None = None,
):
    """Run the full T-timestep pass for one sample or a batch of samples.

    Returns (OutputState, TemporalTrace-or-None). A batch is recognized by a
    leading extra axis on the encoded arrays relative to spec.input_shape.
    """
    check_params(spec, params)
    if encoded.total_timesteps != spec.total_timesteps:
        raise ConfigurationError(
            f"encoded input has T={encoded.total_timesteps}, spec expects {spec.total_timesteps}"
        )
    if with_trace is None:
        with_trace = mode == TRAIN

    pixel_shape = encoded.pixel_shape
    if tuple(pixel_shape) == tuple(spec.input_shape):
        batched = False
        batch = 1
    elif tuple(pixel_shape[1:]) == tuple(spec.input_shape):
        batched = True
        batch = pixel_shape[0]
    else:
        raise ConfigurationError(f"input shape {pixel_shape} does not match spec {spec.input_shape}")

    dtype = params[0].weights.dtype
    hidden_states, out_state = reset(spec, batch, dtype=dtype)
    masks = _sample_dropout_masks(spec, batch, rng, dtype) if mode == TRAIN else [None] * len(spec.layers)

    widx = spec.weighted_indices()
    n_hidden = len(widx) - 1
    step_fn = single_spike_step if neuron_model == SINGLE_SPIKE else lif_step
    prev_spikes = [np.zeros_like(s.membrane) for s in hidden_states]  # multi-spike reset inputs

    trace = None
    if with_trace:
        trace = TemporalTrace(
            spec=spec,
            mode=mode,
            neuron_model=neuron_model,
            total_timesteps=spec.total_timesteps,
            layer_inputs=[[] for _ in widx],
            membranes=[[] for _ in range(n_hidden)],
            norm_potentials=[[] for _ in range(n_hidden)],
            reset_gates=[[] for _ in range(n_hidden)],
            hidden_spikes=[[] for _ in range(n_hidden)],
            output_membranes=[],
            output_state=out_state,
            dropout_masks=masks,
        )
    if counters is not None:
        counters.samples += batch
        if counters.per_neuron_spikes is not None:
            for h in range(n_hidden):
                counters.per_neuron_spikes[h] = np.concatenate(
                    [counters.per_neuron_spikes[h], np.zeros((batch,) + hidden_states[h].membrane.shape[1:], np.int32)]
                )

    analog_mac = encoded.mode in (HYBRID, DIRECT)  # dense MAC pass at t=1
    feature = spec.feature_shapes()

    for t in range(1, spec.total_timesteps + 1):
        x = np.asarray(encoded.input_at(t), dtype=dtype)
        if not batched:
            x = x[None]
        w_i = 0
        for li, layer in enumerate(spec.layers):
            if isinstance(layer, AvgPool):
                x = numerics.avgpool2d(x, layer.window)
                continue
            if isinstance(layer, Dropout):
                if masks[li] is not None:
                    x = x * masks[li] / (1.0 - layer.rate)
                continue
            p = params[w_i]
            if isinstance(layer, Conv):
                ho, wo = feature[li][1:]
                cols = numerics.im2col(x, layer.kernel, layer.stride, layer.padding)
                current = numerics.conv_from_cols(p.weights, cols, (ho, wo))
                events = int(np.count_nonzero(cols)) * layer.out_channels
            else:
                flat = x.reshape(batch, -1)
                current = flat @ p.weights.T
                events = int(np.count_nonzero(flat)) * layer.units
            if counters is not None:
                if w_i == 0 and analog_mac:
                    if t == 1:
                        counters.first_layer_analog_events += events
                    elif encoded.mode == HYBRID:
                        counters.accumulate_events[0] += events
                    # direct mode replays the same analog pass; nothing new accumulates
                else:
                    counters.accumulate_events[w_i] += events
            if with_trace:
                trace.layer_inputs[w_i].append(x)

            if w_i == len(widx) - 1:
                out_state = output_step(out_state, p, current, t, spec.total_timesteps)
                if with_trace:
                    trace.output_membranes.append(out_state.membrane)
            else:
                state = hidden_states[w_i]
                if neuron_model == SINGLE_SPIKE:
                    if with_trace:
                        trace.reset_gates[w_i].append(state.norm_potential > 0)
                    state, spikes = single_spike_step(state, p, current, mode)
                else:
                    if with_trace:
                        trace.reset_gates[w_i].append(prev_spikes[w_i] > 0)
                    state, spikes = lif_step(state, p, current, prev_spikes[w_i])
                    prev_spikes[w_i] = spikes
                hidden_states[w_i] = state
                if with_trace:
                    trace.membranes[w_i].append(state.membrane)
                    trace.norm_potentials[w_i].append(state.norm_potential)
                    trace.hidden_spikes[w_i].append(spikes)
                if counters is not None:
                    counters.output_spikes[w_i] += int(np.count_nonzero(spikes))
                    if counters.per_neuron_spikes is not None:
                        counters.per_neuron_spikes[w_i][-batch:] += spikes.astype(np.int32)
                x = spikes
            w_i += 1

    if with_trace:
        trace.output_state = out_state
    return out_state, trace


def readout_scores(output_state: OutputState) -> np.ndarray:
    """Combined decision score per class: final membrane minus spike time.

    This is the log of the product of the two loss softmaxes up to a shared
    constant, so argmax of it is the loss-consistent prediction.
    """
    return output_state.membrane - output_state.spike_time.astype(np.float64)


def predict(output_state: OutputState) -> np.ndarray:
    """Class decision with deterministic lowest-index tie-breaking."""
    return np.argmax(readout_scores(output_state), axis=-1)


def evaluate(
    spec: NetworkSpec,
    params: list,
    images: np.ndarray,
    labels: np.ndarray,
    encode,
    batch: int = 128,
    neuron_model: str = SINGLE_SPIKE,
    counters: ActivityCounters | None = None,
) -> float:
    """Infer-mode accuracy (percent) over a labelled image set.

    ``encode`` maps an image batch to a SpikeInputSequence; activity counters
    are filled in when supplied.
    """
    if len(images) == 0:
        raise ContractViolation("evaluate needs at least one sample")
    hits = 0
    for s in range(0, len(images), batch):
        encoded = encode(images[s : s + batch])
        out, _ = forward(spec, params, encoded, mode=INFER, neuron_model=neuron_model, counters=counters)
        hits += int((predict(out) == labels[s : s + batch]).sum())
    return 100.0 * hits / len(images)
