"""Spiking-neuron state updates.

Three step rules live here: the standard multi-spike LIF with soft reset
(used as the conversion baseline), the single-spike LIF for hidden layers,
and the leak-free output accumulator that records first-crossing spike
times. The triangular surrogate used in place of the spike derivative is
also defined here. All step functions are shape-agnostic, so a leading
batch axis passes straight through.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

TRAIN = "train"
INFER = "infer"


@dataclass
class LayerParams:
    """One layer's weights plus its shared firing threshold and leak."""

    weights: np.ndarray
    threshold: float
    leak: float

    def __post_init__(self):
        if not self.threshold > 0:
            raise ConfigurationError(f"threshold must be positive, got {self.threshold}")
        if not 0.0 <= self.leak <= 1.0:
            raise ConfigurationError(f"leak must lie in [0,1], got {self.leak}")


@dataclass
class NeuronState:
    """Membrane state of one hidden layer.

    ``norm_potential`` is membrane / threshold - 1, the quantity whose sign
    drives spiking; ``has_spiked`` is the once-per-sample history gate.
    """

    membrane: np.ndarray
    norm_potential: np.ndarray
    has_spiked: np.ndarray

    @classmethod
    def zeros(cls, shape, dtype=np.float32) -> "NeuronState":
        return cls(
            membrane=np.zeros(shape, dtype=dtype),
            norm_potential=np.full(shape, -1.0, dtype=dtype),
            has_spiked=np.zeros(shape, dtype=bool),
        )


@dataclass
class OutputState:
    """Leak-free accumulator for the output layer with per-neuron spike times.

    ``spike_time`` holds 0 until the neuron first crosses threshold from
    below; any neuron still silent at the final step is forced to fire there,
    so after a full run every spike time lies in [1, T].
    """

    membrane: np.ndarray
    spike_time: np.ndarray

    @classmethod
    def zeros(cls, shape, dtype=np.float32) -> "OutputState":
        return cls(
            membrane=np.zeros(shape, dtype=dtype),
            spike_time=np.zeros(shape, dtype=np.int64),
        )


def lif_step(state: NeuronState, params: LayerParams, input_current, prev_spikes):
    """Standard LIF update with soft reset; multiple spikes allowed.

    membrane <- leak * membrane + current - threshold * prev_spikes, and a
    spike fires wherever the new membrane strictly exceeds the threshold.
    """
    v = params.threshold
    u = params.leak * state.membrane + input_current - v * np.asarray(prev_spikes, dtype=state.membrane.dtype)
    spikes = u > v
    new = NeuronState(
        membrane=u,
        norm_potential=u / v - 1.0,
        has_spiked=state.has_spiked | spikes,
    )
    return new, spikes.astype(u.dtype)


def single_spike_step(state: NeuronState, params: LayerParams, input_current, mode: str = TRAIN):
    """Single-spike LIF update.

    The reset gate is (previous norm_potential > 0) and may stay active over
    several steps in train mode, where the membrane recursion keeps running
    after the spike. In infer mode a neuron that has spiked is frozen: no
    further updates and no further spikes.
    """
    v = params.threshold
    gate = state.norm_potential > 0
    u = params.leak * state.membrane + input_current - v * gate.astype(state.membrane.dtype)
    z = u / v - 1.0
    spikes = (z > 0) & ~state.has_spiked
    if mode == INFER:
        frozen = state.has_spiked
        u = np.where(frozen, state.membrane, u)
        z = np.where(frozen, state.norm_potential, z)
    new = NeuronState(membrane=u, norm_potential=z, has_spiked=state.has_spiked | spikes)
    return new, spikes.astype(u.dtype)


def output_step(state: OutputState, params: LayerParams, input_current, t: int, total_timesteps: int) -> OutputState:
    """Accumulate input without leak; record the first upward threshold crossing.

    At t == total_timesteps any neuron without a recorded spike time is
    forced to fire, so the loss always sees a valid time.
    """
    v = params.threshold
    u = state.membrane + input_current
    crossed = (u >= v) & (state.membrane < v) & (state.spike_time == 0)
    spike_time = np.where(crossed, t, state.spike_time)
    if t == total_timesteps:
        spike_time = np.where(spike_time == 0, t, spike_time)
    return OutputState(membrane=u, spike_time=spike_time)


def surrogate_grad(norm_potential, gain: float):
    """Triangular stand-in for the spike derivative: gain * max(0, 1 - |z|)."""
    if not gain > 0:
        raise ConfigurationError(f"surrogate gain must be positive, got {gain}")
    z = np.asarray(norm_potential)
    return gain * np.maximum(0.0, 1.0 - np.abs(z))
