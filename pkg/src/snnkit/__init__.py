"""Low-latency spiking neural networks with single-spike hybrid input encoding.

The package trains bias-free ReLU networks, converts them into spiking
networks via percentile threshold calibration, fine-tunes them with a hybrid
membrane/spike-time loss over a handful of timesteps, and profiles the
spike-count-driven compute energy of the result.
"""

from .ann import AnnTrainConfig, CalibrationConfig
from .config import DatasetConfig, ExperimentConfig, RunReport
from .network import AvgPool, Conv, Dropout, FullyConnected, NetworkSpec
from .neuron import LayerParams
from .pipeline import run_experiment
from .training import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "AnnTrainConfig",
    "AvgPool",
    "CalibrationConfig",
    "Conv",
    "DatasetConfig",
    "Dropout",
    "ExperimentConfig",
    "FullyConnected",
    "LayerParams",
    "NetworkSpec",
    "RunReport",
    "TrainConfig",
    "run_experiment",
    "__version__",
]
