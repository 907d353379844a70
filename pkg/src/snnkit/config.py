"""Experiment configuration and run report, both JSON round-trippable."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .ann import AnnTrainConfig, CalibrationConfig
from .encoding import ENCODERS, HYBRID
from .errors import ConfigurationError
from .metrics import EnergyReport
from .network import NetworkSpec
from .training import TrainConfig

SCHEMA_VERSION = 1


@dataclass
class DatasetConfig:
    format: str = "idx"
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    train_files: list = field(default_factory=list)   # cifar-binary
    test_files: list = field(default_factory=list)

    def referenced_files(self) -> list:
        if self.format == "idx":
            return [self.train_images, self.train_labels, self.test_images, self.test_labels]
        if self.format == "cifar-binary":
            return list(self.train_files) + list(self.test_files)
        raise ConfigurationError(f"unknown dataset format {self.format!r}")


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig
    network: NetworkSpec
    encoder: str = HYBRID
    neuron_model: str = "single_spike"
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    ann_train: AnnTrainConfig = field(default_factory=AnnTrainConfig)
    snn_train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    out_dir: str = "runs/out"
    eval_samples: int | None = None
    schema_version: int = SCHEMA_VERSION

    def validate(self, check_files: bool = True):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported config schema version {self.schema_version}")
        if self.encoder not in ENCODERS:
            raise ConfigurationError(f"unknown encoder {self.encoder!r}; choose from {ENCODERS}")
        if self.neuron_model not in ("single_spike", "multi_spike"):
            raise ConfigurationError(f"unknown neuron model {self.neuron_model!r}")
        if self.encoder == HYBRID and self.network.total_timesteps < 2:
            raise ConfigurationError("the hybrid encoder needs at least 2 timesteps")
        if check_files:
            for path in self.dataset.referenced_files():
                if not path or not os.path.exists(path):
                    raise ConfigurationError(f"referenced dataset file does not exist: {path!r}")
        return self

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "dataset": dataclasses.asdict(self.dataset),
            "network": self.network.to_dict(),
            "encoder": self.encoder,
            "neuron_model": self.neuron_model,
            "calibration": dataclasses.asdict(self.calibration),
            "ann_train": dataclasses.asdict(self.ann_train),
            "snn_train": dataclasses.asdict(self.snn_train),
            "seed": self.seed,
            "out_dir": self.out_dir,
            "eval_samples": self.eval_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            return cls(
                dataset=DatasetConfig(**d["dataset"]),
                network=NetworkSpec.from_dict(d["network"]),
                encoder=d.get("encoder", HYBRID),
                neuron_model=d.get("neuron_model", "single_spike"),
                calibration=CalibrationConfig(**d.get("calibration", {})),
                ann_train=AnnTrainConfig(**d.get("ann_train", {})),
                snn_train=TrainConfig(**d.get("snn_train", {})),
                seed=int(d.get("seed", 0)),
                out_dir=d.get("out_dir", "runs/out"),
                eval_samples=d.get("eval_samples"),
                schema_version=int(d.get("schema_version", SCHEMA_VERSION)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed experiment config: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path!r}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path!r} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class RunReport:
    """Self-describing result of one experiment run."""

    config: dict
    seed: int
    accuracy_ann: float | None = None
    accuracy_converted: float | None = None
    accuracy_finetuned: float | None = None
    ann_loss_curve: list = field(default_factory=list)
    snn_loss_curve: list = field(default_factory=list)
    snn_accuracy_curve: list = field(default_factory=list)
    energy: EnergyReport | None = None
    wall_clock_s: dict = field(default_factory=dict)

    TIMING_FIELDS = ("wall_clock_s",)

    def to_dict(self) -> dict:
        d = {
            "config": self.config,
            "seed": self.seed,
            "accuracy_ann": self.accuracy_ann,
            "accuracy_converted": self.accuracy_converted,
            "accuracy_finetuned": self.accuracy_finetuned,
            "ann_loss_curve": list(self.ann_loss_curve),
            "snn_loss_curve": list(self.snn_loss_curve),
            "snn_accuracy_curve": list(self.snn_accuracy_curve),
            "energy": self.energy.to_dict() if self.energy else None,
            "wall_clock_s": dict(self.wall_clock_s),
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(
            config=d["config"],
            seed=d["seed"],
            accuracy_ann=d.get("accuracy_ann"),
            accuracy_converted=d.get("accuracy_converted"),
            accuracy_finetuned=d.get("accuracy_finetuned"),
            ann_loss_curve=list(d.get("ann_loss_curve", [])),
            snn_loss_curve=list(d.get("snn_loss_curve", [])),
            snn_accuracy_curve=list(d.get("snn_accuracy_curve", [])),
            energy=EnergyReport.from_dict(d["energy"]) if d.get("energy") else None,
            wall_clock_s=dict(d.get("wall_clock_s", {})),
        )
