"""Experiment orchestration: ANN training through conversion, fine-tuning,
evaluation, and energy profiling, with artifacts persisted after each phase.

Every phase derives its RNG from the experiment seed through a fixed
SeedSequence spawn order, so a given (config, seed) pair reproduces the same
accuracies, spike activities, and reports.
"""

from __future__ import annotations

import csv
import json
import os
import time

import numpy as np

from . import ann as ann_mod
from . import data as data_mod
from . import modelio, training
from .config import ExperimentConfig, RunReport
from .encoding import DIRECT, HYBRID, RATE, IntensityRange, encode_direct, encode_hybrid, encode_poisson_rate
from .errors import ConfigurationError, EmissionError, SnnkitError
from .metrics import EnergyCosts, energy
from .network import MULTI_SPIKE, ActivityCounters, NetworkSpec, evaluate
from .neuron import LayerParams

ANN_MODEL = "ann.model"
THRESHOLDS_FILE = "thresholds.json"
CONVERTED_MODEL = "converted.model"
SNN_MODEL = "snn.model"
REPORT_FILE = "report.json"
SPIKE_CSV = "spike_activity.csv"
ENERGY_CSV = "energy.csv"
LOSS_CSV = "loss_curves.csv"

_PHASE_NAMES = ("train-ann", "calibrate", "convert", "train-snn", "eval", "profile")


def phase_rngs(seed: int) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(_PHASE_NAMES))
    return {name: np.random.default_rng(ss) for name, ss in zip(_PHASE_NAMES, children)}


def load_experiment_dataset(cfg: ExperimentConfig) -> data_mod.Dataset:
    ds = cfg.dataset
    if ds.format == "idx":
        train01 = data_mod.read_idx_images(ds.train_images)
        train_labels = data_mod.read_idx_labels(ds.train_labels, cfg.network.num_classes)
        test01 = data_mod.read_idx_images(ds.test_images)
        test_labels = data_mod.read_idx_labels(ds.test_labels, cfg.network.num_classes)
    elif ds.format == "cifar-binary":
        train01, train_labels = data_mod.read_cifar_binary(ds.train_files, cfg.network.num_classes)
        test01, test_labels = data_mod.read_cifar_binary(ds.test_files, cfg.network.num_classes)
    else:
        raise ConfigurationError(f"unknown dataset format {ds.format!r}")
    return data_mod.normalize_dataset(train01, train_labels, test01, test_labels)


def make_encoder(cfg: ExperimentConfig, dataset: data_mod.Dataset, rng=None, timesteps=None):
    """Batch encoder closure for the configured input coding."""
    t = timesteps or cfg.network.total_timesteps
    if cfg.encoder == HYBRID:
        rng_range = IntensityRange.from_images(dataset.train_images)
        return lambda images: encode_hybrid(images, rng_range, t)
    if cfg.encoder == DIRECT:
        return lambda images: encode_direct(images, t)
    if cfg.encoder == RATE:
        if rng is None:
            raise ConfigurationError("the rate encoder needs an RNG")
        return lambda images01: encode_poisson_rate(images01, t, rng)
    raise ConfigurationError(f"unknown encoder {cfg.encoder!r}")


def encoder_inputs(cfg: ExperimentConfig, dataset: data_mod.Dataset, split: str):
    """Image arrays the configured encoder consumes (raw [0,1] for rate)."""
    if cfg.encoder == RATE:
        return dataset.train_images01 if split == "train" else dataset.test_images01
    return dataset.train_images if split == "train" else dataset.test_images


def _eval_slice(cfg, images, labels):
    n = cfg.eval_samples or len(images)
    return images[:n], labels[:n]


def _tag_phase(exc: SnnkitError, phase: str) -> SnnkitError:
    exc.args = (f"[phase {phase}] {exc}",)
    return exc


class Experiment:
    """Stateful driver that runs phases in order and persists artifacts."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg.validate()
        try:
            os.makedirs(cfg.out_dir, exist_ok=True)
        except OSError as exc:
            raise ConfigurationError(f"cannot create output directory {cfg.out_dir!r}: {exc}") from exc
        self.dataset = load_experiment_dataset(cfg)
        self.rngs = phase_rngs(cfg.seed)
        self.report = RunReport(config=cfg.to_dict(), seed=cfg.seed)
        self.ann_params = None
        self.thresholds = None
        self.snn_params = None

    def _path(self, name: str) -> str:
        return os.path.join(self.cfg.out_dir, name)

    def _timed(self, phase, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except SnnkitError as exc:
            raise _tag_phase(exc, phase)
        self.report.wall_clock_s[phase] = time.perf_counter() - start
        return result

    # -- phases ------------------------------------------------------------

    def train_ann(self):
        def run():
            cfg = self.cfg
            params, history = ann_mod.ann_train(
                cfg.network,
                self.dataset.train_images,
                self.dataset.train_labels,
                epochs=cfg.ann_train.epochs,
                rng=self.rngs["train-ann"],
                lr_schedule=ann_mod.default_lr_schedule(cfg.ann_train.epochs, cfg.ann_train.base_lr),
                batch_size=cfg.ann_train.batch_size,
                momentum=cfg.ann_train.momentum,
            )
            self.ann_params = params
            self.report.ann_loss_curve = history["loss"]
            images, labels = _eval_slice(cfg, self.dataset.test_images, self.dataset.test_labels)
            self.report.accuracy_ann = ann_mod.ann_accuracy(cfg.network, params, images, labels)
            modelio.save_params(
                self._path(ANN_MODEL),
                [LayerParams(w, 1.0, 1.0) for w in params.weights],
            )
            return params

        return self._timed("train-ann", run)

    def _require_ann(self):
        if self.ann_params is None:
            path = self._path(ANN_MODEL)
            if not os.path.exists(path):
                raise ConfigurationError(f"no trained ANN at {path}; run train-ann first")
            self.ann_params = ann_mod.AnnParams(weights=[p.weights for p in modelio.load_params(path)])
        return self.ann_params

    def calibrate(self):
        def run():
            cfg = self.cfg
            ann_params = self._require_ann()
            rng = self.rngs["calibrate"]
            count = min(cfg.calibration.num_images, len(self.dataset.train_images))
            idx = rng.choice(len(self.dataset.train_images), size=count, replace=False)
            calib_cfg = ann_mod.CalibrationConfig(**{**vars(cfg.calibration), "num_images": count})
            self.thresholds = ann_mod.calibrate_thresholds(
                ann_params, cfg.network, self.dataset.train_images[idx], calib_cfg
            )
            with open(self._path(THRESHOLDS_FILE), "w") as fh:
                json.dump({"thresholds": self.thresholds}, fh, indent=2)
                fh.write("\n")
            return self.thresholds

        return self._timed("calibrate", run)

    def _require_thresholds(self):
        if self.thresholds is None:
            path = self._path(THRESHOLDS_FILE)
            if not os.path.exists(path):
                raise ConfigurationError(f"no thresholds at {path}; run calibrate first")
            with open(path) as fh:
                self.thresholds = json.load(fh)["thresholds"]
        return self.thresholds

    def convert(self):
        """Build the scaled spiking initialization and score conversion fidelity.

        The fidelity evaluation runs the unscaled thresholds with standard
        multi-spike LIF neurons under direct encoding at the calibration
        timestep count; the persisted model carries the scaled thresholds
        that fine-tuning starts from.
        """

        def run():
            cfg = self.cfg
            ann_params = self._require_ann()
            thresholds = self._require_thresholds()
            unscaled = ann_mod.convert(
                ann_params, thresholds, ann_mod.CalibrationConfig(**{**vars(cfg.calibration), "scaling": 1.0})
            )
            spec_calib = NetworkSpec(
                layers=cfg.network.layers,
                input_shape=cfg.network.input_shape,
                num_classes=cfg.network.num_classes,
                total_timesteps=cfg.calibration.calib_timesteps,
            )
            images, labels = _eval_slice(cfg, self.dataset.test_images, self.dataset.test_labels)
            self.report.accuracy_converted = evaluate(
                spec_calib,
                unscaled,
                images,
                labels,
                lambda x: encode_direct(x, cfg.calibration.calib_timesteps),
                neuron_model=MULTI_SPIKE,
            )
            converted = ann_mod.convert(ann_params, thresholds, cfg.calibration)
            modelio.save_params(self._path(CONVERTED_MODEL), converted)
            return converted

        return self._timed("convert", run)

    def _load_model(self, name):
        path = self._path(name)
        if not os.path.exists(path):
            raise ConfigurationError(f"no model at {path}; run the earlier phases first")
        return modelio.load_params(path)

    def train_snn(self):
        def run():
            cfg = self.cfg
            params = self._load_model(CONVERTED_MODEL)
            rng = self.rngs["train-snn"]
            encode = make_encoder(cfg, self.dataset, rng=rng)
            images = encoder_inputs(cfg, self.dataset, "train")
            eval_images, eval_labels = _eval_slice(cfg, encoder_inputs(cfg, self.dataset, "test"), self.dataset.test_labels)
            params, history = training.train_snn(
                cfg.network,
                params,
                images,
                self.dataset.train_labels,
                cfg.snn_train,
                encode,
                rng,
                neuron_model=cfg.neuron_model,
                eval_set=(eval_images, eval_labels),
            )
            self.snn_params = params
            self.report.snn_loss_curve = history["loss"]
            self.report.snn_accuracy_curve = history["accuracy"]
            modelio.save_params(self._path(SNN_MODEL), params)
            return params

        return self._timed("train-snn", run)

    def eval(self, model_file: str = SNN_MODEL, counters: ActivityCounters | None = None):
        def run():
            cfg = self.cfg
            params = self.snn_params if (self.snn_params and model_file == SNN_MODEL) else self._load_model(model_file)
            encode = make_encoder(cfg, self.dataset, rng=np.random.default_rng(cfg.seed))
            images, labels = _eval_slice(cfg, encoder_inputs(cfg, self.dataset, "test"), self.dataset.test_labels)
            acc = evaluate(cfg.network, params, images, labels, encode, neuron_model=cfg.neuron_model, counters=counters)
            self.report.accuracy_finetuned = acc
            return acc

        return self._timed("eval", run)

    def profile(self, model_file: str = SNN_MODEL):
        def run():
            cfg = self.cfg
            params = self.snn_params if (self.snn_params and model_file == SNN_MODEL) else self._load_model(model_file)
            counters = ActivityCounters(cfg.network)
            encode = make_encoder(cfg, self.dataset, rng=np.random.default_rng(cfg.seed))
            images, labels = _eval_slice(cfg, encoder_inputs(cfg, self.dataset, "test"), self.dataset.test_labels)
            evaluate(cfg.network, params, images, labels, encode, neuron_model=cfg.neuron_model, counters=counters)
            self.report.energy = energy(cfg.network, counters, cfg.encoder, EnergyCosts())
            return self.report.energy

        return self._timed("profile", run)

    def run_all(self) -> RunReport:
        self.train_ann()
        self.calibrate()
        self.convert()
        self.train_snn()
        self.eval()
        self.profile()
        emit_report(self.report, self.cfg.out_dir)
        return self.report


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Full pipeline: ANN -> calibrate -> convert -> fine-tune -> eval -> profile."""
    return Experiment(cfg).run_all()


def emit_report(report: RunReport, out_dir) -> dict:
    """Write report.json plus the spike-activity, energy, and loss-curve CSVs."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "report": os.path.join(out_dir, REPORT_FILE),
            "spikes": os.path.join(out_dir, SPIKE_CSV),
            "energy": os.path.join(out_dir, ENERGY_CSV),
            "loss": os.path.join(out_dir, LOSS_CSV),
        }
        with open(paths["report"], "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

        energy_report = report.energy
        with open(paths["spikes"], "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["layer", "spikes_per_neuron"])
            if energy_report:
                names = [row.name for row in energy_report.layers]
                for name, zeta in zip(names, energy_report.spike_activity):
                    writer.writerow([name, f"{zeta:.9g}"])

        with open(paths["energy"], "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["layer", "input_activity", "ann_flops", "snn_flops", "e_ann_pj", "e_snn_pj", "ratio"])
            if energy_report:
                for row in energy_report.layers:
                    writer.writerow([row.name, f"{row.zeta:.9g}", row.f_ann, f"{row.f_snn:.9g}", "", "", ""])
                writer.writerow(
                    [
                        "total",
                        "",
                        sum(r.f_ann for r in energy_report.layers),
                        f"{sum(r.f_snn for r in energy_report.layers):.9g}",
                        f"{energy_report.e_ann_pj:.17g}",
                        f"{energy_report.e_snn_pj:.17g}",
                        f"{energy_report.ratio:.17g}",
                    ]
                )

        with open(paths["loss"], "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["phase", "epoch", "loss", "test_accuracy"])
            for i, loss in enumerate(report.ann_loss_curve):
                writer.writerow(["ann", i, f"{loss:.9g}", ""])
            for i, loss in enumerate(report.snn_loss_curve):
                acc = report.snn_accuracy_curve[i] if i < len(report.snn_accuracy_curve) else ""
                writer.writerow(["snn", i, f"{loss:.9g}", acc])
        return paths
    except OSError as exc:
        raise EmissionError(f"cannot write report files to {out_dir!r}: {exc}") from exc


def load_report(out_dir) -> RunReport:
    with open(os.path.join(out_dir, REPORT_FILE)) as fh:
        return RunReport.from_dict(json.load(fh))
