"""Experiment driver: config resolution, single runs and attack grids.

A run resolves its configuration (dataset sizes, epochs, attack labels) into
a canonical dictionary, trains via the SplitFed protocol, evaluates on the
global test set each epoch and returns a RunRecord whose fingerprint is the
hash of that resolved configuration. Attack label parameters left unset are
auto-selected from a clean baseline run: the source class is the class the
baseline classifies best, the target class the second best, and the flood
label equals the source class.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as datamod
from . import models, protocol
from .metrics import MetricsReport, accuracy_drop, per_class_recall
from .poisoning import ATTACK_KINDS, AttackConfig, auto_select_source_target

DATASETS = ("mnist", "ecg", "synth")
PRESETS = (None, "desk")
FULL_EPOCHS = {"mnist": 40, "ecg": 50, "synth": 10}
DESK_EPOCHS = 10
DESK_LR = {"mnist": 0.1, "ecg": 0.1}
SYNTH_PER_CLASS = 700

MNIST_TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
MNIST_TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "synth"
    model_version: str = "MNISTv1"
    clients: int | None = None
    malicious_pct: int = 0
    attack: AttackConfig = field(default_factory=AttackConfig)
    epochs: int | None = None
    lr: float | None = None
    batch_size: int = 32
    seed: int = 0
    preset: str | None = None
    dtype: str = "float32"
    mnist_dir: str | None = None
    ecg_csv: str | None = None
    synth_per_class: int | None = None
    train_per_client: int | None = None
    holdout_per_client: int | None = None
    test_size: int | None = None
    standardize_ecg: bool = False
    aggregate_per_batch: bool = False


@dataclass
class RunRecord:
    """Everything a finished run produced. duration_seconds never enters reports."""

    config: dict
    fingerprint: str
    reports: list[MetricsReport]
    model_checksum: str
    final_accuracy: float
    final_accuracy_drop: float | None = None
    baseline_fingerprint: str | None = None
    duration_seconds: float = 0.0


@dataclass
class GridCell:
    version: str
    malicious_pct: int
    attack_kind: str
    record: RunRecord


@dataclass
class GridRecord:
    cells: list[GridCell]


def malicious_count(num_clients: int, pct: int) -> int:
    """Half-up rounding of K * pct / 100."""
    return int(math.floor(num_clients * pct / 100 + 0.5))


def model_family(version: str) -> str:
    return "mnist" if version.startswith("MNIST") else "ecg"


def validate_config(config: ExperimentConfig) -> None:
    if config.dataset not in DATASETS:
        raise ValueError(f"unknown dataset {config.dataset!r}; expected one of {DATASETS}")
    if config.model_version not in models.MODEL_VERSIONS:
        raise ValueError(f"unknown model version {config.model_version!r}")
    if config.dataset != "synth" and config.dataset != model_family(config.model_version):
        raise ValueError(f"dataset {config.dataset!r} is incompatible with model "
                         f"version {config.model_version!r}")
    if not 0 <= config.malicious_pct <= 100:
        raise ValueError(f"malicious_pct must be in 0..100, got {config.malicious_pct}")
    if config.attack.kind not in ATTACK_KINDS:
        raise ValueError(f"unknown attack kind {config.attack.kind!r}")
    if config.preset not in PRESETS:
        raise ValueError(f"unknown preset {config.preset!r}")
    if config.dtype not in ("float32", "float64"):
        raise ValueError(f"dtype must be float32 or float64, got {config.dtype!r}")
    if config.batch_size < 1:
        raise ValueError("batch_size must be positive")
    if config.epochs is not None and config.epochs < 1:
        raise ValueError("epochs must be positive")
    if config.lr is not None and config.lr < 0:
        raise ValueError("lr must be non-negative")
    if config.clients is not None and config.clients < 1:
        raise ValueError("need at least one client")


@dataclass
class _Plan:
    """Fully resolved run parameters."""

    config: ExperimentConfig
    family: str
    clients: int
    epochs: int
    lr: float
    train_per_client: int
    holdout_per_client: int
    test_size: int | None
    synth_per_class: int
    use_synth: bool
    num_malicious: int


def _dataset_files_present(config: ExperimentConfig, family: str) -> bool:
    if family == "mnist":
        if not config.mnist_dir:
            return False
        return all(os.path.exists(os.path.join(config.mnist_dir, f))
                   for f in MNIST_TRAIN_FILES + MNIST_TEST_FILES)
    return bool(config.ecg_csv) and os.path.exists(config.ecg_csv)


def resolve_plan(config: ExperimentConfig) -> _Plan:
    validate_config(config)
    family = model_family(config.model_version)
    desk = config.preset == "desk"
    synth = config.dataset == "synth"
    if not synth and not _dataset_files_present(config, family):
        if desk:
            synth = True  # desk preset falls back to synthetic stand-in data
        elif family == "mnist":
            raise ValueError(f"MNIST IDX files not found under {config.mnist_dir!r}; "
                             "pass --mnist-dir or use --dataset synth")
        else:
            raise ValueError(f"ECG CSV not found at {config.ecg_csv!r}; "
                             "pass --ecg-csv or use --dataset synth")

    if family == "mnist":
        clients = config.clients or 10
        train = config.train_per_client or (600 if desk or synth else 5000)
        holdout = config.holdout_per_client if config.holdout_per_client is not None \
            else (0 if desk or synth else 1000)
        test_size = config.test_size or (1000 if desk or synth else None)
    else:
        clients = config.clients or 5
        train = config.train_per_client or (500 if desk or synth else 0)  # 0: fill from data
        holdout = config.holdout_per_client or 0
        test_size = config.test_size or (1000 if desk or synth else None)
    epochs = config.epochs or (DESK_EPOCHS if desk or synth else FULL_EPOCHS[family])
    lr = config.lr if config.lr is not None else (DESK_LR[family] if desk or synth else 0.01)
    return _Plan(config, family, clients, epochs, lr, train, holdout, test_size,
                 config.synth_per_class or SYNTH_PER_CLASS, synth,
                 malicious_count(clients, config.malicious_pct))


def _build_data(plan: _Plan):
    """Returns (shards, test dataset, input reshaper for the model family)."""
    cfg = plan.config
    if plan.use_synth:
        classes, features = (10, 784) if plan.family == "mnist" else (5, 124)
        source = datamod.synth_dataset(classes, features, plan.synth_per_class, cfg.seed)
        test = None
    elif plan.family == "mnist":
        source = datamod.load_mnist_idx(os.path.join(cfg.mnist_dir, MNIST_TRAIN_FILES[0]),
                                        os.path.join(cfg.mnist_dir, MNIST_TRAIN_FILES[1]))
        test = datamod.load_mnist_idx(os.path.join(cfg.mnist_dir, MNIST_TEST_FILES[0]),
                                      os.path.join(cfg.mnist_dir, MNIST_TEST_FILES[1]))
        if cfg.preset == "desk":
            source = source.take(plan.clients * (plan.train_per_client + plan.holdout_per_client))
    else:
        full = datamod.load_ecg_csv(cfg.ecg_csv, standardize=cfg.standardize_ecg)
        source, test = datamod.split_half(full, cfg.seed)
    train_per_client = plan.train_per_client or len(source) // plan.clients
    plan.train_per_client = train_per_client
    shards, global_test = datamod.partition(source, plan.clients, train_per_client,
                                            plan.holdout_per_client, cfg.seed, test=test)
    if plan.test_size is not None and plan.test_size < len(global_test):
        global_test = global_test.take(plan.test_size)
    if plan.family == "ecg":
        reshape = lambda x: x.reshape(x.shape[0], 1, x.shape[1])  # add channel axis
    else:
        reshape = None
    return shards, global_test, reshape


def _resolve_attack(plan: _Plan, baseline: RunRecord | None):
    """Fill missing attack labels from the baseline's per-class accuracy."""
    cfg = plan.config
    attack = cfg.attack
    if attack.seed is None:
        attack = replace(attack, seed=cfg.seed)
    if plan.num_malicious == 0 or attack.kind == "none":
        return attack, baseline
    needs = ((attack.kind in ("targeted", "distance") and attack.source_label is None)
             or (attack.kind == "targeted" and attack.target_label is None)
             or (attack.kind == "untargeted-fixed" and attack.flood_label is None))
    if needs:
        if baseline is None:
            baseline = run(replace(cfg, malicious_pct=0, attack=AttackConfig()))
        acc = per_class_recall(baseline.reports[-1].confusion)
        attack = attack.with_labels(*auto_select_source_target(acc))
    return attack, baseline


def resolved_config_dict(plan: _Plan, attack: AttackConfig) -> dict:
    """Canonical, output-path-free description of everything that shapes the run."""
    cfg = plan.config
    return {
        "dataset": cfg.dataset if not plan.use_synth else "synth",
        "requested_dataset": cfg.dataset,
        "model_version": cfg.model_version,
        "clients": plan.clients,
        "malicious_pct": cfg.malicious_pct,
        "num_malicious": plan.num_malicious,
        "attack": dataclasses.asdict(attack),
        "epochs": plan.epochs,
        "lr": plan.lr,
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
        "preset": cfg.preset,
        "dtype": cfg.dtype,
        "train_per_client": plan.train_per_client,
        "holdout_per_client": plan.holdout_per_client,
        "test_size": plan.test_size,
        "synth_per_class": plan.synth_per_class if plan.use_synth else None,
        "standardize_ecg": cfg.standardize_ecg,
        "aggregate_per_batch": cfg.aggregate_per_batch,
    }


def fingerprint_of(config_dict: dict) -> str:
    canon = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def model_checksum(layers) -> str:
    digest = hashlib.sha256()
    for layer in layers:
        for p in layer.param_arrays():
            digest.update(str(p.shape).encode())
            digest.update(p.tobytes())
    return digest.hexdigest()


def run(config: ExperimentConfig, baseline: RunRecord | None = None) -> RunRecord:
    """Train one SplitFed configuration and evaluate it every epoch.

    When `baseline` is given (or had to be trained for attack label
    selection), the final report carries the relative accuracy drop against
    that baseline's final accuracy.
    """
    started = time.perf_counter()
    plan = resolve_plan(config)
    attack, baseline = _resolve_attack(plan, baseline)
    if plan.num_malicious and attack.kind != "none":
        attack.validate(10 if plan.family == "mnist" else 5)
    shards, test, reshape = _build_data(plan)
    spec, point = models.resolve_version(config.model_version)
    if test.num_features != int(np.prod(spec.input_shape)):
        raise ValueError(f"dataset features {test.num_features} do not match model "
                         f"input {spec.input_shape}")
    dtype = np.float32 if config.dtype == "float32" else np.float64
    layers = spec.build(config.seed, dtype=dtype)
    client_seg, server_seg = models.split_at(layers, point)

    def cast(x):
        x = x.astype(dtype)
        return reshape(x) if reshape is not None else x

    malicious = list(range(plan.num_malicious))
    state, reports = protocol.run_training(
        client_seg, server_seg, shards, test,
        epochs=plan.epochs, lr=plan.lr, batch_size=config.batch_size,
        malicious_ids=malicious, attack=attack, prepare_inputs=cast,
        aggregate_per_batch=config.aggregate_per_batch)

    config_dict = resolved_config_dict(plan, attack)
    fp = fingerprint_of(config_dict)
    for report in reports:
        report.fingerprint = fp
    drop = None
    if baseline is not None:
        drop = accuracy_drop(baseline.final_accuracy, reports[-1].accuracy)
        reports[-1].accuracy_drop = drop
    return RunRecord(
        config=config_dict,
        fingerprint=fp,
        reports=reports,
        model_checksum=model_checksum(protocol.global_layers(state)),
        final_accuracy=reports[-1].accuracy,
        final_accuracy_drop=drop,
        baseline_fingerprint=baseline.fingerprint if baseline is not None else None,
        duration_seconds=time.perf_counter() - started,
    )


def run_grid(base_config: ExperimentConfig, malicious_pcts, attacks,
             versions) -> GridRecord:
    """Baseline-first sweep over (version, attack, malicious percentage).

    Each version's clean baseline is trained once; every attacked cell reuses
    it for attack label selection and accuracy-drop computation. A baseline
    failure aborts the whole grid.
    """
    pcts = sorted(set(int(p) for p in malicious_pcts))
    cells: list[GridCell] = []
    for version in versions:
        cfg_v = replace(base_config, model_version=version,
                        dataset=base_config.dataset if base_config.dataset == "synth"
                        else model_family(version))
        baseline = run(replace(cfg_v, malicious_pct=0, attack=AttackConfig()))
        baseline.final_accuracy_drop = 0.0
        baseline.reports[-1].accuracy_drop = 0.0
        cells.append(GridCell(version, 0, "none", baseline))
        for kind in attacks:
            for pct in pcts:
                if pct == 0:
                    continue
                cfg = replace(cfg_v, malicious_pct=pct,
                              attack=replace(base_config.attack, kind=kind))
                cells.append(GridCell(version, pct, kind, run(cfg, baseline=baseline)))
    return GridRecord(cells)
