"""SplitFed learning simulator with label-flipping data poisoning attacks."""

from .data import Dataset, Shard, load_ecg_csv, load_mnist_idx, partition, split_half, synth_dataset
from .experiment import ExperimentConfig, GridRecord, RunRecord, run, run_grid
from .metrics import MetricsReport, accuracy, accuracy_drop, confusion, per_class_prf
from .models import (ModelSegment, ModelSpec, SplitPoint, build_ecg_model,
                     build_mnist_model, resolve_version, split_at)
from .poisoning import (AttackConfig, LabeledBatch, auto_select_source_target,
                        euclidean_distance, poison_distance_based, poison_targeted,
                        poison_untargeted_fixed, poison_untargeted_random)
from .protocol import (ClientState, FedServerState, ServerState, SmashedBatch,
                       client_backward, client_local_pass, fedavg, run_global_epoch,
                       run_training, server_step)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "ClientState", "Dataset", "ExperimentConfig", "FedServerState",
    "GridRecord", "LabeledBatch", "MetricsReport", "ModelSegment", "ModelSpec",
    "RunRecord", "ServerState", "Shard", "SmashedBatch", "SplitPoint",
    "accuracy", "accuracy_drop", "auto_select_source_target", "build_ecg_model",
    "build_mnist_model", "client_backward", "client_local_pass", "confusion",
    "euclidean_distance", "fedavg", "load_ecg_csv", "load_mnist_idx", "partition",
    "per_class_prf", "poison_distance_based", "poison_targeted",
    "poison_untargeted_fixed", "poison_untargeted_random", "resolve_version", "run",
    "run_global_epoch", "run_grid", "run_training", "server_step", "split_at",
    "split_half", "synth_dataset",
]
