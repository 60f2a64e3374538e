"""Label-flipping attack transforms for malicious clients.

Every transform rewrites labels only; the input array object is carried over
untouched. All randomness comes through an explicit generator, so a given
(batch, config, seed) triple always produces the same poisoned labels.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

ATTACK_KINDS = ("none", "targeted", "untargeted-random", "untargeted-fixed", "distance")


@dataclass(frozen=True)
class AttackConfig:
    """Which flip strategy a malicious client runs and its label parameters."""

    kind: str = "none"
    source_label: int | None = None   # targeted, distance
    target_label: int | None = None   # targeted
    flood_label: int | None = None    # untargeted-fixed
    seed: int | None = None           # untargeted-random; inherits the run seed if unset
    distance_scope: str = "batch"     # "batch" or "shard"

    def validate(self, num_classes: int | None = None) -> None:
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}; expected one of {ATTACK_KINDS}")
        if self.distance_scope not in ("batch", "shard"):
            raise ValueError(f"distance_scope must be 'batch' or 'shard', got {self.distance_scope!r}")
        required = {"targeted": ("source_label", "target_label"),
                    "untargeted-fixed": ("flood_label",),
                    "distance": ("source_label",)}.get(self.kind, ())
        for field in required:
            value = getattr(self, field)
            if value is None:
                raise ValueError(f"attack {self.kind!r} requires {field}")
            if num_classes is not None and not 0 <= value < num_classes:
                raise ValueError(f"{field}={value} outside label set [0, {num_classes})")

    def with_labels(self, source: int, target: int) -> "AttackConfig":
        """Fill in any missing label parameters from an auto-selected (source, target) pair."""
        updates = {}
        if self.kind in ("targeted", "distance") and self.source_label is None:
            updates["source_label"] = source
        if self.kind == "targeted" and self.target_label is None:
            updates["target_label"] = target
        if self.kind == "untargeted-fixed" and self.flood_label is None:
            updates["flood_label"] = source
        return replace(self, **updates) if updates else self


@dataclass(frozen=True)
class LabeledBatch:
    """A slice of one client's shard: inputs [B, features...], integer labels [B]."""

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int
    owner_id: int | None = None

    def __post_init__(self):
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels outside [0, {self.num_classes})")

    def with_labels(self, labels: np.ndarray) -> "LabeledBatch":
        return LabeledBatch(self.inputs, labels, self.num_classes, self.owner_id)


def _check_label(batch: LabeledBatch, value: int, name: str) -> None:
    if not 0 <= value < batch.num_classes:
        raise ValueError(f"{name}={value} outside label set [0, {batch.num_classes})")


def poison_targeted(batch: LabeledBatch, source_label: int, target_label: int) -> LabeledBatch:
    """Flip every source_label to target_label; all other labels stay as they are."""
    _check_label(batch, source_label, "source_label")
    _check_label(batch, target_label, "target_label")
    labels = batch.labels.copy()
    labels[labels == source_label] = target_label
    return batch.with_labels(labels)


def poison_untargeted_random(batch: LabeledBatch, rng: np.random.Generator) -> LabeledBatch:
    """Replace every label with a uniform draw from the label set."""
    labels = rng.integers(0, batch.num_classes, size=batch.labels.shape[0], dtype=batch.labels.dtype)
    return batch.with_labels(labels)


def poison_untargeted_fixed(batch: LabeledBatch, flood_label: int) -> LabeledBatch:
    """Flood: every label becomes flood_label."""
    _check_label(batch, flood_label, "flood_label")
    labels = np.full_like(batch.labels, flood_label)
    return batch.with_labels(labels)


def euclidean_distance(x: np.ndarray, y: np.ndarray) -> float:
    """sqrt of the summed squared differences between two equally shaped vectors."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    diff = (x - y).ravel()
    return float(np.sqrt(diff @ diff))


def poison_distance_based(batch: LabeledBatch, source_label: int) -> LabeledBatch:
    """Relabel each source-class sample with the label of its farthest batch mate.

    Distance is Euclidean over flattened inputs; the donor label is the
    pre-attack label of the farthest other sample, ties going to the lowest
    sample index. Without any source-labeled sample, or without a second
    sample to measure against, the batch passes through unchanged.
    """
    _check_label(batch, source_label, "source_label")
    indices = np.flatnonzero(batch.labels == source_label)
    if indices.size == 0 or batch.labels.shape[0] < 2:
        return batch
    flat = batch.inputs.reshape(batch.inputs.shape[0], -1)
    diff = flat[indices, None, :] - flat[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    dist2[np.arange(indices.size), indices] = -np.inf  # a sample is not its own partner
    farthest = dist2.argmax(axis=1)
    labels = batch.labels.copy()
    labels[indices] = batch.labels[farthest]
    return batch.with_labels(labels)


def auto_select_source_target(per_class_accuracy: Sequence[float]) -> tuple[int, int]:
    """Pick (best, second best) classes by accuracy, ties broken toward lower index."""
    acc = np.asarray(per_class_accuracy, dtype=np.float64)
    if acc.ndim != 1 or acc.size < 2:
        raise ValueError("need accuracies for at least two classes")
    source = int(acc.argmax())
    rest = acc.copy()
    rest[source] = -np.inf
    target = int(rest.argmax())
    return source, target


def apply_attack(batch: LabeledBatch, config: AttackConfig,
                 rng: np.random.Generator | None = None) -> LabeledBatch:
    """Dispatch one batch through the configured attack. 'none' is the identity."""
    if config.kind == "none":
        return batch
    config.validate(batch.num_classes)
    if config.kind == "targeted":
        return poison_targeted(batch, config.source_label, config.target_label)
    if config.kind == "untargeted-fixed":
        return poison_untargeted_fixed(batch, config.flood_label)
    if config.kind == "untargeted-random":
        if rng is None:
            raise ValueError("untargeted-random needs a generator")
        return poison_untargeted_random(batch, rng)
    return poison_distance_based(batch, config.source_label)
