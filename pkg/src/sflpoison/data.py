"""Dataset loading, synthesis and client partitioning.

Supported sources: MNIST IDX files, preprocessed single-beat ECG CSV rows
(124 features plus a class token), and a synthetic Gaussian-cluster generator
used as a desk-scale stand-in when real files are absent.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .poisoning import LabeledBatch

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049
ECG_CLASS_TOKENS = ("N", "L", "R", "A", "V")
ECG_FEATURES = 124

# Synthetic cluster layout (sigma = within-class std): one well-separated
# anchor class, orthogonal mid-radius ring classes, and a single far class out
# on the anchor axis (plus its own marker dimension, which keeps it learnable
# at desk-scale step counts). Distance-maximizing relabels of anchor samples
# then concentrate on the far class, whose shared-axis feature makes it a
# linearly confusable donor.
SYNTH_ANCHOR_RADIUS = 6.0
SYNTH_RING_RADIUS = 4.0
SYNTH_FAR_RADIUS = 14.0
SYNTH_MARKER_RADIUS = 8.0


@dataclass(frozen=True)
class Dataset:
    """Immutable sample collection: inputs [N, features...], integer labels [N]."""

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str

    def __post_init__(self):
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels")
        if self.inputs.shape[0] == 0:
            raise ValueError("dataset is empty")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(f"labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def num_features(self) -> int:
        return int(np.prod(self.inputs.shape[1:]))

    def subset(self, indices: np.ndarray, name: str | None = None) -> "Dataset":
        return Dataset(self.inputs[indices], self.labels[indices],
                       self.num_classes, name or self.name)

    def take(self, n: int, name: str | None = None) -> "Dataset":
        if n > len(self):
            raise ValueError(f"asked for {n} samples, dataset has {len(self)}")
        return Dataset(self.inputs[:n], self.labels[:n], self.num_classes, name or self.name)


def concat(a: Dataset, b: Dataset) -> Dataset:
    if a.num_classes != b.num_classes:
        raise ValueError("class count mismatch")
    return Dataset(np.concatenate([a.inputs, b.inputs]),
                   np.concatenate([a.labels, b.labels]), a.num_classes, a.name)


@dataclass(frozen=True)
class Shard:
    """One client's private slice of the source dataset."""

    client_id: int
    train: Dataset
    holdout: Dataset | None = None

    def batches(self, batch_size: int) -> Iterator[LabeledBatch]:
        """Fixed-order batches; a short final batch is kept, never dropped."""
        if batch_size < 1:
            raise ValueError("batch size must be positive")
        n = len(self.train)
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            yield LabeledBatch(self.train.inputs[start:stop], self.train.labels[start:stop],
                               self.train.num_classes, owner_id=self.client_id)

    def num_batches(self, batch_size: int) -> int:
        return -(-len(self.train) // batch_size)


def _read_exact(fh, n: int, path: str, offset: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValueError(f"{path}: truncated at byte {offset + len(data)}, "
                         f"expected {n} more bytes")
    return data


def _load_idx(path: str, expected_magic: int) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = struct.unpack(">i", _read_exact(fh, 4, path, 0))[0]
        if magic != expected_magic:
            raise ValueError(f"{path}: bad magic {magic} at byte 0, expected {expected_magic}")
        ndim = magic & 0xFF
        dims = struct.unpack(f">{ndim}i", _read_exact(fh, 4 * ndim, path, 4))
        count = int(np.prod(dims))
        payload = _read_exact(fh, count, path, 4 + 4 * ndim)
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after offset {4 + 4 * ndim + count}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_mnist_idx(image_path: str, label_path: str) -> Dataset:
    """Load an IDX image/label file pair.

    Images are flattened to one row per sample and scaled into [0, 1];
    labels stay as class indices 0-9.
    """
    images = _load_idx(image_path, IDX_IMAGE_MAGIC)
    labels = _load_idx(label_path, IDX_LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"{image_path} holds {images.shape[0]} images but "
                         f"{label_path} holds {labels.shape[0]} labels")
    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(inputs, labels.astype(np.int64), 10, "mnist")


def load_ecg_csv(path: str, standardize: bool = False) -> Dataset:
    """Load preprocessed ECG beats: 124 numeric features plus a class token per row.

    Tokens map to indices in N, L, R, A, V order. A single header row is
    tolerated. With standardize=True each feature column is shifted/scaled to
    zero mean, unit variance; by default values pass through untouched.
    """
    token_to_index = {t: i for i, t in enumerate(ECG_CLASS_TOKENS)}
    rows, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, record in enumerate(csv.reader(fh), start=1):
            if not record:
                continue
            token = record[-1].strip()
            if token not in token_to_index:
                if line_no == 1:  # header row
                    continue
                raise ValueError(f"{path}: row {line_no}: unknown class token {token!r}")
            if len(record) != ECG_FEATURES + 1:
                raise ValueError(f"{path}: row {line_no}: expected {ECG_FEATURES} features "
                                 f"+ class token, got {len(record)} fields")
            try:
                rows.append([float(v) for v in record[:-1]])
            except ValueError:
                raise ValueError(f"{path}: row {line_no}: non-numeric feature value") from None
            labels.append(token_to_index[token])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    inputs = np.asarray(rows, dtype=np.float64)
    if standardize:
        std = inputs.std(axis=0)
        std[std == 0] = 1.0
        inputs = (inputs - inputs.mean(axis=0)) / std
    return Dataset(inputs, np.asarray(labels, dtype=np.int64), len(ECG_CLASS_TOKENS), "ecg")


def split_half(dataset: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Random seeded 50/50 split into (train, test)."""
    perm = np.random.default_rng(seed).permutation(len(dataset))
    half = len(dataset) // 2
    return dataset.subset(perm[:half]), dataset.subset(perm[half:])


def synth_class_means(num_classes: int, features: int) -> np.ndarray:
    """Cluster means for the synthetic generator (see module comment)."""
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if features < num_classes:
        raise ValueError(f"need features >= num_classes, got {features} < {num_classes}")
    means = np.zeros((num_classes, features))
    means[0, 0] = SYNTH_ANCHOR_RADIUS
    for c in range(1, num_classes - 1):
        means[c, c] = SYNTH_RING_RADIUS
    far = num_classes - 1
    means[far, 0] = SYNTH_FAR_RADIUS
    means[far, far] = SYNTH_MARKER_RADIUS
    return means


SYNTH_SIGMA = 0.2


def synth_dataset(num_classes: int, features: int, n_per_class: int, seed: int,
                  sigma: float | None = None) -> Dataset:
    """Gaussian clusters whose means sit at least 4 sigma apart.

    The layout is separable enough for a linear model to clear 95% accuracy,
    leaving measurable headroom for poisoning experiments. The default sigma
    keeps the per-sample noise across all feature dimensions comparable to the
    class signal, so plain SGD makes progress at desk-scale step counts.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    if sigma is None:
        sigma = SYNTH_SIGMA
    if not 0 < sigma <= 1.0:
        raise ValueError("sigma must be in (0, 1] to keep means >= 4 sigma apart")
    means = synth_class_means(num_classes, features)
    rng = np.random.default_rng(seed)
    inputs = np.empty((num_classes * n_per_class, features))
    labels = np.empty(num_classes * n_per_class, dtype=np.int64)
    for c in range(num_classes):
        block = slice(c * n_per_class, (c + 1) * n_per_class)
        inputs[block] = rng.normal(means[c], sigma, size=(n_per_class, features))
        labels[block] = c
    return Dataset(inputs, labels, num_classes, "synth")


def partition(dataset: Dataset, num_clients: int, train_per_client: int,
              holdout_per_client: int, seed: int,
              test: Dataset | None = None) -> tuple[list[Shard], Dataset]:
    """Deal out disjoint, equal-size client shards; leftovers join the test set.

    The dataset is shuffled once with the given seed; batch order downstream
    is fixed by this shuffle. Every index lands in exactly one shard or in the
    global test set.
    """
    if num_clients < 1:
        raise ValueError("need at least one client")
    need = num_clients * (train_per_client + holdout_per_client)
    if need > len(dataset):
        raise ValueError(f"need {need} samples for {num_clients} clients, "
                         f"dataset has {len(dataset)}")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    shards = []
    for k in range(num_clients):
        t0 = k * train_per_client
        train = dataset.subset(perm[t0:t0 + train_per_client])
        holdout = None
        if holdout_per_client:
            h0 = num_clients * train_per_client + k * holdout_per_client
            holdout = dataset.subset(perm[h0:h0 + holdout_per_client])
        shards.append(Shard(k, train, holdout))
    remainder = perm[need:]
    if test is not None:
        global_test = concat(test, dataset.subset(remainder)) if remainder.size else test
    elif remainder.size:
        global_test = dataset.subset(remainder)
    else:
        raise ValueError("no samples left for a global test set and none provided")
    return shards, global_test
