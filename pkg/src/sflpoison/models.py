"""The two reference architectures and the client/server split machinery.

A ModelSpec is an immutable architecture description; build() materializes it
into layer objects with seeded parameters. split_at() partitions a built layer
list at a cut index counted over learnable layers only; pooling layers travel
with the convolution they follow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn

MNIST_WIDTHS = (784, 512, 256, 128, 128, 64, 64, 32, 32, 16, 10)
ECG_CHANNELS = (16, 16, 32, 32)
ECG_KERNEL = 5
ECG_DENSE_WIDTH = 64
ECG_INPUT_LEN = 124
ECG_CLASSES = 5


@dataclass(frozen=True)
class DenseSpec:
    in_features: int
    out_features: int
    activation: str | None = None


@dataclass(frozen=True)
class Conv1DSpec:
    in_channels: int
    out_channels: int
    kernel_width: int
    activation: str | None = None


@dataclass(frozen=True)
class MaxPool1DSpec:
    kernel: int = 2
    stride: int = 2


LayerSpec = DenseSpec | Conv1DSpec | MaxPool1DSpec


@dataclass(frozen=True)
class ModelSpec:
    """Ordered layer plan plus the input/output contract."""

    name: str
    layer_specs: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...]  # per-sample shape, batch dim excluded
    num_classes: int

    def build(self, seed: int = 0, dtype=np.float64) -> list[nn.Layer]:
        """Instantiate layers, drawing parameters from one seeded generator."""
        rng = np.random.default_rng(seed)
        layers: list[nn.Layer] = []
        for spec in self.layer_specs:
            if isinstance(spec, DenseSpec):
                layers.append(nn.Dense(spec.in_features, spec.out_features,
                                       spec.activation, rng=rng, dtype=dtype))
            elif isinstance(spec, Conv1DSpec):
                layers.append(nn.Conv1D(spec.in_channels, spec.out_channels,
                                        spec.kernel_width, spec.activation,
                                        rng=rng, dtype=dtype))
            else:
                layers.append(nn.MaxPool1D(spec.kernel, spec.stride))
        return layers

    @property
    def num_learnable(self) -> int:
        return sum(1 for s in self.layer_specs if not isinstance(s, MaxPool1DSpec))


@dataclass(frozen=True)
class SplitPoint:
    """Cut position counted over learnable layers; layers 0..cut_index-1 go client-side."""

    version: str
    cut_index: int


@dataclass
class ModelSegment:
    layers: list[nn.Layer]
    side: str  # "client" or "server"

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.param_arrays()]

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "ModelSegment":
        return ModelSegment(nn.copy_segment_layers(self.layers), self.side)


def build_mnist_model(widths: Sequence[int] = MNIST_WIDTHS) -> ModelSpec:
    """Feed-forward net of len(widths)-1 dense layers, ReLU between hidden layers."""
    if len(widths) < 3:
        raise ValueError("need at least input, one hidden and output widths")
    specs = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        last = i == len(widths) - 2
        specs.append(DenseSpec(a, b, None if last else "relu"))
    return ModelSpec("mnist", tuple(specs), (widths[0],), widths[-1])


def build_ecg_model(channels: Sequence[int] = ECG_CHANNELS,
                    kernel_width: int = ECG_KERNEL,
                    dense_width: int = ECG_DENSE_WIDTH,
                    input_len: int = ECG_INPUT_LEN,
                    num_classes: int = ECG_CLASSES) -> ModelSpec:
    """1-D CNN: four conv layers, pooling after the second and fourth, two dense layers."""
    if len(channels) != 4:
        raise ValueError("expected four convolution channel counts")
    c0, c1, c2, c3 = channels
    length = input_len
    specs: list[LayerSpec] = []
    plan = [(1, c0), (c0, c1), "pool", (c1, c2), (c2, c3), "pool"]
    for item in plan:
        if item == "pool":
            specs.append(MaxPool1DSpec(2, 2))
            length //= 2
        else:
            cin, cout = item
            specs.append(Conv1DSpec(cin, cout, kernel_width, "relu"))
            length -= kernel_width - 1
        if length < 1:
            raise ValueError(f"input length {input_len} too short for the conv stack")
    specs.append(DenseSpec(c3 * length, dense_width, "relu"))
    specs.append(DenseSpec(dense_width, num_classes, None))
    return ModelSpec("ecg", tuple(specs), (1, input_len), num_classes)


# version name -> (architecture family, cut index over learnable layers)
MODEL_VERSIONS: dict[str, tuple[str, int]] = {
    "MNISTv1": ("mnist", 2),
    "MNISTv2": ("mnist", 4),
    "ECGv1": ("ecg", 2),
    "ECGv2": ("ecg", 3),
}


def resolve_version(version: str, **build_overrides) -> tuple[ModelSpec, SplitPoint]:
    if version not in MODEL_VERSIONS:
        raise ValueError(f"unknown model version {version!r}; expected one of "
                         f"{sorted(MODEL_VERSIONS)}")
    family, cut = MODEL_VERSIONS[version]
    spec = build_mnist_model(**build_overrides) if family == "mnist" \
        else build_ecg_model(**build_overrides)
    return spec, SplitPoint(version, cut)


def split_at(layers: Sequence[nn.Layer], point: SplitPoint | int) -> tuple[ModelSegment, ModelSegment]:
    """Partition built layers into client and server segments.

    The cut index counts learnable layers only; a pooling layer immediately
    after the last client-side learnable layer stays with the client. The two
    segments reference the original layer objects, so their concatenation is
    the unsplit model layer-for-layer.
    """
    cut = point.cut_index if isinstance(point, SplitPoint) else point
    learnable = [i for i, layer in enumerate(layers) if layer.param_arrays()]
    if not 0 < cut < len(learnable):
        raise ValueError(f"cut index {cut} out of range (1..{len(learnable) - 1})")
    boundary = learnable[cut - 1] + 1
    while boundary < len(layers) and not layers[boundary].param_arrays():
        boundary += 1
    return (ModelSegment(list(layers[:boundary]), "client"),
            ModelSegment(list(layers[boundary:]), "server"))
