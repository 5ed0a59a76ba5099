"""Layer and architecture descriptions, shape inference and the model zoo
(ESCAPE-Net, MobilESCAPE-Net, optimisation-study variants E0-E5)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

KINDS = (
    "conv",
    "depthwise",
    "pointwise",
    "batchnorm",
    "relu",
    "maxpool",
    "flatten",
    "gap",
    "dense",
    "softmax",
)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    kernel: tuple | None = None
    filters: int | None = None
    stride: int = 1
    padding: str = "same"
    units: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kernel is not None:
            object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        if self.padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        if self.kind == "pointwise" and self.kernel not in (None, (1, 1)):
            raise ValueError("pointwise convolution has a 1x1 kernel")
        if self.kind == "maxpool" and (self.kernel != (2, 2) or self.stride not in (1, 2)):
            raise ValueError("maxpool is 2x2 with stride 1 or 2")

    def describe(self) -> str:
        if self.kind in ("conv", "depthwise"):
            kh, kw = self.kernel
            extra = f", {self.filters} filters" if self.kind == "conv" else ""
            return f"{self.kind} {kh}x{kw}{extra}, {self.padding}"
        if self.kind == "pointwise":
            return f"pointwise 1x1, {self.filters} filters"
        if self.kind == "maxpool":
            return f"maxpool 2x2, stride {self.stride}, {self.padding}"
        if self.kind == "dense":
            return f"dense {self.units}"
        return self.kind


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    input_shape: tuple
    layers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "layers": [{k: v for k, v in asdict(l).items() if v is not None} for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d) -> "ArchitectureSpec":
        return cls(d["name"], tuple(d["input_shape"]), tuple(LayerSpec(**l) for l in d["layers"]))


def conv_output_size(size: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "same":
        return math.ceil(size / stride)
    return (size - kernel) // stride + 1


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int]:
    """(before, after) padding; the odd pixel goes after, as in TensorFlow."""
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def layer_output_shape(layer: LayerSpec, shape: tuple) -> tuple:
    k = layer.kind
    if k in ("conv", "depthwise", "pointwise", "maxpool"):
        if len(shape) != 3:
            raise ValueError(f"{k} needs an HxWxC input, got {shape}")
        h, w, c = shape
        kh, kw = layer.kernel or (1, 1)
        ho = conv_output_size(h, kh, layer.stride, layer.padding)
        wo = conv_output_size(w, kw, layer.stride, layer.padding)
        if ho < 1 or wo < 1:
            raise ValueError(f"{layer.describe()} collapses a {h}x{w} map")
        c_out = layer.filters if k in ("conv", "pointwise") else c
        return (ho, wo, c_out)
    if k in ("batchnorm", "relu", "softmax"):
        return shape
    if k == "flatten":
        return (math.prod(shape),)
    if k == "gap":
        if len(shape) != 3:
            raise ValueError(f"gap needs an HxWxC input, got {shape}")
        return (shape[2],)
    if k == "dense":
        if len(shape) != 1:
            raise ValueError(f"dense needs a flat input, got {shape}")
        return (layer.units,)
    raise ValueError(k)


def infer_shapes(arch: ArchitectureSpec) -> list[tuple]:
    """Output shape of every layer, in order."""
    shapes = []
    shape = arch.input_shape
    for layer in arch.layers:
        shape = layer_output_shape(layer, shape)
        shapes.append(shape)
    return shapes


def _conv(k, filters):
    return LayerSpec("conv", kernel=(k, k), filters=filters)


def _pool(stride, padding):
    return LayerSpec("maxpool", kernel=(2, 2), stride=stride, padding=padding)


def _head(units=256, n_classes=3):
    return [
        LayerSpec("dense", units=units),
        LayerSpec("relu"),
        LayerSpec("dense", units=n_classes),
        LayerSpec("softmax"),
    ]


def build_escape_net(input_shape=(56, 100, 1), filters=64, name="escape") -> ArchitectureSpec:
    """Three same-padded convs (8x8, 4x4, 2x2), stride-1 pools, flatten, dense 256."""
    layers = [
        _conv(8, filters), LayerSpec("relu"), _pool(1, "same"),
        _conv(4, filters), LayerSpec("relu"), _pool(1, "same"),
        _conv(2, filters), LayerSpec("relu"),
        LayerSpec("flatten"),
        *_head(),
    ]
    return ArchitectureSpec(name, input_shape, layers)


def build_mobilescape(
    input_shape=(56, 100, 1),
    kernels=(9, 5, 3, 3),
    filters=(64, 64, 64, 128),
    head="gap",
    name="mobilescape",
) -> ArchitectureSpec:
    """Standard first block, then depthwise-separable blocks.

    Every block is conv -> ReLU -> BN -> 2x2/2 valid max-pool, except the
    last, which has no batch normalisation.
    """
    if len(kernels) != len(filters) or len(kernels) < 2:
        raise ValueError("kernels and filters must have equal length >= 2")
    n = len(kernels)
    layers = [_conv(kernels[0], filters[0]), LayerSpec("relu"), LayerSpec("batchnorm"), _pool(2, "valid")]
    for i in range(1, n):
        layers += [
            LayerSpec("depthwise", kernel=(kernels[i], kernels[i])),
            LayerSpec("pointwise", kernel=(1, 1), filters=filters[i]),
            LayerSpec("relu"),
        ]
        if i < n - 1:
            layers.append(LayerSpec("batchnorm"))
        layers.append(_pool(2, "valid"))
    layers.append(LayerSpec("gap" if head == "gap" else "flatten"))
    layers += _head()
    return ArchitectureSpec(name, input_shape, layers)


def build_mobilescape_net(input_shape=(56, 100, 1)) -> ArchitectureSpec:
    return build_mobilescape(input_shape, name="mobilescape")


VARIANTS = {
    "e0": dict(kernels=(9, 5, 3, 3), filters=(64, 64, 64, 128), head="flatten"),
    "e1": dict(kernels=(9, 5, 3), filters=(64, 64, 128), head="flatten"),
    "e2": dict(kernels=(9, 5, 3, 3), filters=(64, 64, 64, 128), head="gap"),
    "e3": dict(kernels=(9, 5, 3), filters=(64, 64, 128), head="gap"),
    # four kernels but three filter counts in the published table; E2's filters kept
    "e4": dict(kernels=(15, 7, 5, 3), filters=(64, 64, 64, 128), head="gap"),
    "e5": dict(kernels=(9, 5, 3, 3), filters=(256, 512, 512, 512), head="gap"),
}


def build_variant(variant_id: str, input_shape=(56, 100, 1)) -> ArchitectureSpec:
    key = variant_id.lower()
    if key not in VARIANTS:
        raise ValueError(f"unknown variant {variant_id!r}; expected one of E0..E5")
    return build_mobilescape(input_shape, name=key, **VARIANTS[key])


# reduced-width ESCAPE-Net used where the full 92M-parameter model is too
# slow to train on a laptop
DESK_ESCAPE_FILTERS = 16

ARCHITECTURES = {
    "escape": lambda shape: build_escape_net(shape),
    "escape16": lambda shape: build_escape_net(shape, filters=DESK_ESCAPE_FILTERS, name="escape16"),
    "mobilescape": build_mobilescape_net,
    **{k: (lambda shape, k=k: build_variant(k, shape)) for k in VARIANTS},
}


def build_architecture(name: str, input_shape=(56, 100, 1)) -> ArchitectureSpec:
    key = name.lower()
    if key not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {name!r}; valid names: {', '.join(ARCHITECTURES)}")
    return ARCHITECTURES[key](tuple(input_shape))
