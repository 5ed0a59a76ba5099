"""Exact parameter and FLOP accounting.

Conventions: one multiply-accumulate is 2 FLOPs and each bias add is 1;
batch norm costs 2 FLOPs per element (scale and shift, inference form);
ReLU 1 per element; a k x k max-pool k*k-1 comparisons per output; global
average pooling one add per input element; softmax 3 per logit.  Batch-norm
gamma/beta are trainable, its moving mean/variance are not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .arch import ArchitectureSpec, LayerSpec, infer_shapes


@dataclass(frozen=True)
class LayerCost:
    index: int
    description: str
    output_shape: tuple
    params: int
    non_trainable: int
    flops: int


@dataclass
class ComplexityReport:
    name: str
    input_shape: tuple
    per_layer: list = field(default_factory=list)

    @property
    def trainable_params(self) -> int:
        return sum(c.params for c in self.per_layer)

    @property
    def non_trainable_params(self) -> int:
        return sum(c.non_trainable for c in self.per_layer)

    @property
    def headline_flops(self) -> int:
        return sum(c.flops for c in self.per_layer)

    def to_dict(self) -> dict:
        return {
            "model": self.name,
            "input_shape": list(self.input_shape),
            "trainable_params": self.trainable_params,
            "non_trainable_params": self.non_trainable_params,
            "flops": self.headline_flops,
            "per_layer": [
                {
                    "index": c.index,
                    "layer": c.description,
                    "output_shape": list(c.output_shape),
                    "params": c.params,
                    "non_trainable": c.non_trainable,
                    "flops": c.flops,
                }
                for c in self.per_layer
            ],
        }

    def format_table(self) -> str:
        rows = [("#", "layer", "output", "params", "flops")]
        for c in self.per_layer:
            rows.append((str(c.index), c.description, "x".join(map(str, c.output_shape)), f"{c.params:,}", f"{c.flops:,}"))
        rows.append(("", "total trainable", "", f"{self.trainable_params:,}", f"{self.headline_flops:,}"))
        rows.append(("", "non-trainable", "", f"{self.non_trainable_params:,}", ""))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        lines = [f"{self.name}  input {'x'.join(map(str, self.input_shape))}"]
        for r in rows:
            lines.append("  ".join(
                r[i].rjust(widths[i]) if i in (0, 3, 4) else r[i].ljust(widths[i]) for i in range(5)
            ))
        return "\n".join(lines)


def layer_cost(layer: LayerSpec, in_shape: tuple, out_shape: tuple) -> tuple[int, int, int]:
    """(trainable params, non-trainable params, FLOPs) of one layer."""
    k = layer.kind
    n_out = math.prod(out_shape)
    if k == "conv":
        kh, kw = layer.kernel
        cin = in_shape[2]
        macs = kh * kw * cin
        return kh * kw * cin * layer.filters + layer.filters, 0, n_out * (2 * macs + 1)
    if k == "depthwise":
        kh, kw = layer.kernel
        c = in_shape[2]
        return kh * kw * c + c, 0, n_out * (2 * kh * kw + 1)
    if k == "pointwise":
        cin = in_shape[2]
        return cin * layer.filters + layer.filters, 0, n_out * (2 * cin + 1)
    if k == "dense":
        n_in = in_shape[0]
        return n_in * layer.units + layer.units, 0, 2 * n_in * layer.units + layer.units
    if k == "batchnorm":
        c = in_shape[-1]
        return 2 * c, 2 * c, 2 * n_out
    if k == "relu":
        return 0, 0, n_out
    if k == "maxpool":
        kh, kw = layer.kernel
        return 0, 0, n_out * (kh * kw - 1)
    if k == "gap":
        return 0, 0, math.prod(in_shape)
    if k == "softmax":
        return 0, 0, 3 * n_out
    return 0, 0, 0


def analyze(arch: ArchitectureSpec) -> ComplexityReport:
    report = ComplexityReport(arch.name, arch.input_shape)
    shapes = infer_shapes(arch)
    in_shape = arch.input_shape
    for i, (layer, out_shape) in enumerate(zip(arch.layers, shapes)):
        p, nt, f = layer_cost(layer, in_shape, out_shape)
        report.per_layer.append(LayerCost(i, layer.describe(), out_shape, p, nt, f))
        in_shape = out_shape
    return report


def count_parameters(arch: ArchitectureSpec) -> ComplexityReport:
    return analyze(arch)


def count_flops(arch: ArchitectureSpec) -> ComplexityReport:
    return analyze(arch)
