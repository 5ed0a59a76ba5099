"""From-scratch CNN engine, model zoo and complexity accounting."""

from .arch import (
    ARCHITECTURES,
    ArchitectureSpec,
    LayerSpec,
    build_architecture,
    build_escape_net,
    build_mobilescape,
    build_mobilescape_net,
    build_variant,
    infer_shapes,
)
from .complexity import ComplexityReport, analyze, count_flops, count_parameters
from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    DepthwiseConv2D,
    Flatten,
    GlobalAvgPool,
    MaxPool2D,
    PointwiseConv2D,
    ReLU,
    Softmax,
    softmax,
)
from .model import ModelState, Network, NumericalError, cross_entropy
from .optim import Adam, AdamState, adam_step
