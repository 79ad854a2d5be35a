"""Domain types for layers, devices, and the layer -> GEMM mapping.

Convolutions are lowered with im2col semantics: the GEMM's M dimension is
batch * out_h * out_w, N is the output channel count, and K collapses the
input channels and the filter window. A holds activations, B holds weights.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Union

from .errors import InvalidLayerError


class PaddingPolicy(enum.Enum):
    NONE = "none"
    MULTIPLE_OF_8 = "multiple-of-8"


class DTypeTag(enum.Enum):
    EXACT_INT = "exact-int"
    BINARY16 = "binary16"
    BINARY32 = "binary32"


_DEFAULT_BYTES = {
    DTypeTag.EXACT_INT: 2,  # byte/AI analyses of FP16 workloads with exact arithmetic
    DTypeTag.BINARY16: 2,
    DTypeTag.BINARY32: 4,
}


@dataclass(frozen=True)
class DType:
    """Element type driving both numeric semantics and byte accounting."""

    tag: DTypeTag
    bytes_per_element: int = 0

    def __post_init__(self):
        if self.bytes_per_element == 0:
            object.__setattr__(self, "bytes_per_element", _DEFAULT_BYTES[self.tag])
        if self.bytes_per_element <= 0:
            raise ValueError("bytes_per_element must be positive")

    @property
    def is_exact(self) -> bool:
        return self.tag is DTypeTag.EXACT_INT


EXACT_INT = DType(DTypeTag.EXACT_INT)
BINARY16 = DType(DTypeTag.BINARY16)
BINARY32 = DType(DTypeTag.BINARY32)

_DTYPES_BY_NAME = {d.tag.value: d for d in (EXACT_INT, BINARY16, BINARY32)}


def dtype_from_name(name: str) -> DType:
    try:
        return _DTYPES_BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown dtype {name!r}; expected one of {sorted(_DTYPES_BY_NAME)}") from None


@dataclass(frozen=True)
class GemmShape:
    """Dimensions of C = A @ B with A of size m x k and B of size k x n."""

    m: int
    n: int
    k: int

    def __post_init__(self):
        for name in ("m", "n", "k"):
            if getattr(self, name) < 1:
                raise ValueError(f"GemmShape.{name} must be >= 1")


@dataclass(frozen=True)
class ConvLayer:
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride_h: int = 1
    stride_w: int = 1
    pad_h: int = 0
    pad_w: int = 0

    def __post_init__(self):
        for name in ("out_channels", "kernel_h", "kernel_w", "stride_h", "stride_w"):
            if getattr(self, name) < 1:
                raise InvalidLayerError(f"conv field {name} must be >= 1")
        if self.pad_h < 0 or self.pad_w < 0:
            raise InvalidLayerError("conv padding must be >= 0")


@dataclass(frozen=True)
class FullyConnectedLayer:
    out_features: int

    def __post_init__(self):
        if self.out_features < 1:
            raise InvalidLayerError("out_features must be >= 1")


LayerSpec = Union[ConvLayer, FullyConnectedLayer]


@dataclass(frozen=True)
class ModelSpec:
    """An ordered stack of linear layers plus the input activation shape.

    FC-only models use input_h = input_w = 1 with input_c as the feature
    count. Activation shapes propagate layer to layer during lowering.
    """

    name: str
    batch: int
    input_h: int
    input_w: int
    input_c: int
    layers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for name in ("batch", "input_h", "input_w", "input_c"):
            if getattr(self, name) < 1:
                raise ValueError(f"ModelSpec.{name} must be >= 1")


@dataclass(frozen=True)
class DeviceProfile:
    """Peak throughputs and bandwidth of a device; the source of its CMR.

    alu_defaulted marks profiles whose scalar-path throughput was filled in
    as tensor_throughput / 8 because the source document omitted it.
    """

    name: str
    tensor_throughput: float  # FLOP/s on the matrix-unit path
    alu_throughput: float  # FLOP/s on the scalar path
    memory_bandwidth: float  # bytes/s
    verification_launch_latency: float = 5e-6  # seconds per deferred check kernel
    alu_defaulted: bool = False

    def __post_init__(self):
        for name in ("tensor_throughput", "alu_throughput", "memory_bandwidth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"DeviceProfile.{name} must be > 0")
        if self.verification_launch_latency < 0:
            raise ValueError("verification_launch_latency must be >= 0")


def conv_output_shape(in_h: int, in_w: int, layer: ConvLayer) -> tuple[int, int]:
    """Spatial output extent of a convolution, floor((in + 2p - k)/s) + 1."""
    out_h = (in_h + 2 * layer.pad_h - layer.kernel_h) // layer.stride_h + 1
    out_w = (in_w + 2 * layer.pad_w - layer.kernel_w) // layer.stride_w + 1
    if out_h < 1 or out_w < 1:
        raise InvalidLayerError(
            f"conv output extent {out_h}x{out_w} is not positive for input "
            f"{in_h}x{in_w}, kernel {layer.kernel_h}x{layer.kernel_w}, "
            f"stride {layer.stride_h}x{layer.stride_w}, pad {layer.pad_h}x{layer.pad_w}"
        )
    return out_h, out_w


def layer_to_gemm(batch: int, in_h: int, in_w: int, in_c: int, layer: LayerSpec) -> GemmShape:
    """Lower one layer to its GEMM problem (im2col for convolutions)."""
    if isinstance(layer, ConvLayer):
        out_h, out_w = conv_output_shape(in_h, in_w, layer)
        return GemmShape(
            m=batch * out_h * out_w,
            n=layer.out_channels,
            k=in_c * layer.kernel_h * layer.kernel_w,
        )
    if isinstance(layer, FullyConnectedLayer):
        return GemmShape(m=batch, n=layer.out_features, k=in_h * in_w * in_c)
    raise InvalidLayerError(f"unsupported layer type {type(layer).__name__}")


def _round_up(x: int, multiple: int) -> int:
    return -(-x // multiple) * multiple


def pad_gemm(shape: GemmShape, policy: PaddingPolicy) -> GemmShape:
    """Round each dimension up to the policy's multiple (identity for NONE)."""
    if policy is PaddingPolicy.NONE:
        return shape
    return GemmShape(
        m=_round_up(shape.m, 8),
        n=_round_up(shape.n, 8),
        k=_round_up(shape.k, 8),
    )


def model_to_gemm_sequence(
    model: ModelSpec, policy: PaddingPolicy = PaddingPolicy.NONE
) -> list[tuple[int, GemmShape]]:
    """One (layer index, GemmShape) per layer, padded per policy, in order."""
    out: list[tuple[int, GemmShape]] = []
    h, w, c = model.input_h, model.input_w, model.input_c
    for idx, layer in enumerate(model.layers):
        shape = layer_to_gemm(model.batch, h, w, c, layer)
        out.append((idx, pad_gemm(shape, policy)))
        if isinstance(layer, ConvLayer):
            h, w = conv_output_shape(h, w, layer)
            c = layer.out_channels
        else:
            h, w, c = 1, 1, layer.out_features
    return out
