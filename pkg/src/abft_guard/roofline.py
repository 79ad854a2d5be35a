"""FLOP/byte accounting, arithmetic intensity, and boundedness vs device CMR.

The byte model counts each GEMM operand exactly once (A, B, and the output C)
with no cache modeling; bias terms and fused-epilogue traffic are excluded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import EmptyInputError
from .shapes import DeviceProfile, DType, GemmShape

BOUND_COMPUTE = "compute"
BOUND_BANDWIDTH = "bandwidth"
BOUND_BALANCED = "balanced"


@dataclass(frozen=True)
class IntensityReport:
    flops: int
    bytes: int
    intensity: float
    bound: str


def gemm_flops(shape: GemmShape) -> int:
    """2*m*n*k: one multiply and one add per inner-product term."""
    return 2 * shape.m * shape.n * shape.k


def gemm_bytes(shape: GemmShape, dtype: DType) -> int:
    """Bytes moved with each operand touched once: bpe * (mk + kn + mn)."""
    return dtype.bytes_per_element * (
        shape.m * shape.k + shape.k * shape.n + shape.m * shape.n
    )


def arithmetic_intensity(shape: GemmShape, dtype: DType) -> float:
    return gemm_flops(shape) / gemm_bytes(shape, dtype)


def cmr(device: DeviceProfile) -> float:
    """Compute-to-memory-bandwidth ratio on the matrix-unit path."""
    return device.tensor_throughput / device.memory_bandwidth


def classify_bound(intensity: float, device_cmr: float) -> str:
    """Strictly above CMR is compute bound, strictly below is bandwidth bound."""
    if intensity > device_cmr:
        return BOUND_COMPUTE
    if intensity < device_cmr:
        return BOUND_BANDWIDTH
    return BOUND_BALANCED


def intensity_report(shape: GemmShape, dtype: DType, device: DeviceProfile) -> IntensityReport:
    flops = gemm_flops(shape)
    nbytes = gemm_bytes(shape, dtype)
    ai = flops / nbytes
    return IntensityReport(flops=flops, bytes=nbytes, intensity=ai, bound=classify_bound(ai, cmr(device)))


def aggregate_intensity(shapes: Sequence[GemmShape] | Iterable[GemmShape], dtype: DType) -> float:
    """Sum FLOPs and bytes across all shapes before dividing."""
    shapes = list(shapes)
    if not shapes:
        raise EmptyInputError("aggregate intensity of an empty shape sequence")
    total_flops = sum(gemm_flops(s) for s in shapes)
    total_bytes = sum(gemm_bytes(s, dtype) for s in shapes)
    return total_flops / total_bytes
