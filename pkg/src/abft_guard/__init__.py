"""Checksum-protected GEMM simulation, roofline analysis, and per-layer
intensity-guided protection planning for neural-network inference."""

from .checksum import (
    Verdict,
    column_checksum,
    checksum_dot,
    global_abft_check,
    offline_weight_checksum,
    output_summation,
    row_checksum,
    run_protected_pipeline,
)
from .cost import MeasuredTimings, OverheadEstimate, SelectionPlan, base_time, scheme_time, select
from .errors import AbftGuardError
from .roofline import aggregate_intensity, arithmetic_intensity, cmr, gemm_bytes, gemm_flops
from .shapes import (
    BINARY16,
    BINARY32,
    EXACT_INT,
    ConvLayer,
    DeviceProfile,
    DType,
    FullyConnectedLayer,
    GemmShape,
    ModelSpec,
    PaddingPolicy,
    conv_output_shape,
    layer_to_gemm,
    model_to_gemm_sequence,
    pad_gemm,
)
from .tiled import (
    ExecutionReport,
    OutputFault,
    Scheme,
    ThreadMmaFault,
    TilingConfig,
    count_redundant_ops,
    execute,
    thread_tile_one_sided,
    thread_tile_replication,
    thread_tile_two_sided,
)

__version__ = "0.1.0"

__all__ = [
    "AbftGuardError",
    "BINARY16",
    "BINARY32",
    "ConvLayer",
    "DType",
    "DeviceProfile",
    "EXACT_INT",
    "ExecutionReport",
    "FullyConnectedLayer",
    "GemmShape",
    "MeasuredTimings",
    "ModelSpec",
    "OutputFault",
    "OverheadEstimate",
    "PaddingPolicy",
    "Scheme",
    "SelectionPlan",
    "ThreadMmaFault",
    "TilingConfig",
    "Verdict",
    "aggregate_intensity",
    "arithmetic_intensity",
    "base_time",
    "checksum_dot",
    "cmr",
    "column_checksum",
    "conv_output_shape",
    "count_redundant_ops",
    "execute",
    "gemm_bytes",
    "gemm_flops",
    "global_abft_check",
    "layer_to_gemm",
    "model_to_gemm_sequence",
    "offline_weight_checksum",
    "output_summation",
    "pad_gemm",
    "row_checksum",
    "run_protected_pipeline",
    "scheme_time",
    "select",
    "thread_tile_one_sided",
    "thread_tile_replication",
    "thread_tile_two_sided",
]
