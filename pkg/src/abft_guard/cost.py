"""Roofline-based overhead model and the per-layer scheme selector.

Times are the roofline max of the tensor-path, scalar-path, and memory
components. Thread-level schemes add tensor-path work but no memory traffic
(their checksum inputs share the base loads); global checksumming adds
scalar-path adds, a little checksum traffic, and one deferred-verification
kernel launch. Externally measured timings, when supplied, override the
model per layer and scheme.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

from .errors import DocumentError
from .roofline import arithmetic_intensity, gemm_bytes, gemm_flops
from .shapes import DeviceProfile, DType, GemmShape
from .tiled import Scheme, TilingConfig, scheme_from_name

SOURCE_MODEL = "model"
SOURCE_MEASURED = "measured"

# Checksum traffic of the global scheme: the offline weight checksum (k), the
# fused activation checksum (n written for the next layer), plus the compared
# scalar pair.
_GLOBAL_EXTRA_ELEMENTS_CONSTANT = 2

SELECTABLE_SCHEMES = (Scheme.GLOBAL_ABFT, Scheme.THREAD_ONE_SIDED)


@dataclass(frozen=True)
class OverheadEstimate:
    base_time: float  # T_o, seconds
    protected_time: float  # T_r, seconds
    source: str = SOURCE_MODEL

    @property
    def overhead_pct(self) -> float:
        return 100.0 * (self.protected_time - self.base_time) / self.base_time


@dataclass(frozen=True)
class LayerPlan:
    layer_index: int
    shape: GemmShape
    intensity: float
    chosen: Scheme
    estimates: dict


@dataclass(frozen=True)
class SelectionPlan:
    layers: tuple
    aggregate_base_time: float
    aggregate_protected_time: float

    @property
    def aggregate_overhead_pct(self) -> float:
        return 100.0 * (self.aggregate_protected_time - self.aggregate_base_time) / self.aggregate_base_time


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def base_time(shape: GemmShape, dtype: DType, device: DeviceProfile) -> float:
    """Unprotected roofline time: max of compute time and memory time."""
    return max(
        gemm_flops(shape) / device.tensor_throughput,
        gemm_bytes(shape, dtype) / device.memory_bandwidth,
    )


def scheme_time(
    shape: GemmShape,
    dtype: DType,
    device: DeviceProfile,
    scheme: Scheme,
    tiling: TilingConfig = TilingConfig(),
) -> float:
    """Protected roofline time T_r for a scheme on one layer.

    Thread grids use ceiling division, matching the zero-padded execution of
    shapes the tiling does not divide exactly.
    """
    flops = gemm_flops(shape)
    nbytes = gemm_bytes(shape, dtype)
    if scheme is Scheme.UNPROTECTED:
        return base_time(shape, dtype, device)

    if scheme is Scheme.GLOBAL_ABFT:
        alu_flops = shape.m * shape.k + shape.m * shape.n + 2 * shape.k
        extra_bytes = dtype.bytes_per_element * (
            shape.k + shape.n + _GLOBAL_EXTRA_ELEMENTS_CONSTANT
        )
        return (
            max(
                flops / device.tensor_throughput,
                alu_flops / device.alu_throughput,
                (nbytes + extra_bytes) / device.memory_bandwidth,
            )
            + device.verification_launch_latency
        )

    threads = _ceil_div(shape.m, tiling.thread_m) * _ceil_div(shape.n, tiling.thread_n)
    steps = _ceil_div(shape.k, tiling.k_step)
    if scheme is Scheme.THREAD_ONE_SIDED:
        # Mt/2 extra MMAs per step, each two outputs wide.
        redundant_flops = threads * steps * (tiling.thread_m // 2) * 4 * tiling.k_step
        alu_flops = threads * steps * tiling.k_step * (tiling.thread_n - 1)
    elif scheme is Scheme.THREAD_TWO_SIDED:
        # One single-output MMA per step over the chunk checksums.
        redundant_flops = threads * steps * 2 * tiling.k_step
        alu_flops = threads * steps * tiling.k_step * (tiling.thread_m + tiling.thread_n - 2)
    elif scheme in (Scheme.THREAD_REPLICATION_FULL, Scheme.THREAD_REPLICATION_SINGLE_ACC):
        redundant_flops = threads * steps * (tiling.thread_m * tiling.thread_n // 2) * 4 * tiling.k_step
        alu_flops = 0
    else:
        raise ValueError(f"unsupported scheme {scheme}")

    return max(
        (flops + redundant_flops) / device.tensor_throughput,
        alu_flops / device.alu_throughput if alu_flops else 0.0,
        nbytes / device.memory_bandwidth,
    )


@dataclass(frozen=True)
class MeasuredTimings:
    """Externally measured per-layer times, keyed by (layer index, scheme)."""

    entries: dict

    @classmethod
    def from_csv_text(cls, text: str) -> "MeasuredTimings":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["layer_index", "scheme", "time_us"]:
            raise DocumentError(
                "timings CSV must start with header 'layer_index,scheme,time_us'"
            )
        entries: dict = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DocumentError(f"timings CSV line {lineno}: expected 3 fields, got {len(row)}")
            try:
                index = int(row[0])
                scheme = scheme_from_name(row[1].strip())
                time_us = float(row[2])
            except ValueError as exc:
                raise DocumentError(f"timings CSV line {lineno}: {exc}") from None
            if time_us <= 0:
                raise DocumentError(f"timings CSV line {lineno}: time_us must be > 0")
            entries[(index, scheme)] = time_us * 1e-6
        return cls(entries=entries)

    @classmethod
    def from_path(cls, path) -> "MeasuredTimings":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_csv_text(handle.read())

    def get(self, layer_index: int, scheme: Scheme):
        return self.entries.get((layer_index, scheme))

    def layer_indexes(self):
        return {index for index, _ in self.entries}


def select(
    layers: Sequence[tuple[int, GemmShape]],
    dtype: DType,
    device: DeviceProfile,
    tiling: TilingConfig = TilingConfig(),
    measured: MeasuredTimings | None = None,
) -> SelectionPlan:
    """Pick the lowest-overhead scheme per layer among global and one-sided.

    Measured timings override model estimates for matching (layer, scheme)
    pairs, including Scheme.UNPROTECTED rows for the base time. Ties go to
    global checksumming. The aggregate weights layers by their times:
    sum(T_r of chosen) / sum(T_o) - 1.
    """
    layers = list(layers)
    if not layers:
        raise DocumentError("cannot select schemes for an empty layer list")
    if measured is not None:
        known = {index for index, _ in layers}
        unknown = measured.layer_indexes() - known
        if unknown:
            raise DocumentError(
                f"measured timings reference unknown layer indexes {sorted(unknown)}"
            )

    plans: list[LayerPlan] = []
    total_base = 0.0
    total_protected = 0.0
    for index, shape in layers:
        t_o = base_time(shape, dtype, device)
        if measured is not None:
            override = measured.get(index, Scheme.UNPROTECTED)
            if override is not None:
                t_o = override

        estimates: dict = {}
        chosen = None
        for scheme in SELECTABLE_SCHEMES:
            t_r = scheme_time(shape, dtype, device, scheme, tiling)
            source = SOURCE_MODEL
            if measured is not None:
                override = measured.get(index, scheme)
                if override is not None:
                    t_r, source = override, SOURCE_MEASURED
            estimates[scheme] = OverheadEstimate(base_time=t_o, protected_time=t_r, source=source)
            if chosen is None or estimates[scheme].overhead_pct < estimates[chosen].overhead_pct:
                chosen = scheme

        plans.append(
            LayerPlan(
                layer_index=index,
                shape=shape,
                intensity=arithmetic_intensity(shape, dtype),
                chosen=chosen,
                estimates=estimates,
            )
        )
        total_base += t_o
        total_protected += estimates[chosen].protected_time

    return SelectionPlan(
        layers=tuple(plans),
        aggregate_base_time=total_base,
        aggregate_protected_time=total_protected,
    )
