"""Functional simulator of a hierarchically tiled GEMM under redundancy schemes.

The kernel-level problem is decomposed across threadblocks, warps, and
threads. Each thread owns an Mt x Nt tile of C and walks the K dimension in
k_step chunks, loading an Mt x k_step chunk of At and a k_step x Nt chunk of
Bt per step. The per-thread, per-step matrix-multiply-accumulate unit (MMA)
covers two consecutive rows of the At chunk and one column of the Bt chunk,
so a step of the base multiplication costs Mt*Nt/2 MMAs.

Redundancy schemes and their per-step cost per thread:

* thread-one-sided: checksum only the Bt chunk and multiply all of At with
  it (Mt/2 extra MMAs, O(Nt) checksum adds).
* thread-two-sided: checksum both chunks and dot them (1 extra MMA,
  O(Mt + Nt) checksum adds).
* thread-replication-full / -single-acc: duplicate every MMA (Mt*Nt/2 extra
  MMAs, no checksum adds); the single-acc variant folds redundant outputs
  into a fixed set of four registers and compares the fold-sum.
* global-abft: kernel-level checksums over the full matrices; no extra MMAs.

Thread-level schemes read nothing beyond the At/Bt chunks the base loop
already loads; their checksum inputs are exactly those chunks.

Inputs whose dimensions do not divide the threadblock grid are zero-padded
and the output is cropped back; faults may not target padding cells.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import checksum
from .checksum import accumulate_matmul, comparison_tolerance, storage_array
from .errors import ShapeMismatchError
from .shapes import DType, GemmShape


class Scheme(enum.Enum):
    UNPROTECTED = "unprotected"
    GLOBAL_ABFT = "global-abft"
    THREAD_ONE_SIDED = "thread-one-sided"
    THREAD_TWO_SIDED = "thread-two-sided"
    THREAD_REPLICATION_FULL = "thread-replication-full"
    THREAD_REPLICATION_SINGLE_ACC = "thread-replication-single-acc"


THREAD_LEVEL_SCHEMES = (
    Scheme.THREAD_ONE_SIDED,
    Scheme.THREAD_TWO_SIDED,
    Scheme.THREAD_REPLICATION_FULL,
    Scheme.THREAD_REPLICATION_SINGLE_ACC,
)

PROTECTED_SCHEMES = (Scheme.GLOBAL_ABFT,) + THREAD_LEVEL_SCHEMES


def scheme_from_name(name: str) -> Scheme:
    for scheme in Scheme:
        if scheme.value == name:
            return scheme
    raise ValueError(f"unknown scheme {name!r}; expected one of {[s.value for s in Scheme]}")


@dataclass(frozen=True)
class TilingConfig:
    """Threadblock / warp / thread tile extents and the K-loop chunk."""

    tb_m: int = 128
    tb_n: int = 128
    warp_m: int = 64
    warp_n: int = 64
    thread_m: int = 16
    thread_n: int = 8
    k_step: int = 2

    def __post_init__(self):
        for name in ("tb_m", "tb_n", "warp_m", "warp_n", "thread_m", "thread_n", "k_step"):
            if getattr(self, name) < 1:
                raise ValueError(f"TilingConfig.{name} must be >= 1")
        if self.tb_m % self.warp_m or self.tb_n % self.warp_n:
            raise ValueError("threadblock tile must be divisible by the warp tile")
        if self.warp_m % self.thread_m or self.warp_n % self.thread_n:
            raise ValueError("warp tile must be divisible by the thread tile")
        if self.thread_m % 2:
            raise ValueError("thread_m must be even (each MMA consumes two rows)")


@dataclass(frozen=True)
class OutputFault:
    """Corruption of one element of C, applied after accumulation."""

    row: int
    col: int
    delta: float

    def __post_init__(self):
        if self.delta == 0:
            raise ValueError("fault delta must be nonzero")


@dataclass(frozen=True)
class ThreadMmaFault:
    """Corruption of one MMA's contribution within one thread's K walk.

    local_index addresses the thread's Mt x Nt outputs in row-major order;
    the step index identifies which K chunk the faulty MMA belonged to.
    """

    thread_row: int
    thread_col: int
    step: int
    local_index: int
    delta: float

    def __post_init__(self):
        if self.delta == 0:
            raise ValueError("fault delta must be nonzero")


FaultSpec = Union[OutputFault, ThreadMmaFault]


def random_output_fault(rng: np.random.Generator, shape: GemmShape, delta: float) -> OutputFault:
    return OutputFault(
        row=int(rng.integers(shape.m)), col=int(rng.integers(shape.n)), delta=delta
    )


def random_thread_mma_fault(
    rng: np.random.Generator, shape: GemmShape, tiling: TilingConfig, delta: float
) -> ThreadMmaFault:
    """A fault at a uniformly random non-padding output cell and step."""
    row = int(rng.integers(shape.m))
    col = int(rng.integers(shape.n))
    steps = -(-shape.k // tiling.k_step)
    return ThreadMmaFault(
        thread_row=row // tiling.thread_m,
        thread_col=col // tiling.thread_n,
        step=int(rng.integers(steps)),
        local_index=(row % tiling.thread_m) * tiling.thread_n + (col % tiling.thread_n),
        delta=delta,
    )


@dataclass(frozen=True)
class ThreadVerdict:
    """One thread's local checksum comparison."""

    thread_row: int
    thread_col: int
    detected: bool
    max_abs_diff: float
    tolerance_used: float


@dataclass(frozen=True)
class OpCounts:
    base_mma_count: int
    redundant_mma_count: int
    checksum_op_count: int


@dataclass(frozen=True)
class ExecutionReport:
    output: np.ndarray
    verdicts: tuple
    detected: bool
    op_counts: OpCounts
    scheme: Scheme
    shape: GemmShape
    padded_shape: GemmShape


def _round_up(x: int, multiple: int) -> int:
    return -(-x // multiple) * multiple


def _validate_tile_operands(at: np.ndarray, bt: np.ndarray, tiling: TilingConfig):
    at = np.asarray(at)
    bt = np.asarray(bt)
    if at.ndim != 2 or bt.ndim != 2 or at.shape[1] != bt.shape[0]:
        raise ShapeMismatchError(f"thread tile operands do not conform: {at.shape} vs {bt.shape}")
    if at.shape[0] != tiling.thread_m or bt.shape[1] != tiling.thread_n:
        raise ShapeMismatchError(
            f"thread tile must be {tiling.thread_m}x{tiling.thread_n}, "
            f"got {at.shape[0]}x{bt.shape[1]}"
        )
    if at.shape[1] % tiling.k_step:
        raise ShapeMismatchError(f"K extent {at.shape[1]} is not a multiple of k_step {tiling.k_step}")
    return at, bt


def _apply_local_faults(ct: np.ndarray, faults: Sequence[tuple[int, int, float]]) -> np.ndarray:
    for row, col, delta in faults:
        ct[row, col] += delta
    return ct


def _vector_verdict(
    lhs: np.ndarray, rhs: np.ndarray, dtype: DType, k: int, coords: tuple[int, int]
) -> ThreadVerdict:
    diffs = np.abs(np.asarray(lhs, dtype=np.float64) - np.asarray(rhs, dtype=np.float64))
    tols = np.array(
        [comparison_tolerance(dtype, k, float(l), float(r)) for l, r in zip(np.ravel(lhs), np.ravel(rhs))]
    )
    fired = diffs.ravel() > tols
    worst = int(np.argmax(diffs.ravel() - tols))
    return ThreadVerdict(
        thread_row=coords[0],
        thread_col=coords[1],
        detected=bool(fired.any()),
        max_abs_diff=float(diffs.ravel()[worst]),
        tolerance_used=float(tols[worst]),
    )


def thread_tile_one_sided(
    at: np.ndarray,
    bt: np.ndarray,
    tiling: TilingConfig,
    dtype: DType | None = None,
    faults: Sequence[tuple[int, int, float]] = (),
    coords: tuple[int, int] = (0, 0),
) -> tuple[np.ndarray, ThreadVerdict]:
    """Checksum only Bt and multiply all of At with it.

    Per k-step the thread accumulates both Ct += At_chunk @ Bt_chunk and an
    Mt x 1 column At_chunk @ rowck(Bt_chunk); row sums are per-row, so the
    per-step checksum columns telescope to At @ rowck(Bt). The verdict
    compares that column against the row sums of Ct.
    """
    at, bt = _validate_tile_operands(at, bt, tiling)
    if dtype is None:
        dtype = checksum.dtype_of(at)
    ct = _apply_local_faults(accumulate_matmul(at, bt), list(faults))
    abft_col = accumulate_matmul(at, checksum.row_checksum(bt).reshape(-1, 1)).ravel()
    row_sums = ct.sum(axis=1)
    return ct, _vector_verdict(abft_col, row_sums, dtype, at.shape[1], coords)


def thread_tile_two_sided(
    at: np.ndarray,
    bt: np.ndarray,
    tiling: TilingConfig,
    dtype: DType | None = None,
    faults: Sequence[tuple[int, int, float]] = (),
    coords: tuple[int, int] = (0, 0),
) -> tuple[np.ndarray, ThreadVerdict]:
    """Checksum both chunks and accumulate their dot product (1 MMA per step).

    Summing the per-step colck(At_chunk) . rowck(Bt_chunk) contributions over
    all chunks equals colck(At) . rowck(Bt); the verdict compares that scalar
    against the summation of Ct.
    """
    at, bt = _validate_tile_operands(at, bt, tiling)
    if dtype is None:
        dtype = checksum.dtype_of(at)
    ct = _apply_local_faults(accumulate_matmul(at, bt), list(faults))
    abft = checksum.checksum_dot(checksum.column_checksum(at), checksum.row_checksum(bt))
    out_sum = checksum.output_summation(ct)
    tol = comparison_tolerance(dtype, at.shape[1], abft, out_sum)
    return ct, ThreadVerdict(
        thread_row=coords[0],
        thread_col=coords[1],
        detected=bool(abs(abft - out_sum) > tol),
        max_abs_diff=float(abs(abft - out_sum)),
        tolerance_used=tol,
    )


def thread_tile_replication(
    at: np.ndarray,
    bt: np.ndarray,
    tiling: TilingConfig,
    variant: str = "full",
    dtype: DType | None = None,
    faults: Sequence[tuple[int, int, float]] = (),
    coords: tuple[int, int] = (0, 0),
    acc_width: int = 4,
) -> tuple[np.ndarray, ThreadVerdict]:
    """Duplicate every MMA into a shadow accumulator.

    The full variant shadows all Mt x Nt outputs and compares elementwise.
    The single-acc variant folds each redundant MMA's outputs into acc_width
    registers and compares only the fold-sum against the summation of Ct,
    which halves nothing in MMA count but avoids doubling output registers.
    A fault perturbs only the base accumulation (single erroneous execution,
    not a common-mode error), so the shadow side stays clean.
    """
    if variant not in ("full", "single-acc"):
        raise ValueError(f"unknown replication variant {variant!r}")
    at, bt = _validate_tile_operands(at, bt, tiling)
    if dtype is None:
        dtype = checksum.dtype_of(at)
    shadow = accumulate_matmul(at, bt)
    ct = _apply_local_faults(shadow.copy(), list(faults))
    if variant == "full":
        return ct, _vector_verdict(shadow, ct, dtype, at.shape[1], coords)
    registers = np.array(
        [shadow.ravel()[p::acc_width].sum() for p in range(acc_width)], dtype=shadow.dtype
    )
    fold_sum = int(registers.sum()) if dtype.is_exact else float(registers.sum())
    out_sum = checksum.output_summation(ct)
    tol = comparison_tolerance(dtype, at.shape[1], fold_sum, out_sum)
    return ct, ThreadVerdict(
        thread_row=coords[0],
        thread_col=coords[1],
        detected=bool(abs(fold_sum - out_sum) > tol),
        max_abs_diff=float(abs(fold_sum - out_sum)),
        tolerance_used=tol,
    )


def _per_step_counts(scheme: Scheme, tiling: TilingConfig) -> tuple[int, int]:
    """(redundant MMAs, checksum adds) per thread per K step."""
    mt, nt, ks = tiling.thread_m, tiling.thread_n, tiling.k_step
    if scheme is Scheme.THREAD_ONE_SIDED:
        return mt // 2, ks * (nt - 1)
    if scheme is Scheme.THREAD_TWO_SIDED:
        return 1, ks * ((mt - 1) + (nt - 1))
    if scheme in (Scheme.THREAD_REPLICATION_FULL, Scheme.THREAD_REPLICATION_SINGLE_ACC):
        return mt * nt // 2, 0
    return 0, 0


def count_redundant_ops(scheme: Scheme, tiling: TilingConfig, gemm: GemmShape) -> OpCounts:
    """Closed-form operation totals for a tiling that divides the GEMM.

    Thread-level counts scale the per-step Table values by thread count and
    step count. Global ABFT instead reports its kernel-level checksum adds:
    m*k for the activation checksum, k for the dot product, m*n for the
    output summation.
    """
    if gemm.m % tiling.thread_m or gemm.n % tiling.thread_n or gemm.k % tiling.k_step:
        raise ShapeMismatchError(
            f"tiling {tiling.thread_m}x{tiling.thread_n}/k_step {tiling.k_step} "
            f"does not divide GEMM {gemm.m}x{gemm.n}x{gemm.k}"
        )
    threads = (gemm.m // tiling.thread_m) * (gemm.n // tiling.thread_n)
    steps = gemm.k // tiling.k_step
    base = threads * steps * (tiling.thread_m * tiling.thread_n // 2)
    if scheme is Scheme.GLOBAL_ABFT:
        return OpCounts(
            base_mma_count=base,
            redundant_mma_count=0,
            checksum_op_count=gemm.m * gemm.k + gemm.k + gemm.m * gemm.n,
        )
    red, ck = _per_step_counts(scheme, tiling)
    return OpCounts(
        base_mma_count=base,
        redundant_mma_count=threads * steps * red,
        checksum_op_count=threads * steps * ck,
    )


def _validate_faults(faults: Sequence[FaultSpec], shape: GemmShape, tiling: TilingConfig) -> None:
    steps = -(-shape.k // tiling.k_step)
    for fault in faults:
        if isinstance(fault, OutputFault):
            if not (0 <= fault.row < shape.m and 0 <= fault.col < shape.n):
                raise ValueError(
                    f"output fault at ({fault.row}, {fault.col}) is outside the "
                    f"{shape.m}x{shape.n} output"
                )
        elif isinstance(fault, ThreadMmaFault):
            mt, nt = tiling.thread_m, tiling.thread_n
            if not (0 <= fault.local_index < mt * nt):
                raise ValueError(f"local output index {fault.local_index} outside {mt}x{nt} tile")
            if not (0 <= fault.step < steps):
                raise ValueError(f"step {fault.step} outside {steps} K steps")
            row = fault.thread_row * mt + fault.local_index // nt
            col = fault.thread_col * nt + fault.local_index % nt
            if not (0 <= row < shape.m and 0 <= col < shape.n):
                raise ValueError(
                    f"thread-mma fault maps to padding cell ({row}, {col}) of "
                    f"{shape.m}x{shape.n} output"
                )
        else:
            raise ValueError(f"unsupported fault type {type(fault).__name__}")


def _fault_cell(fault: FaultSpec, tiling: TilingConfig) -> tuple[int, int, int, int, float]:
    """(thread_row, thread_col, local_row, local_col, delta) of a fault."""
    mt, nt = tiling.thread_m, tiling.thread_n
    if isinstance(fault, OutputFault):
        return fault.row // mt, fault.col // nt, fault.row % mt, fault.col % nt, fault.delta
    return (
        fault.thread_row,
        fault.thread_col,
        fault.local_index // nt,
        fault.local_index % nt,
        fault.delta,
    )


def execute(
    a: np.ndarray,
    b: np.ndarray,
    tiling: TilingConfig = TilingConfig(),
    scheme: Scheme = Scheme.UNPROTECTED,
    faults: Sequence[FaultSpec] = (),
    dtype: DType | None = None,
) -> ExecutionReport:
    """Run the tiled GEMM under a redundancy scheme with optional faults.

    The base accumulation path is identical for every scheme, so outputs are
    scheme-independent for the same inputs and fault sites. Thread verdicts
    are emitted sorted by thread coordinates regardless of compute order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"GEMM operands do not conform: {a.shape} vs {b.shape}")
    if dtype is None:
        dtype = checksum.dtype_of(a)
    shape = GemmShape(m=a.shape[0], n=b.shape[1], k=a.shape[1])
    _validate_faults(faults, shape, tiling)

    m_pad = _round_up(shape.m, tiling.tb_m)
    n_pad = _round_up(shape.n, tiling.tb_n)
    k_pad = _round_up(shape.k, tiling.k_step)
    padded = GemmShape(m=m_pad, n=n_pad, k=k_pad)

    a_pad = np.zeros((m_pad, k_pad), dtype=storage_array(a, dtype).dtype)
    b_pad = np.zeros((k_pad, n_pad), dtype=a_pad.dtype)
    a_pad[: shape.m, : shape.k] = storage_array(a, dtype)
    b_pad[: shape.k, : shape.n] = storage_array(b, dtype)

    fault_map: dict[tuple[int, int], list[tuple[int, int, float]]] = {}
    for fault in faults:
        t_row, t_col, l_row, l_col, delta = _fault_cell(fault, tiling)
        fault_map.setdefault((t_row, t_col), []).append((l_row, l_col, delta))

    mt, nt = tiling.thread_m, tiling.thread_n
    out = np.empty(
        (m_pad, n_pad), dtype=np.int64 if dtype.is_exact else np.float32
    )
    thread_verdicts: list[ThreadVerdict] = []
    for t_row in range(m_pad // mt):
        for t_col in range(n_pad // nt):
            at = a_pad[t_row * mt : (t_row + 1) * mt, :]
            bt = b_pad[:, t_col * nt : (t_col + 1) * nt]
            local_faults = fault_map.get((t_row, t_col), ())
            coords = (t_row, t_col)
            if scheme is Scheme.THREAD_ONE_SIDED:
                ct, verdict = thread_tile_one_sided(at, bt, tiling, dtype, local_faults, coords)
                thread_verdicts.append(verdict)
            elif scheme is Scheme.THREAD_TWO_SIDED:
                ct, verdict = thread_tile_two_sided(at, bt, tiling, dtype, local_faults, coords)
                thread_verdicts.append(verdict)
            elif scheme is Scheme.THREAD_REPLICATION_FULL:
                ct, verdict = thread_tile_replication(
                    at, bt, tiling, "full", dtype, local_faults, coords
                )
                thread_verdicts.append(verdict)
            elif scheme is Scheme.THREAD_REPLICATION_SINGLE_ACC:
                ct, verdict = thread_tile_replication(
                    at, bt, tiling, "single-acc", dtype, local_faults, coords
                )
                thread_verdicts.append(verdict)
            else:
                ct = _apply_local_faults(accumulate_matmul(at, bt), list(local_faults))
            out[t_row * mt : (t_row + 1) * mt, t_col * nt : (t_col + 1) * nt] = ct

    output = out[: shape.m, : shape.n]
    if scheme is Scheme.GLOBAL_ABFT:
        verdicts: tuple = (checksum.global_abft_check(a_pad[: shape.m, : shape.k],
                                                      b_pad[: shape.k, : shape.n],
                                                      output, dtype),)
    elif scheme in THREAD_LEVEL_SCHEMES:
        verdicts = tuple(sorted(thread_verdicts, key=lambda v: (v.thread_row, v.thread_col)))
    else:
        verdicts = ()

    threads = (m_pad // mt) * (n_pad // nt)
    steps = k_pad // tiling.k_step
    if scheme is Scheme.GLOBAL_ABFT:
        counts = OpCounts(
            base_mma_count=threads * steps * (mt * nt // 2),
            redundant_mma_count=0,
            checksum_op_count=shape.m * shape.k + shape.k + shape.m * shape.n,
        )
    else:
        red, ck = _per_step_counts(scheme, tiling)
        counts = OpCounts(
            base_mma_count=threads * steps * (mt * nt // 2),
            redundant_mma_count=threads * steps * red,
            checksum_op_count=threads * steps * ck,
        )

    return ExecutionReport(
        output=output,
        verdicts=verdicts,
        detected=any(v.detected for v in verdicts),
        op_counts=counts,
        scheme=scheme,
        shape=shape,
        padded_shape=padded,
    )
