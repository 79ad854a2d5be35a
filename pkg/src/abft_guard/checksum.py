"""Reference checksum math for protected GEMMs and the per-layer pipeline.

The invariant: the dot product of A's column-checksum vector with B's
row-checksum vector equals the sum of all entries of C = A @ B, so comparing
the two detects a single corrupted output value.

Numeric modes follow the element type:

* exact-int: int64 arithmetic with a-priori overflow guards; comparisons are
  exact (tolerance 0), so detection guarantees are provable.
* binary16: float16 storage, float32 accumulation (mirrors matrix-unit
  accumulate behavior); comparisons use the linear-in-K tolerance below.
* binary32: float32 throughout.

Floating-point comparisons use tau = r * K * max(|lhs|, |rhs|, 1) with
r = 2^-10 for binary16 and r = 2^-23 for binary32; a K-term summation's
error grows linearly in K.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ExactOverflowError, ShapeMismatchError
from .shapes import BINARY16, BINARY32, DType, DTypeTag, EXACT_INT

_INT64_SAFE = 2**62

R_BINARY16 = 2.0**-10
R_BINARY32 = 2.0**-23


@dataclass(frozen=True)
class Verdict:
    """Outcome of one checksum comparison."""

    detected: bool
    lhs: float
    rhs: float
    tolerance_used: float


def dtype_of(a: np.ndarray) -> DType:
    """Infer the numeric mode from an array's element type."""
    if np.issubdtype(a.dtype, np.integer):
        return EXACT_INT
    if a.dtype == np.float16:
        return BINARY16
    return BINARY32


def storage_array(values, dtype: DType) -> np.ndarray:
    """Cast values onto the mode's storage grid (int64 / float16 / float32)."""
    a = np.asarray(values)
    if dtype.tag is DTypeTag.EXACT_INT:
        return a.astype(np.int64)
    if dtype.tag is DTypeTag.BINARY16:
        return a.astype(np.float16)
    return a.astype(np.float32)


def _require_2d(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.size == 0:
        raise ShapeMismatchError(f"{name} must be a non-empty 2-D matrix, got shape {a.shape}")
    return a


def _guard_exact(bound: int, what: str) -> None:
    if bound > _INT64_SAFE:
        raise ExactOverflowError(f"{what} may exceed the int64 range (bound {bound})")


def _max_abs(a: np.ndarray) -> int:
    return int(np.abs(a).max())


def _compute_view(a: np.ndarray) -> np.ndarray:
    # Accumulation dtype: int64 for exact mode, float32 for binary16 inputs.
    if np.issubdtype(a.dtype, np.integer):
        return a.astype(np.int64)
    if a.dtype == np.float16:
        return a.astype(np.float32)
    return a


def column_checksum(a: np.ndarray) -> np.ndarray:
    """Per-column sums of A; a 1 x K vector when A is M x K."""
    a = _require_2d(a, "A")
    v = _compute_view(a)
    if np.issubdtype(v.dtype, np.integer):
        _guard_exact(a.shape[0] * _max_abs(v), "column checksum")
    return v.sum(axis=0)


def row_checksum(b: np.ndarray) -> np.ndarray:
    """Per-row sums of B; a K x 1 vector when B is K x N."""
    b = _require_2d(b, "B")
    v = _compute_view(b)
    if np.issubdtype(v.dtype, np.integer):
        _guard_exact(b.shape[1] * _max_abs(v), "row checksum")
    return v.sum(axis=1)


def checksum_dot(ca: np.ndarray, rb: np.ndarray):
    """Dot product of the column- and row-checksum vectors."""
    ca = np.asarray(ca).ravel()
    rb = np.asarray(rb).ravel()
    if ca.shape != rb.shape:
        raise ShapeMismatchError(f"checksum lengths differ: {ca.shape[0]} vs {rb.shape[0]}")
    if np.issubdtype(ca.dtype, np.integer) and np.issubdtype(rb.dtype, np.integer):
        _guard_exact(ca.shape[0] * max(_max_abs(ca), 1) * max(_max_abs(rb), 1), "checksum dot")
        return int(np.dot(ca.astype(np.int64), rb.astype(np.int64)))
    return float(np.dot(_compute_view(ca), _compute_view(rb)))


def output_summation(c: np.ndarray):
    """Sum of all entries of the output matrix."""
    c = _require_2d(c, "C")
    v = _compute_view(c)
    if np.issubdtype(v.dtype, np.integer):
        _guard_exact(c.size * max(_max_abs(v), 1), "output summation")
        return int(v.sum())
    return float(v.sum())


def accumulate_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """A @ B in the mode's accumulation precision (int64 or float32)."""
    a = _require_2d(a, "A")
    b = _require_2d(b, "B")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"A is {a.shape} but B is {b.shape}")
    va, vb = _compute_view(a), _compute_view(b)
    if np.issubdtype(va.dtype, np.integer) and np.issubdtype(vb.dtype, np.integer):
        _guard_exact(a.shape[1] * max(_max_abs(va), 1) * max(_max_abs(vb), 1), "matmul accumulation")
        return va @ vb
    return va.astype(np.float32) @ vb.astype(np.float32)


def comparison_tolerance(dtype: DType, k: int, lhs: float, rhs: float) -> float:
    """Detection threshold for a checksum comparison over a K-long accumulation."""
    if dtype.tag is DTypeTag.EXACT_INT:
        return 0.0
    r = R_BINARY16 if dtype.tag is DTypeTag.BINARY16 else R_BINARY32
    return r * k * max(abs(lhs), abs(rhs), 1.0)


def make_verdict(dtype: DType, k: int, lhs, rhs) -> Verdict:
    tol = comparison_tolerance(dtype, k, lhs, rhs)
    return Verdict(detected=bool(abs(lhs - rhs) > tol), lhs=lhs, rhs=rhs, tolerance_used=tol)


def global_abft_check(a: np.ndarray, b: np.ndarray, c: np.ndarray, dtype: DType | None = None) -> Verdict:
    """Compare the checksum dot product against the output summation of C."""
    a = _require_2d(a, "A")
    b = _require_2d(b, "B")
    c = _require_2d(c, "C")
    if a.shape[1] != b.shape[0] or c.shape != (a.shape[0], b.shape[1]):
        raise ShapeMismatchError(
            f"non-conformable check: A {a.shape}, B {b.shape}, C {c.shape}"
        )
    if dtype is None:
        dtype = dtype_of(a)
    lhs = checksum_dot(column_checksum(a), row_checksum(b))
    rhs = output_summation(c)
    return make_verdict(dtype, a.shape[1], lhs, rhs)


_weight_checksum_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def offline_weight_checksum(b: np.ndarray) -> np.ndarray:
    """Row checksum of a weight matrix, built once and reused per layer.

    Cache hits return the identical vector object. The cache holds a
    reference to the weight matrix so its identity stays valid.
    """
    key = id(b)
    hit = _weight_checksum_cache.get(key)
    if hit is not None and hit[0] is b:
        return hit[1]
    ck = row_checksum(b)
    _weight_checksum_cache[key] = (b, ck)
    return ck


def clear_weight_checksum_cache() -> None:
    _weight_checksum_cache.clear()


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def run_protected_pipeline(
    a0: np.ndarray,
    weights: Sequence[np.ndarray],
    activation: Callable[[np.ndarray], np.ndarray] = relu,
    dtype: DType | None = None,
    faults: Mapping[int, Sequence[tuple[int, int, float]]] | None = None,
) -> list[Verdict]:
    """Run a protected layer chain and return one verdict per layer.

    Per layer: multiply, form the fused output summation from the raw output,
    apply the activation, and form the next layer's activation checksum from
    the activated (and re-quantized) values. The dot-product comparisons are
    deferred: all verdicts are produced after the chain completes, in layer
    order, so the chain never blocks on verification.

    faults maps a layer index to (row, col, delta) corruptions applied to
    that layer's output before summation and activation.
    """
    a0 = _require_2d(a0, "A0")
    if dtype is None:
        dtype = dtype_of(a0)
    faults = faults or {}

    a = storage_array(a0, dtype)
    pending: list[tuple[int, float, float]] = []
    for index, b in enumerate(weights):
        b = _require_2d(b, f"weights[{index}]")
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatchError(
                f"layer {index}: activations are {a.shape} but weights are {b.shape}"
            )
        act_ck = column_checksum(a)
        w_ck = offline_weight_checksum(b)
        c = accumulate_matmul(a, b)
        for row, col, delta in faults.get(index, ()):
            c[row, col] += delta
        pending.append((a.shape[1], checksum_dot(act_ck, w_ck), output_summation(c)))
        a = storage_array(activation(c), dtype)

    return [make_verdict(dtype, k, lhs, rhs) for k, lhs, rhs in pending]
