"""Seeded fault-injection campaigns over the tiled executor.

Every trial derives its own generator from (seed, scheme, kind, trial index),
so reports are identical for a given config regardless of how many worker
processes run the trials. The ABFT_GUARD_THREADS environment variable caps
worker count.

Config documents:
    {"schema_version": 1, "trials": ..., "seed": ...,
     "gemm_size": {"min": ..., "max": ...},
     "schemes": ["global-abft", ...], "dtype": "exact-int",
     "delta"?: {"kind": "int-uniform", "min": 1, "max": 100}
            |  {"kind": "log-uniform", "min_magnitude": ..., "max_magnitude": ...},
     "control_trials"?: ..., "site"?: "output-element" | "thread-mma" | "mixed",
     "tiling"?: {"tb_m": ..., "tb_n": ..., "warp_m": ..., "warp_n": ...,
                 "thread_m": ..., "thread_n": ..., "k_step": ...}}
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np

from .documents import SCHEMA_VERSION, _expect, _get, _positive_int, _positive_number
from .errors import DocumentError
from .shapes import DType, DTypeTag, dtype_from_name, GemmShape
from .tiled import (
    ExecutionReport,
    OutputFault,
    Scheme,
    TilingConfig,
    execute,
    random_output_fault,
    random_thread_mma_fault,
    scheme_from_name,
)

ENV_THREADS = "ABFT_GUARD_THREADS"

# Small tiling keeps campaign trials fast while exercising the full hierarchy.
CAMPAIGN_TILING = TilingConfig(tb_m=32, tb_n=32, warp_m=16, warp_n=16, thread_m=8, thread_n=8, k_step=2)

SITE_OUTPUT = "output-element"
SITE_THREAD_MMA = "thread-mma"
SITE_MIXED = "mixed"


@dataclass(frozen=True)
class DeltaDistribution:
    """Fault magnitudes: uniform nonzero integers or log-uniform floats."""

    kind: str
    low: float
    high: float

    def sample(self, rng: np.random.Generator):
        sign = -1 if rng.integers(2) else 1
        if self.kind == "int-uniform":
            return int(sign * rng.integers(int(self.low), int(self.high) + 1))
        magnitude = float(np.exp(rng.uniform(np.log(self.low), np.log(self.high))))
        return sign * magnitude


INT_DELTAS = DeltaDistribution(kind="int-uniform", low=1, high=100)
FP_DELTAS = DeltaDistribution(kind="log-uniform", low=1e-2, high=1e2)


@dataclass(frozen=True)
class CampaignConfig:
    trials: int
    seed: int
    gemm_min: int
    gemm_max: int
    schemes: tuple
    dtype: DType
    delta: DeltaDistribution
    control_trials: int
    site: str = SITE_MIXED
    tiling: TilingConfig = CAMPAIGN_TILING

    def __post_init__(self):
        if self.trials < 1:
            raise DocumentError("trials must be >= 1")
        if not (1 <= self.gemm_min <= self.gemm_max):
            raise DocumentError("gemm size range must satisfy 1 <= min <= max")


def parse_campaign_document(doc: Any) -> CampaignConfig:
    _expect(isinstance(doc, dict), "", "campaign config must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    _expect(version == SCHEMA_VERSION, "schema_version", f"unsupported version {version!r}")
    trials = _positive_int(_get(doc, "trials", ""), "trials")
    seed = _get(doc, "seed", "")
    _expect(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0, "seed",
            "expected a non-negative integer")

    size_doc = _get(doc, "gemm_size", "")
    _expect(isinstance(size_doc, dict), "gemm_size", "expected an object with min and max")
    gemm_min = _positive_int(_get(size_doc, "min", "gemm_size"), "gemm_size.min")
    gemm_max = _positive_int(_get(size_doc, "max", "gemm_size"), "gemm_size.max")
    _expect(gemm_min <= gemm_max, "gemm_size", "min must be <= max")

    schemes_doc = _get(doc, "schemes", "")
    _expect(isinstance(schemes_doc, list) and schemes_doc, "schemes", "expected a non-empty list")
    try:
        schemes = tuple(scheme_from_name(name) for name in schemes_doc)
    except ValueError as exc:
        raise DocumentError(f"schemes: {exc}") from None

    try:
        dtype = dtype_from_name(_get(doc, "dtype", ""))
    except ValueError as exc:
        raise DocumentError(f"dtype: {exc}") from None

    delta_doc = doc.get("delta")
    if delta_doc is None:
        delta = INT_DELTAS if dtype.is_exact else FP_DELTAS
    else:
        _expect(isinstance(delta_doc, dict), "delta", "expected an object")
        kind = _get(delta_doc, "kind", "delta")
        if kind == "int-uniform":
            low = _positive_int(_get(delta_doc, "min", "delta"), "delta.min")
            high = _positive_int(_get(delta_doc, "max", "delta"), "delta.max")
        elif kind == "log-uniform":
            low = _positive_number(_get(delta_doc, "min_magnitude", "delta"), "delta.min_magnitude")
            high = _positive_number(_get(delta_doc, "max_magnitude", "delta"), "delta.max_magnitude")
        else:
            raise DocumentError(f"delta.kind: expected 'int-uniform' or 'log-uniform', got {kind!r}")
        _expect(low <= high, "delta", "min must be <= max")
        delta = DeltaDistribution(kind=kind, low=low, high=high)

    site = doc.get("site", SITE_MIXED)
    _expect(site in (SITE_OUTPUT, SITE_THREAD_MMA, SITE_MIXED), "site",
            f"expected one of {SITE_OUTPUT!r}, {SITE_THREAD_MMA!r}, {SITE_MIXED!r}")

    tiling_doc = doc.get("tiling")
    if tiling_doc is None:
        tiling = CAMPAIGN_TILING
    else:
        _expect(isinstance(tiling_doc, dict), "tiling", "expected an object")
        try:
            tiling = TilingConfig(**{k: _positive_int(v, f"tiling.{k}") for k, v in tiling_doc.items()})
        except (TypeError, ValueError) as exc:
            raise DocumentError(f"tiling: {exc}") from None

    control = doc.get("control_trials", trials)
    control = _positive_int(control, "control_trials", minimum=0)
    return CampaignConfig(
        trials=trials,
        seed=seed,
        gemm_min=gemm_min,
        gemm_max=gemm_max,
        schemes=schemes,
        dtype=dtype,
        delta=delta,
        control_trials=control,
        site=site,
        tiling=tiling,
    )


@dataclass
class SchemeStats:
    injected_trials: int = 0
    detected: int = 0
    masked_by_tolerance: int = 0
    missed: int = 0
    control_trials: int = 0
    false_positives: int = 0

    def merge(self, other: "SchemeStats") -> None:
        self.injected_trials += other.injected_trials
        self.detected += other.detected
        self.masked_by_tolerance += other.masked_by_tolerance
        self.missed += other.missed
        self.control_trials += other.control_trials
        self.false_positives += other.false_positives

    @property
    def detection_rate(self) -> float:
        return self.detected / self.injected_trials if self.injected_trials else 0.0

    @property
    def false_positive_rate(self) -> float:
        return self.false_positives / self.control_trials if self.control_trials else 0.0


@dataclass(frozen=True)
class CampaignReport:
    config: CampaignConfig
    per_scheme: dict


def _trial_rng(seed: int, scheme_index: int, kind: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, scheme_index, kind, trial]))


def random_matrices(rng: np.random.Generator, shape: GemmShape, dtype: DType):
    if dtype.is_exact:
        a = rng.integers(-8, 9, size=(shape.m, shape.k), dtype=np.int64)
        b = rng.integers(-8, 9, size=(shape.k, shape.n), dtype=np.int64)
        return a, b
    np_dtype = np.float16 if dtype.tag is DTypeTag.BINARY16 else np.float32
    a = rng.uniform(-1.0, 1.0, size=(shape.m, shape.k)).astype(np_dtype)
    b = rng.uniform(-1.0, 1.0, size=(shape.k, shape.n)).astype(np_dtype)
    return a, b


def _fault_tolerance(report: ExecutionReport, fault, tiling: TilingConfig) -> float:
    """Tolerance of the verdict responsible for the fault's protection domain."""
    if report.scheme is Scheme.GLOBAL_ABFT:
        return report.verdicts[0].tolerance_used
    if isinstance(fault, OutputFault):
        coords = (fault.row // tiling.thread_m, fault.col // tiling.thread_n)
    else:
        coords = (fault.thread_row, fault.thread_col)
    for verdict in report.verdicts:
        if (verdict.thread_row, verdict.thread_col) == coords:
            return verdict.tolerance_used
    return 0.0


def _run_injected_trial(config: CampaignConfig, scheme: Scheme, scheme_index: int, trial: int) -> tuple[bool, bool]:
    """Returns (detected, masked)."""
    rng = _trial_rng(config.seed, scheme_index, 0, trial)
    shape = GemmShape(
        m=int(rng.integers(config.gemm_min, config.gemm_max + 1)),
        n=int(rng.integers(config.gemm_min, config.gemm_max + 1)),
        k=int(rng.integers(config.gemm_min, config.gemm_max + 1)),
    )
    a, b = random_matrices(rng, shape, config.dtype)
    delta = config.delta.sample(rng)
    site = config.site
    if site == SITE_MIXED:
        site = SITE_OUTPUT if rng.integers(2) else SITE_THREAD_MMA
    if site == SITE_OUTPUT:
        fault = random_output_fault(rng, shape, delta)
    else:
        fault = random_thread_mma_fault(rng, shape, config.tiling, delta)
    report = execute(a, b, config.tiling, scheme, faults=[fault], dtype=config.dtype)
    if report.detected:
        return True, False
    return False, abs(delta) <= _fault_tolerance(report, fault, config.tiling)


def _run_control_trial(config: CampaignConfig, scheme: Scheme, scheme_index: int, trial: int) -> bool:
    rng = _trial_rng(config.seed, scheme_index, 1, trial)
    shape = GemmShape(
        m=int(rng.integers(config.gemm_min, config.gemm_max + 1)),
        n=int(rng.integers(config.gemm_min, config.gemm_max + 1)),
        k=int(rng.integers(config.gemm_min, config.gemm_max + 1)),
    )
    a, b = random_matrices(rng, shape, config.dtype)
    report = execute(a, b, config.tiling, scheme, dtype=config.dtype)
    return report.detected


def _run_chunk(config: CampaignConfig, scheme_index: int, start: int, stop: int) -> SchemeStats:
    scheme = config.schemes[scheme_index]
    stats = SchemeStats()
    for trial in range(start, min(stop, config.trials)):
        detected, masked = _run_injected_trial(config, scheme, scheme_index, trial)
        stats.injected_trials += 1
        if detected:
            stats.detected += 1
        elif masked:
            stats.masked_by_tolerance += 1
        else:
            stats.missed += 1
    for trial in range(start, min(stop, config.control_trials)):
        stats.control_trials += 1
        if _run_control_trial(config, scheme, scheme_index, trial):
            stats.false_positives += 1
    return stats


def _worker_count(config: CampaignConfig) -> int:
    limit = os.environ.get(ENV_THREADS)
    if limit is None:
        cap = os.cpu_count() or 1
    else:
        try:
            cap = max(1, int(limit))
        except ValueError:
            raise DocumentError(f"{ENV_THREADS} must be an integer, got {limit!r}") from None
    return min(cap, max(config.trials, config.control_trials))


def run_campaign(config: CampaignConfig) -> CampaignReport:
    """Run all schemes' injected and fault-free trials; seed-deterministic."""
    per_scheme: dict = {}
    workers = _worker_count(config)
    total = max(config.trials, config.control_trials)
    for scheme_index, scheme in enumerate(config.schemes):
        stats = SchemeStats()
        if workers <= 1:
            stats.merge(_run_chunk(config, scheme_index, 0, total))
        else:
            chunk = -(-total // workers)
            bounds = [(start, min(start + chunk, total)) for start in range(0, total, chunk)]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_chunk, config, scheme_index, lo, hi) for lo, hi in bounds]
                for future in futures:
                    stats.merge(future.result())
        per_scheme[scheme] = stats
    return CampaignReport(config=config, per_scheme=per_scheme)


def campaign_document(report: CampaignReport) -> dict:
    config = report.config
    schemes_doc = {}
    for scheme, stats in report.per_scheme.items():
        schemes_doc[scheme.value] = {
            "injected_trials": stats.injected_trials,
            "detected": stats.detected,
            "detection_rate": stats.detection_rate,
            "masked_by_tolerance": stats.masked_by_tolerance,
            "missed": stats.missed,
            "control_trials": stats.control_trials,
            "false_positives": stats.false_positives,
            "false_positive_rate": stats.false_positive_rate,
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": config.seed,
        "trials": config.trials,
        "control_trials": config.control_trials,
        "dtype": config.dtype.tag.value,
        "gemm_size": {"min": config.gemm_min, "max": config.gemm_max},
        "site": config.site,
        "schemes": schemes_doc,
    }


def campaign_csv(document: dict) -> str:
    lines = [
        "scheme,injected_trials,detected,detection_rate,masked_by_tolerance,"
        "missed,control_trials,false_positives,false_positive_rate"
    ]
    for name in sorted(document["schemes"]):
        entry = document["schemes"][name]
        lines.append(
            f"{name},{entry['injected_trials']},{entry['detected']},{entry['detection_rate']!r},"
            f"{entry['masked_by_tolerance']},{entry['missed']},{entry['control_trials']},"
            f"{entry['false_positives']},{entry['false_positive_rate']!r}"
        )
    return "\n".join(lines) + "\n"
