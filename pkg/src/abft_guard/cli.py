"""Command-line interface: analyze | select | check | simulate.

Exit codes: 0 success (or matched expectation), 1 detection-expectation
mismatch, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import campaign as campaigns
from . import cost, documents
from .errors import AbftGuardError
from .shapes import GemmShape, PaddingPolicy, dtype_from_name, model_to_gemm_sequence
from .tiled import OutputFault, Scheme, TilingConfig, execute

SCHEME_ALIASES = {
    "global": Scheme.GLOBAL_ABFT,
    "one-sided": Scheme.THREAD_ONE_SIDED,
    "two-sided": Scheme.THREAD_TWO_SIDED,
    "replication-full": Scheme.THREAD_REPLICATION_FULL,
    "replication-single-acc": Scheme.THREAD_REPLICATION_SINGLE_ACC,
}
SCHEME_ALIASES.update({scheme.value: scheme for scheme in Scheme})

_PADDING = {"none": PaddingPolicy.NONE, "eight": PaddingPolicy.MULTIPLE_OF_8}


def _write_or_print(text: str, out_path) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _load_model_gemms(args):
    model = documents.parse_model_document(documents.load_json_path(args.model))
    device = documents.parse_device_document(documents.load_json_path(args.device))
    policy = _PADDING[args.pad]
    gemms = model_to_gemm_sequence(model, policy)
    if not gemms:
        raise AbftGuardError(f"model {model.name!r} has no linear layers")
    return model, device, policy, gemms


def cmd_analyze(args) -> int:
    model, device, policy, gemms = _load_model_gemms(args)
    dtype = dtype_from_name(args.dtype)
    document = documents.analysis_document(model, device, policy, gemms, dtype)
    _write_or_print(documents.dumps(document), args.out)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as handle:
            handle.write(documents.analysis_csv(document))
    return 0


def cmd_select(args) -> int:
    model, device, policy, gemms = _load_model_gemms(args)
    dtype = dtype_from_name(args.dtype)
    measured = cost.MeasuredTimings.from_path(args.timings) if args.timings else None
    plan = cost.select(gemms, dtype, device, TilingConfig(), measured)
    document = documents.plan_document(plan, model, device, policy, dtype)
    _write_or_print(documents.dumps(document), args.out)

    print(f"# {model.name} on {device.name} (pad={policy.value})", file=sys.stderr)
    if device.alu_defaulted:
        print("# note: device profile omitted alu_tflops; defaulted to tensor/8", file=sys.stderr)
    print("layer  gemm                   AI      chosen              overhead%", file=sys.stderr)
    for layer in plan.layers:
        shape = layer.shape
        chosen = layer.estimates[layer.chosen]
        dims = f"{shape.m}x{shape.n}x{shape.k}"
        print(
            f"{layer.layer_index:>5}  {dims:<20} {layer.intensity:>8.2f}  "
            f"{layer.chosen.value:<18} {chosen.overhead_pct:>9.2f}",
            file=sys.stderr,
        )
    print(f"aggregate overhead: {plan.aggregate_overhead_pct:.2f}%", file=sys.stderr)
    return 0


def _parse_fault_flag(text: str, exact: bool) -> OutputFault:
    parts = text.split(",")
    if len(parts) != 3:
        raise AbftGuardError(f"--fault expects 'row,col,delta', got {text!r}")
    try:
        row, col = int(parts[0]), int(parts[1])
        delta = int(parts[2]) if exact else float(parts[2])
        return OutputFault(row=row, col=col, delta=delta)
    except ValueError as exc:
        raise AbftGuardError(f"--fault {text!r}: {exc}") from None


def _random_check_faults(rng, shape: GemmShape, tiling: TilingConfig, count: int, exact: bool):
    """count faults in count distinct threads, never targeting padding cells."""
    grid_m = -(-shape.m // tiling.thread_m)
    grid_n = -(-shape.n // tiling.thread_n)
    if count > grid_m * grid_n:
        raise AbftGuardError(
            f"--inject {count} exceeds the {grid_m * grid_n} threads covering the output"
        )
    picks = rng.choice(grid_m * grid_n, size=count, replace=False)
    faults = []
    for flat in picks:
        t_row, t_col = int(flat) // grid_n, int(flat) % grid_n
        row_lo, col_lo = t_row * tiling.thread_m, t_col * tiling.thread_n
        row = row_lo + int(rng.integers(min(tiling.thread_m, shape.m - row_lo)))
        col = col_lo + int(rng.integers(min(tiling.thread_n, shape.n - col_lo)))
        sign = -1 if rng.integers(2) else 1
        if exact:
            delta = int(sign * rng.integers(1, 10))
        else:
            delta = sign * float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
        faults.append(OutputFault(row=row, col=col, delta=delta))
    return faults


def cmd_check(args) -> int:
    shape = GemmShape(m=args.m, n=args.n, k=args.k)
    scheme = SCHEME_ALIASES[args.scheme]
    dtype = dtype_from_name(args.dtype)
    tiling = TilingConfig(
        tb_m=args.tb_m,
        tb_n=args.tb_n,
        warp_m=args.warp_m,
        warp_n=args.warp_n,
        thread_m=args.thread_m,
        thread_n=args.thread_n,
        k_step=args.k_step,
    )
    rng = np.random.default_rng(args.seed)
    a, b = campaigns.random_matrices(rng, shape, dtype)

    faults = [_parse_fault_flag(text, dtype.is_exact) for text in args.fault]
    if args.inject:
        faults.extend(_random_check_faults(rng, shape, tiling, args.inject, dtype.is_exact))

    report = execute(a, b, tiling, scheme, faults=faults, dtype=dtype)

    print(f"gemm {shape.m}x{shape.n}x{shape.k} scheme={scheme.value} dtype={dtype.tag.value} seed={args.seed}")
    for fault in faults:
        print(f"fault: output element ({fault.row}, {fault.col}) delta={fault.delta}")
    counts = report.op_counts
    print(
        f"op counts: base_mma={counts.base_mma_count} "
        f"redundant_mma={counts.redundant_mma_count} checksum_ops={counts.checksum_op_count}"
    )
    fired = [v for v in report.verdicts if v.detected]
    if scheme is Scheme.GLOBAL_ABFT and report.verdicts:
        verdict = report.verdicts[0]
        print(f"global verdict: lhs={verdict.lhs} rhs={verdict.rhs} tolerance={verdict.tolerance_used}")
    elif report.verdicts:
        print(f"thread verdicts: {len(report.verdicts)} total, {len(fired)} fired")
        for verdict in fired:
            print(f"fired: thread ({verdict.thread_row}, {verdict.thread_col})")
    print(f"detected: {str(report.detected).lower()}")

    if args.expect_detect:
        ok = report.detected
    elif args.expect_clean:
        ok = not report.detected
    else:
        ok = True
    print("check: ok" if ok else "check: expectation mismatch")
    return 0 if ok else 1


def cmd_simulate(args) -> int:
    config = campaigns.parse_campaign_document(documents.load_json_path(args.config))
    report = campaigns.run_campaign(config)
    document = campaigns.campaign_document(report)
    _write_or_print(documents.dumps(document), args.out)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as handle:
            handle.write(campaigns.campaign_csv(document))
    return 0


def _positive(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return number


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abft-guard",
        description="Checksum-protected GEMM analysis, simulation, and protection planning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="per-layer arithmetic intensity vs device CMR")
    analyze.add_argument("model", help="model spec JSON path")
    analyze.add_argument("device", help="device profile JSON path")
    analyze.add_argument("--pad", choices=sorted(_PADDING), default="eight")
    analyze.add_argument("--dtype", choices=["exact-int", "binary16", "binary32"], default="binary16")
    analyze.add_argument("--out", help="write the JSON report here instead of stdout")
    analyze.add_argument("--csv", help="also write a plot-ready CSV (layer_index,ai,bound)")
    analyze.set_defaults(func=cmd_analyze)

    select = sub.add_parser("select", help="per-layer protection plan")
    select.add_argument("model")
    select.add_argument("device")
    select.add_argument("--pad", choices=sorted(_PADDING), default="eight")
    select.add_argument("--dtype", choices=["exact-int", "binary16", "binary32"], default="binary16")
    select.add_argument("--timings", help="measured timings CSV (layer_index,scheme,time_us)")
    select.add_argument("--out", help="write the plan JSON here instead of stdout")
    select.set_defaults(func=cmd_select)

    check = sub.add_parser("check", help="run one protected GEMM with optional faults")
    check.add_argument("--m", type=_positive, required=True)
    check.add_argument("--n", type=_positive, required=True)
    check.add_argument("--k", type=_positive, required=True)
    check.add_argument("--scheme", choices=sorted(SCHEME_ALIASES), default="one-sided")
    check.add_argument("--dtype", choices=["exact-int", "binary16", "binary32"], default="exact-int")
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--inject", type=int, default=0, metavar="N",
                       help="inject N random faults into N distinct threads")
    check.add_argument("--fault", action="append", default=[], metavar="ROW,COL,DELTA",
                       help="inject an explicit output-element fault (repeatable)")
    check.add_argument("--tb-m", type=_positive, default=128)
    check.add_argument("--tb-n", type=_positive, default=128)
    check.add_argument("--warp-m", type=_positive, default=64)
    check.add_argument("--warp-n", type=_positive, default=64)
    check.add_argument("--thread-m", type=_positive, default=16)
    check.add_argument("--thread-n", type=_positive, default=8)
    check.add_argument("--k-step", type=_positive, default=2)
    expectation = check.add_mutually_exclusive_group()
    expectation.add_argument("--expect-detect", action="store_true")
    expectation.add_argument("--expect-clean", action="store_true")
    check.set_defaults(func=cmd_check)

    simulate = sub.add_parser("simulate", help="run a fault-injection campaign")
    simulate.add_argument("config", help="campaign config JSON path")
    simulate.add_argument("--out", help="write the JSON report here instead of stdout")
    simulate.add_argument("--csv", help="also write the per-scheme CSV table")
    simulate.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (AbftGuardError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
