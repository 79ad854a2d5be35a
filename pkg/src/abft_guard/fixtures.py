"""Bundled model and device documents used by the tests, docs, and CLI demos.

DLRM's two MLPs: the bottom stack takes 13 dense inputs through 512, 256,
and 64 nodes; the top stack takes a 512-wide interaction vector through 512
and 256 nodes to a single output. The input widths are documented
assumptions (the aggregate-intensity checks pin them down).

Run ``python -m abft_guard.fixtures NAME [--batch B]`` to print a fixture
document; ``--list`` shows the available names.
"""

from __future__ import annotations

from .documents import SCHEMA_VERSION


def dlrm_mlp_bottom(batch: int = 1) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": "dlrm-mlp-bottom",
        "batch": batch,
        "input": {"h": 1, "w": 1, "c": 13},
        "layers": [
            {"type": "fc", "out_features": 512},
            {"type": "fc", "out_features": 256},
            {"type": "fc", "out_features": 64},
        ],
    }


def dlrm_mlp_top(batch: int = 1) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": "dlrm-mlp-top",
        "batch": batch,
        "input": {"h": 1, "w": 1, "c": 512},
        "layers": [
            {"type": "fc", "out_features": 512},
            {"type": "fc", "out_features": 256},
            {"type": "fc", "out_features": 1},
        ],
    }


def resnet50_first_conv(batch: int = 1) -> dict:
    """The 7x7/stride-2 stem convolution on HD (1080x1920) input."""
    return {
        "schema_version": SCHEMA_VERSION,
        "name": "resnet50-first-conv",
        "batch": batch,
        "input": {"h": 1080, "w": 1920, "c": 3},
        "layers": [
            {
                "type": "conv",
                "out_channels": 64,
                "kernel": [7, 7],
                "stride": [2, 2],
                "padding": [3, 3],
            }
        ],
    }


def fc_classifier(batch: int = 1, in_features: int = 2048, out_features: int = 1000) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": f"fc-{in_features}-{out_features}",
        "batch": batch,
        "input": {"h": 1, "w": 1, "c": in_features},
        "layers": [{"type": "fc", "out_features": out_features}],
    }


def square_gemm_model(size: int) -> dict:
    """A single FC layer whose GEMM is size x size x size."""
    return {
        "schema_version": SCHEMA_VERSION,
        "name": f"square-{size}",
        "batch": size,
        "input": {"h": 1, "w": 1, "c": size},
        "layers": [{"type": "fc", "out_features": size}],
    }


def t4() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": "T4",
        "tensor_tflops": 65.0,
        "mem_bw_gbs": 320.0,
    }


def p4() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": "P4",
        "tensor_tflops": 11.0,
        "mem_bw_gbs": 192.0,
    }


MODEL_FIXTURES = {
    "dlrm-mlp-bottom": dlrm_mlp_bottom,
    "dlrm-mlp-top": dlrm_mlp_top,
    "resnet50-first-conv": resnet50_first_conv,
    "fc-2048-1000": fc_classifier,
}

DEVICE_FIXTURES = {"t4": t4, "p4": p4}


def main(argv=None) -> int:
    import argparse

    from .documents import dumps

    parser = argparse.ArgumentParser(prog="python -m abft_guard.fixtures")
    parser.add_argument("name", nargs="?", help="fixture name, or a square size like square-256")
    parser.add_argument("--batch", type=int, default=1)
    parser.add_argument("--list", action="store_true", help="list available fixture names")
    args = parser.parse_args(argv)

    if args.list or args.name is None:
        for name in sorted(MODEL_FIXTURES) + ["square-<size>"] + sorted(DEVICE_FIXTURES):
            print(name)
        return 0
    if args.name in MODEL_FIXTURES:
        print(dumps(MODEL_FIXTURES[args.name](batch=args.batch)), end="")
        return 0
    if args.name in DEVICE_FIXTURES:
        print(dumps(DEVICE_FIXTURES[args.name]()), end="")
        return 0
    if args.name.startswith("square-"):
        print(dumps(square_gemm_model(int(args.name.split("-", 1)[1]))), end="")
        return 0
    parser.error(f"unknown fixture {args.name!r}")
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
