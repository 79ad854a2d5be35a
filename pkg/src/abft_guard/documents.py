"""JSON document schemas: model specs, device profiles, and report emission.

Model documents:
    {"schema_version": 1, "name": ..., "batch": ..., "input": {"h", "w", "c"},
     "layers": [{"type": "conv", "out_channels", "kernel": [kh, kw],
                 "stride": [sh, sw], "padding": [ph, pw]}
                | {"type": "fc", "out_features"}]}

Device documents:
    {"schema_version": 1, "name": ..., "tensor_tflops": ..., "alu_tflops"?: ...,
     "mem_bw_gbs": ..., "verification_launch_us"?: ...}

Validation failures raise DocumentError with the offending field path.
All emitted JSON is key-sorted so identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
from typing import Any

from . import roofline
from .cost import SelectionPlan
from .errors import DocumentError
from .shapes import (
    ConvLayer,
    DeviceProfile,
    DType,
    FullyConnectedLayer,
    GemmShape,
    ModelSpec,
    PaddingPolicy,
)

SCHEMA_VERSION = 1


def dumps(document: dict) -> str:
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


def load_json_path(path) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path} is not valid JSON: {exc}") from None


def _expect(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise DocumentError(f"{path}: {message}")


def _get(doc: dict, key: str, path: str, required: bool = True, default=None):
    if key not in doc:
        _expect(not required, f"{path}.{key}" if path else key, "field is required")
        return default
    return doc[key]


def _positive_int(value, path: str, minimum: int = 1) -> int:
    _expect(isinstance(value, int) and not isinstance(value, bool), path, "expected an integer")
    _expect(value >= minimum, path, f"expected an integer >= {minimum}")
    return value


def _positive_number(value, path: str) -> float:
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool), path, "expected a number")
    _expect(value > 0, path, "expected a number > 0")
    return float(value)


def _int_pair(value, path: str, minimum: int) -> tuple[int, int]:
    _expect(isinstance(value, (list, tuple)) and len(value) == 2, path, "expected a pair of integers")
    return (
        _positive_int(value[0], f"{path}[0]", minimum),
        _positive_int(value[1], f"{path}[1]", minimum),
    )


def _check_schema_version(doc: dict, path: str) -> None:
    version = doc.get("schema_version", SCHEMA_VERSION)
    _expect(version == SCHEMA_VERSION, f"{path}.schema_version" if path else "schema_version",
            f"unsupported version {version!r} (this reader supports {SCHEMA_VERSION})")


def parse_model_document(doc: Any) -> ModelSpec:
    _expect(isinstance(doc, dict), "", "model document must be a JSON object")
    _check_schema_version(doc, "")
    name = _get(doc, "name", "")
    _expect(isinstance(name, str) and name, "name", "expected a non-empty string")
    batch = _positive_int(_get(doc, "batch", ""), "batch")

    input_doc = _get(doc, "input", "")
    _expect(isinstance(input_doc, dict), "input", "expected an object with h, w, c")
    in_h = _positive_int(_get(input_doc, "h", "input"), "input.h")
    in_w = _positive_int(_get(input_doc, "w", "input"), "input.w")
    in_c = _positive_int(_get(input_doc, "c", "input"), "input.c")

    layers_doc = _get(doc, "layers", "")
    _expect(isinstance(layers_doc, list), "layers", "expected a list of layers")
    layers = []
    for i, layer_doc in enumerate(layers_doc):
        path = f"layers[{i}]"
        _expect(isinstance(layer_doc, dict), path, "expected an object")
        kind = _get(layer_doc, "type", path)
        if kind == "conv":
            groups = layer_doc.get("groups", 1)
            _expect(groups == 1, f"{path}.groups", "grouped convolutions are not supported")
            kernel = _int_pair(_get(layer_doc, "kernel", path), f"{path}.kernel", 1)
            stride = _int_pair(layer_doc.get("stride", [1, 1]), f"{path}.stride", 1)
            padding = _int_pair(layer_doc.get("padding", [0, 0]), f"{path}.padding", 0)
            layers.append(
                ConvLayer(
                    out_channels=_positive_int(_get(layer_doc, "out_channels", path), f"{path}.out_channels"),
                    kernel_h=kernel[0],
                    kernel_w=kernel[1],
                    stride_h=stride[0],
                    stride_w=stride[1],
                    pad_h=padding[0],
                    pad_w=padding[1],
                )
            )
        elif kind == "fc":
            layers.append(
                FullyConnectedLayer(
                    out_features=_positive_int(_get(layer_doc, "out_features", path), f"{path}.out_features")
                )
            )
        else:
            raise DocumentError(f"{path}.type: expected 'conv' or 'fc', got {kind!r}")

    return ModelSpec(name=name, batch=batch, input_h=in_h, input_w=in_w, input_c=in_c, layers=tuple(layers))


def parse_device_document(doc: Any) -> DeviceProfile:
    _expect(isinstance(doc, dict), "", "device document must be a JSON object")
    _check_schema_version(doc, "")
    name = _get(doc, "name", "")
    _expect(isinstance(name, str) and name, "name", "expected a non-empty string")
    tensor = _positive_number(_get(doc, "tensor_tflops", ""), "tensor_tflops") * 1e12
    bandwidth = _positive_number(_get(doc, "mem_bw_gbs", ""), "mem_bw_gbs") * 1e9
    alu_raw = doc.get("alu_tflops")
    alu_defaulted = alu_raw is None
    alu = tensor / 8.0 if alu_defaulted else _positive_number(alu_raw, "alu_tflops") * 1e12
    launch_raw = doc.get("verification_launch_us", 5.0)
    launch = _positive_number(launch_raw, "verification_launch_us") * 1e-6
    return DeviceProfile(
        name=name,
        tensor_throughput=tensor,
        alu_throughput=alu,
        memory_bandwidth=bandwidth,
        verification_launch_latency=launch,
        alu_defaulted=alu_defaulted,
    )


def analysis_document(
    model: ModelSpec,
    device: DeviceProfile,
    policy: PaddingPolicy,
    gemms: list[tuple[int, GemmShape]],
    dtype: DType,
) -> dict:
    device_cmr = roofline.cmr(device)
    layers = []
    for index, shape in gemms:
        report = roofline.intensity_report(shape, dtype, device)
        layers.append(
            {
                "layer_index": index,
                "m": shape.m,
                "n": shape.n,
                "k": shape.k,
                "flops": report.flops,
                "bytes": report.bytes,
                "ai": report.intensity,
                "bound": report.bound,
            }
        )
    total_flops = sum(entry["flops"] for entry in layers)
    total_bytes = sum(entry["bytes"] for entry in layers)
    aggregate_ai = total_flops / total_bytes
    return {
        "schema_version": SCHEMA_VERSION,
        "model": model.name,
        "batch": model.batch,
        "device": device.name,
        "cmr": device_cmr,
        "dtype": dtype.tag.value,
        "padding": policy.value,
        "layers": layers,
        "aggregate": {
            "flops": total_flops,
            "bytes": total_bytes,
            "ai": aggregate_ai,
            "bound": roofline.classify_bound(aggregate_ai, device_cmr),
        },
    }


def analysis_csv(document: dict) -> str:
    lines = ["layer_index,ai,bound"]
    for entry in document["layers"]:
        lines.append(f"{entry['layer_index']},{entry['ai']!r},{entry['bound']}")
    return "\n".join(lines) + "\n"


def plan_document(
    plan: SelectionPlan,
    model: ModelSpec,
    device: DeviceProfile,
    policy: PaddingPolicy,
    dtype: DType,
) -> dict:
    layers = []
    for layer in plan.layers:
        candidates = {}
        for scheme, estimate in layer.estimates.items():
            candidates[scheme.value] = {
                "base_time_s": estimate.base_time,
                "protected_time_s": estimate.protected_time,
                "overhead_pct": estimate.overhead_pct,
                "source": estimate.source,
            }
        layers.append(
            {
                "layer_index": layer.layer_index,
                "m": layer.shape.m,
                "n": layer.shape.n,
                "k": layer.shape.k,
                "ai": layer.intensity,
                "chosen_scheme": layer.chosen.value,
                "candidates": candidates,
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "model": model.name,
        "batch": model.batch,
        "device": device.name,
        "dtype": dtype.tag.value,
        "padding": policy.value,
        "alu_throughput_defaulted": device.alu_defaulted,
        "layers": layers,
        "aggregate": {
            "base_time_s": plan.aggregate_base_time,
            "protected_time_s": plan.aggregate_protected_time,
            "overhead_pct": plan.aggregate_overhead_pct,
        },
    }
