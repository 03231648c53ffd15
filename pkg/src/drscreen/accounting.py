"""Compute-cost accounting: per-layer MAC counts, serialized model sizes,
and a wall-clock latency harness.

The FLOPs convention is multiply-accumulate counts (MACs): a convolution
costs H_out * W_out * C_out * C_in * K^2, a dense layer d_in * d_out, and
pooling/activation/normalization layers count zero.  The doubled convention
(2 floating ops per MAC) is available behind a flag and labeled as such.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .nn.layers import BatchNorm, Conv2d, Dense, GlobalAvgPool, MaxPool, ReLU, ResidualAdd, Softmax
from .nn.model import ModelConfig, config_hash, forward, serialize_params
from .quant import QuantizedModel, qforward_batch, serialize_qmodel

__all__ = [
    "LayerFlops",
    "FlopsReport",
    "count_flops",
    "model_size_bytes",
    "quantized_size_bytes",
    "LatencyReport",
    "bench_latency",
]


@dataclass(frozen=True)
class LayerFlops:
    name: str
    kind: str
    macs: int
    out_shape: tuple


@dataclass
class FlopsReport:
    per_layer: list[LayerFlops]
    total_macs: int
    convention: str  # "MACs" or "FLOPs(2/MAC)"
    input_shape: tuple[int, int, int]

    def to_json(self) -> str:
        total = self.total_macs if self.convention == "MACs" else 2 * self.total_macs
        doc = {
            "convention": self.convention,
            "total_macs": self.total_macs,
            "total": total,
            "input_shape": list(self.input_shape),
            "per_layer": [
                {"name": l.name, "kind": l.kind, "macs": l.macs, "out_shape": list(l.out_shape)}
                for l in self.per_layer
            ],
        }
        return json.dumps(doc, indent=2)


def _conv_out(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _count_list(layers, shape, prefix, rows: list[LayerFlops]):
    for idx, spec in enumerate(layers):
        sub = f"{prefix}.{idx}" if prefix else str(idx)
        if isinstance(spec, Conv2d):
            h = _conv_out(shape[1], spec.k, spec.stride, spec.pad)
            w = _conv_out(shape[2], spec.k, spec.stride, spec.pad)
            macs = h * w * spec.c_out * spec.c_in * spec.k * spec.k
            shape = (spec.c_out, h, w)
            rows.append(LayerFlops(sub, "conv2d", macs, shape))
        elif isinstance(spec, Dense):
            shape = (spec.d_out,)
            rows.append(LayerFlops(sub, "dense", spec.d_in * spec.d_out, shape))
        elif isinstance(spec, MaxPool):
            shape = (
                shape[0],
                _conv_out(shape[1], spec.k, spec.stride, 0),
                _conv_out(shape[2], spec.k, spec.stride, 0),
            )
            rows.append(LayerFlops(sub, "maxpool", 0, shape))
        elif isinstance(spec, GlobalAvgPool):
            shape = (shape[0],)
            rows.append(LayerFlops(sub, "gap", 0, shape))
        elif isinstance(spec, ResidualAdd):
            branch_shape = _count_list(spec.branch, shape, f"{sub}.branch", rows)
            if spec.shortcut:
                _count_list(spec.shortcut, shape, f"{sub}.shortcut", rows)
            shape = branch_shape
            rows.append(LayerFlops(sub, "residual_add", 0, shape))
        elif isinstance(spec, (ReLU, BatchNorm, Softmax)):
            rows.append(LayerFlops(sub, type(spec).__name__.lower(), 0, shape))
        else:
            raise TypeError(f"unknown layer spec {spec!r}")
    return shape


def count_flops(
    config: ModelConfig,
    input_dims: tuple[int, int] | None = None,
    double_count: bool = False,
) -> FlopsReport:
    """MAC counts per layer; a pure function of the graph and input dims."""
    c = config.input_shape[0]
    h, w = input_dims if input_dims is not None else config.input_shape[1:]
    rows: list[LayerFlops] = []
    _count_list(config.layers, (c, h, w), "", rows)
    total = sum(r.macs for r in rows)
    return FlopsReport(
        per_layer=rows,
        total_macs=total,
        convention="FLOPs(2/MAC)" if double_count else "MACs",
        input_shape=(c, h, w),
    )


def model_size_bytes(config: ModelConfig, params) -> int:
    """On-disk byte count of the serialized float model."""
    return len(serialize_params(config, params))


def quantized_size_bytes(qm: QuantizedModel) -> int:
    return len(serialize_qmodel(qm))


@dataclass
class LatencyReport:
    runs: int
    warmup: int
    times_ms: list[float]
    mean_ms: float
    p50_ms: float
    p95_ms: float
    max_ms: float
    input_shape: tuple
    model_id: str
    input_checksum: str

    def to_json(self) -> str:
        doc = {
            "runs": self.runs,
            "warmup": self.warmup,
            "mean_ms": self.mean_ms,
            "p50_ms": self.p50_ms,
            "p95_ms": self.p95_ms,
            "max_ms": self.max_ms,
            "input_shape": list(self.input_shape),
            "model_id": self.model_id,
            "input_checksum": self.input_checksum,
            "times_ms": self.times_ms,
        }
        return json.dumps(doc, indent=2)


def bench_latency(
    model,
    runs: int,
    warmup: int = 0,
    input_dims: tuple[int, int] | None = None,
    seed: int = 0,
) -> LatencyReport:
    """Time single-image inference over seeded random inputs.

    `model` is either a (config, params) pair for the float path or a
    QuantizedModel for the integer path.  Warmup iterations run first and are
    excluded.  Input generation is deterministic per seed; the report carries
    a checksum of the input batch so runs are comparable.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if isinstance(model, QuantizedModel):
        config = model.config
        infer = lambda x: qforward_batch(model, x)  # noqa: E731
        model_id = model.model_id
    else:
        config, params = model
        infer = lambda x: forward(params, config, x, train=False)  # noqa: E731
        model_id = config_hash(config)

    c = config.input_shape[0]
    h, w = input_dims if input_dims is not None else config.input_shape[1:]
    if (h, w) != tuple(config.input_shape[1:]):
        raise ValueError(
            f"input {h}x{w} does not match model input {config.input_shape[1:]}"
        )
    rng = np.random.default_rng(seed)
    inputs = rng.random((runs + warmup, 1, c, h, w), dtype=np.float32)
    checksum = hashlib.sha256(inputs.tobytes()).hexdigest()

    times: list[float] = []
    for i in range(runs + warmup):
        start = time.perf_counter()
        infer(inputs[i])
        elapsed = (time.perf_counter() - start) * 1000.0
        if i >= warmup:
            times.append(elapsed)
    arr = np.asarray(times)
    return LatencyReport(
        runs=runs,
        warmup=warmup,
        times_ms=times,
        mean_ms=float(arr.mean()),
        p50_ms=float(np.percentile(arr, 50)),
        p95_ms=float(np.percentile(arr, 95)),
        max_ms=float(arr.max()),
        input_shape=(c, h, w),
        model_id=model_id,
        input_checksum=checksum,
    )
