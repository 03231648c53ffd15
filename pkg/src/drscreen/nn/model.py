"""Model graphs: configuration, shape checking, initialization, whole-model
forward/backward, presets, and the RCNN1 file format.

Two presets are provided.  ``micro`` is a small residual net (no BatchNorm,
so finite-difference checks stay clean) for desk-scale training on 32x32
inputs.  ``resnet18_226`` is the full 18-layer residual graph at 226x226,
used for parameter/FLOPs/size accounting and quantization.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .layers import (
    BatchNorm,
    Conv2d,
    Dense,
    GlobalAvgPool,
    LayerSpec,
    MaxPool,
    NNError,
    ReLU,
    ResidualAdd,
    ShapeMismatch,
    Softmax,
    backprop_layers,
    run_layers,
)

__all__ = [
    "ModelConfig",
    "infer_shapes",
    "init_params",
    "forward",
    "forward_with_caches",
    "backward",
    "param_count",
    "trainable_keys",
    "micro_config",
    "resnet18_226_config",
    "PRESETS",
    "config_to_dict",
    "config_from_dict",
    "canonical_config_json",
    "config_hash",
    "save_model",
    "load_model",
    "serialize_params",
]


@dataclass(frozen=True)
class ModelConfig:
    layers: tuple
    input_shape: tuple[int, int, int]  # (channels, height, width)
    class_count: int = 5
    name: str = "custom"

    def validate(self) -> None:
        shapes = infer_shapes(self)
        final = shapes[-1]
        if len(final) != 1 or final[0] != self.class_count:
            raise ShapeMismatch(
                f"model must end with {self.class_count} logits, got {final}"
            )


def _conv_out(n: int, k: int, stride: int, pad: int) -> int:
    out = (n + 2 * pad - k) // stride + 1
    if out < 1:
        raise ShapeMismatch(f"window {k} (stride {stride}, pad {pad}) does not fit {n}")
    return out


def _shape_after(spec, shape):
    """Shape propagation for a single layer; shapes are (C, H, W) or (D,)."""
    if isinstance(spec, Conv2d):
        if len(shape) != 3 or shape[0] != spec.c_in:
            raise ShapeMismatch(f"conv c_in {spec.c_in} vs input {shape}")
        return (
            spec.c_out,
            _conv_out(shape[1], spec.k, spec.stride, spec.pad),
            _conv_out(shape[2], spec.k, spec.stride, spec.pad),
        )
    if isinstance(spec, ReLU):
        return shape
    if isinstance(spec, MaxPool):
        if len(shape) != 3:
            raise ShapeMismatch(f"pool needs spatial input, got {shape}")
        return (
            shape[0],
            _conv_out(shape[1], spec.k, spec.stride, 0),
            _conv_out(shape[2], spec.k, spec.stride, 0),
        )
    if isinstance(spec, GlobalAvgPool):
        if len(shape) != 3:
            raise ShapeMismatch(f"global pool needs spatial input, got {shape}")
        return (shape[0],)
    if isinstance(spec, Dense):
        feats = int(np.prod(shape))
        if feats != spec.d_in:
            raise ShapeMismatch(f"dense d_in {spec.d_in} vs input features {feats}")
        return (spec.d_out,)
    if isinstance(spec, BatchNorm):
        if len(shape) != 3 or shape[0] != spec.c:
            raise ShapeMismatch(f"batchnorm channels {spec.c} vs input {shape}")
        return shape
    if isinstance(spec, Softmax):
        if len(shape) != 1:
            raise ShapeMismatch(f"softmax needs flat input, got {shape}")
        return shape
    if isinstance(spec, ResidualAdd):
        branch = shape
        for sub in spec.branch:
            branch = _shape_after(sub, branch)
        short = shape
        for sub in spec.shortcut:
            short = _shape_after(sub, short)
        if branch != short:
            raise ShapeMismatch(f"residual branch {branch} vs shortcut {short}")
        return branch
    raise TypeError(f"unknown layer spec {spec!r}")


def infer_shapes(config: ModelConfig) -> list[tuple]:
    """Per-edge shapes: input shape followed by each layer's output shape."""
    shapes = [tuple(config.input_shape)]
    for spec in config.layers:
        shapes.append(_shape_after(spec, shapes[-1]))
    return shapes


# ---------------------------------------------------------------------------
# Parameters

def _init_layer(spec, prefix, rng, params):
    if isinstance(spec, Conv2d):
        fan_in = spec.c_in * spec.k * spec.k
        std = np.sqrt(2.0 / fan_in)
        params[f"{prefix}.weight"] = rng.normal(
            0.0, std, size=(spec.c_out, spec.c_in, spec.k, spec.k)
        ).astype(np.float32)
        if spec.bias:
            params[f"{prefix}.bias"] = np.zeros(spec.c_out, dtype=np.float32)
    elif isinstance(spec, Dense):
        std = np.sqrt(2.0 / spec.d_in)
        params[f"{prefix}.weight"] = rng.normal(
            0.0, std, size=(spec.d_out, spec.d_in)
        ).astype(np.float32)
        params[f"{prefix}.bias"] = np.zeros(spec.d_out, dtype=np.float32)
    elif isinstance(spec, BatchNorm):
        params[f"{prefix}.gamma"] = np.ones(spec.c, dtype=np.float32)
        params[f"{prefix}.beta"] = np.zeros(spec.c, dtype=np.float32)
        params[f"{prefix}.running_mean"] = np.zeros(spec.c, dtype=np.float32)
        params[f"{prefix}.running_var"] = np.ones(spec.c, dtype=np.float32)
    elif isinstance(spec, ResidualAdd):
        for idx, sub in enumerate(spec.branch):
            _init_layer(sub, f"{prefix}.branch.{idx}", rng, params)
        for idx, sub in enumerate(spec.shortcut):
            _init_layer(sub, f"{prefix}.shortcut.{idx}", rng, params)


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """He-normal conv/dense weights, zero biases, identity BatchNorm."""
    config.validate()
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for idx, spec in enumerate(config.layers):
        _init_layer(spec, str(idx), rng, params)
    return params


def trainable_keys(params: dict[str, np.ndarray]) -> list[str]:
    """Parameter keys that receive gradients (BatchNorm running stats do not)."""
    return [k for k in sorted(params) if not k.endswith((".running_mean", ".running_var"))]


def param_count(params: dict[str, np.ndarray]) -> int:
    return sum(int(params[k].size) for k in trainable_keys(params))


# ---------------------------------------------------------------------------
# Whole-model passes

def forward_with_caches(
    params: dict, config: ModelConfig, batch: np.ndarray, train: bool = False
):
    if batch.ndim != 4 or batch.shape[1:] != tuple(config.input_shape):
        raise ShapeMismatch(
            f"batch shape {batch.shape} does not match input {config.input_shape}"
        )
    return run_layers(config.layers, batch, params, "", train)


def forward(params: dict, config: ModelConfig, batch: np.ndarray, train: bool = False):
    """Logits for a batch, shape (batch, class_count)."""
    out, _ = forward_with_caches(params, config, batch, train)
    return out


def backward(params: dict, config: ModelConfig, caches, dlogits: np.ndarray):
    """Gradients for every trainable parameter given d(loss)/d(logits)."""
    grads: dict[str, np.ndarray] = {}
    backprop_layers(config.layers, dlogits, caches, params, "", grads)
    return grads


# ---------------------------------------------------------------------------
# Presets

def micro_config() -> ModelConfig:
    """Small residual net for 32x32 inputs; no BatchNorm by design."""
    return ModelConfig(
        layers=(
            Conv2d(3, 16, k=3, stride=1, pad=1),
            ReLU(),
            MaxPool(2, 2),
            ResidualAdd(
                branch=(
                    Conv2d(16, 16, k=3, stride=1, pad=1),
                    ReLU(),
                    Conv2d(16, 16, k=3, stride=1, pad=1),
                )
            ),
            ReLU(),
            MaxPool(2, 2),
            Conv2d(16, 32, k=3, stride=1, pad=1),
            ReLU(),
            MaxPool(2, 2),
            GlobalAvgPool(),
            Dense(32, 32),
            ReLU(),
            Dense(32, 5),
        ),
        input_shape=(3, 32, 32),
        class_count=5,
        name="micro",
    )


def _basic_block(c_in: int, c_out: int, stride: int) -> tuple:
    branch = (
        Conv2d(c_in, c_out, k=3, stride=stride, pad=1, bias=False),
        BatchNorm(c_out),
        ReLU(),
        Conv2d(c_out, c_out, k=3, stride=1, pad=1, bias=False),
        BatchNorm(c_out),
    )
    if stride != 1 or c_in != c_out:
        shortcut = (Conv2d(c_in, c_out, k=1, stride=stride, pad=0, bias=False), BatchNorm(c_out))
    else:
        shortcut = ()
    return (ResidualAdd(branch=branch, shortcut=shortcut), ReLU())


def resnet18_226_config() -> ModelConfig:
    """18-layer residual graph for 226x226 RGB input, 5 output classes."""
    layers: list = [
        Conv2d(3, 64, k=7, stride=2, pad=3, bias=False),
        BatchNorm(64),
        ReLU(),
        MaxPool(3, 2),
    ]
    stages = ((64, 64, 1), (64, 128, 2), (128, 256, 2), (256, 512, 2))
    for c_in, c_out, stride in stages:
        layers.extend(_basic_block(c_in, c_out, stride))
        layers.extend(_basic_block(c_out, c_out, 1))
    layers.extend([GlobalAvgPool(), Dense(512, 5)])
    return ModelConfig(
        layers=tuple(layers), input_shape=(3, 226, 226), class_count=5, name="resnet18_226"
    )


PRESETS = {"micro": micro_config, "resnet18_226": resnet18_226_config}


# ---------------------------------------------------------------------------
# Config (de)serialization and hashing

def _layer_to_dict(spec) -> dict:
    if isinstance(spec, Conv2d):
        return {
            "kind": "conv2d",
            "c_in": spec.c_in,
            "c_out": spec.c_out,
            "k": spec.k,
            "stride": spec.stride,
            "pad": spec.pad,
            "bias": spec.bias,
        }
    if isinstance(spec, ReLU):
        return {"kind": "relu"}
    if isinstance(spec, MaxPool):
        return {"kind": "maxpool", "k": spec.k, "stride": spec.stride}
    if isinstance(spec, GlobalAvgPool):
        return {"kind": "gap"}
    if isinstance(spec, Dense):
        return {"kind": "dense", "d_in": spec.d_in, "d_out": spec.d_out}
    if isinstance(spec, BatchNorm):
        return {"kind": "batchnorm", "c": spec.c, "momentum": spec.momentum, "eps": spec.eps}
    if isinstance(spec, Softmax):
        return {"kind": "softmax"}
    if isinstance(spec, ResidualAdd):
        return {
            "kind": "residual",
            "branch": [_layer_to_dict(s) for s in spec.branch],
            "shortcut": [_layer_to_dict(s) for s in spec.shortcut],
        }
    raise TypeError(f"unknown layer spec {spec!r}")


def _layer_from_dict(d: dict):
    kind = d["kind"]
    if kind == "conv2d":
        return Conv2d(d["c_in"], d["c_out"], d["k"], d["stride"], d["pad"], d["bias"])
    if kind == "relu":
        return ReLU()
    if kind == "maxpool":
        return MaxPool(d["k"], d["stride"])
    if kind == "gap":
        return GlobalAvgPool()
    if kind == "dense":
        return Dense(d["d_in"], d["d_out"])
    if kind == "batchnorm":
        return BatchNorm(d["c"], d.get("momentum", 0.9), d.get("eps", 1e-5))
    if kind == "softmax":
        return Softmax()
    if kind == "residual":
        return ResidualAdd(
            branch=tuple(_layer_from_dict(s) for s in d["branch"]),
            shortcut=tuple(_layer_from_dict(s) for s in d["shortcut"]),
        )
    raise ValueError(f"unknown layer kind {kind!r}")


def config_to_dict(config: ModelConfig) -> dict:
    return {
        "name": config.name,
        "input_shape": list(config.input_shape),
        "class_count": config.class_count,
        "layers": [_layer_to_dict(s) for s in config.layers],
    }


def config_from_dict(d: dict) -> ModelConfig:
    return ModelConfig(
        layers=tuple(_layer_from_dict(s) for s in d["layers"]),
        input_shape=tuple(d["input_shape"]),
        class_count=d["class_count"],
        name=d.get("name", "custom"),
    )


def canonical_config_json(config: ModelConfig) -> str:
    return json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))


def config_hash(config: ModelConfig) -> str:
    return hashlib.sha256(canonical_config_json(config).encode()).hexdigest()


# ---------------------------------------------------------------------------
# RCNN1 model file: header (magic, config hash, tensor count), then named
# tensors as little-endian float32 with shape prefixes.  The config itself is
# written as canonical JSON in a ".json" sidecar.

_RCNN1_MAGIC = b"RCNN1\x00\x00\x00"


def serialize_params(config: ModelConfig, params: dict[str, np.ndarray]) -> bytes:
    out = bytearray()
    out += _RCNN1_MAGIC
    out += bytes.fromhex(config_hash(config))
    keys = sorted(params)
    out += struct.pack("<I", len(keys))
    for key in keys:
        name = key.encode()
        tensor = np.ascontiguousarray(params[key], dtype="<f4")
        out += struct.pack("<H", len(name)) + name
        out += struct.pack("<B", tensor.ndim)
        out += struct.pack(f"<{tensor.ndim}I", *tensor.shape)
        out += tensor.tobytes()
    return bytes(out)


def save_model(config: ModelConfig, params: dict[str, np.ndarray], path) -> None:
    path = str(path)
    with open(path, "wb") as fh:
        fh.write(serialize_params(config, params))
    with open(path + ".json", "w") as fh:
        fh.write(canonical_config_json(config))


def load_model(path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    path = str(path)
    with open(path + ".json") as fh:
        config = config_from_dict(json.load(fh))
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_RCNN1_MAGIC)] != _RCNN1_MAGIC:
        raise NNError("not an RCNN1 model file")
    stored_hash = blob[8:40].hex()
    if stored_hash != config_hash(config):
        raise NNError("model file does not match its config sidecar")
    pos = 40
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos : pos + name_len].decode()
        pos += name_len
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=pos).reshape(shape)
        pos += 4 * size
        params[name] = arr.astype(np.float32)
    return config, params
