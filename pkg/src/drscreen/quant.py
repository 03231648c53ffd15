"""8-bit post-training quantization and the integer inference path.

Scheme: weights are symmetric per-channel signed int8 (zero point 0, scale
max|w_c|/127); activations are affine per-tensor unsigned int8 with min/max
calibration (scale (max-min)/255, zero point round(-min/scale) clamped to
[0,255]).  Biases fold to int32 at scale_in * scale_w.  BatchNorm folds into
the preceding convolution before calibration.  All rounding is half-even.

Every layer output is an "edge" addressed by the layer's parameter prefix
("0", "3.branch.1", ...); the model input edge is "in".  Convolutions and
dense layers accumulate in integers (checked against the 32-bit range) and
requantize onto their output edge; the final dense layer dequantizes its
accumulator straight to floating logits.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .dataset import Severity
from .imaging import PlaneTensor
from .nn.layers import (
    BatchNorm,
    Conv2d,
    Dense,
    GlobalAvgPool,
    MaxPool,
    ReLU,
    ResidualAdd,
    ShapeMismatch,
    Softmax,
    layer_forward,
)
from .nn.model import ModelConfig, config_from_dict, config_hash, config_to_dict

__all__ = [
    "QuantError",
    "EmptyCalibration",
    "MissingParams",
    "AccumulatorOverflow",
    "ActQuant",
    "QuantParams",
    "QuantizedModel",
    "fold_batchnorm",
    "collect_activation_ranges",
    "calibrate",
    "quantize",
    "quantize_model",
    "qforward",
    "qforward_batch",
    "quantize_array",
    "dequantize_array",
    "serialize_qmodel",
    "save_qmodel",
    "load_qmodel",
]

_SCALE_FLOOR = 1e-8
_ACC_LIMIT = 2**31


class QuantError(Exception):
    pass


class EmptyCalibration(QuantError):
    pass


class MissingParams(QuantError):
    pass


class AccumulatorOverflow(QuantError):
    """Integer accumulator left the 32-bit range; calibration is mis-scaled."""


@dataclass(frozen=True)
class ActQuant:
    scale: float
    zero_point: int
    degenerate: bool = False


@dataclass
class QuantParams:
    activations: dict[str, ActQuant]
    weight_scales: dict[str, np.ndarray]  # prefix -> per-out-channel float32
    ranges: dict[str, tuple[float, float]]  # observed (min, max) per edge


@dataclass
class QuantizedModel:
    config: ModelConfig  # BatchNorm already folded away
    weights: dict[str, np.ndarray]  # int8
    weight_scales: dict[str, np.ndarray]  # float32 per out channel
    biases: dict[str, np.ndarray]  # int32 at scale_in * scale_w
    activations: dict[str, ActQuant]

    @property
    def model_id(self) -> str:
        return config_hash(self.config)


def _rhe(x: np.ndarray) -> np.ndarray:
    """Round half to even."""
    return np.rint(x)


def quantize_array(x: np.ndarray, scale: float, zero_point: int, lo: int, hi: int) -> np.ndarray:
    q = _rhe(np.asarray(x, dtype=np.float64) / scale) + zero_point
    return np.clip(q, lo, hi)


def dequantize_array(q: np.ndarray, scale: float, zero_point: int) -> np.ndarray:
    return (np.asarray(q, dtype=np.float64) - zero_point) * scale


# ---------------------------------------------------------------------------
# BatchNorm folding

def _fold_list(layers, params, old_prefix, new_prefix, out_params):
    folded = []
    i = 0
    new_idx = 0
    while i < len(layers):
        spec = layers[i]
        old_key = f"{old_prefix}{i}"
        new_key = f"{new_prefix}{new_idx}"
        nxt = layers[i + 1] if i + 1 < len(layers) else None
        if isinstance(spec, Conv2d) and isinstance(nxt, BatchNorm):
            bn_key = f"{old_prefix}{i + 1}"
            gamma = params[f"{bn_key}.gamma"].astype(np.float64)
            beta = params[f"{bn_key}.beta"].astype(np.float64)
            mean = params[f"{bn_key}.running_mean"].astype(np.float64)
            var = params[f"{bn_key}.running_var"].astype(np.float64)
            g = gamma / np.sqrt(var + nxt.eps)
            w = params[f"{old_key}.weight"].astype(np.float64)
            b = params.get(f"{old_key}.bias")
            b = b.astype(np.float64) if b is not None else np.zeros(spec.c_out)
            out_params[f"{new_key}.weight"] = (w * g[:, None, None, None]).astype(np.float32)
            out_params[f"{new_key}.bias"] = (beta + (b - mean) * g).astype(np.float32)
            folded.append(
                Conv2d(spec.c_in, spec.c_out, spec.k, spec.stride, spec.pad, bias=True)
            )
            i += 2
            new_idx += 1
            continue
        if isinstance(spec, ResidualAdd):
            branch = _fold_list(
                spec.branch, params, f"{old_key}.branch.", f"{new_key}.branch.", out_params
            )
            shortcut = _fold_list(
                spec.shortcut, params, f"{old_key}.shortcut.", f"{new_key}.shortcut.", out_params
            )
            folded.append(ResidualAdd(branch=branch, shortcut=shortcut))
        else:
            for suffix in ("weight", "bias", "gamma", "beta", "running_mean", "running_var"):
                if f"{old_key}.{suffix}" in params:
                    out_params[f"{new_key}.{suffix}"] = params[f"{old_key}.{suffix}"].copy()
            folded.append(spec)
        i += 1
        new_idx += 1
    return tuple(folded)


def fold_batchnorm(config: ModelConfig, params: dict[str, np.ndarray]):
    """Fold conv+BN pairs (using running statistics) into biased convolutions."""
    out_params: dict[str, np.ndarray] = {}
    layers = _fold_list(config.layers, params, "", "", out_params)
    folded = ModelConfig(
        layers=layers,
        input_shape=config.input_shape,
        class_count=config.class_count,
        name=config.name + "+bnfold",
    )
    return folded, out_params


# ---------------------------------------------------------------------------
# Calibration

def _record_layers(layers, x, params, prefix, ranges):
    for idx, spec in enumerate(layers):
        sub = f"{prefix}.{idx}" if prefix else str(idx)
        if isinstance(spec, ResidualAdd):
            bx, _ = _record_layers(spec.branch, x, params, f"{sub}.branch", ranges)
            if spec.shortcut:
                sx, _ = _record_layers(spec.shortcut, x, params, f"{sub}.shortcut", ranges)
            else:
                sx = x
            x = bx + sx
        else:
            x, _ = layer_forward(spec, x, params, sub, train=False)
        _update_range(ranges, sub, x)
    return x, ranges


def _update_range(ranges, key, x):
    lo = float(x.min())
    hi = float(x.max())
    if key in ranges:
        old = ranges[key]
        ranges[key] = (min(old[0], lo), max(old[1], hi))
    else:
        ranges[key] = (lo, hi)


def collect_activation_ranges(config: ModelConfig, params, batches) -> dict:
    """Per-edge (min, max) of the float model over the calibration batches."""
    ranges: dict[str, tuple[float, float]] = {}
    count = 0
    for batch in batches:
        batch = np.asarray(batch, dtype=np.float32)
        _update_range(ranges, "in", batch)
        _record_layers(config.layers, batch, params, "", ranges)
        count += 1
    if count == 0:
        raise EmptyCalibration("calibration needs at least one batch")
    return ranges


def _act_from_range(lo: float, hi: float) -> ActQuant:
    if hi <= lo:
        return ActQuant(_SCALE_FLOOR, 0, degenerate=True)
    # widen to include zero so the zero point never clamps; otherwise part of
    # the observed range falls outside the representable band and the
    # round-trip bound of scale/2 breaks
    lo = min(lo, 0.0)
    hi = max(hi, 0.0)
    # scales live as float32 so the serialized model replays bit-identically
    scale = float(np.float32((hi - lo) / 255.0))
    zp = int(np.clip(_rhe(np.float64(-lo) / scale), 0, 255))
    return ActQuant(scale, zp)


def _weight_scales_for(w: np.ndarray) -> np.ndarray:
    flat = np.abs(w.reshape(w.shape[0], -1))
    peak = flat.max(axis=1)
    scales = np.where(peak > 0, peak / 127.0, _SCALE_FLOOR)
    return scales.astype(np.float32)


def calibrate(config: ModelConfig, params, batches) -> QuantParams:
    """Activation and weight quantization parameters for a folded model."""
    ranges = collect_activation_ranges(config, params, batches)
    activations = {key: _act_from_range(lo, hi) for key, (lo, hi) in ranges.items()}
    weight_scales: dict[str, np.ndarray] = {}

    def walk(layers, prefix):
        for idx, spec in enumerate(layers):
            sub = f"{prefix}.{idx}" if prefix else str(idx)
            if isinstance(spec, (Conv2d, Dense)):
                weight_scales[sub] = _weight_scales_for(params[f"{sub}.weight"])
            elif isinstance(spec, ResidualAdd):
                walk(spec.branch, f"{sub}.branch")
                walk(spec.shortcut, f"{sub}.shortcut")
            elif isinstance(spec, BatchNorm):
                raise QuantError("fold BatchNorm before calibrating")

    walk(config.layers, "")
    return QuantParams(activations, weight_scales, ranges)


# ---------------------------------------------------------------------------
# Quantization

def _input_edge(prefix: str) -> str:
    """Edge feeding the layer at `prefix` ("in" for the first top-level layer;
    nested lists inherit the enclosing residual's input edge)."""
    parts = prefix.split(".")
    idx = int(parts[-1])
    if idx > 0:
        return ".".join(parts[:-1] + [str(idx - 1)])
    if len(parts) == 1:
        return "in"
    # first layer of a branch/shortcut: input is whatever feeds the residual
    return _input_edge(".".join(parts[:-2]))


def quantize(config: ModelConfig, params, qparams: QuantParams) -> QuantizedModel:
    """Quantize a folded float model with calibrated parameters."""
    weights: dict[str, np.ndarray] = {}
    biases: dict[str, np.ndarray] = {}

    def walk(layers, prefix):
        for idx, spec in enumerate(layers):
            sub = f"{prefix}.{idx}" if prefix else str(idx)
            if isinstance(spec, (Conv2d, Dense)):
                if sub not in qparams.weight_scales:
                    raise MissingParams(f"no weight scales for layer {sub}")
                in_edge = _input_edge(sub)
                if in_edge not in qparams.activations:
                    raise MissingParams(f"no activation params for edge {in_edge}")
                w = params[f"{sub}.weight"].astype(np.float64)
                sw = qparams.weight_scales[sub].astype(np.float64)
                q = _rhe(w / sw.reshape((-1,) + (1,) * (w.ndim - 1)))
                weights[sub] = np.clip(q, -127, 127).astype(np.int8)
                s_in = qparams.activations[in_edge].scale
                bias_key = f"{sub}.bias"
                has_bias = isinstance(spec, Dense) or spec.bias
                if has_bias:
                    b = params[bias_key].astype(np.float64)
                    bq = _rhe(b / (s_in * sw))
                    if np.abs(bq).max(initial=0) >= _ACC_LIMIT:
                        raise AccumulatorOverflow(f"bias at {sub} exceeds int32")
                    biases[sub] = bq.astype(np.int32)
            elif isinstance(spec, ResidualAdd):
                walk(spec.branch, f"{sub}.branch")
                walk(spec.shortcut, f"{sub}.shortcut")
            elif isinstance(spec, BatchNorm):
                raise QuantError("fold BatchNorm before quantizing")

    walk(config.layers, "")
    return QuantizedModel(config, weights, qparams.weight_scales, biases, qparams.activations)


def quantize_model(config: ModelConfig, params, calib_batches) -> QuantizedModel:
    """Fold BatchNorm, calibrate on the given batches, and quantize."""
    folded_cfg, folded_params = fold_batchnorm(config, params)
    qp = calibrate(folded_cfg, folded_params, calib_batches)
    return quantize(folded_cfg, folded_params, qp)


# ---------------------------------------------------------------------------
# Integer forward

def _check_acc(acc: np.ndarray, where: str) -> None:
    peak = np.abs(acc).max(initial=0)
    if peak >= _ACC_LIMIT:
        raise AccumulatorOverflow(f"accumulator at {where} reached {peak}")


def _requant_real(real: np.ndarray, act: ActQuant) -> np.ndarray:
    q = _rhe(real / act.scale) + act.zero_point
    return np.clip(q, 0, 255).astype(np.uint8)


def _conv_accumulate(qm: QuantizedModel, spec: Conv2d, q_in, in_act, sub):
    from .nn.layers import _im2col  # shared window extraction

    centered = q_in.astype(np.int64) - in_act.zero_point
    cols, h_out, w_out = _im2col(centered, spec.k, spec.stride, spec.pad)
    w2 = qm.weights[sub].reshape(spec.c_out, -1).astype(np.int64)
    acc = np.matmul(w2, cols)
    if sub in qm.biases:
        acc = acc + qm.biases[sub].astype(np.int64)[None, :, None]
    _check_acc(acc, sub)
    return acc.reshape(q_in.shape[0], spec.c_out, h_out, w_out)


def _dense_accumulate(qm: QuantizedModel, spec: Dense, q_in, in_act, sub):
    flat = q_in.reshape(q_in.shape[0], -1).astype(np.int64) - in_act.zero_point
    w = qm.weights[sub].astype(np.int64)
    acc = flat @ w.T
    if sub in qm.biases:
        acc = acc + qm.biases[sub].astype(np.int64)
    _check_acc(acc, sub)
    return acc


def _acc_scales(qm: QuantizedModel, sub: str, in_act: ActQuant) -> np.ndarray:
    return in_act.scale * qm.weight_scales[sub].astype(np.float64)


def _qwalk(qm: QuantizedModel, layers, q_x, in_edge: str, prefix: str):
    """Run a layer list in the integer domain; returns (uint8 tensor, edge)."""
    for idx, spec in enumerate(layers):
        sub = f"{prefix}.{idx}" if prefix else str(idx)
        in_act = qm.activations[in_edge]
        out_act = qm.activations[sub]
        if isinstance(spec, Conv2d):
            acc = _conv_accumulate(qm, spec, q_x, in_act, sub)
            real = acc.astype(np.float64) * _acc_scales(qm, sub, in_act)[None, :, None, None]
            q_x = _requant_real(real, out_act)
        elif isinstance(spec, Dense):
            acc = _dense_accumulate(qm, spec, q_x, in_act, sub)
            real = acc.astype(np.float64) * _acc_scales(qm, sub, in_act)[None, :]
            q_x = _requant_real(real, out_act)
        elif isinstance(spec, ReLU):
            clipped = np.maximum(q_x, in_act.zero_point)
            real = dequantize_array(clipped, in_act.scale, in_act.zero_point)
            q_x = _requant_real(real, out_act)
        elif isinstance(spec, MaxPool):
            pooled, _ = layer_forward(spec, q_x.astype(np.float32), {}, sub, False)
            real = dequantize_array(pooled, in_act.scale, in_act.zero_point)
            q_x = _requant_real(real, out_act)
        elif isinstance(spec, GlobalAvgPool):
            mean = (q_x.astype(np.float64) - in_act.zero_point).mean(axis=(2, 3))
            q_x = _requant_real(mean * in_act.scale, out_act)
        elif isinstance(spec, ResidualAdd):
            qb, b_edge = _qwalk(qm, spec.branch, q_x, in_edge, f"{sub}.branch")
            if spec.shortcut:
                qs, s_edge = _qwalk(qm, spec.shortcut, q_x, in_edge, f"{sub}.shortcut")
            else:
                qs, s_edge = q_x, in_edge
            b_act = qm.activations[b_edge]
            s_act = qm.activations[s_edge]
            real = dequantize_array(qb, b_act.scale, b_act.zero_point) + dequantize_array(
                qs, s_act.scale, s_act.zero_point
            )
            q_x = _requant_real(real, out_act)
        elif isinstance(spec, Softmax):
            raise QuantError("softmax is only supported as the final layer")
        else:
            raise QuantError(f"unsupported quantized layer {type(spec).__name__}")
        in_edge = sub
    return q_x, in_edge


def qforward_batch(qm: QuantizedModel, batch: np.ndarray) -> np.ndarray:
    """Integer-path logits for a float batch shaped (B, C, H, W)."""
    if batch.ndim != 4 or batch.shape[1:] != tuple(qm.config.input_shape):
        raise ShapeMismatch(
            f"batch shape {batch.shape} does not match input {qm.config.input_shape}"
        )
    layers = list(qm.config.layers)
    final_softmax = bool(layers) and isinstance(layers[-1], Softmax)
    if final_softmax:
        layers = layers[:-1]
    if not layers or not isinstance(layers[-1], (Dense, Conv2d)):
        raise QuantError("quantized graph must end in a dense or conv layer")

    in_act = qm.activations["in"]
    q_x = quantize_array(batch, in_act.scale, in_act.zero_point, 0, 255).astype(np.uint8)
    edge = "in"
    if len(layers) > 1:
        q_x, edge = _qwalk(qm, layers[:-1], q_x, "in", "")

    last_idx = len(layers) - 1
    sub = str(last_idx)
    spec = layers[last_idx]
    in_act = qm.activations[edge]
    if isinstance(spec, Dense):
        acc = _dense_accumulate(qm, spec, q_x, in_act, sub)
        logits = acc.astype(np.float64) * _acc_scales(qm, sub, in_act)[None, :]
    else:
        acc = _conv_accumulate(qm, spec, q_x, in_act, sub)
        logits = (
            acc.astype(np.float64) * _acc_scales(qm, sub, in_act)[None, :, None, None]
        ).reshape(batch.shape[0], -1)
    if final_softmax:
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        logits = e / e.sum(axis=1, keepdims=True)
    return logits.astype(np.float32)


def qforward(qm: QuantizedModel, image: PlaneTensor):
    """Logits and the predicted severity for one preprocessed image.

    Argmax ties break toward the lower ordinal.
    """
    x = image.data.transpose(2, 0, 1)[None, :, :, :].astype(np.float32)
    logits = qforward_batch(qm, x)[0]
    return logits, Severity(int(np.argmax(logits)))


# ---------------------------------------------------------------------------
# RCNQ1 serialization

_RCNQ1_MAGIC = b"RCNQ1\x00\x00\x00"


def _pack_name(name: str) -> bytes:
    raw = name.encode()
    return struct.pack("<H", len(raw)) + raw


def serialize_qmodel(qm: QuantizedModel) -> bytes:
    out = bytearray()
    out += _RCNQ1_MAGIC
    out += bytes.fromhex(qm.model_id)
    acts = sorted(qm.activations)
    out += struct.pack("<I", len(acts))
    for key in acts:
        act = qm.activations[key]
        out += _pack_name(key)
        out += struct.pack("<fBB", act.scale, act.zero_point, 1 if act.degenerate else 0)
    weights = sorted(qm.weights)
    out += struct.pack("<I", len(weights))
    for key in weights:
        w = qm.weights[key]
        scales = qm.weight_scales[key]
        out += _pack_name(key)
        out += struct.pack("<B", w.ndim) + struct.pack(f"<{w.ndim}I", *w.shape)
        out += struct.pack("<I", scales.size)
        out += np.ascontiguousarray(scales, dtype="<f4").tobytes()
        out += w.tobytes()
    biases = sorted(qm.biases)
    out += struct.pack("<I", len(biases))
    for key in biases:
        b = qm.biases[key]
        out += _pack_name(key)
        out += struct.pack("<I", b.size)
        out += np.ascontiguousarray(b, dtype="<i4").tobytes()
    return bytes(out)


def save_qmodel(qm: QuantizedModel, path) -> None:
    path = str(path)
    with open(path, "wb") as fh:
        fh.write(serialize_qmodel(qm))
    with open(path + ".json", "w") as fh:
        json.dump(config_to_dict(qm.config), fh, sort_keys=True, separators=(",", ":"))


def load_qmodel(path) -> QuantizedModel:
    path = str(path)
    with open(path + ".json") as fh:
        config = config_from_dict(json.load(fh))
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_RCNQ1_MAGIC)] != _RCNQ1_MAGIC:
        raise QuantError("not an RCNQ1 model file")
    if blob[8:40].hex() != config_hash(config):
        raise QuantError("quantized model does not match its config sidecar")
    pos = 40

    def take_name():
        nonlocal pos
        (n,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos : pos + n].decode()
        pos += n
        return name

    (n_act,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    activations: dict[str, ActQuant] = {}
    for _ in range(n_act):
        key = take_name()
        scale, zp, degen = struct.unpack_from("<fBB", blob, pos)
        pos += 6
        activations[key] = ActQuant(float(scale), int(zp), bool(degen))
    (n_w,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    weights: dict[str, np.ndarray] = {}
    weight_scales: dict[str, np.ndarray] = {}
    for _ in range(n_w):
        key = take_name()
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        (n_scales,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        weight_scales[key] = np.frombuffer(blob, "<f4", n_scales, pos).astype(np.float32)
        pos += 4 * n_scales
        size = int(np.prod(shape))
        weights[key] = (
            np.frombuffer(blob, np.int8, size, pos).reshape(shape).copy()
        )
        pos += size
    (n_b,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    biases: dict[str, np.ndarray] = {}
    for _ in range(n_b):
        key = take_name()
        (size,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        biases[key] = np.frombuffer(blob, "<i4", size, pos).astype(np.int32)
        pos += 4 * size
    return QuantizedModel(config, weights, weight_scales, biases, activations)
