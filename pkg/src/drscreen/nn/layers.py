"""Layer vocabulary for the residual CNN, with analytic forward/backward.

The layer set is closed: Conv2d, ReLU, MaxPool, GlobalAvgPool, Dense,
BatchNorm, Softmax, and ResidualAdd (whose branch and shortcut are nested
layer lists).  Activations are (batch, channels, height, width) arrays;
Dense and Softmax operate on (batch, features).

Computation follows the input dtype, so the same code path runs float32 in
production and float64 under the finite-difference harness.  Forward
functions return (output, cache); backward functions consume the cache and
write parameter gradients into a flat dict keyed like the parameter store
("3.weight", "4.branch.0.weight", ...).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Conv2d",
    "ReLU",
    "MaxPool",
    "GlobalAvgPool",
    "Dense",
    "BatchNorm",
    "Softmax",
    "ResidualAdd",
    "LayerSpec",
    "NNError",
    "ShapeMismatch",
    "NonFiniteActivation",
    "layer_forward",
    "layer_backward",
    "run_layers",
    "backprop_layers",
]


class NNError(Exception):
    pass


class ShapeMismatch(NNError):
    pass


class NonFiniteActivation(NNError):
    pass


@dataclass(frozen=True)
class Conv2d:
    c_in: int
    c_out: int
    k: int
    stride: int = 1
    pad: int = 0
    bias: bool = True


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool:
    k: int
    stride: int


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


@dataclass(frozen=True)
class Dense:
    d_in: int
    d_out: int


@dataclass(frozen=True)
class BatchNorm:
    c: int
    momentum: float = 0.9
    eps: float = 1e-5


@dataclass(frozen=True)
class Softmax:
    pass


@dataclass(frozen=True)
class ResidualAdd:
    branch: tuple = ()
    shortcut: tuple = ()  # empty tuple = identity path


LayerSpec = (
    Conv2d | ReLU | MaxPool | GlobalAvgPool | Dense | BatchNorm | Softmax | ResidualAdd
)


def _param(params: dict, key: str, dtype) -> np.ndarray:
    return params[key].astype(dtype, copy=False)


def _require_finite(x: np.ndarray, where: str) -> None:
    if not np.isfinite(x).all():
        raise NonFiniteActivation(f"non-finite activation after {where}")


# ---------------------------------------------------------------------------
# Conv2d

def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    b, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    h_out = (h + 2 * pad - k) // stride + 1
    w_out = (w + 2 * pad - k) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ShapeMismatch(f"conv window {k} does not fit input {h}x{w} (pad {pad})")
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # (b, c, h_out, w_out, k, k) -> (b, c*k*k, h_out*w_out)
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * k * k, h_out * w_out)
    return np.ascontiguousarray(cols), h_out, w_out


def _col2im(dcols: np.ndarray, x_shape, k: int, stride: int, pad: int, h_out: int, w_out: int):
    b, c, h, w = x_shape
    dxp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    d6 = dcols.reshape(b, c, k, k, h_out, w_out)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += d6[
                :, :, i, j
            ]
    if pad:
        return dxp[:, :, pad : pad + h, pad : pad + w]
    return dxp


def conv2d_forward(spec: Conv2d, x: np.ndarray, params: dict, prefix: str):
    if x.ndim != 4 or x.shape[1] != spec.c_in:
        raise ShapeMismatch(f"conv expects (B,{spec.c_in},H,W), got {x.shape}")
    w = _param(params, f"{prefix}.weight", x.dtype)
    cols, h_out, w_out = _im2col(x, spec.k, spec.stride, spec.pad)
    w2 = w.reshape(spec.c_out, -1)
    out = np.matmul(w2, cols)  # (b, c_out, h_out*w_out)
    if spec.bias:
        out = out + _param(params, f"{prefix}.bias", x.dtype)[None, :, None]
    out = out.reshape(x.shape[0], spec.c_out, h_out, w_out)
    return out, (x.shape, cols, h_out, w_out)


def conv2d_backward(spec: Conv2d, dout: np.ndarray, cache, params: dict, prefix: str, grads: dict):
    x_shape, cols, h_out, w_out = cache
    b = x_shape[0]
    w2 = _param(params, f"{prefix}.weight", dout.dtype).reshape(spec.c_out, -1)
    dflat = dout.reshape(b, spec.c_out, h_out * w_out)
    grads[f"{prefix}.weight"] = (
        np.matmul(dflat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(
            spec.c_out, spec.c_in, spec.k, spec.k
        )
    )
    if spec.bias:
        grads[f"{prefix}.bias"] = dflat.sum(axis=(0, 2))
    dcols = np.matmul(w2.T, dflat)
    return _col2im(dcols, x_shape, spec.k, spec.stride, spec.pad, h_out, w_out)


# ---------------------------------------------------------------------------
# Elementwise / pooling

def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), (x > 0)


def relu_backward(dout: np.ndarray, mask: np.ndarray):
    return dout * mask


def maxpool_forward(spec: MaxPool, x: np.ndarray):
    b, c, h, w = x.shape
    k, s = spec.k, spec.stride
    if h < k or w < k:
        raise ShapeMismatch(f"pool window {k} does not fit input {h}x{w}")
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    h_out, w_out = win.shape[2], win.shape[3]
    flat = win.reshape(b, c, h_out, w_out, k * k)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg, h_out, w_out)


def maxpool_backward(spec: MaxPool, dout: np.ndarray, cache):
    x_shape, arg, h_out, w_out = cache
    b, c = x_shape[0], x_shape[1]
    k, s = spec.k, spec.stride
    dwin = np.zeros((b, c, h_out, w_out, k * k), dtype=dout.dtype)
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    # (b, c, h_out, w_out, k, k) -> column layout used by _col2im
    dcols = dwin.reshape(b, c, h_out, w_out, k, k).transpose(0, 1, 4, 5, 2, 3)
    dcols = dcols.reshape(b, c * k * k, h_out * w_out)
    return _col2im(dcols, x_shape, k, s, 0, h_out, w_out)


def gap_forward(x: np.ndarray):
    if x.ndim != 4:
        raise ShapeMismatch(f"global average pool expects 4-d input, got {x.shape}")
    return x.mean(axis=(2, 3)), x.shape


def gap_backward(dout: np.ndarray, x_shape):
    b, c, h, w = x_shape
    scale = np.asarray(1.0 / (h * w), dtype=dout.dtype)
    return np.broadcast_to((dout * scale)[:, :, None, None], x_shape).copy()


# ---------------------------------------------------------------------------
# Dense / BatchNorm / Softmax

def dense_forward(spec: Dense, x: np.ndarray, params: dict, prefix: str):
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != spec.d_in:
        raise ShapeMismatch(f"dense expects {spec.d_in} features, got {flat.shape[1]}")
    w = _param(params, f"{prefix}.weight", x.dtype)
    b = _param(params, f"{prefix}.bias", x.dtype)
    return flat @ w.T + b, (x.shape, flat)


def dense_backward(spec: Dense, dout: np.ndarray, cache, params: dict, prefix: str, grads: dict):
    x_shape, flat = cache
    w = _param(params, f"{prefix}.weight", dout.dtype)
    grads[f"{prefix}.weight"] = dout.T @ flat
    grads[f"{prefix}.bias"] = dout.sum(axis=0)
    return (dout @ w).reshape(x_shape)


def batchnorm_forward(spec: BatchNorm, x: np.ndarray, params: dict, prefix: str, train: bool):
    if x.ndim != 4 or x.shape[1] != spec.c:
        raise ShapeMismatch(f"batchnorm expects (B,{spec.c},H,W), got {x.shape}")
    gamma = _param(params, f"{prefix}.gamma", x.dtype)
    beta = _param(params, f"{prefix}.beta", x.dtype)
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        m = spec.momentum
        params[f"{prefix}.running_mean"] = (
            m * params[f"{prefix}.running_mean"] + (1 - m) * mean
        ).astype(np.float32)
        params[f"{prefix}.running_var"] = (
            m * params[f"{prefix}.running_var"] + (1 - m) * var
        ).astype(np.float32)
    else:
        mean = _param(params, f"{prefix}.running_mean", x.dtype)
        var = _param(params, f"{prefix}.running_var", x.dtype)
    inv_std = 1.0 / np.sqrt(var + spec.eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return out, (xhat, inv_std, train)


def batchnorm_backward(
    spec: BatchNorm, dout: np.ndarray, cache, params: dict, prefix: str, grads: dict
):
    xhat, inv_std, train = cache
    gamma = _param(params, f"{prefix}.gamma", dout.dtype)
    grads[f"{prefix}.gamma"] = (dout * xhat).sum(axis=(0, 2, 3))
    grads[f"{prefix}.beta"] = dout.sum(axis=(0, 2, 3))
    n = dout.shape[0] * dout.shape[2] * dout.shape[3]
    dxhat = dout * gamma[None, :, None, None]
    if not train:
        return dxhat * inv_std[None, :, None, None]
    sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
    return (inv_std[None, :, None, None] / n) * (
        n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat
    )


def softmax_forward(x: np.ndarray):
    if x.ndim != 2:
        raise ShapeMismatch(f"softmax expects (B, classes), got {x.shape}")
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    return y, y


def softmax_backward(dout: np.ndarray, y: np.ndarray):
    inner = (dout * y).sum(axis=1, keepdims=True)
    return y * (dout - inner)


# ---------------------------------------------------------------------------
# Dispatch (ResidualAdd recurses through these)

def layer_forward(spec, x, params, prefix, train: bool):
    if isinstance(spec, Conv2d):
        return conv2d_forward(spec, x, params, prefix)
    if isinstance(spec, ReLU):
        return relu_forward(x)
    if isinstance(spec, MaxPool):
        return maxpool_forward(spec, x)
    if isinstance(spec, GlobalAvgPool):
        return gap_forward(x)
    if isinstance(spec, Dense):
        return dense_forward(spec, x, params, prefix)
    if isinstance(spec, BatchNorm):
        return batchnorm_forward(spec, x, params, prefix, train)
    if isinstance(spec, Softmax):
        return softmax_forward(x)
    if isinstance(spec, ResidualAdd):
        return residual_forward(spec, x, params, prefix, train)
    raise TypeError(f"unknown layer spec {spec!r}")


def layer_backward(spec, dout, cache, params, prefix, grads):
    if isinstance(spec, Conv2d):
        return conv2d_backward(spec, dout, cache, params, prefix, grads)
    if isinstance(spec, ReLU):
        return relu_backward(dout, cache)
    if isinstance(spec, MaxPool):
        return maxpool_backward(spec, dout, cache)
    if isinstance(spec, GlobalAvgPool):
        return gap_backward(dout, cache)
    if isinstance(spec, Dense):
        return dense_backward(spec, dout, cache, params, prefix, grads)
    if isinstance(spec, BatchNorm):
        return batchnorm_backward(spec, dout, cache, params, prefix, grads)
    if isinstance(spec, Softmax):
        return softmax_backward(dout, cache)
    if isinstance(spec, ResidualAdd):
        return residual_backward(spec, dout, cache, params, prefix, grads)
    raise TypeError(f"unknown layer spec {spec!r}")


def run_layers(layers, x, params, prefix, train: bool):
    """Forward a layer list; returns (output, list of per-layer caches)."""
    caches = []
    for idx, spec in enumerate(layers):
        sub = f"{prefix}.{idx}" if prefix else str(idx)
        x, cache = layer_forward(spec, x, params, sub, train)
        _require_finite(x, f"layer {sub} ({type(spec).__name__})")
        caches.append(cache)
    return x, caches


def backprop_layers(layers, dout, caches, params, prefix, grads):
    for idx in range(len(layers) - 1, -1, -1):
        sub = f"{prefix}.{idx}" if prefix else str(idx)
        dout = layer_backward(layers[idx], dout, caches[idx], params, sub, grads)
    return dout


def residual_forward(spec: ResidualAdd, x, params, prefix, train: bool):
    branch_out, branch_caches = run_layers(spec.branch, x, params, f"{prefix}.branch", train)
    if spec.shortcut:
        short_out, short_caches = run_layers(
            spec.shortcut, x, params, f"{prefix}.shortcut", train
        )
    else:
        short_out, short_caches = x, None
    if branch_out.shape != short_out.shape:
        raise ShapeMismatch(
            f"residual branch {branch_out.shape} vs identity {short_out.shape}"
        )
    return branch_out + short_out, (branch_caches, short_caches)


def residual_backward(spec: ResidualAdd, dout, cache, params, prefix, grads):
    branch_caches, short_caches = cache
    dx = backprop_layers(spec.branch, dout, branch_caches, params, f"{prefix}.branch", grads)
    if spec.shortcut:
        dx = dx + backprop_layers(
            spec.shortcut, dout, short_caches, params, f"{prefix}.shortcut", grads
        )
    else:
        dx = dx + dout
    return dx
