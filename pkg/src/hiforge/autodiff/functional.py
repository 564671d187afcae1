"""Neural-network operations built on the autodiff tensor core.

Convolutions are expressed through ``pad1d``/``unfold1d``/``dilate1d`` plus
elementwise arithmetic, so their backward passes come for free and the
transposed convolution is the exact adjoint of the strided one. Layouts put
channels before time: ``(C, L)`` or batched ``(B, C, L)``.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from ..errors import ConfigError, DimensionError
from .tensor import (
    Tensor,
    _make,
    as_tensor,
    dilate1d,
    exp,
    matmul,
    mean,
    mul,
    pad1d,
    reshape,
    tensor_sum,
    unfold1d,
)

SQRT2 = float(np.sqrt(2.0))
INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))


def gelu(a):
    """Gaussian error linear unit, exact CDF form."""
    a = as_tensor(a)
    cdf = special.ndtr(a.data)
    data = a.data * cdf

    def backward(g):
        if a.requires_grad:
            pdf = np.exp(-0.5 * a.data * a.data) * INV_SQRT_2PI
            a.accumulate_grad(g * (cdf + a.data * pdf))

    return _make(data, (a,), backward, "gelu")


def sigmoid(a):
    a = as_tensor(a)
    data = special.expit(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * data * (1.0 - data))

    return _make(data, (a,), backward, "sigmoid")


def softmax(a, axis=-1):
    """Numerically stable softmax; rows sum to one along ``axis``."""
    a = as_tensor(a)
    shift = a - Tensor(a.data.max(axis=axis, keepdims=True))
    e = exp(shift)
    return e / tensor_sum(e, axis=axis, keepdims=True)


def linear(x, weight, bias=None):
    """Affine map ``x @ weight + bias`` on the last axis."""
    out = matmul(x, weight)
    if bias is not None:
        out = out + bias
    return out


def global_avg_pool(x, axis=-1):
    """Mean over the given axis (time by default), axis removed."""
    return mean(x, axis=axis, keepdims=False)


def dropout(x, rate, train, rng):
    """Inverted dropout with an explicitly seeded mask.

    In eval mode or at rate 0 this is the identity. ``rng`` must be a
    ``numpy.random.Generator`` when a mask is actually drawn, which keeps
    every mask reproducible from the run seed.
    """
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in train mode needs an rng")
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(mask))


def _with_batch(x):
    """Normalize (C, L) to (1, C, L); returns (tensor, had_batch)."""
    x = as_tensor(x)
    if x.ndim == 2:
        return reshape(x, (1,) + x.shape), False
    if x.ndim == 3:
        return x, True
    raise DimensionError(f"expected (C, L) or (B, C, L), got shape {x.shape}")


def _maybe_unbatch(out, had_batch):
    return out if had_batch else reshape(out, out.shape[1:])


def conv1d_depthwise(x, kernel, stride=1, padding=0):
    """Per-channel 1-d convolution (cross-correlation).

    ``kernel`` has shape (C, k); output length is
    ``(L + 2 * padding - k) // stride + 1``.
    """
    x, had_batch = _with_batch(x)
    kernel = as_tensor(kernel)
    channels = x.shape[1]
    if kernel.ndim != 2 or kernel.shape[0] != channels:
        raise DimensionError(
            f"depthwise kernel shape {kernel.shape} does not match channel axis {channels}"
        )
    k = kernel.shape[1]
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    if padding < 0:
        raise ConfigError("padding must be >= 0")
    if k > x.shape[-1] + 2 * padding:
        raise DimensionError(
            f"kernel size {k} exceeds padded length {x.shape[-1] + 2 * padding}"
        )
    if padding:
        x = pad1d(x, padding, padding)
    windows = unfold1d(x, k, stride)  # (B, C, N, k)
    prod = mul(windows, reshape(kernel, (channels, 1, k)))
    out = tensor_sum(prod, axis=-1)
    return _maybe_unbatch(out, had_batch)


def conv1d_pointwise(x, weight, groups=1, bias=None):
    """Grouped 1x1 convolution mixing channels at each time step.

    ``weight`` has shape (C_out, C_in // groups). With ``groups > 1`` output
    channels in group g depend only on input channels of group g.
    """
    x, had_batch = _with_batch(x)
    weight = as_tensor(weight)
    batch, c_in, length = x.shape
    c_out = weight.shape[0]
    if c_in % groups or c_out % groups:
        raise DimensionError(
            f"channels in={c_in} out={c_out} not divisible by groups={groups}"
        )
    if weight.shape != (c_out, c_in // groups):
        raise DimensionError(
            f"pointwise weight shape {weight.shape} != ({c_out}, {c_in // groups})"
        )
    xg = reshape(x, (batch, groups, c_in // groups, length))
    wg = reshape(weight, (groups, c_out // groups, c_in // groups))
    out = matmul(wg, xg)  # (B, groups, C_out/groups, L)
    out = reshape(out, (batch, c_out, length))
    if bias is not None:
        out = out + reshape(as_tensor(bias), (c_out, 1))
    return _maybe_unbatch(out, had_batch)


def conv1d_transposed_depthwise(x, kernel, stride=1):
    """Adjoint of the stride-s depthwise convolution.

    Output length is ``(L - 1) * stride + k``: dilate by the stride, pad by
    k - 1 on both sides and correlate with the flipped kernel.
    """
    x, had_batch = _with_batch(x)
    kernel = as_tensor(kernel)
    channels = x.shape[1]
    if kernel.ndim != 2 or kernel.shape[0] != channels:
        raise DimensionError(
            f"depthwise kernel shape {kernel.shape} does not match channel axis {channels}"
        )
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    k = kernel.shape[1]
    up = dilate1d(x, stride)
    up = pad1d(up, k - 1, k - 1)
    windows = unfold1d(up, k, 1)
    flipped = kernel[:, ::-1]
    prod = mul(windows, reshape(flipped, (channels, 1, k)))
    out = tensor_sum(prod, axis=-1)
    return _maybe_unbatch(out, had_batch)


def layer_norm(x, gamma, beta, axis, eps=1e-5):
    """Normalize over one axis, then apply an affine with broadcastable params."""
    x = as_tensor(x)
    m = mean(x, axis=axis, keepdims=True)
    centered = x - m
    var = mean(centered * centered, axis=axis, keepdims=True)
    inv = (var + eps) ** -0.5
    return centered * inv * gamma + beta


def batch_norm(
    x,
    gamma,
    beta,
    running_mean,
    running_var,
    eps=1e-5,
    momentum=0.1,
    train=True,
    update_running=False,
):
    """Batch normalization over batch and time for (B, C, L) input.

    Normalization in train mode uses biased batch variance; running buffers
    (plain ndarrays of shape (C, 1)) receive the unbiased estimate scaled by
    ``momentum``. Eval mode normalizes with the buffers as constants.
    """
    x, had_batch = _with_batch(x)
    if train:
        m = mean(x, axis=(0, 2), keepdims=True)
        centered = x - m
        var = mean(centered * centered, axis=(0, 2), keepdims=True)
        out = centered * (var + eps) ** -0.5 * gamma + beta
        if update_running:
            n = x.shape[0] * x.shape[2]
            scale = n / (n - 1) if n > 1 else 1.0
            running_mean *= 1.0 - momentum
            running_mean += momentum * m.data.reshape(running_mean.shape)
            running_var *= 1.0 - momentum
            running_var += momentum * scale * var.data.reshape(running_var.shape)
    else:
        rm = Tensor(running_mean.reshape((1,) + running_mean.shape))
        rv = Tensor(running_var.reshape((1,) + running_var.shape))
        out = (x - rm) * (rv + eps) ** -0.5 * gamma + beta
    return _maybe_unbatch(out, had_batch)
