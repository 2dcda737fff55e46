"""Differentiable primitives. Each op computes its forward with numpy and
returns gradients for its parents from a closure."""

import itertools
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ..core.errors import ShapeError
from ..media.signal import interp_positions
from .tensor import ArrayLike, Tensor, as_tensor, make_result

Axis = Optional[Union[int, Tuple[int, ...]]]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _ntuple(value: Union[int, Sequence[int]], n: int) -> Tuple[int, ...]:
    if isinstance(value, int):
        return (value,) * n
    value = tuple(value)
    if len(value) != n:
        raise ShapeError("conv", f"expected {n} values, got {value}")
    return value


# elementwise arithmetic


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return make_result(
        "div",
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        ),
    )


def neg(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return make_result("neg", -x.data, (x,), lambda g: (-g,))


def power(x: ArrayLike, exponent: float) -> Tensor:
    x = as_tensor(x)
    return make_result(
        "power",
        x.data**exponent,
        (x,),
        lambda g: (g * exponent * x.data ** (exponent - 1),),
    )


def exp(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return make_result("exp", out, (x,), lambda g: (g * out,))


def log(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return make_result("log", out, (x,), lambda g: (g / x.data,))


def log10(x: ArrayLike) -> Tensor:
    return log(x) * (1.0 / math.log(10.0))


def sqrt(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return make_result("sqrt", out, (x,), lambda g: (g * 0.5 / out,))


def abs(x: ArrayLike) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    return make_result("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def maximum(x: ArrayLike, floor: float) -> Tensor:
    """Clamp from below; the gradient is blocked where the floor is active."""
    x = as_tensor(x)
    active = x.data > floor
    return make_result(
        "maximum", np.where(active, x.data, floor), (x,), lambda g: (g * active,)
    )


def clip(x: ArrayLike, low: float, high: float) -> Tensor:
    x = as_tensor(x)
    inside = (x.data > low) & (x.data < high)
    return make_result(
        "clip", np.clip(x.data, low, high), (x,), lambda g: (g * inside,)
    )


# activations


def relu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return make_result("relu", x.data * mask, (x,), lambda g: (g * mask,))


def sigmoid(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = expit(x.data)
    return make_result("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return make_result("tanh", out, (x,), lambda g: (g * (1.0 - out**2),))


def softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    out = shifted / shifted.sum(axis=axis, keepdims=True)
    return make_result(
        "softmax",
        out,
        (x,),
        lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),),
    )


def prelu(x: ArrayLike, alpha: Tensor, axis: int = -1) -> Tensor:
    """Parametric ReLU with one slope per channel along ``axis``."""
    x, alpha = as_tensor(x), as_tensor(alpha)
    axis = axis % x.ndim
    if alpha.shape != (x.shape[axis],):
        raise ShapeError("prelu", f"slopes {alpha.shape} do not match axis {axis} of {x.shape}")
    view = [1] * x.ndim
    view[axis] = -1
    slope = alpha.data.reshape(view)
    positive = x.data > 0
    others = tuple(i for i in range(x.ndim) if i != axis)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return np.where(positive, g, slope * g), np.where(positive, 0.0, x.data * g).sum(axis=others)

    return make_result("prelu", np.where(positive, x.data, slope * x.data), (x, alpha), backward)


# reductions and shape plumbing


def _expand_grad(g: np.ndarray, shape: Tuple[int, ...], axis: Axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else axis
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum(x: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    return make_result(
        "sum",
        np.sum(x.data, axis=axis, keepdims=keepdims),
        (x,),
        lambda g: (_expand_grad(g, x.shape, axis, keepdims).copy(),),
    )


def mean(x: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = np.mean(x.data, axis=axis, keepdims=keepdims)
    scale = out.size / x.size if x.size else 0.0
    return make_result(
        "mean",
        out,
        (x,),
        lambda g: (_expand_grad(g, x.shape, axis, keepdims) * scale,),
    )


def reshape(x: ArrayLike, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError("reshape", f"cannot reshape {x.shape} into {tuple(shape)}") from exc
    return make_result("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise ShapeError("transpose", f"axes {axes} invalid for shape {x.shape}")
    inverse = tuple(np.argsort([a % x.ndim for a in axes]))
    return make_result(
        "transpose", x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),)
    )


def swapaxes(x: ArrayLike, a: int, b: int) -> Tensor:
    x = as_tensor(x)
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, axes)


def getitem(x: ArrayLike, index: object) -> Tensor:
    x = as_tensor(x)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return make_result("getitem", x.data[index], (x,), backward)


def flip(x: ArrayLike, axis: int) -> Tensor:
    x = as_tensor(x)
    index = [slice(None)] * x.ndim
    index[axis] = slice(None, None, -1)
    return getitem(x, tuple(index))


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        shapes = [p.shape for p in parts]
        raise ShapeError("concat", f"incompatible shapes {shapes} along axis {axis}") from exc
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return make_result(
        "concat", out, parts, lambda g: tuple(np.split(g, bounds, axis=axis))
    )


def broadcast_to(x: ArrayLike, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = np.broadcast_to(x.data, tuple(shape)).copy()
    except ValueError as exc:
        raise ShapeError("broadcast_to", f"cannot broadcast {x.shape} to {tuple(shape)}") from exc
    return make_result("broadcast_to", out, (x,), lambda g: (_unbroadcast(g, x.shape),))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", f"cannot multiply {a.shape} by {b.shape}")
    return make_result(
        "matmul",
        np.matmul(a.data, b.data),
        (a, b),
        lambda g: (
            _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape),
            _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape),
        ),
    )


# normalization


def layer_norm(
    x: ArrayLike,
    gamma: Optional[Tensor] = None,
    beta: Optional[Tensor] = None,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize over the last axis with optional affine parameters."""
    x = as_tensor(x)
    channels = x.shape[-1]
    for name, param in (("gamma", gamma), ("beta", beta)):
        if param is not None and param.shape != (channels,):
            raise ShapeError("layer_norm", f"{name} {param.shape} vs channels {channels}")
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * rstd
    scale = gamma.data if gamma is not None else 1.0
    out = xhat * scale + (beta.data if beta is not None else 0.0)
    parents = [x] + [p for p in (gamma, beta) if p is not None]

    def backward(g: np.ndarray) -> List[np.ndarray]:
        gxhat = g * scale
        gx = rstd * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        grads = [gx]
        if gamma is not None:
            grads.append((g * xhat).reshape(-1, channels).sum(axis=0))
        if beta is not None:
            grads.append(g.reshape(-1, channels).sum(axis=0))
        return grads

    return make_result("layer_norm", out, parents, backward)


# framing and resampling


def _frame_index(count: int, size: int, hop: int) -> np.ndarray:
    return hop * np.arange(count)[:, None] + np.arange(size)[None, :]


def frame(x: ArrayLike, size: int, hop: int) -> Tensor:
    """Slice a 1-D signal into overlapping rows (no padding)."""
    x = as_tensor(x)
    if x.ndim != 1 or x.shape[0] < size:
        raise ShapeError("frame", f"signal {x.shape} shorter than frame size {size}")
    index = _frame_index(1 + (x.shape[0] - size) // hop, size, hop)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return make_result("frame", x.data[index], (x,), backward)


def overlap_add(frames: ArrayLike, hop: int) -> Tensor:
    """Adjoint of ``frame``: sum T x N rows into a signal at ``hop`` spacing."""
    frames = as_tensor(frames)
    if frames.ndim != 2:
        raise ShapeError("overlap_add", f"expected T x N frames, got {frames.shape}")
    count, size = frames.shape
    index = _frame_index(count, size, hop)
    out = np.zeros((count - 1) * hop + size, dtype=frames.data.dtype)
    np.add.at(out, index, frames.data)
    return make_result("overlap_add", out, (frames,), lambda g: (g[index],))


def interp_rows(x: ArrayLike, target_len: int) -> Tensor:
    """Linear interpolation along the first axis onto ``target_len`` rows."""
    x = as_tensor(x)
    lower, frac = interp_positions(x.shape[0], target_len)
    frac = frac.reshape((-1,) + (1,) * (x.ndim - 1))
    if x.shape[0] == 1:
        out = np.repeat(x.data, target_len, axis=0)
    else:
        start = x.data[lower]
        out = start + frac * (x.data[lower + 1] - start)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.zeros_like(x.data)
        if x.shape[0] == 1:
            grad[0] = g.sum(axis=0)
        else:
            np.add.at(grad, lower, (1.0 - frac) * g)
            np.add.at(grad, lower + 1, frac * g)
        return (grad,)

    return make_result("interp_rows", out, (x,), backward)


# convolutions and pooling


def conv(
    x: ArrayLike,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: Union[int, Sequence[int]] = 1,
    padding: Union[int, Sequence[int]] = 0,
    dilation: Union[int, Sequence[int]] = 1,
    groups: int = 1,
) -> Tensor:
    """N-d cross-correlation on (N, C, *spatial) inputs with (O, C/groups, *k) weights."""
    x, weight = as_tensor(x), as_tensor(weight)
    nd = weight.ndim - 2
    op = f"conv{nd}d"
    if nd < 1 or x.ndim != nd + 2:
        raise ShapeError(op, f"input {x.shape} incompatible with weight {weight.shape}")
    stride, padding, dilation = (_ntuple(v, nd) for v in (stride, padding, dilation))
    batch, c_in = x.shape[:2]
    c_out, c_group = weight.shape[:2]
    kernel = weight.shape[2:]
    if c_in != c_group * groups or c_out % groups:
        raise ShapeError(op, f"{c_in} input channels vs weight {weight.shape} with groups={groups}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(op, f"bias {bias.shape} vs {c_out} output channels")
    spatial = x.shape[2:]
    padded = tuple(s + 2 * p for s, p in zip(spatial, padding))
    out_shape = tuple(
        (p - d * (k - 1) - 1) // s + 1 for p, d, k, s in zip(padded, dilation, kernel, stride)
    )
    if any(o < 1 for o in out_shape):
        raise ShapeError(op, f"input {spatial} too small for kernel {kernel} (padding {padding})")

    out_group = c_out // groups
    count = math.prod(out_shape)
    xg = np.pad(x.data, ((0, 0), (0, 0)) + tuple((p, p) for p in padding))
    xg = xg.reshape((batch, groups, c_group) + padded)
    wg = weight.data.reshape((groups, out_group, c_group) + kernel)
    taps = list(itertools.product(*(range(k) for k in kernel)))
    windows = [
        (slice(None),) * 3
        + tuple(slice(t * d, t * d + (o - 1) * s + 1, s) for t, d, o, s in zip(tap, dilation, out_shape, stride))
        for tap in taps
    ]
    lead = (slice(None),) * 3

    out = np.zeros((batch, groups, out_group, count), dtype=x.data.dtype)
    for tap, window in zip(taps, windows):
        out += np.matmul(wg[lead + tap], xg[window].reshape(batch, groups, c_group, count))
    out = out.reshape((batch, c_out) + out_shape)
    if bias is not None:
        out = out + bias.data.reshape((1, c_out) + (1,) * nd)

    def backward(g: np.ndarray) -> List[Optional[np.ndarray]]:
        gy = g.reshape(batch, groups, out_group, count)
        gxg = np.zeros_like(xg)
        gw = np.zeros_like(wg)
        for tap, window in zip(taps, windows):
            col = xg[window].reshape(batch, groups, c_group, count)
            gw[lead + tap] = np.matmul(gy, np.swapaxes(col, -1, -2)).sum(axis=0)
            gxg[window] += np.matmul(np.swapaxes(wg[lead + tap], -1, -2), gy).reshape(
                (batch, groups, c_group) + out_shape
            )
        crop = (slice(None), slice(None)) + tuple(slice(p, p + s) for p, s in zip(padding, spatial))
        grads: List[Optional[np.ndarray]] = [
            gxg.reshape((batch, c_in) + padded)[crop],
            gw.reshape(weight.shape),
        ]
        if bias is not None:
            grads.append(g.sum(axis=(0,) + tuple(range(2, 2 + nd))))
        return grads

    parents = [x, weight] + ([bias] if bias is not None else [])
    return make_result(op, out, parents, backward)


def conv_transpose(
    x: ArrayLike,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: Union[int, Sequence[int]] = 1,
    padding: Union[int, Sequence[int]] = 0,
) -> Tensor:
    """N-d transposed convolution; weight is (C_in, C_out, *k). Output length per
    axis is (L - 1) * stride + k - 2 * padding."""
    x, weight = as_tensor(x), as_tensor(weight)
    nd = weight.ndim - 2
    op = f"transposed_conv{nd}d"
    if nd < 1 or x.ndim != nd + 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(op, f"input {x.shape} incompatible with weight {weight.shape}")
    stride, padding = _ntuple(stride, nd), _ntuple(padding, nd)
    batch, c_in = x.shape[:2]
    c_out = weight.shape[1]
    kernel = weight.shape[2:]
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(op, f"bias {bias.shape} vs {c_out} output channels")
    spatial = x.shape[2:]
    full = tuple((l - 1) * s + k for l, s, k in zip(spatial, stride, kernel))  # noqa: E741
    if any(f - 2 * p < 1 for f, p in zip(full, padding)):
        raise ShapeError(op, f"padding {padding} removes the whole output {full}")
    count = math.prod(spatial)
    flat = x.data.reshape(batch, c_in, count)
    taps = list(itertools.product(*(range(k) for k in kernel)))
    windows = [
        (slice(None), slice(None))
        + tuple(slice(t, t + (l - 1) * s + 1, s) for t, l, s in zip(tap, spatial, stride))  # noqa: E741
        for tap in taps
    ]
    lead = (slice(None), slice(None))
    crop = lead + tuple(slice(p, f - p) for f, p in zip(full, padding))

    out = np.zeros((batch, c_out) + full, dtype=x.data.dtype)
    for tap, window in zip(taps, windows):
        out[window] += np.matmul(weight.data[lead + tap].T, flat).reshape((batch, c_out) + spatial)
    out = out[crop]
    if bias is not None:
        out = out + bias.data.reshape((1, c_out) + (1,) * nd)

    def backward(g: np.ndarray) -> List[Optional[np.ndarray]]:
        gfull = np.zeros((batch, c_out) + full, dtype=g.dtype)
        gfull[crop] = g
        gx = np.zeros_like(flat)
        gw = np.zeros_like(weight.data)
        for tap, window in zip(taps, windows):
            gwin = gfull[window].reshape(batch, c_out, count)
            gx += np.matmul(weight.data[lead + tap], gwin)
            gw[lead + tap] = np.matmul(flat, np.swapaxes(gwin, -1, -2)).sum(axis=0)
        grads: List[Optional[np.ndarray]] = [gx.reshape(x.shape), gw]
        if bias is not None:
            grads.append(g.sum(axis=(0,) + tuple(range(2, 2 + nd))))
        return grads

    parents = [x, weight] + ([bias] if bias is not None else [])
    return make_result(op, out, parents, backward)


def avg_pool1d(x: ArrayLike, kernel: int, stride: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    stride = stride or kernel
    length = x.shape[-1]
    if length < kernel:
        raise ShapeError("avg_pool1d", f"length {length} shorter than kernel {kernel}")
    count = (length - kernel) // stride + 1
    windows = [(Ellipsis, slice(j, j + (count - 1) * stride + 1, stride)) for j in range(kernel)]
    out = np.zeros(x.shape[:-1] + (count,), dtype=x.data.dtype)
    for window in windows:
        out += x.data[window]
    out /= kernel

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.zeros_like(x.data)
        for window in windows:
            grad[window] += g / kernel
        return (grad,)

    return make_result("avg_pool1d", out, (x,), backward)


def adaptive_pool_matrix(length: int, out_len: int) -> np.ndarray:
    pool = np.zeros((length, out_len))
    for i in range(out_len):
        start = (i * length) // out_len
        end = -(-((i + 1) * length) // out_len)
        pool[start:end, i] = 1.0 / (end - start)
    return pool


def adaptive_avg_pool1d(x: ArrayLike, out_len: int) -> Tensor:
    x = as_tensor(x)
    if out_len < 1 or x.ndim < 2:
        raise ShapeError("adaptive_avg_pool1d", f"cannot pool {x.shape} to {out_len}")
    return matmul(x, Tensor(adaptive_pool_matrix(x.shape[-1], out_len)))


# recurrent and attention blocks


def lstm_step(
    x: Tensor, h: Tensor, c: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor
) -> Tuple[Tensor, Tensor]:
    """One LSTM cell update with gates ordered input, forget, cell, output."""
    hidden = w_hh.shape[0]
    z = matmul(x, w_ih) + matmul(h, w_hh) + bias
    i = sigmoid(z[:, :hidden])
    f = sigmoid(z[:, hidden : 2 * hidden])
    g = tanh(z[:, 2 * hidden : 3 * hidden])
    o = sigmoid(z[:, 3 * hidden :])
    c_next = f * c + i * g
    return o * tanh(c_next), c_next


def lstm_sequence(x: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor) -> Tensor:
    """Run an LSTM over (N, L, C) from zero state and return all hidden states."""
    x = as_tensor(x)
    hidden = w_hh.shape[0]
    if x.ndim != 3 or w_ih.shape != (x.shape[2], 4 * hidden) or w_hh.shape != (hidden, 4 * hidden):
        raise ShapeError(
            "lstm_sequence",
            f"input {x.shape}, w_ih {w_ih.shape}, w_hh {w_hh.shape} are inconsistent",
        )
    batch, steps, _ = x.shape
    projected = x.data @ w_ih.data + bias.data
    gates = np.empty((batch, steps, 4 * hidden), dtype=x.data.dtype)
    cells = np.empty((batch, steps, hidden), dtype=x.data.dtype)
    hiddens = np.empty((batch, steps, hidden), dtype=x.data.dtype)
    h = np.zeros((batch, hidden), dtype=x.data.dtype)
    c = np.zeros_like(h)
    for t in range(steps):
        z = projected[:, t] + h @ w_hh.data
        act = gates[:, t]
        act[:, : 2 * hidden] = expit(z[:, : 2 * hidden])
        act[:, 2 * hidden : 3 * hidden] = np.tanh(z[:, 2 * hidden : 3 * hidden])
        act[:, 3 * hidden :] = expit(z[:, 3 * hidden :])
        c = act[:, hidden : 2 * hidden] * c + act[:, :hidden] * act[:, 2 * hidden : 3 * hidden]
        h = act[:, 3 * hidden :] * np.tanh(c)
        cells[:, t] = c
        hiddens[:, t] = h

    def backward(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        dz_all = np.empty_like(gates)
        dh_next = np.zeros((batch, hidden), dtype=g.dtype)
        dc_next = np.zeros_like(dh_next)
        for t in reversed(range(steps)):
            act = gates[:, t]
            i, f = act[:, :hidden], act[:, hidden : 2 * hidden]
            cand, o = act[:, 2 * hidden : 3 * hidden], act[:, 3 * hidden :]
            tanh_c = np.tanh(cells[:, t])
            c_prev = cells[:, t - 1] if t > 0 else np.zeros_like(dh_next)
            dh = g[:, t] + dh_next
            dc = dh * o * (1.0 - tanh_c**2) + dc_next
            dz = dz_all[:, t]
            dz[:, :hidden] = dc * cand * i * (1.0 - i)
            dz[:, hidden : 2 * hidden] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * hidden : 3 * hidden] = dc * i * (1.0 - cand**2)
            dz[:, 3 * hidden :] = dh * tanh_c * o * (1.0 - o)
            dh_next = dz @ w_hh.data.T
            dc_next = dc * f
        h_prev = np.concatenate([np.zeros((batch, 1, hidden), dtype=g.dtype), hiddens[:, :-1]], axis=1)
        flat_dz = dz_all.reshape(-1, 4 * hidden)
        return (
            dz_all @ w_ih.data.T,
            x.data.reshape(-1, x.shape[2]).T @ flat_dz,
            h_prev.reshape(-1, hidden).T @ flat_dz,
            flat_dz.sum(axis=0),
        )

    return make_result("lstm_sequence", hiddens, (x, w_ih, w_hh, bias), backward)


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d)) v over the second-to-last axis."""
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError("attention", f"q {q.shape}, k {k.shape}, v {v.shape} are inconsistent")
    scores = matmul(q, swapaxes(k, -1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    return matmul(softmax(scores, axis=-1), v)


def multi_head_self_attention(
    x: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor, w_o: Tensor, heads: int
) -> Tensor:
    """Self-attention over (N, L, C) with ``heads`` equal channel splits."""
    x = as_tensor(x)
    batch, length, channels = x.shape
    if channels % heads:
        raise ShapeError("multi_head_self_attention", f"{heads} heads do not divide {channels} channels")
    width = channels // heads

    def split(t: Tensor) -> Tensor:
        return transpose(reshape(t, (batch, length, heads, width)), (0, 2, 1, 3))

    mixed = scaled_dot_product_attention(split(x @ w_q), split(x @ w_k), split(x @ w_v))
    merged = reshape(transpose(mixed, (0, 2, 1, 3)), (batch, length, channels))
    return merged @ w_o


def pad(x: ArrayLike, widths: Sequence[Tuple[int, int]], mode: str = "constant") -> Tensor:
    """Zero (``constant``) or replicate (``edge``) padding, one pair per axis."""
    x = as_tensor(x)
    widths = tuple((int(b), int(a)) for b, a in widths)
    if len(widths) != x.ndim or mode not in ("constant", "edge"):
        raise ShapeError("pad", f"widths {widths} / mode {mode!r} invalid for shape {x.shape}")
    out = np.pad(x.data, widths, mode=mode)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = g
        for axis, (before, after) in enumerate(widths):
            if not before and not after:
                continue
            size = grad.shape[axis]
            core = np.take(grad, np.arange(before, size - after), axis=axis).copy()
            if mode == "edge":
                head = [slice(None)] * grad.ndim
                tail = [slice(None)] * grad.ndim
                head[axis], tail[axis] = slice(0, 1), slice(-1, None)
                lead = np.take(grad, np.arange(0, before), axis=axis).sum(axis=axis, keepdims=True)
                trail = np.take(grad, np.arange(size - after, size), axis=axis).sum(axis=axis, keepdims=True)
                core[tuple(head)] += lead
                core[tuple(tail)] += trail
            grad = core
        return (grad,)

    return make_result("pad", out, (x,), backward)
