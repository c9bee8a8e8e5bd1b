"""Dense float tensors with reverse-mode differentiation.

A ``Tensor`` wraps a row-major numpy float buffer (float32 by default,
float64 for high-precision gradient checking). Operations executed while a
``GradTape`` is active are recorded as a Wengert list; ``GradTape.backward``
replays it in reverse and accumulates gradients into the ``.grad`` field of
every participating leaf tensor. Without an active tape every operation is
a plain numpy computation, which keeps inference cheap.

All reductions use numpy's fixed evaluation order, so results are
reproducible run to run for a fixed thread count; ``set_deterministic``
records the caller's intent and is honoured by the higher-level modules.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DimensionError, NumericError, ValidationError

MAX_RANK = 5

_DETERMINISTIC = True


def set_deterministic(flag: bool) -> None:
    """Pin fixed reduction order. The numpy backend is always fixed-order
    in-process; the flag is kept so configs can express the contract."""
    global _DETERMINISTIC
    _DETERMINISTIC = bool(flag)


def is_deterministic() -> bool:
    return _DETERMINISTIC


class Tensor:
    """N-d float array, optionally tracked for differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        if arr.ndim > MAX_RANK:
            raise DimensionError(f"rank {arr.ndim} exceeds maximum {MAX_RANK}")
        if arr.ndim > 0 and min(arr.shape) < 1:
            raise ValidationError(f"all extents must be >= 1, got shape {arr.shape}")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        head = f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}"
        if self.name:
            head += f", name={self.name!r}"
        return head + ")"

    # -- operator sugar ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- constructors ----------------------------------------------------------
    @staticmethod
    def zeros(shape, dtype=np.float32, requires_grad=False):
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)

    @staticmethod
    def ones(shape, dtype=np.float32, requires_grad=False):
        return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)


class GradTape:
    """Single-owner record of differentiable operations.

    Usage::

        with GradTape() as tape:
            loss = build_graph(...)
        tape.backward(loss)       # populates .grad on every tracked leaf

    Only one tape may be active at a time; a tape must not be shared across
    concurrent training steps.
    """

    def __init__(self):
        self._nodes: list = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise ValidationError("a GradTape is already active; tapes are single-owner")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def _record(self, out: Tensor, inputs: Sequence[Tensor], backward) -> None:
        self._nodes.append((out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        """Reverse sweep from a recorded scalar loss.

        Gradients accumulate additively when a tensor is used more than once
        and are added into each leaf's ``.grad`` (same shape as the leaf).
        """
        if loss.size != 1:
            raise ValidationError(f"backward expects a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            raise ValidationError("loss does not depend on any tracked tensor")
        if not np.isfinite(loss.data).all():
            raise NumericError("loss is non-finite")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {id(loss): loss}
        produced = {id(out) for out, _, _ in self._nodes}
        for out, inputs, backward in reversed(self._nodes):
            g = grads.pop(id(out), None)
            leaves.pop(id(out), None)
            if g is None:
                continue
            in_grads = backward(g)
            for t, ig in zip(inputs, in_grads):
                if ig is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + ig
                else:
                    grads[key] = ig
                    leaves[key] = t
        for key, t in leaves.items():
            g = grads.get(key)
            if g is None:
                continue
            if id(t) in produced:
                continue  # intermediate that never fed the loss path
            t.grad = g if t.grad is None else t.grad + g


_ACTIVE_TAPE: Optional[GradTape] = None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _track(*tensors: Tensor) -> bool:
    return _ACTIVE_TAPE is not None and any(t.requires_grad for t in tensors)


def _register(out: Tensor, inputs: Sequence[Tensor], backward) -> None:
    if out.requires_grad and _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE._record(out, inputs, backward)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data, requires_grad=_track(a, b))

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    _register(out, (a, b), backward)
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data, requires_grad=_track(a, b))

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    _register(out, (a, b), backward)
    return out


def neg(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(-a.data, requires_grad=_track(a))
    _register(out, (a,), lambda g: (-g,))
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data, requires_grad=_track(a, b))

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    _register(out, (a, b), backward)
    return out


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data / b.data, requires_grad=_track(a, b))

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    _register(out, (a, b), backward)
    return out


def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.maximum(a.data, 0), requires_grad=_track(a))

    def backward(g):
        return (g * (a.data > 0),)

    _register(out, (a,), backward)
    return out


def clamp(a, lo: float, hi: float) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.clip(a.data, lo, hi), requires_grad=_track(a))

    def backward(g):
        inside = (a.data >= lo) & (a.data <= hi)
        return (g * inside,)

    _register(out, (a,), backward)
    return out


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), requires_grad=_track(a))

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)

    _register(out, (a,), backward)
    return out


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# linear algebra, shape manipulation
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner extents differ: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data, requires_grad=_track(a, b))

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    _register(out, (a, b), backward)
    return out


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(shape)
    if int(np.prod(shape)) != a.size:
        raise DimensionError(f"cannot reshape {a.shape} to {shape}")
    out = Tensor(a.data.reshape(shape), requires_grad=_track(a))

    def backward(g):
        return (g.reshape(a.shape),)

    _register(out, (a,), backward)
    return out


def transpose(a, axes) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    out = Tensor(np.ascontiguousarray(a.data.transpose(axes)), requires_grad=_track(a))
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.ascontiguousarray(g.transpose(inverse)),)

    _register(out, (a,), backward)
    return out


def concat(tensors: Iterable, axis: int) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ValidationError("concat of an empty list")
    rank = ts[0].ndim
    if not (-rank <= axis < rank):
        raise DimensionError(f"axis {axis} out of range for rank {rank}")
    axis = axis % rank
    ref = list(ts[0].shape)
    for t in ts[1:]:
        other = list(t.shape)
        if len(other) != rank or any(r != o for i, (r, o) in enumerate(zip(ref, other)) if i != axis):
            raise DimensionError(f"concat shape mismatch: {ts[0].shape} vs {t.shape}")
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis), requires_grad=_track(*ts))
    offsets = np.cumsum([0] + [t.shape[axis] for t in ts])

    def backward(g):
        grads = []
        index = [slice(None)] * rank
        for i in range(len(ts)):
            index[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(index)])
        return grads

    _register(out, ts, backward)
    return out


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in ts]
    return concat(expanded, axis=axis)


def slice_axis(a, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice along one axis; the counterpart of concat."""
    a = _as_tensor(a)
    if not (-a.ndim <= axis < a.ndim):
        raise DimensionError(f"axis {axis} out of range for rank {a.ndim}")
    axis = axis % a.ndim
    if not (0 <= start < stop <= a.shape[axis]):
        raise ValidationError(f"slice [{start}:{stop}) invalid for extent {a.shape[axis]}")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    out = Tensor(a.data[tuple(index)].copy(), requires_grad=_track(a))

    def backward(g):
        full = np.zeros_like(a.data)
        full[tuple(index)] = g
        return (full,)

    _register(out, (a,), backward)
    return out


def softmax(a, axis: int) -> Tensor:
    a = _as_tensor(a)
    if not (-a.ndim <= axis < a.ndim):
        raise DimensionError(f"axis {axis} out of range for rank {a.ndim}")
    if not np.isfinite(a.data).all():
        raise NumericError("softmax input contains non-finite values")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, requires_grad=_track(a))

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    _register(out, (a,), backward)
    return out


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # (C, OH, OW, kh, kw)
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols), oh, ow


def _col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    c, h, w = x_shape
    hp, wp = h + 2 * pad, w + 2 * pad
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    dxp = np.zeros((c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[:, i, j]
    if pad:
        return dxp[:, pad : pad + h, pad : pad + w]
    return dxp


def conv2d(x, w, bias=None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution (cross-correlation) over a C x H x W map."""
    x, w = _as_tensor(x), _as_tensor(w)
    b = _as_tensor(bias) if bias is not None else None
    if x.ndim != 3 or w.ndim != 4:
        raise DimensionError(f"conv2d expects x rank 3 and w rank 4, got {x.shape}, {w.shape}")
    cout, cin, kh, kw = w.shape
    if cin != x.shape[0]:
        raise DimensionError(f"input channels {x.shape[0]} != kernel channels {cin}")
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    if x.shape[1] + 2 * pad < kh or x.shape[2] + 2 * pad < kw:
        raise DimensionError(f"kernel {kh}x{kw} does not fit padded input {x.shape}")
    cols, oh, ow = _im2col(x.data, kh, kw, stride, pad)
    w_flat = w.data.reshape(cout, cin * kh * kw)
    out_data = w_flat @ cols
    if b is not None:
        out_data = out_data + b.data.reshape(cout, 1)
    out_data = out_data.reshape(cout, oh, ow)
    inputs = (x, w, b) if b is not None else (x, w)
    out = Tensor(out_data, requires_grad=_track(*inputs))

    def backward(g):
        g_flat = g.reshape(cout, oh * ow)
        gw = (g_flat @ cols.T).reshape(w.shape)
        gcols = w_flat.T @ g_flat
        gx = _col2im(gcols, x.shape, kh, kw, stride, pad)
        if b is not None:
            return gx, gw, g_flat.sum(axis=1)
        return gx, gw

    _register(out, inputs, backward)
    return out


def residual_block(x, w1, b1, w2, b2) -> Tensor:
    """x + conv(relu(conv(relu(x)))), 3x3 kernels, channel-preserving."""
    inner = conv2d(relu(x), w1, b1, stride=1, pad=1)
    inner = conv2d(relu(inner), w2, b2, stride=1, pad=1)
    return add(x, inner)


# ---------------------------------------------------------------------------
# bilinear upsampling
# ---------------------------------------------------------------------------

def _bilinear_axis(n_in: int, factor: int):
    # align_corners=False sample positions, clamped to the valid range
    coords = (np.arange(n_in * factor, dtype=np.float64) + 0.5) / factor - 0.5
    coords = np.clip(coords, 0.0, n_in - 1)
    lo = np.floor(coords).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = coords - lo
    return lo, hi, frac


def upsample_bilinear(x, factor: int) -> Tensor:
    x = _as_tensor(x)
    if factor not in (2, 4):
        raise ValidationError(f"upsample factor must be 2 or 4, got {factor}")
    if x.ndim != 3:
        raise DimensionError(f"upsample_bilinear expects C x H x W, got {x.shape}")
    c, h, w = x.shape
    y0, y1, fy = _bilinear_axis(h, factor)
    x0, x1, fx = _bilinear_axis(w, factor)
    fy = fy.astype(x.dtype)[None, :, None]
    fx = fx.astype(x.dtype)[None, None, :]
    d = x.data
    top = d[:, y0][:, :, x0] * (1 - fx) + d[:, y0][:, :, x1] * fx
    bot = d[:, y1][:, :, x0] * (1 - fx) + d[:, y1][:, :, x1] * fx
    out = Tensor(top * (1 - fy) + bot * fy, requires_grad=_track(x))

    def backward(g):
        gx = np.zeros_like(x.data)
        gy0 = g * (1 - fy)
        gy1 = g * fy
        for rows, gpart in ((y0, gy0), (y1, gy1)):
            np.add.at(gx, (slice(None), rows[:, None], x0[None, :]), gpart * (1 - fx))
            np.add.at(gx, (slice(None), rows[:, None], x1[None, :]), gpart * fx)
        return (gx,)

    _register(out, (x,), backward)
    return out


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def cross_entropy(logits, target) -> Tensor:
    """Mean pixel-wise negative log-likelihood of 2-channel logits."""
    logits = _as_tensor(logits)
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if logits.ndim != 3 or logits.shape[0] != 2:
        raise DimensionError(f"cross_entropy expects 2 x H x W logits, got {logits.shape}")
    if t.shape != logits.shape[1:]:
        raise DimensionError(f"target shape {t.shape} != logits spatial {logits.shape[1:]}")
    if not np.isfinite(logits.data).all():
        raise NumericError("cross_entropy logits are non-finite")
    if not np.isin(t, (0, 1)).all():
        raise ValidationError("cross_entropy target must be binary {0,1}")
    t = t.astype(np.int64)
    z = logits.data - logits.data.max(axis=0, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=0))
    logp = z - lse  # (2, H, W)
    picked = np.where(t == 1, logp[1], logp[0])
    n = picked.size
    out = Tensor(np.asarray(-picked.sum() / n, dtype=logits.dtype), requires_grad=_track(logits))

    def backward(g):
        p = np.exp(logp)
        onehot = np.stack([1 - t, t]).astype(logits.dtype)
        return ((p - onehot) * (g / n),)

    _register(out, (logits,), backward)
    return out


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def kaiming_uniform(shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)
