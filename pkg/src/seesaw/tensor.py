"""Dense f64 tensors with reverse-mode automatic differentiation.

Values are numpy float64 arrays; differentiation is a dynamic tape rebuilt
per forward pass.  Ops record themselves on the active ``Tape`` only when a
differentiable tensor is involved, so constant-only arithmetic costs nothing
extra.  Tensors are treated as immutable once created; the optimizer mutates
leaf ``.data`` in place *between* tapes, never during one.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "NumericError",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "transpose",
    "swap_leading",
    "reshape",
    "index_select",
    "narrow",
    "stack",
    "concat_features",
    "concat_last",
    "sum_all",
    "mean_all",
    "var_all",
    "abs_",
    "sqrt",
    "relu",
    "gelu",
    "sigmoid",
    "softmax_rows",
    "layer_norm",
    "dropout",
    "rdft",
    "zero_grads",
]


class ShapeError(ValueError):
    """Operand shapes are inconsistent for the requested op."""


class NumericError(ValueError):
    """Input values are numerically invalid (NaN/Inf) for the requested op."""


class Tensor:
    """A dense float64 array, optionally participating in gradient taping.

    ``requires_grad`` marks differentiable leaves (parameters).  ``node_id``
    is set when an op output is recorded on the active tape; it is only used
    to decide whether gradients should flow into this tensor.
    """

    __slots__ = ("data", "requires_grad", "grad", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; scalars are wrapped as constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def sum(self) -> "Tensor":
        return sum_all(self)

    def mean(self) -> "Tensor":
        return mean_all(self)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


# ---------------------------------------------------------------------------
# Tape

_ACTIVE: "Tape | None" = None


class Tape:
    """Ordered record of one forward pass, consumed by :meth:`backward`.

    Nodes are appended in execution order, so every node's inputs precede it.
    A tape is single-owner: activate it with ``with Tape() as tape:``, run the
    forward pass inside, then call ``tape.backward(loss)`` afterwards.
    """

    __slots__ = ("nodes",)

    def __init__(self):
        # each node: (output, inputs, backward_fn); backward_fn maps the
        # output gradient to one gradient array (or None) per input
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE
        if _ACTIVE is not None:
            raise RuntimeError("a Tape is already active; tapes do not nest")
        _ACTIVE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE
        _ACTIVE = None
        return False

    def backward(self, loss: Tensor) -> None:
        """Accumulate gradients of ``loss`` into every participating tensor.

        ``loss`` must be a scalar recorded on this tape.  Gradients add into
        existing ``.grad`` arrays, which is what mini-batch accumulation
        wants; call :func:`zero_grads` between optimizer steps.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if (
            loss.node_id is None
            or loss.node_id >= len(self.nodes)
            or self.nodes[loss.node_id][0] is not loss
        ):
            raise ValueError("loss is not recorded on this tape")
        seed = np.ones_like(loss.data)
        loss.grad = seed if loss.grad is None else loss.grad + seed
        for out, inputs, backward_fn in reversed(self.nodes):
            g = out.grad
            if g is None:
                continue
            for t, gi in zip(inputs, backward_fn(g)):
                if gi is None:
                    continue
                if t.requires_grad or t.node_id is not None:
                    t.grad = gi if t.grad is None else t.grad + gi


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    tape = _ACTIVE
    if tape is not None and any(t.requires_grad or t.node_id is not None for t in inputs):
        out.node_id = len(tape.nodes)
        tape.nodes.append((out, inputs, backward_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic (numpy broadcasting rules)


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)
    ad, bd = a.data, b.data

    def backward_fn(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _record(out, (a, b), backward_fn)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return _record(out, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# linear algebra & shaping


def _unbroadcast_batch(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum matmul-broadcast batch dims of ``grad`` back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i in range(len(shape) - 2) if shape[i] == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, batch dims broadcast.

    Backward is dA = g·Bᵀ, dB = Aᵀ·g (transposes on the last two axes),
    with broadcast batch dims summed back out.
    """
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = Tensor(np.matmul(a.data, b.data))
    ad, bd = a.data, b.data

    def backward_fn(g):
        ga = _unbroadcast_batch(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape)
        gb = _unbroadcast_batch(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape)
        return ga, gb

    return _record(out, (a, b), backward_fn)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes (plain transpose for 2-D tensors)."""
    if a.data.ndim < 2:
        raise ShapeError(f"transpose: needs >= 2 dims, got shape {a.shape}")
    out = Tensor(np.swapaxes(a.data, -1, -2).copy())
    return _record(out, (a,), lambda g: (np.swapaxes(g, -1, -2),))


def swap_leading(a: Tensor) -> Tensor:
    """Swap the first two axes of a >= 3-D tensor."""
    if a.data.ndim < 3:
        raise ShapeError(f"swap_leading: needs >= 3 dims, got shape {a.shape}")
    out = Tensor(np.swapaxes(a.data, 0, 1).copy())
    return _record(out, (a,), lambda g: (np.swapaxes(g, 0, 1),))


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    orig = a.shape
    return _record(out, (a,), lambda g: (g.reshape(orig),))


def index_select(a: Tensor, idx: int, axis: int = 0) -> Tensor:
    """Select index ``idx`` along ``axis``, dropping that axis."""
    out = Tensor(np.take(a.data, idx, axis=axis))
    shape = a.shape
    ax = axis % a.data.ndim

    def backward_fn(g):
        full = np.zeros(shape)
        sl = [slice(None)] * len(shape)
        sl[ax] = idx
        full[tuple(sl)] = g
        return (full,)

    return _record(out, (a,), backward_fn)


def narrow(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along ``axis``, keeping the axis."""
    ax = axis % a.data.ndim
    sl = [slice(None)] * a.data.ndim
    sl[ax] = slice(start, stop)
    out = Tensor(a.data[tuple(sl)].copy())
    shape = a.shape

    def backward_fn(g):
        full = np.zeros(shape)
        full[tuple(sl)] = g
        return (full,)

    return _record(out, (a,), backward_fn)


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(parts)
    out = Tensor(np.stack([p.data for p in parts], axis=axis))

    def backward_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return _record(out, parts, backward_fn)


def concat_last(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last (feature) axis."""
    parts = tuple(parts)
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise ShapeError(
                f"concat: leading dims differ, {parts[0].shape} vs {p.shape}"
            )
    out = Tensor(np.concatenate([p.data for p in parts], axis=-1))
    widths = [p.shape[-1] for p in parts]
    splits = np.cumsum(widths)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, splits, axis=-1))

    return _record(out, parts, backward_fn)


def concat_features(a: Tensor, b: Tensor) -> Tensor:
    """Feature-axis concatenation a ⊕ b, with a occupying columns [0, D)."""
    return concat_last((a, b))


# ---------------------------------------------------------------------------
# reductions


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.sum(a.data))
    shape = a.shape
    return _record(out, (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    out = Tensor(np.mean(a.data))
    shape, n = a.shape, a.data.size
    return _record(out, (a,), lambda g: (np.broadcast_to(g / n, shape).copy(),))


def var_all(a: Tensor) -> Tensor:
    """Population variance over all elements (composite of primitive ops)."""
    centered = sub(a, mean_all(a))
    return mean_all(mul(centered, centered))


# ---------------------------------------------------------------------------
# nonlinearities


def abs_(a: Tensor) -> Tensor:
    """Elementwise |x|; subgradient 0 at x == 0."""
    out = Tensor(np.abs(a.data))
    sgn = np.sign(a.data)
    return _record(out, (a,), lambda g: (g * sgn,))


def sqrt(a: Tensor) -> Tensor:
    """Elementwise square root; subgradient 0 at x == 0."""
    val = np.sqrt(a.data)
    out = Tensor(val)

    def backward_fn(g):
        return (np.divide(g, 2.0 * val, out=np.zeros_like(val), where=val > 0),)

    return _record(out, (a,), backward_fn)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    mask = a.data > 0
    return _record(out, (a,), lambda g: (g * mask,))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """GELU in the tanh formulation: 0.5·x·(1 + tanh(√(2/π)(x + 0.044715x³)))."""
    x = a.data
    t = np.tanh(_GELU_C * (x + 0.044715 * (x * x * x)))
    out = Tensor(0.5 * x * (1.0 + t))

    def backward_fn(g):
        deriv = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 0.134145 * x * x)
        return (g * deriv,)

    return _record(out, (a,), backward_fn)


def sigmoid(a: Tensor) -> Tensor:
    """Elementwise logistic function, computed branch-wise to avoid overflow."""
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = Tensor(s)
    return _record(out, (a,), lambda g: (g * s * (1.0 - s),))


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax along the last axis, stabilized by row-max subtraction."""
    x = a.data
    if not np.isfinite(x).all():
        raise NumericError("softmax_rows: input contains NaN or Inf")
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def backward_fn(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return _record(out, (a, ), backward_fn)


_LN_EPS = 1e-5


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Normalize the last axis to mean 0 / variance 1, then apply gain⊙x + bias.

    Epsilon is fixed at 1e-5; ``gain`` and ``bias`` have the width of the
    last axis.
    """
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}"
        )
    xv = x.data
    mu = xv.mean(axis=-1, keepdims=True)
    var = ((xv - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (xv - mu) * inv
    out = Tensor(gain.data * xhat + bias.data)

    def backward_fn(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgain, dbias

    return _record(out, (x, gain, bias), backward_fn)


def dropout(a: Tensor, p: float, rng: np.random.Generator | None, train_mode: bool) -> Tensor:
    """Inverted dropout: Bernoulli mask scaled by 1/(1−p) in training, identity in eval."""
    if not train_mode or p == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in train mode needs an RNG")
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    out = Tensor(a.data * mask)
    return _record(out, (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# real-input DFT

_DFT_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _dft_bases(n: int) -> tuple[np.ndarray, np.ndarray]:
    # columns are bins: basis[t, k] for X[k] = sum_t x[t]·exp(-2πi·k·t/n)
    if n not in _DFT_CACHE:
        t = np.arange(n)[:, None]
        k = np.arange(n // 2 + 1)[None, :]
        ang = 2.0 * np.pi * t * k / n
        _DFT_CACHE[n] = (np.cos(ang), -np.sin(ang))
    return _DFT_CACHE[n]


def rdft(a: Tensor) -> Tensor:
    """Real-input DFT over the last axis, as an (re, im) trailing channel.

    Input [..., L] maps to output [..., ⌊L/2⌋+1, 2].  The transform is linear,
    so the backward pass is the transposed basis applied to each channel.
    """
    n = a.shape[-1]
    if n < 1:
        raise ShapeError("rdft: last axis must have length >= 1")
    cos_b, sin_b = _dft_bases(n)
    re = a.data @ cos_b
    im = a.data @ sin_b
    out = Tensor(np.stack([re, im], axis=-1))

    def backward_fn(g):
        return (g[..., 0] @ cos_b.T + g[..., 1] @ sin_b.T,)

    return _record(out, (a,), backward_fn)
