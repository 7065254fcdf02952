"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Only the handful of primitives the forecaster needs are provided. A
:class:`Tape` records every operation whose inputs include a tape-bound
tensor; :func:`backward` replays that record once in reverse order.

Example
-------
>>> tape = Tape()
>>> x = tape.leaf(np.array(3.0), "x")
>>> loss = mul(x, x)
>>> backward(tape, loss)["x"]
array(6.)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NumericError, PrismError


class Tensor:
    """A float64 array, optionally bound to a tape as a leaf or an op output."""

    __slots__ = ("data", "tape", "index", "name")

    def __init__(self, data, tape: "Tape | None" = None, index: int = -1, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar keeps model code readable
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

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return getitem(self, key)


@dataclass
class _Node:
    out: int
    parents: tuple
    vjp: Callable


class Tape:
    """Ordered record of primitive operations for a single forward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.leaves: dict[str, Tensor] = {}
        self._count = 0
        self.consumed = False

    def _new_index(self) -> int:
        self._count += 1
        return self._count - 1

    def leaf(self, array, name: str) -> Tensor:
        """Register a differentiable input under ``name``."""
        if name in self.leaves:
            raise ConfigError(f"duplicate leaf name {name!r}")
        t = Tensor(array, self, self._new_index(), name)
        self.leaves[name] = t
        return t

    def record(self, out, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
        t = Tensor(out, self, self._new_index())
        self.nodes.append(_Node(t.index, tuple(parents), vjp))
        return t


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Tensor) and x.tape is not None:
            if tape is not None and x.tape is not tape:
                raise PrismError("operands recorded on different tapes")
            tape = x.tape
    return tape


def _op(out, inputs: Sequence, vjp: Callable) -> Tensor:
    """Wrap a forward result; record it only if some input lives on a tape."""
    tape = _tape_of(*inputs)
    if tape is None:
        return Tensor(out)
    if tape.consumed:
        raise PrismError("tape already replayed; start a new forward pass")
    parents = tuple(x if isinstance(x, Tensor) and x.tape is tape else None for x in inputs)
    return tape.record(out, parents, vjp)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _op(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _op(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _op(ad * bd, (a, b),
               lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def vjp(g):
        ga = g / bd
        return _unbroadcast(ga, ad.shape), _unbroadcast(-ga * out, bd.shape)

    return _op(out, (a, b), vjp)


def square(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _op(xd * xd, (x,), lambda g: (2.0 * xd * g,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return _op(out, (x,), lambda g: (g / (2.0 * out),))


def abs_(x) -> Tensor:
    """Absolute value; subgradient ``sign(x)`` (zero at the kink)."""
    x = as_tensor(x)
    xd = x.data
    return _op(np.abs(xd), (x,), lambda g: (g * np.sign(xd),))


def relu(x) -> Tensor:
    """Elementwise ``max(0, x)`` with subgradient 0 at ``x == 0``."""
    x = as_tensor(x)
    mask = x.data > 0
    return _op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------- reductions

def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _op(out, (x,), vjp)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum_(x, axis, keepdims), 1.0 / float(n))


def std(x, axis: int = -1, eps: float = 1e-8) -> Tensor:
    """Population standard deviation along ``axis``.

    The value is the plain ``sqrt(var)``; the derivative uses ``sigma + eps``
    in the denominator so constant inputs get a zero (not NaN) gradient.
    """
    x = as_tensor(x)
    xd = x.data
    n = xd.shape[axis]
    centered = xd - xd.mean(axis=axis, keepdims=True)
    out = np.sqrt((centered * centered).mean(axis=axis))

    def vjp(g):
        scale = np.expand_dims(g / (n * (out + eps)), axis)
        return (centered * scale,)

    return _op(out, (x,), vjp)


def minimum(x, cap: float) -> Tensor:
    """Elementwise ``min(x, cap)`` for a constant ``cap``."""
    x = as_tensor(x)
    mask = x.data < cap
    return _op(np.where(mask, x.data, cap), (x,), lambda g: (g * mask,))


def max_(x, axis: int = -1) -> Tensor:
    """Maximum along ``axis``; the gradient goes to the lowest maximizing index."""
    x = as_tensor(x)
    idx = np.argmax(x.data, axis=axis)
    idx_e = np.expand_dims(idx, axis)
    out = np.take_along_axis(x.data, idx_e, axis=axis).squeeze(axis)
    shape = x.shape

    def vjp(g):
        gx = np.zeros(shape)
        np.put_along_axis(gx, idx_e, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _op(out, (x,), vjp)


def softmax(x, axis: int = -1, temperature: float = 1.0) -> Tensor:
    """Softmax of ``x / temperature`` along ``axis``."""
    x = as_tensor(x)
    z = x.data / temperature
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner) / temperature,)

    return _op(out, (x,), vjp)


# ---------------------------------------------------------------- linear algebra

def affine(x, W, b) -> Tensor:
    """``x @ W.T + b`` over the last axis of ``x``.

    ``x`` is ``(..., n_in)``, ``W`` is ``(n_out, n_in)`` and ``b`` is ``(n_out,)``.
    """
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1:] != (W.shape[1],):
        raise ConfigError(f"affine shape mismatch: x{x.shape}, W{W.shape}, b{b.shape}")
    xd, Wd = x.data, W.data
    out = xd @ Wd.T + b.data

    def vjp(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = xd.reshape(-1, xd.shape[-1])
        return g @ Wd, g2.T @ x2, g2.sum(axis=0)

    return _op(out, (x, W, b), vjp)


def linear_map(x, forward: Callable, adjoint: Callable) -> Tensor:
    """Apply a fixed linear operator given as a forward/adjoint function pair."""
    x = as_tensor(x)
    return _op(forward(x.data), (x,), lambda g: (adjoint(g),))


# ---------------------------------------------------------------- structure

def getitem(x, key) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    parts = key if isinstance(key, tuple) else (key,)
    basic = all(isinstance(k, (slice, int, type(Ellipsis))) or k is None for k in parts)

    def vjp(g):
        gx = np.zeros(shape)
        if basic:
            gx[key] = g
        else:
            np.add.at(gx, key, g)
        return (gx,)

    return _op(x.data[key], (x,), vjp)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return _op(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    inv = np.argsort(axes)
    return _op(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def stack(xs: Sequence, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    out = np.stack([x.data for x in xs], axis=axis)
    n = len(xs)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return _op(out, xs, vjp)


def concat(xs: Sequence, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    bounds = np.cumsum(sizes)[:-1]
    out = np.concatenate([x.data for x in xs], axis=axis)
    return _op(out, xs, lambda g: tuple(np.split(g, bounds, axis=axis)))


# ---------------------------------------------------------------- backward

def backward(tape: Tape, loss: Tensor) -> dict[str, np.ndarray]:
    """Gradients of the scalar ``loss`` with respect to every leaf of ``tape``.

    Leaves the loss does not depend on receive zeros. A tape can be replayed
    exactly once.
    """
    if loss.tape is not tape:
        raise PrismError("loss was not produced on this tape")
    if loss.data.size != 1:
        raise PrismError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise PrismError("tape already replayed")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.data)}
    for pos in range(len(tape.nodes) - 1, -1, -1):
        node = tape.nodes[pos]
        g = grads.pop(node.out, None)
        if g is None:
            continue
        with np.errstate(all="ignore"):
            parent_grads = node.vjp(g)
        for parent, pg in zip(node.parents, parent_grads):
            if parent is None or pg is None:
                continue
            if not np.all(np.isfinite(pg)):
                raise NumericError(f"non-finite gradient produced at tape node {pos}")
            prev = grads.get(parent.index)
            grads[parent.index] = pg if prev is None else prev + pg

    out = {}
    for name, leaf in tape.leaves.items():
        g = grads.get(leaf.index)
        out[name] = np.zeros_like(leaf.data) if g is None else np.asarray(g, dtype=np.float64).reshape(leaf.shape)
    return out


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, **kwargs) -> "AdamState":
        state = cls(**kwargs)
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
        return state


def adam_step(params: dict, grads: dict, state: AdamState) -> dict:
    """One bias-corrected Adam update. Returns new arrays; ``state`` is advanced."""
    missing = [k for k in params if k not in grads]
    if missing:
        raise PrismError(f"missing gradients for parameters: {missing}")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    new = {}
    for k, p in params.items():
        g = grads[k]
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v = state.v[k]
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        new[k] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return new


# ---------------------------------------------------------------- gradient check

@dataclass
class GradCheckResult:
    max_rel_err: float
    worst: tuple | None
    checked: int
    skipped: list


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def grad_check(fn: Callable[[dict], Tensor], params: dict, h: float = 1e-5,
               tol: float = 1e-4) -> GradCheckResult:
    """Compare :func:`backward` with central differences on every coordinate.

    ``fn`` maps a dict of named tensors to a scalar tensor and must be
    deterministic. Coordinates whose finite-difference estimate disagrees with
    the analytic gradient by more than ``tol`` *and* whose one-sided slopes
    do not converge as the step shrinks sit on a kink (ReLU, ``|.|``, max);
    they are reported in ``skipped`` instead of counting toward the error.
    """
    tape = Tape()
    leaves = {k: tape.leaf(np.array(v, dtype=np.float64), k) for k, v in params.items()}
    analytic = backward(tape, fn(leaves))

    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def f() -> float:
        return float(fn({k: Tensor(v) for k, v in work.items()}).data)

    def one_sided(arr, i, step, f0):
        orig = arr.flat[i]
        arr.flat[i] = orig + step
        fp = f()
        arr.flat[i] = orig - step
        fm = f()
        arr.flat[i] = orig
        return (fp - f0) / step, (f0 - fm) / step

    worst, worst_at, checked, skipped = 0.0, None, 0, []
    for name, arr in work.items():
        for i in range(arr.size):
            orig = arr.flat[i]
            arr.flat[i] = orig + h
            fp = f()
            arr.flat[i] = orig - h
            fm = f()
            arr.flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            err = _rel(numeric, float(analytic[name].flat[i]))
            if err > tol:
                f0 = f()
                fw1, bw1 = one_sided(arr, i, h, f0)
                fw2, bw2 = one_sided(arr, i, h / 10.0, f0)
                if abs(fw2 - bw2) > 0.5 * abs(fw1 - bw1):
                    skipped.append((name, i))
                    continue
            checked += 1
            if err > worst:
                worst, worst_at = err, (name, i)
    return GradCheckResult(worst, worst_at, checked, skipped)
