"""Reverse-mode automatic differentiation over float64 numpy tensors.

Define-by-run: each differentiable operation runs eagerly and appends one
entry to the thread's active :class:`Tape`.  Creation order is therefore a
valid topological order, so ``backward`` is a single reverse sweep over the
tape.  A tape is opened fresh for every forward pass (``with new_tape():``)
and is consumed by its first ``backward`` call; a second call on the same
tape raises, because silent double accumulation is a classic bug source.

Operations called while no tape is active (or on inputs that do not require
gradients) skip recording entirely, which doubles as the fast inference
path.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

from . import tensor as tk
from .errors import ContractError, ShapeError


class Var:
    """A tensor value participating in gradient computation.

    ``grad`` accumulates additively across every use of the Var in the
    recorded graph and always has the same shape as ``value``.  Leaves are
    created directly; interior nodes come out of :func:`record`.
    """

    __slots__ = ("value", "_grad", "requires_grad", "node_id")

    def __init__(self, value, requires_grad: bool = False):
        self.value = tk.as_tensor(value)
        self._grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node_id: int | None = None  # tape position; None for leaves

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self._grad = None

    def __repr__(self) -> str:
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; scalars go through the cheaper scale/add_scalar ops.
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return add_scalar(self, float(other))
        return add(self, other)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return add_scalar(self, -float(other))
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of operations; every node's parents precede it."""

    __slots__ = ("entries", "consumed")

    def __init__(self):
        self.entries: list[tuple[Var, tuple[Var, ...], Callable]] = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.entries)


_STATE = threading.local()


def _stack() -> list[Tape]:
    stack = getattr(_STATE, "stack", None)
    if stack is None:
        stack = _STATE.stack = []
    return stack


def active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


@contextmanager
def new_tape() -> Iterator[Tape]:
    """Open a fresh tape for one forward/backward pass."""
    tape = Tape()
    stack = _stack()
    stack.append(tape)
    try:
        yield tape
    finally:
        stack.pop()


def record(
    kind: str,
    inputs: Sequence[Var],
    value: np.ndarray,
    backward: Callable[[np.ndarray], tuple],
) -> Var:
    """Wire a computed ``value`` into the active tape.

    ``backward(g)`` must return one gradient array (or None) per input,
    where ``g`` is the gradient w.r.t. ``value``.  When no input requires a
    gradient, or no tape is active, nothing is recorded.
    """
    out = Var(value, requires_grad=any(v.requires_grad for v in inputs))
    tape = active_tape()
    if out.requires_grad and tape is not None:
        out.node_id = len(tape.entries)
        tape.entries.append((out, tuple(inputs), backward))
    return out


def backward(loss: Var) -> None:
    """Populate ``grad`` on every requires-grad leaf reachable from ``loss``.

    ``loss`` must be scalar and must have been recorded on the currently
    active tape, which is consumed by this call.
    """
    if loss.value.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.value.shape}")
    tape = active_tape()
    if loss.node_id is None:
        # A leaf loss has no recorded history: its own gradient is 1 and no
        # other node can depend on it.
        if loss.requires_grad:
            loss._grad = np.ones_like(loss.value)
        return
    if tape is None:
        raise ContractError("backward called with no active tape")
    if tape.consumed:
        raise ContractError("tape already consumed by a previous backward")
    entries = tape.entries
    if loss.node_id >= len(entries) or entries[loss.node_id][0] is not loss:
        raise ContractError("loss was not recorded on the active tape")
    tape.consumed = True
    loss._grad = np.ones_like(loss.value)
    for i in range(loss.node_id, -1, -1):
        out, parents, bwd = entries[i]
        g = out._grad
        if g is None:
            continue
        for parent, pg in zip(parents, bwd(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._grad is None:
                parent._grad = pg
            else:
                parent._grad = parent._grad + pg


def zero_grads(params: Sequence[Var]) -> None:
    for p in params:
        p.zero_grad()


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Differentiable operations
# ---------------------------------------------------------------------------


def add(a: Var, b: Var) -> Var:
    value = tk.add(a.value, b.value)
    ash, bsh = a.value.shape, b.value.shape

    def bwd(g):
        return _unbroadcast(g, ash), _unbroadcast(g, bsh)

    return record("add", (a, b), value, bwd)


def sub(a: Var, b: Var) -> Var:
    value = tk.add(a.value, -b.value)
    ash, bsh = a.value.shape, b.value.shape

    def bwd(g):
        return _unbroadcast(g, ash), _unbroadcast(-g, bsh)

    return record("sub", (a, b), value, bwd)


def mul(a: Var, b: Var) -> Var:
    value = tk.mul(a.value, b.value)
    av, bv = a.value, b.value

    def bwd(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return record("mul", (a, b), value, bwd)


def scale(a: Var, c: float) -> Var:
    c = float(c)

    def bwd(g):
        return (g * c,)

    return record("scale", (a,), tk.scale(a.value, c), bwd)


def add_scalar(a: Var, c: float) -> Var:
    def bwd(g):
        return (g,)

    return record("add_scalar", (a,), a.value + float(c), bwd)


def matmul(a: Var, b: Var) -> Var:
    """Matrix product: (m,n)@(n,) -> (m,) or (m,n)@(n,k) -> (m,k)."""
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim not in (1, 2) or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"cannot matmul shapes {av.shape} and {bv.shape}")
    value = av @ bv

    if bv.ndim == 1:

        def bwd(g):
            return g[:, None] * bv, av.T @ g

    else:

        def bwd(g):
            return g @ bv.T, av.T @ g

    return record("matmul", (a, b), value, bwd)


def mode1_matmul(p: Var, x: Var) -> Var:
    """Differentiable contraction of a square matrix with the first axis of x."""
    value = tk.mode1_matmul(p.value, x.value)
    pv, xv = p.value, x.value
    n = pv.shape[0]

    def bwd(g):
        g2 = g.reshape(n, -1)
        return g2 @ xv.reshape(n, -1).T, (pv.T @ g2).reshape(xv.shape)

    return record("mode1_matmul", (p, x), value, bwd)


def swap_axes(a: Var, i: int, j: int) -> Var:
    value = tk.swap_axes(a.value, i, j)

    def bwd(g):
        return (tk.swap_axes(g, i, j),)

    return record("swap_axes", (a,), value, bwd)


def reshape(a: Var, shape) -> Var:
    try:
        value = a.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {a.value.shape} to {shape}") from None
    old = a.value.shape

    def bwd(g):
        return (g.reshape(old),)

    return record("reshape", (a,), value, bwd)


def sum_all(a: Var) -> Var:
    shape = a.value.shape

    def bwd(g):
        return (np.broadcast_to(g, shape),)

    return record("sum_all", (a,), tk.sum_axis(a.value), bwd)


def sum_axis(a: Var, axis: int, keepdims: bool = False) -> Var:
    value = tk.sum_axis(a.value, axis, keepdims=keepdims)
    shape = a.value.shape
    ax = axis % a.value.ndim

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, shape),)

    return record("sum_axis", (a,), value, bwd)


def exp(a: Var) -> Var:
    value = tk.exp(a.value)

    def bwd(g):
        return (g * value,)

    return record("exp", (a,), value, bwd)


def relu(a: Var) -> Var:
    mask = a.value > 0

    def bwd(g):
        return (g * mask,)

    return record("relu", (a,), tk.relu(a.value), bwd)


def _sigmoid_raw(x: np.ndarray) -> np.ndarray:
    # Piecewise form never exponentiates a large positive argument.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Var) -> Var:
    value = _sigmoid_raw(a.value)

    def bwd(g):
        return (g * value * (1.0 - value),)

    return record("sigmoid", (a,), value, bwd)


def tanh(a: Var) -> Var:
    value = np.tanh(a.value)

    def bwd(g):
        return (g * (1.0 - value * value),)

    return record("tanh", (a,), value, bwd)


def softmax_rows(a: Var) -> Var:
    """Softmax over the last axis with the exact full-Jacobian backward."""
    value = tk.softmax_rows(a.value)

    def bwd(g):
        inner = (g * value).sum(axis=-1, keepdims=True)
        return (value * (g - inner),)

    return record("softmax_rows", (a,), value, bwd)


def conv2d(x: Var, kernels: Var, bias: Var, padding: str = "same") -> Var:
    """2-D cross-correlation of a (C,H,W) input with (O,C,kh,kw) kernels.

    ``same`` padding requires odd kernel sides so output centers align with
    input cells; ``valid`` shrinks the grid.  Implemented by im2col so both
    directions are a single matrix product.
    """
    xv, kv, bv = x.value, kernels.value, bias.value
    if xv.ndim != 3 or kv.ndim != 4:
        raise ShapeError(f"conv2d expects (C,H,W) and (O,C,kh,kw), got {xv.shape}, {kv.shape}")
    out_ch, in_ch, kh, kw = kv.shape
    if xv.shape[0] != in_ch:
        raise ShapeError(f"input has {xv.shape[0]} channels, kernels expect {in_ch}")
    if bv.shape != (out_ch,):
        raise ShapeError(f"bias shape {bv.shape} != ({out_ch},)")
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("same padding requires odd kernel sides")
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        ph = pw = 0
    else:
        raise ShapeError(f"unknown padding {padding!r}")
    _, h, w = xv.shape
    oh, ow = h + 2 * ph - kh + 1, w + 2 * pw - kw + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"kernel ({kh},{kw}) larger than padded input ({h},{w})")

    if ph or pw:
        xp = np.zeros((in_ch, h + 2 * ph, w + 2 * pw))
        xp[:, ph : ph + h, pw : pw + w] = xv
    else:
        xp = xv
    # (C, oh, ow, kh, kw) -> (oh*ow, C*kh*kw)
    patches = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    cols = patches.transpose(1, 2, 0, 3, 4).reshape(oh * ow, in_ch * kh * kw)
    kmat = kv.reshape(out_ch, in_ch * kh * kw)
    value = (cols @ kmat.T).reshape(oh, ow, out_ch).transpose(2, 0, 1) + bv[:, None, None]

    def bwd(g):
        gmat = g.transpose(1, 2, 0).reshape(oh * ow, out_ch)
        dk = (gmat.T @ cols).reshape(kv.shape)
        db = g.sum(axis=(1, 2))
        dcols = (gmat @ kmat).reshape(oh, ow, in_ch, kh, kw)
        dxp = np.zeros((in_ch, h + 2 * ph, w + 2 * pw))
        for a in range(kh):
            for b in range(kw):
                dxp[:, a : a + oh, b : b + ow] += dcols[:, :, :, a, b].transpose(2, 0, 1)
        dx = dxp[:, ph : ph + h, pw : pw + w] if (ph or pw) else dxp
        return dx, dk, db

    return record("conv2d", (x, kernels, bias), value, bwd)
