"""A small reverse-mode tape over dense numpy arrays.

Operations accept plain arrays, python scalars or :class:`Var` handles.  If no
operand is a ``Var`` the operation is evaluated eagerly with numpy and nothing
is recorded, so the same model code runs taped (training) and untaped
(evaluation, finite differences) with identical floating-point results.
"""
from __future__ import annotations

from typing import Callable, Hashable

import numpy as np

from ..exceptions import EmptyTape, NonScalarOutput


class Var:
    """Handle to a value recorded on a :class:`Tape`."""

    __slots__ = ("tape", "idx", "value")
    __array_priority__ = 1000.0
    __array_ufunc__ = None

    def __init__(self, tape: "Tape", idx: int, value: np.ndarray):
        self.tape = tape
        self.idx = idx
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(idx={self.idx}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("division by a taped value is not supported")
        return mul(self, 1.0 / np.asarray(other, dtype=self.value.dtype))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def __pow__(self, p):
        if p != 2:
            raise ValueError("only squaring is supported")
        return square(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


class Tape:
    """Wengert list: a value buffer plus, per node, its parents and local VJPs."""

    def __init__(self):
        self.values: list[np.ndarray] = []
        self.parents: list[tuple[int, ...]] = []
        self.vjps: list[tuple[Callable, ...]] = []
        self.param_index: dict[Hashable, int] = {}

    def __len__(self):
        return len(self.values)

    def _push(self, value, parents=(), vjps=()) -> Var:
        self.values.append(value)
        self.parents.append(parents)
        self.vjps.append(vjps)
        return Var(self, len(self.values) - 1, value)

    def leaf(self, value) -> Var:
        return self._push(np.asarray(value))

    def param(self, key: Hashable, value) -> Var:
        """Leaf for a named parameter array; repeated requests share one node."""
        idx = self.param_index.get(key)
        if idx is not None:
            return Var(self, idx, self.values[idx])
        var = self.leaf(value)
        self.param_index[key] = var.idx
        return var

    def record(self, value, inputs, vjps) -> Var:
        return self._push(value, tuple(v.idx for v in inputs), tuple(vjps))

    def backward(self, seed: Var, wrt=None) -> dict:
        """Reverse sweep from the scalar ``seed``.

        Returns ``{key: gradient}`` for every named parameter on the tape
        (zeros for parameters the seed does not depend on).  ``wrt`` may list
        extra ``Var`` leaves whose gradients are returned under their ``Var``.
        """
        if not self.values:
            raise EmptyTape("nothing has been recorded")
        if seed.tape is not self:
            raise ValueError("seed belongs to another tape")
        if seed.value.size != 1:
            raise NonScalarOutput(f"seed must be scalar, has shape {seed.value.shape}")
        grads: list = [None] * (seed.idx + 1)
        grads[seed.idx] = np.ones_like(seed.value)
        for i in range(seed.idx, -1, -1):
            g = grads[i]
            if g is None:
                continue
            for p, vjp in zip(self.parents[i], self.vjps[i]):
                contrib = vjp(g)
                if contrib is None:
                    continue
                grads[p] = contrib if grads[p] is None else grads[p] + contrib
        out = {}
        for key, idx in self.param_index.items():
            g = grads[idx] if idx < len(grads) else None
            out[key] = np.zeros_like(self.values[idx]) if g is None else g
        for v in wrt or ():
            g = grads[v.idx] if v.idx < len(grads) else None
            out[v] = np.zeros_like(v.value) if g is None else g
        return out


def backward(tape: Tape, seed: Var, wrt=None) -> dict:
    return tape.backward(seed, wrt)


def value(x):
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ValueError("operands recorded on different tapes")
    return tape


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    tape = _tape_of(a, b)
    out = value(a) + value(b)
    if tape is None:
        return out
    ins, fns = [], []
    for x in (a, b):
        if isinstance(x, Var):
            shape = x.value.shape
            ins.append(x)
            fns.append(lambda g, shape=shape: _unbroadcast(g, shape))
    return tape.record(out, ins, fns)


def neg(a):
    if not isinstance(a, Var):
        return -a
    return a.tape.record(-a.value, [a], [lambda g: -g])


def sub(a, b):
    return add(a, neg(b))


def mul(a, b):
    tape = _tape_of(a, b)
    av, bv = value(a), value(b)
    out = av * bv
    if tape is None:
        return out
    ins, fns = [], []
    if isinstance(a, Var):
        ins.append(a)
        fns.append(lambda g: _unbroadcast(g * bv, av.shape))
    if isinstance(b, Var):
        ins.append(b)
        fns.append(lambda g: _unbroadcast(g * av, np.shape(bv)))
    return tape.record(out, ins, fns)


def square(a):
    if not isinstance(a, Var):
        return a * a
    av = a.value
    return a.tape.record(av * av, [a], [lambda g: 2.0 * av * g])


def _mm(a, b):
    # folding leading axes into one gemm is markedly faster than batched matmul
    if a.ndim <= 2:
        return a @ b
    return (a.reshape(-1, a.shape[-1]) @ b).reshape(a.shape[:-1] + (b.shape[-1],))


def matmul(a, b):
    """``a @ b`` where ``b`` is 2-D and ``a`` has any number of leading axes."""
    tape = _tape_of(a, b)
    av, bv = value(a), value(b)
    if np.ndim(bv) != 2:
        if tape is not None:
            raise ValueError("taped matmul requires a 2-D right operand")
        return av @ bv
    av = np.asarray(av)
    out = _mm(av, bv)
    if tape is None:
        return out
    ins, fns = [], []
    if isinstance(a, Var):
        ins.append(a)
        fns.append(lambda g: _mm(g, bv.T))
    if isinstance(b, Var):
        ins.append(b)

        def _vjp_b(g):
            a2 = np.broadcast_to(av, g.shape[:-1] + (av.shape[-1],))
            return a2.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])

        fns.append(_vjp_b)
    return tape.record(out, ins, fns)


def tanh(a):
    out = np.tanh(value(a))
    if not isinstance(a, Var):
        return out
    return a.tape.record(out, [a], [lambda g: g * (1.0 - out * out)])


def exp(a):
    out = np.exp(value(a))
    if not isinstance(a, Var):
        return out
    return a.tape.record(out, [a], [lambda g: g * out])


def log(a):
    av = value(a)
    out = np.log(av)
    if not isinstance(a, Var):
        return out
    return a.tape.record(out, [a], [lambda g: g / av])


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    av = value(a)
    out = np.sum(av, axis=axis, keepdims=keepdims)
    if not isinstance(a, Var):
        return out
    shape = av.shape

    def _vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return a.tape.record(np.asarray(out), [a], [_vjp])


def mean(a, axis=None, keepdims=False):
    av = value(a)
    n = av.size if axis is None else np.prod([av.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    av = value(a)
    out = np.reshape(av, shape)
    if not isinstance(a, Var):
        return out
    old = av.shape
    return a.tape.record(out, [a], [lambda g: np.reshape(g, old)])


def getitem(a, index):
    av = value(a)
    out = av[index]
    if not isinstance(a, Var):
        return out

    def _vjp(g):
        full = np.zeros_like(av)
        np.add.at(full, index, g)
        return full

    return a.tape.record(np.asarray(out), [a], [_vjp])


def take_rows(a, rows):
    """``a[rows]`` for an integer index array (gather along axis 0)."""
    return getitem(a, np.asarray(rows, dtype=np.intp))


def concat(parts, axis=-1):
    parts = [p for p in parts]
    tape = _tape_of(*parts)
    vals = [value(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    if tape is None:
        return out
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    ins, fns = [], []
    for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
        if isinstance(p, Var):
            ins.append(p)

            def _vjp(g, lo=lo, hi=hi):
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                return g[tuple(idx)]

            fns.append(_vjp)
    return tape.record(out, ins, fns)


def norm(a, axis=-1):
    """Euclidean norm along ``axis``; the subgradient at zero is taken as 0."""
    av = value(a)
    out = np.sqrt(np.sum(av * av, axis=axis))
    if not isinstance(a, Var):
        return out

    def _vjp(g):
        safe = np.where(out > 0, out, 1.0)
        scale = np.where(out > 0, g / safe, 0.0)
        return np.expand_dims(scale, axis) * av

    return a.tape.record(out, [a], [_vjp])
