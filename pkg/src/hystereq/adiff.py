"""Scalar reverse-mode automatic differentiation on an explicit tape.

Expressions are built eagerly through ``Var`` arithmetic; every
operation appends one node to the owning :class:`Tape`. Gradients come
from a single reverse sweep over the recorded nodes.

The tape is replayable: leaf values may be overwritten in place (via
:meth:`Tape.set_value` or bulk writes into :attr:`Tape.values`) and
:meth:`Tape.forward` recomputes every dependent node without re-tracing.
The optimizer loop in :mod:`hystereq.learner` leans on this, so the
sweeps run through a compiled backend when available (see
``hystereq._core``).

Derivative conventions at kinks: ``abs`` uses subgradient 0 at the
origin, ``sign`` has derivative 0 everywhere, and ``d/dn x**n`` clamps
the base inside the logarithm at 1e-12.
"""

from __future__ import annotations

import math

import numpy as np

from ._core import BACKEND, backward_sweep, forward_sweep, ops
from ._core._tapepy import _pow

__all__ = [
    "BACKEND",
    "DomainError",
    "Tape",
    "Var",
    "exp",
    "log",
    "pow_const",
    "power",
    "sign",
    "tanh",
]


class DomainError(ArithmeticError):
    """Raised when an operation is recorded outside its domain."""

    def __init__(self, op_name, operand):
        self.op_name = op_name
        self.operand = operand
        super().__init__(f"{op_name} undefined for operand {operand!r}")


class Var:
    """Handle to one tape node. Cheap, immutable, freely copyable."""

    __slots__ = ("tape", "i")

    def __init__(self, tape, i):
        self.tape = tape
        self.i = i

    @property
    def value(self):
        return float(self.tape.values[self.i])

    def __repr__(self):
        return f"Var(i={self.i}, value={self.value!r})"

    def __add__(self, other):
        t = self.tape
        if isinstance(other, Var):
            return t._emit(ops.ADD, self.i, other.i, 0.0)
        return t._emit(ops.ADDC, self.i, -1, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        t = self.tape
        if isinstance(other, Var):
            return t._emit(ops.SUB, self.i, other.i, 0.0)
        return t._emit(ops.ADDC, self.i, -1, -float(other))

    def __rsub__(self, other):
        neg = self.tape._emit(ops.NEG, self.i, -1, 0.0)
        return self.tape._emit(ops.ADDC, neg.i, -1, float(other))

    def __mul__(self, other):
        t = self.tape
        if isinstance(other, Var):
            return t._emit(ops.MUL, self.i, other.i, 0.0)
        return t._emit(ops.MULC, self.i, -1, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        t = self.tape
        if isinstance(other, Var):
            if other.value == 0.0:
                raise DomainError("div", 0.0)
            return t._emit(ops.DIV, self.i, other.i, 0.0)
        return t._emit(ops.MULC, self.i, -1, 1.0 / float(other))

    def __rtruediv__(self, other):
        inv = pow_const(self, -1.0)
        return self.tape._emit(ops.MULC, inv.i, -1, float(other))

    def __neg__(self):
        return self.tape._emit(ops.NEG, self.i, -1, 0.0)

    def __abs__(self):
        return self.tape._emit(ops.ABS, self.i, -1, 0.0)

    def __pow__(self, other):
        if isinstance(other, Var):
            return power(self, other)
        return pow_const(self, float(other))


class Tape:
    """Growable record of scalar operations with replayable storage."""

    _INITIAL = 256

    def __init__(self):
        n = self._INITIAL
        self._op = np.zeros(n, dtype=np.int8)
        self._a = np.full(n, -1, dtype=np.int32)
        self._b = np.full(n, -1, dtype=np.int32)
        self._aux = np.zeros(n, dtype=np.float64)
        self._val = np.zeros(n, dtype=np.float64)
        self._extra = np.zeros(0, dtype=np.int32)
        self._extra_list = []
        self._adj = None
        self.n = 0
        self._first_nonleaf = None
        self.leaf_indices = []

    # -- recording ----------------------------------------------------

    def _grow(self):
        n = len(self._op)
        for name in ("_op", "_a", "_b", "_aux", "_val"):
            arr = getattr(self, name)
            bigger = np.empty(2 * n, dtype=arr.dtype)
            bigger[:n] = arr
            setattr(self, name, bigger)

    def _emit(self, code, a, b, aux):
        i = self.n
        if i == len(self._op):
            self._grow()
        self._op[i] = code
        self._a[i] = a
        self._b[i] = b
        self._aux[i] = aux
        self._val[i] = self._eager(code, a, b, aux)
        self.n = i + 1
        if code != ops.LEAF and self._first_nonleaf is None:
            self._first_nonleaf = i
        return Var(self, i)

    def _eager(self, code, a, b, aux):
        v = self._val
        if code == ops.LEAF:
            return aux
        x = float(v[a])
        if code == ops.ADD:
            return x + float(v[b])
        if code == ops.SUB:
            return x - float(v[b])
        if code == ops.MUL:
            return x * float(v[b])
        if code == ops.DIV:
            return x / float(v[b])
        if code == ops.NEG:
            return -x
        if code == ops.ABS:
            return abs(x)
        if code == ops.SIGN:
            return 0.0 if x == 0.0 else math.copysign(1.0, x)
        if code == ops.POWC or code == ops.POWV:
            p = aux if code == ops.POWC else float(v[b])
            r, ok = _pow(x, p)
            if not ok:
                raise DomainError("pow", x)
            return r
        if code == ops.TANH:
            return math.tanh(x)
        if code == ops.EXP:
            return math.exp(x) if x <= 709.7827128933839 else math.inf
        if code == ops.LOG:
            if x <= 0.0:
                raise DomainError("log", x)
            return math.log(x)
        if code == ops.ADDC:
            return x + aux
        if code == ops.MULC:
            return x * aux
        raise ValueError(f"unknown opcode {code}")

    def lift(self, value):
        """Create a leaf variable holding ``value``."""
        var = self._emit(ops.LEAF, -1, -1, float(value))
        self.leaf_indices.append(var.i)
        return var

    def dot(self, weights, inputs, bias):
        """Fused ``bias + sum(w * x)`` over parallel Var sequences."""
        if len(weights) != len(inputs):
            raise ValueError("weights and inputs must have equal length")
        n = len(weights)
        off = len(self._extra_list)
        self._extra_list.extend(w.i for w in weights)
        self._extra_list.extend(x.i for x in inputs)
        self._extra_list.append(bias.i)
        self._extra = None  # invalidated, rebuilt lazily
        i = self.n
        if i == len(self._op):
            self._grow()
        v = self._val
        s = float(v[bias.i])
        for w, x in zip(weights, inputs):
            s += float(v[w.i]) * float(v[x.i])
        self._op[i] = ops.DOT
        self._a[i] = off
        self._b[i] = n
        self._aux[i] = 0.0
        self._val[i] = s
        self.n = i + 1
        if self._first_nonleaf is None:
            self._first_nonleaf = i
        return Var(self, i)

    # -- replay -------------------------------------------------------

    @property
    def values(self):
        """Raw value storage; leaf slots may be overwritten before replay."""
        return self._val[: self.n]

    @property
    def n_nodes(self):
        return self.n

    def set_value(self, var, value):
        if self._op[var.i] != ops.LEAF:
            raise ValueError("only leaf values may be set")
        self._val[var.i] = value

    def _extras(self):
        if self._extra is None:
            self._extra = np.asarray(self._extra_list, dtype=np.int32)
        return self._extra

    def forward(self, start=None):
        """Recompute all non-leaf values. Returns the index of the first
        domain violation, or -1 when the sweep is clean."""
        if start is None:
            start = self._first_nonleaf
            if start is None:
                return -1
        n = self.n
        return int(
            forward_sweep(
                self._op[:n], self._a[:n], self._b[:n], self._aux[:n],
                self._extras(), self._val[:n], start,
            )
        )

    def backward(self, loss, seed=1.0):
        """One reverse sweep from ``loss``. Returns the adjoint buffer,
        valid until the next backward call; adjoint[v.i] is d loss/d v."""
        root = loss.i if isinstance(loss, Var) else int(loss)
        if self._adj is None or len(self._adj) < self.n:
            self._adj = np.zeros(len(self._op), dtype=np.float64)
        n = self.n
        backward_sweep(
            self._op[:n], self._a[:n], self._b[:n], self._aux[:n],
            self._extras(), self._val[:n], self._adj[:n], root, seed,
        )
        return self._adj[:n]

    def grad(self, loss, wrt):
        """Convenience: gradients of ``loss`` for a sequence of Vars."""
        adj = self.backward(loss)
        return [float(adj[v.i]) for v in wrt]

    def local_partials(self, var):
        """Partials of one node w.r.t. its direct operands, at current
        values. Returns a list of (operand_index, partial)."""
        i = var.i if isinstance(var, Var) else int(var)
        code = int(self._op[i])
        if code == ops.LEAF:
            return []
        probe = np.zeros(i + 1, dtype=np.float64)
        backward_sweep(
            self._op[: i + 1], self._a[: i + 1], self._b[: i + 1],
            self._aux[: i + 1], self._extras(), self._val[: i + 1],
            probe, i, 1.0,
        )
        if code == ops.DOT:
            off, n = int(self._a[i]), int(self._b[i])
            operands = list(self._extras()[off : off + 2 * n + 1])
        else:
            operands = [int(self._a[i])]
            if int(self._b[i]) >= 0:
                operands.append(int(self._b[i]))
        # probe holds full chain adjoints, but over a single-node span the
        # chain is exactly the local partial
        out = []
        seen = set()
        for j in operands:
            j = int(j)
            if j in seen:
                continue
            seen.add(j)
            out.append((j, float(probe[j])))
        return out


def sign(x: Var) -> Var:
    """Sign of x (0 at the origin); derivative is 0 everywhere."""
    return x.tape._emit(ops.SIGN, x.i, -1, 0.0)


def tanh(x: Var) -> Var:
    return x.tape._emit(ops.TANH, x.i, -1, 0.0)


def exp(x: Var) -> Var:
    return x.tape._emit(ops.EXP, x.i, -1, 0.0)


def log(x: Var) -> Var:
    if x.value <= 0.0:
        raise DomainError("log", x.value)
    return x.tape._emit(ops.LOG, x.i, -1, 0.0)


def pow_const(x: Var, p: float) -> Var:
    """x**p for a fixed exponent. Non-integer p needs a nonnegative base."""
    p = float(p)
    xv = x.value
    if xv < 0.0 and p != math.floor(p):
        raise DomainError("pow_const", xv)
    if xv == 0.0 and p < 0.0:
        raise DomainError("pow_const", xv)
    return x.tape._emit(ops.POWC, x.i, -1, p)


def power(x: Var, n) -> Var:
    """x**n with a differentiable exponent; d/dn uses log(max(x, 1e-12))."""
    if not isinstance(n, Var):
        return pow_const(x, n)
    xv = x.value
    nv = n.value
    if xv < 0.0 and nv != math.floor(nv):
        raise DomainError("pow", xv)
    if xv == 0.0 and nv < 0.0:
        raise DomainError("pow", xv)
    return x.tape._emit(ops.POWV, x.i, n.i, 0.0)
