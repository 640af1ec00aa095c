"""Pure-Python tape interpreter.

Reference implementation of the forward/backward sweeps; the Cython
module _tapecore implements the same contract. Semantics that both
backends must share:

* a domain violation (negative base with fractional exponent, log of a
  non-positive value, division by zero, zero to a negative power) stores
  NaN at the offending node and the sweep keeps going; the index of the
  first violation is returned (-1 when clean),
* abs uses the subgradient 0 at the origin, sign has derivative 0,
* overflow saturates to +/-inf instead of raising.
"""

import math

from . import ops

_HUGE = math.inf


def _pow(x, p):
    """pow with C-style edge cases. Returns (value, ok)."""
    if x == 0.0:
        if p < 0.0:
            return _HUGE, False
        if p == 0.0:
            return 1.0, True
        return 0.0, True
    if x < 0.0 and p != math.floor(p):
        return math.nan, False
    try:
        return x ** p, True
    except OverflowError:
        neg = x < 0.0 and math.fmod(p, 2.0) == 1.0
        return -_HUGE if neg else _HUGE, True


def _pow_grad(x, p):
    """d/dx of x**p with the same guards as _pow (0 taken at x == 0, p < 1)."""
    if x == 0.0:
        return 1.0 if p == 1.0 else 0.0
    v, ok = _pow(x, p - 1.0)
    if not ok:
        return 0.0
    try:
        return p * v
    except OverflowError:
        return _HUGE


def forward_sweep(op, a, b, aux, extra, val, start=0):
    """Recompute val[start:] in place; return first violating index or -1."""
    bad = -1
    for i in range(start, len(op)):
        code = op[i]
        if code == ops.LEAF:
            continue
        x = val[a[i]]
        if code == ops.ADD:
            val[i] = x + val[b[i]]
        elif code == ops.SUB:
            val[i] = x - val[b[i]]
        elif code == ops.MUL:
            val[i] = x * val[b[i]]
        elif code == ops.DIV:
            y = val[b[i]]
            if y == 0.0:
                val[i] = math.nan
                if bad < 0:
                    bad = i
            else:
                val[i] = x / y
        elif code == ops.NEG:
            val[i] = -x
        elif code == ops.ABS:
            val[i] = abs(x)
        elif code == ops.SIGN:
            val[i] = 0.0 if x == 0.0 else math.copysign(1.0, x)
        elif code == ops.POWC:
            v, ok = _pow(x, aux[i])
            val[i] = v
            if not ok:
                val[i] = math.nan
                if bad < 0:
                    bad = i
        elif code == ops.TANH:
            val[i] = math.tanh(x)
        elif code == ops.EXP:
            # 709.78... = ln(DBL_MAX); branch shared with the C backend
            val[i] = math.exp(x) if x <= 709.7827128933839 else _HUGE
        elif code == ops.LOG:
            if x <= 0.0:
                val[i] = math.nan
                if bad < 0:
                    bad = i
            else:
                val[i] = math.log(x)
        elif code == ops.POWV:
            v, ok = _pow(x, val[b[i]])
            val[i] = v
            if not ok:
                val[i] = math.nan
                if bad < 0:
                    bad = i
        elif code == ops.ADDC:
            val[i] = x + aux[i]
        elif code == ops.MULC:
            val[i] = x * aux[i]
        elif code == ops.DOT:
            off = a[i]
            n = b[i]
            s = val[extra[off + 2 * n]]
            for j in range(n):
                s += val[extra[off + j]] * val[extra[off + n + j]]
            val[i] = s
        else:
            raise ValueError(f"unknown opcode {code}")
    return bad


def backward_sweep(op, a, b, aux, extra, val, adj, root, seed=1.0):
    """Reverse sweep from root; adj is zeroed and adj[root] seeded here."""
    for i in range(root + 1):
        adj[i] = 0.0
    adj[root] = seed
    for i in range(root, -1, -1):
        g = adj[i]
        if g == 0.0:
            continue
        code = op[i]
        if code == ops.LEAF:
            continue
        ai = a[i]
        if code == ops.ADD:
            adj[ai] += g
            adj[b[i]] += g
        elif code == ops.SUB:
            adj[ai] += g
            adj[b[i]] -= g
        elif code == ops.MUL:
            adj[ai] += g * val[b[i]]
            adj[b[i]] += g * val[ai]
        elif code == ops.DIV:
            y = val[b[i]]
            adj[ai] += g / y
            adj[b[i]] -= g * val[i] / y
        elif code == ops.NEG:
            adj[ai] -= g
        elif code == ops.ABS:
            x = val[ai]
            if x != 0.0:
                adj[ai] += g if x > 0.0 else -g
        elif code == ops.SIGN:
            pass
        elif code == ops.POWC:
            adj[ai] += g * _pow_grad(val[ai], aux[i])
        elif code == ops.TANH:
            adj[ai] += g * (1.0 - val[i] * val[i])
        elif code == ops.EXP:
            adj[ai] += g * val[i]
        elif code == ops.LOG:
            adj[ai] += g / val[ai]
        elif code == ops.POWV:
            x = val[ai]
            e = val[b[i]]
            adj[ai] += g * _pow_grad(x, e)
            adj[b[i]] += g * val[i] * math.log(x if x > 1e-12 else 1e-12)
        elif code == ops.ADDC:
            adj[ai] += g
        elif code == ops.MULC:
            adj[ai] += g * aux[i]
        elif code == ops.DOT:
            off = ai
            n = b[i]
            adj[extra[off + 2 * n]] += g
            for j in range(n):
                w = extra[off + j]
                x = extra[off + n + j]
                adj[w] += g * val[x]
                adj[x] += g * val[w]
