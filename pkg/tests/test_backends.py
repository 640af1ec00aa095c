"""Bit-level agreement between the two tape interpreters.

The compiled extension and the pure-Python fallback must be
interchangeable; every opcode is exercised on one shared tape and the
sweep outputs compared exactly.
"""

import os

import numpy as np
import pytest

from hystereq import adiff
from hystereq._core import BACKEND
from hystereq.adiff import Tape

_tapepy = pytest.importorskip("hystereq._core._tapepy")
_tapecore = pytest.importorskip("hystereq._core._tapecore")


def every_opcode_tape():
    """One tape touching all opcodes, with a scalar loss at the end."""
    t = Tape()
    a, b, c = t.lift(0.7), t.lift(-1.3), t.lift(2.1)
    s = a + b
    d = a - c
    m = s * d
    q = a / (c * c + 1.0)
    n = -m
    ab = abs(d)
    sg = adiff.sign(s)
    pc = adiff.pow_const(ab + 1.0, 1.7)
    th = adiff.tanh(m)
    ex = adiff.exp(th)
    lg = adiff.log(ab + 2.0)
    pv = adiff.power(ab + 0.5, th + 2.0)
    ac = s + 2.5
    mc = d * -1.25
    dt = t.dot([a, b, c], [n, ex, lg], ac)
    loss = q + sg + pc + pv + mc + dt + m
    return t, (a, b, c), loss


def sweep_args(t):
    n = t.n
    return (t._op[:n], t._a[:n], t._b[:n], t._aux[:n], t._extras())


def test_extension_preferred_when_present():
    if os.environ.get("HYSTEREQ_BACKEND", "").strip().lower() == "python":
        assert BACKEND == "python"
    else:
        assert BACKEND == "compiled"


def test_forward_sweeps_agree_bitwise():
    t, (a, b, c), _ = every_opcode_tape()
    op, ia, ib, aux, extra = sweep_args(t)
    rng = np.random.default_rng(3)
    for _ in range(20):
        for leaf, v in zip((a, b, c), rng.uniform(-2.0, 2.0, 3)):
            t.set_value(leaf, v)
        base = t._val[: t.n].copy()
        vp, vc = base.copy(), base.copy()
        rp = _tapepy.forward_sweep(op, ia, ib, aux, extra, vp, 0)
        rc = _tapecore.forward_sweep(op, ia, ib, aux, extra, vc, 0)
        assert rp == rc
        assert vp.tobytes() == vc.tobytes()


def test_backward_sweeps_agree_bitwise():
    t, (a, b, c), loss = every_opcode_tape()
    op, ia, ib, aux, extra = sweep_args(t)
    rng = np.random.default_rng(4)
    for _ in range(20):
        for leaf, v in zip((a, b, c), rng.uniform(-2.0, 2.0, 3)):
            t.set_value(leaf, v)
        t.forward()
        val = t._val[: t.n]
        ap = np.zeros(t.n)
        ac = np.zeros(t.n)
        _tapepy.backward_sweep(op, ia, ib, aux, extra, val, ap, loss.i, 1.0)
        _tapecore.backward_sweep(op, ia, ib, aux, extra, val, ac, loss.i, 1.0)
        assert ap.tobytes() == ac.tobytes()


def test_same_violation_index_and_nan_fill():
    t = Tape()
    a = t.lift(1.0)
    shifted = a + 2.0
    lg = adiff.log(shifted)
    tail = lg * 3.0
    t.set_value(a, -5.0)
    op, ia, ib, aux, extra = sweep_args(t)
    base = t._val[: t.n].copy()
    vp, vc = base.copy(), base.copy()
    rp = _tapepy.forward_sweep(op, ia, ib, aux, extra, vp, 0)
    rc = _tapecore.forward_sweep(op, ia, ib, aux, extra, vc, 0)
    assert rp == rc == lg.i
    assert np.isnan(vp[lg.i]) and np.isnan(vp[tail.i])
    assert np.array_equal(vp, vc, equal_nan=True)


def test_exp_saturation_branch_shared():
    t = Tape()
    a = t.lift(800.0)
    adiff.exp(a)
    op, ia, ib, aux, extra = sweep_args(t)
    base = t._val[: t.n].copy()
    vp, vc = base.copy(), base.copy()
    assert _tapepy.forward_sweep(op, ia, ib, aux, extra, vp, 0) == -1
    assert _tapecore.forward_sweep(op, ia, ib, aux, extra, vc, 0) == -1
    assert vp.tobytes() == vc.tobytes()


def test_gradients_identical_through_tape_api():
    """The public grad path gives the same numbers whichever backend ran."""
    t, leaves, loss = every_opcode_tape()
    t.forward()
    op, ia, ib, aux, extra = sweep_args(t)
    val = t._val[: t.n]
    ap = np.zeros(t.n)
    _tapepy.backward_sweep(op, ia, ib, aux, extra, val, ap, loss.i, 1.0)
    gref = [ap[v.i] for v in leaves]
    assert t.grad(loss, list(leaves)) == gref
