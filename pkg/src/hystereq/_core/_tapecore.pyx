# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tape interpreter. Mirrors _tapepy exactly; see its module
docstring for the shared semantics and _core/ops.py for the opcode table."""

from libc.math cimport copysign, exp, fabs, floor, fmod, log, pow, tanh

cdef double NAN = float("nan")
cdef double HUGE = float("inf")
cdef double EXP_MAX = 709.7827128933839  # ln(DBL_MAX)

cdef enum:
    LEAF = 0
    ADD = 1
    SUB = 2
    MUL = 3
    DIV = 4
    NEG = 5
    ABS = 6
    SIGN = 7
    POWC = 8
    TANH = 9
    EXP = 10
    LOG = 11
    POWV = 12
    ADDC = 13
    MULC = 14
    DOT = 15


cdef inline double c_pow(double x, double p, int* ok) nogil:
    if x == 0.0:
        if p < 0.0:
            ok[0] = 0
            return HUGE
        if p == 0.0:
            return 1.0
        return 0.0
    if x < 0.0 and p != floor(p):
        ok[0] = 0
        return NAN
    return pow(x, p)


cdef inline double c_pow_grad(double x, double p) nogil:
    cdef int ok = 1
    cdef double v
    if x == 0.0:
        return 1.0 if p == 1.0 else 0.0
    v = c_pow(x, p - 1.0, &ok)
    if not ok:
        return 0.0
    return p * v


def forward_sweep(const signed char[::1] op, const int[::1] a, const int[::1] b,
                  const double[::1] aux, const int[::1] extra, double[::1] val,
                  Py_ssize_t start=0):
    cdef Py_ssize_t i, j, off, n
    cdef Py_ssize_t bad = -1
    cdef signed char code
    cdef double x, y, s
    cdef int ok
    with nogil:
        for i in range(start, op.shape[0]):
            code = op[i]
            if code == LEAF:
                continue
            x = val[a[i]]
            if code == ADD:
                val[i] = x + val[b[i]]
            elif code == SUB:
                val[i] = x - val[b[i]]
            elif code == MUL:
                val[i] = x * val[b[i]]
            elif code == DIV:
                y = val[b[i]]
                if y == 0.0:
                    val[i] = NAN
                    if bad < 0:
                        bad = i
                else:
                    val[i] = x / y
            elif code == NEG:
                val[i] = -x
            elif code == ABS:
                val[i] = fabs(x)
            elif code == SIGN:
                val[i] = 0.0 if x == 0.0 else copysign(1.0, x)
            elif code == POWC:
                ok = 1
                val[i] = c_pow(x, aux[i], &ok)
                if not ok:
                    val[i] = NAN
                    if bad < 0:
                        bad = i
            elif code == TANH:
                val[i] = tanh(x)
            elif code == EXP:
                val[i] = exp(x) if x <= EXP_MAX else HUGE
            elif code == LOG:
                if x <= 0.0:
                    val[i] = NAN
                    if bad < 0:
                        bad = i
                else:
                    val[i] = log(x)
            elif code == POWV:
                ok = 1
                val[i] = c_pow(x, val[b[i]], &ok)
                if not ok:
                    val[i] = NAN
                    if bad < 0:
                        bad = i
            elif code == ADDC:
                val[i] = x + aux[i]
            elif code == MULC:
                val[i] = x * aux[i]
            elif code == DOT:
                off = a[i]
                n = b[i]
                s = val[extra[off + 2 * n]]
                for j in range(n):
                    s += val[extra[off + j]] * val[extra[off + n + j]]
                val[i] = s
    return bad


def backward_sweep(const signed char[::1] op, const int[::1] a, const int[::1] b,
                   const double[::1] aux, const int[::1] extra,
                   const double[::1] val, double[::1] adj, Py_ssize_t root,
                   double seed=1.0):
    cdef Py_ssize_t i, j, off, n, ai, w, xn
    cdef signed char code
    cdef double g, x, y, e
    with nogil:
        for i in range(root + 1):
            adj[i] = 0.0
        adj[root] = seed
        for i in range(root, -1, -1):
            g = adj[i]
            if g == 0.0:
                continue
            code = op[i]
            if code == LEAF:
                continue
            ai = a[i]
            if code == ADD:
                adj[ai] += g
                adj[b[i]] += g
            elif code == SUB:
                adj[ai] += g
                adj[b[i]] -= g
            elif code == MUL:
                adj[ai] += g * val[b[i]]
                adj[b[i]] += g * val[ai]
            elif code == DIV:
                y = val[b[i]]
                adj[ai] += g / y
                adj[b[i]] -= g * val[i] / y
            elif code == NEG:
                adj[ai] -= g
            elif code == ABS:
                x = val[ai]
                if x != 0.0:
                    adj[ai] += g if x > 0.0 else -g
            elif code == SIGN:
                pass
            elif code == POWC:
                adj[ai] += g * c_pow_grad(val[ai], aux[i])
            elif code == TANH:
                adj[ai] += g * (1.0 - val[i] * val[i])
            elif code == EXP:
                adj[ai] += g * val[i]
            elif code == LOG:
                adj[ai] += g / val[ai]
            elif code == POWV:
                x = val[ai]
                e = val[b[i]]
                adj[ai] += g * c_pow_grad(x, e)
                adj[b[i]] += g * val[i] * log(x if x > 1e-12 else 1e-12)
            elif code == ADDC:
                adj[ai] += g
            elif code == MULC:
                adj[ai] += g * aux[i]
            elif code == DOT:
                off = ai
                n = b[i]
                adj[extra[off + 2 * n]] += g
                for j in range(n):
                    w = extra[off + j]
                    xn = extra[off + n + j]
                    adj[w] += g * val[xn]
                    adj[xn] += g * val[w]
