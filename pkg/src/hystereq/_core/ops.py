"""Opcode table shared by the tape interpreters.

Kept in sync by hand with the cdef enum in _tapecore.pyx; the backend
parity tests guard against drift.
"""

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

NAMES = {
    LEAF: "leaf",
    ADD: "add",
    SUB: "sub",
    MUL: "mul",
    DIV: "div",
    NEG: "neg",
    ABS: "abs",
    SIGN: "sign",
    POWC: "pow_const",
    TANH: "tanh",
    EXP: "exp",
    LOG: "log",
    POWV: "pow",
    ADDC: "add_const",
    MULC: "mul_const",
    DOT: "dot",
}
