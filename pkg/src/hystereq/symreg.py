"""Symbolic regression of scalar laws by genetic programming.

Searches expression trees over {+, -, *, neg, abs, sign, constant
powers with learnable exponents} for a law y = f(features). Candidate
fitness fits the coefficient of every top-level additive term (plus an
intercept) by least squares in closed form before scoring, so the
search ranks term shapes rather than scales; only inner constants and
exponents need derivative-free refinement. A parsimony term keeps
expressions small. Features and target are standardized by scale only;
centering is deliberately avoided because it would destroy the odd
symmetry that abs/sign structure relies on.

The result of a run is a Pareto front over (complexity, loss).
:func:`select_model` picks the front member at the largest error drop,
the usual elbow heuristic. Expressions round-trip through a prefix
s-expression text form via :func:`to_sexpr` / :func:`from_sexpr`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .opt import nelder_mead

__all__ = [
    "Binary",
    "Candidate",
    "Const",
    "Expr",
    "PowConst",
    "SymregConfig",
    "SymregResult",
    "Unary",
    "Var",
    "canonicalize",
    "complexity",
    "discover",
    "eval_expr",
    "evaluate",
    "fit_constants",
    "fractional_exponents",
    "from_sexpr",
    "prune_small_terms",
    "select_model",
    "structure_key",
    "to_sexpr",
    "variables",
]


# -- expression trees -------------------------------------------------


class Expr:
    __slots__ = ()

    def __repr__(self):
        return f"<{type(self).__name__} {to_sexpr(self)}>"


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name


class Unary(Expr):
    __slots__ = ("op", "child")

    OPS = ("neg", "abs", "sign")

    def __init__(self, op: str, child: Expr):
        if op not in self.OPS:
            raise ValueError(f"unknown unary op {op!r}")
        self.op = op
        self.child = child


class Binary(Expr):
    __slots__ = ("op", "left", "right")

    OPS = ("add", "sub", "mul")

    def __init__(self, op: str, left: Expr, right: Expr):
        if op not in self.OPS:
            raise ValueError(f"unknown binary op {op!r}")
        self.op = op
        self.left = left
        self.right = right


class PowConst(Expr):
    """Power with a fixed subtree base and a learnable real exponent.

    Bases are abs-wrapped at generation time so fractional exponents
    stay real-valued; evolution can break that, in which case
    evaluation yields non-finite values and the fitness is infinite.
    """

    __slots__ = ("child", "power")

    def __init__(self, child: Expr, power: float):
        self.child = child
        self.power = float(power)


_BIN_SYM = {"add": "+", "sub": "-", "mul": "*"}
_SYM_BIN = {"+": "add", "-": "sub", "*": "mul"}


def to_sexpr(e: Expr) -> str:
    """Prefix text form, e.g. ``(+ (* 4 xdot) (pow (abs z) 1.5))``."""
    if isinstance(e, Const):
        return f"{e.value:.10g}"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        return f"({e.op} {to_sexpr(e.child)})"
    if isinstance(e, Binary):
        return f"({_BIN_SYM[e.op]} {to_sexpr(e.left)} {to_sexpr(e.right)})"
    if isinstance(e, PowConst):
        return f"(pow {to_sexpr(e.child)} {e.power:.10g})"
    raise TypeError(type(e))


def from_sexpr(text: str) -> Expr:
    """Parse the prefix text form back into a tree."""
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def parse():
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("unexpected end of expression")
        tok = tokens[pos]
        pos += 1
        if tok == ")":
            raise ValueError("unexpected ')'")
        if tok != "(":
            try:
                return Const(float(tok))
            except ValueError:
                return Var(tok)
        head = tokens[pos]
        pos += 1
        args = []
        while pos < len(tokens) and tokens[pos] != ")":
            args.append(parse())
        if pos >= len(tokens):
            raise ValueError("unbalanced parentheses")
        pos += 1
        if head in _SYM_BIN:
            if head == "-" and len(args) == 1:
                return Unary("neg", args[0])
            if len(args) < 2:
                raise ValueError(f"{head} needs two operands")
            node = args[0]
            for a in args[1:]:
                node = Binary(_SYM_BIN[head], node, a)
            return node
        if head in Unary.OPS:
            if len(args) != 1:
                raise ValueError(f"{head} takes one operand")
            return Unary(head, args[0])
        if head == "pow":
            if len(args) != 2 or not isinstance(args[1], Const):
                raise ValueError("pow takes (pow base exponent-number)")
            return PowConst(args[0], args[1].value)
        raise ValueError(f"unknown operator {head!r}")

    e = parse()
    if pos != len(tokens):
        raise ValueError("trailing tokens after expression")
    return e


def to_infix(e: Expr) -> str:
    """Readable infix form, e.g. ``4*xdot - 5*|xdot|*|z|^0.5*z``."""

    def go(node, prec):
        if isinstance(node, Const):
            s = f"{node.value:.6g}"
            return f"({s})" if node.value < 0 and prec >= 2 else s
        if isinstance(node, Var):
            return node.name
        if isinstance(node, Unary):
            if node.op == "abs":
                return f"|{go(node.child, 0)}|"
            if node.op == "sign":
                return f"sign({go(node.child, 0)})"
            inner = go(node.child, 2)
            return f"-{inner}" if prec < 2 else f"(-{inner})"
        if isinstance(node, Binary):
            if node.op in ("add", "sub"):
                s = f"{go(node.left, 1)} {_BIN_SYM[node.op]} {go(node.right, 2 if node.op == 'sub' else 1)}"
                return f"({s})" if prec >= 2 else s
            lp = 1 if isinstance(node.left, Const) and node.left.value < 0 else 2
            s = f"{go(node.left, lp)}*{go(node.right, 2)}"
            return f"({s})" if prec >= 3 or (lp == 1 and prec >= 2) else s
        if isinstance(node, PowConst):
            return f"{go(node.child, 3)}^{node.power:g}"
        raise TypeError(type(node))

    return go(e, 0).replace("+ -", "- ")


def complexity(e: Expr) -> int:
    """Node count; a learnable power counts as two nodes."""
    if isinstance(e, (Const, Var)):
        return 1
    if isinstance(e, Unary):
        return 1 + complexity(e.child)
    if isinstance(e, Binary):
        return 1 + complexity(e.left) + complexity(e.right)
    if isinstance(e, PowConst):
        return 2 + complexity(e.child)
    raise TypeError(type(e))


def evaluate(e: Expr, env: dict):
    """Evaluate against name->array (or scalar) bindings. Invalid
    domains produce non-finite values, which fitness treats as
    infinitely bad rather than raising."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise ValueError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Unary):
        c = evaluate(e.child, env)
        if e.op == "neg":
            return -c
        if e.op == "abs":
            return np.abs(c)
        return np.sign(c)
    if isinstance(e, Binary):
        le = evaluate(e.left, env)
        r = evaluate(e.right, env)
        if e.op == "add":
            return le + r
        if e.op == "sub":
            return le - r
        with np.errstate(over="ignore", invalid="ignore"):
            return le * r
    if isinstance(e, PowConst):
        c = evaluate(e.child, env)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return np.power(c, e.power)
    raise TypeError(type(e))


def eval_expr(e: Expr, bindings: dict) -> float:
    """Scalar evaluation; every Var must be bound."""
    return float(evaluate(e, {k: float(v) for k, v in bindings.items()}))


def copy_expr(e: Expr) -> Expr:
    if isinstance(e, Const):
        return Const(e.value)
    if isinstance(e, Var):
        return Var(e.name)
    if isinstance(e, Unary):
        return Unary(e.op, copy_expr(e.child))
    if isinstance(e, Binary):
        return Binary(e.op, copy_expr(e.left), copy_expr(e.right))
    if isinstance(e, PowConst):
        return PowConst(copy_expr(e.child), e.power)
    raise TypeError(type(e))


def _nodes(e: Expr):
    """Pre-order traversal."""
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Unary):
            stack.append(node.child)
        elif isinstance(node, Binary):
            stack.append(node.right)
            stack.append(node.left)
        elif isinstance(node, PowConst):
            stack.append(node.child)


def variables(e: Expr) -> set:
    return {n.name for n in _nodes(e) if isinstance(n, Var)}


def fractional_exponents(e: Expr) -> list:
    """All learnable power values in the expression, traversal order."""
    return [n.power for n in _nodes(e) if isinstance(n, PowConst)]


# -- canonical form ---------------------------------------------------


def _flatten(e, op, out):
    if isinstance(e, Binary) and e.op == op:
        _flatten(e.left, op, out)
        _flatten(e.right, op, out)
    else:
        out.append(e)


def _build_chain(op, terms):
    node = terms[0]
    for t in terms[1:]:
        node = Binary(op, node, t)
    return node


def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


def canonicalize(e: Expr) -> Expr:
    """Normal form used for comparison and reporting: constants folded,
    neg/sub rewritten into multiply and add, commutative chains
    flattened and sorted by a stable key, constant factors pulled out
    of abs and powers, like terms merged, and sign(t)*|t|^p rewritten
    as t*|t|^(p-1) when p >= 1."""
    return _canon(e)


def _canon(e: Expr) -> Expr:
    if isinstance(e, (Const, Var)):
        return copy_expr(e)

    if isinstance(e, Unary):
        c = _canon(e.child)
        if e.op == "neg":
            return _canon(Binary("mul", Const(-1.0), c))
        if _is_const(c):
            v = c.value
            return Const(abs(v) if e.op == "abs" else float(np.sign(v)))
        if e.op == "abs":
            if isinstance(c, Unary) and c.op == "abs":
                return c
            # |c * t| = |c| * |t| for a leading constant factor
            if isinstance(c, Binary) and c.op == "mul" and _is_const(c.left):
                return _canon(
                    Binary("mul", Const(abs(c.left.value)), Unary("abs", c.right))
                )
            return Unary("abs", c)
        # sign
        if isinstance(c, Binary) and c.op == "mul" and _is_const(c.left):
            s = float(np.sign(c.left.value))
            if s == 0.0:
                return Const(0.0)
            return _canon(Binary("mul", Const(s), Unary("sign", c.right)))
        return Unary("sign", c)

    if isinstance(e, PowConst):
        c = _canon(e.child)
        # refined exponents land within float noise of the identity
        # cases, so snap rather than exact-match
        if abs(e.power - 1.0) < 1e-6:
            return c
        if abs(e.power) < 1e-6:
            return Const(1.0)
        if _is_const(c) and c.value >= 0:
            return Const(c.value**e.power)
        # (c * t)^p = c^p * t^p for a positive constant factor
        if isinstance(c, Binary) and c.op == "mul" and _is_const(c.left) and c.left.value > 0:
            return _canon(
                Binary("mul", Const(c.left.value**e.power), PowConst(c.right, e.power))
            )
        if isinstance(c, PowConst):
            return _canon(PowConst(c.child, c.power * e.power))
        return PowConst(c, e.power)

    if isinstance(e, Binary):
        le = _canon(e.left)
        r = _canon(e.right)
        if e.op == "sub":
            return _canon(Binary("add", le, Binary("mul", Const(-1.0), r)))
        if e.op == "mul":
            return _canon_mul(le, r)
        return _canon_add(le, r)

    raise TypeError(type(e))


def _canon_mul(le, r):
    factors = []
    _flatten(Binary("mul", le, r), "mul", factors)
    # distribute over sums so laws always end up as flat term lists
    for i, f in enumerate(factors):
        if isinstance(f, Binary) and f.op == "add":
            addends = []
            _flatten(f, "add", addends)
            others = factors[:i] + factors[i + 1 :]
            expanded = [_build_chain("mul", [ad] + others) for ad in addends]
            return _canon(_build_chain("add", expanded))
    coef = 1.0
    rest = []
    for f in factors:
        if _is_const(f):
            coef *= f.value
        else:
            rest.append(f)
    if coef == 0.0 or not rest:
        return Const(coef)

    # sign(t) * |t|^p -> t * |t|^(p-1) for p >= 1 (the identity holds
    # below 1 too but would introduce a negative power); likewise
    # sign(t) * |t| -> t
    changed = True
    while changed:
        changed = False
        for i, f in enumerate(rest):
            if not (isinstance(f, Unary) and f.op == "sign"):
                continue
            t_key = to_sexpr(f.child)
            for j, g in enumerate(rest):
                if i == j:
                    continue
                if isinstance(g, Unary) and g.op == "abs" and to_sexpr(g.child) == t_key:
                    rest[i] = f.child
                    del rest[j]
                    changed = True
                    break
                if (
                    isinstance(g, PowConst)
                    and g.power >= 1.0
                    and isinstance(g.child, Unary)
                    and g.child.op == "abs"
                    and to_sexpr(g.child.child) == t_key
                ):
                    rest[i] = f.child
                    rest[j] = g.child if g.power == 1.0 else PowConst(g.child, g.power - 1.0)
                    if isinstance(rest[j], PowConst) and rest[j].power == 1.0:
                        rest[j] = rest[j].child
                    changed = True
                    break
            if changed:
                break

    # |t|^a * |t|^b -> |t|^(a+b)
    def pow_parts(f):
        if isinstance(f, PowConst):
            return to_sexpr(f.child), f.child, f.power
        return to_sexpr(f), f, 1.0

    merged = {}
    order = []
    for f in rest:
        key, base, power = pow_parts(f)
        if key in merged:
            merged[key] = (merged[key][0], merged[key][1] + power)
        else:
            merged[key] = (base, power)
            order.append(key)
    rest = []
    for key in order:
        base, power = merged[key]
        rest.append(base if power == 1.0 else PowConst(base, power))

    rest.sort(key=to_sexpr)
    node = _build_chain("mul", rest)
    if coef != 1.0:
        node = Binary("mul", Const(coef), node)
    return node


def _canon_add(le, r):
    terms = []
    _flatten(Binary("add", le, r), "add", terms)
    buckets = {}  # structural key -> (coefficient, body)
    order = []
    const_sum = 0.0
    for t in terms:
        if _is_const(t):
            const_sum += t.value
            continue
        coef = 1.0
        body = t
        if isinstance(t, Binary) and t.op == "mul" and _is_const(t.left):
            coef = t.left.value
            body = t.right
        key = to_sexpr(body)
        if key in buckets:
            buckets[key] = (buckets[key][0] + coef, buckets[key][1])
        else:
            buckets[key] = (coef, body)
            order.append(key)
    out = []
    for key in sorted(order):
        coef, body = buckets[key]
        if coef == 0.0:
            continue
        out.append(body if coef == 1.0 else Binary("mul", Const(coef), body))
    if const_sum != 0.0 or not out:
        out.append(Const(const_sum))
    out.sort(key=to_sexpr)
    return _build_chain("add", out)


def structure_key(e: Expr, exp_digits: int = 1) -> str:
    """Shape signature: canonical form with constant values blanked and
    exponents rounded, commutative chains re-sorted on the blanked
    keys. Two fits of the same law with different constants share it."""

    def strip(node):
        if isinstance(node, Const):
            return "#"
        if isinstance(node, Var):
            return node.name
        if isinstance(node, Unary):
            return f"({node.op} {strip(node.child)})"
        if isinstance(node, PowConst):
            return f"(pow {strip(node.child)} {round(node.power, exp_digits)})"
        # canonical trees only contain add/mul chains here
        parts = []
        _flatten(node, node.op, parts)
        keys = sorted(strip(p) for p in parts)
        return f"({_BIN_SYM[node.op]} " + " ".join(keys) + ")"

    return strip(canonicalize(e))


def substitute_scales(e: Expr, var_scales: dict, y_scale, intercept) -> Expr:
    """Rewrite a model fitted on scaled features back to physical
    units: each variable v becomes v / s_v and the output map
    y = y_scale * (intercept + h) is folded in."""

    def sub(node):
        if isinstance(node, Var):
            s = var_scales.get(node.name, 1.0)
            if s == 1.0:
                return Var(node.name)
            return Binary("mul", Const(1.0 / s), Var(node.name))
        if isinstance(node, Const):
            return Const(node.value)
        if isinstance(node, Unary):
            return Unary(node.op, sub(node.child))
        if isinstance(node, Binary):
            return Binary(node.op, sub(node.left), sub(node.right))
        if isinstance(node, PowConst):
            return PowConst(sub(node.child), node.power)
        raise TypeError(type(node))

    h = sub(e)
    if intercept != 0.0:
        h = Binary("add", Const(intercept), h)
    if y_scale != 1.0:
        h = Binary("mul", Const(y_scale), h)
    return canonicalize(h)


# -- additive-term decomposition -------------------------------------


def _terms_of(e: Expr) -> list:
    out = []
    _flatten(e, "add", out)
    return out


def _strip_outer(term):
    """Peel leading constant factors off a multiplication chain;
    returns (product of peeled constants, remaining shape)."""
    coef = 1.0
    node = term
    while isinstance(node, Binary) and node.op == "mul":
        if _is_const(node.left):
            coef *= node.left.value
            node = node.right
        elif _is_const(node.right):
            coef *= node.right.value
            node = node.left
        else:
            break
    return coef, node


def _shape_key(e: Expr) -> str:
    """Cache key invariant to every coefficient a least-squares pass
    can absorb: top-level terms stripped of leading constants,
    canonicalized, sorted. Inner constants stay significant."""
    parts = []
    for t in _terms_of(e):
        if isinstance(t, Const):
            continue
        _, shape = _strip_outer(t)
        c = canonicalize(shape)
        if isinstance(c, Binary) and c.op == "mul" and _is_const(c.left):
            c = c.right
        parts.append(to_sexpr(c))
    if not parts:
        return "0"
    return "|".join(sorted(parts))


def prune_small_terms(e: Expr, env: dict, rel_tol: float = 1e-9) -> Expr:
    """Drop top-level additive terms whose contribution over the given
    samples is negligible relative to the whole prediction. Used when
    reporting, never during search."""
    terms = _terms_of(e)
    if len(terms) <= 1:
        return e

    def magnitude(v):
        if np.ndim(v) == 0:
            return abs(float(v))
        return float(np.std(v) + abs(np.mean(v)))

    total = magnitude(evaluate(e, env))
    if total == 0.0 or not math.isfinite(total):
        return e
    keep = [t for t in terms if magnitude(evaluate(t, env)) > rel_tol * total]
    if not keep:
        return Const(0.0)
    return canonicalize(_build_chain("add", keep))


# -- constants refinement --------------------------------------------


def _collect_params(e: Expr):
    """(node, attr) pairs for every tunable scalar in the tree."""
    out = []
    for node in _nodes(e):
        if isinstance(node, Const):
            out.append((node, "value"))
        elif isinstance(node, PowConst):
            out.append((node, "power"))
    return out


def _inner_params(e: Expr):
    """Tunable scalars that least squares cannot absorb: everything
    except the leading constant factors of top-level terms."""
    outer = set()
    for t in _terms_of(e):
        if isinstance(t, Const):
            outer.add(id(t))
            continue
        node = t
        while isinstance(node, Binary) and node.op == "mul":
            if _is_const(node.left):
                outer.add(id(node.left))
                node = node.right
            elif _is_const(node.right):
                outer.add(id(node.right))
                node = node.left
            else:
                break
    return [(n, a) for n, a in _collect_params(e) if id(n) not in outer]


def _get_params(params):
    return np.array([getattr(n, a) for n, a in params], dtype=float)


def _set_params(params, values, exp_range):
    lo, hi = exp_range
    for (node, attr), v in zip(params, values):
        if attr == "power":
            node.power = float(min(max(v, lo), hi))
        else:
            node.value = float(v)


def fit_constants(
    e: Expr,
    target,
    features: dict,
    iters: int = 200,
    restarts: int = 4,
    seed: int = 0,
    exp_range: tuple = (0.25, 4.0),
) -> Expr:
    """Refine every constant and exponent of a copy of `e` against the
    target samples by Nelder-Mead with random restarts, returning the
    best copy. An expression with nothing tunable comes back as an
    unchanged copy."""
    y = np.asarray(target, dtype=float)
    best = copy_expr(e)
    params = _collect_params(best)
    if not params:
        return best

    def mse_now():
        r = evaluate(best, features) - y
        if not np.all(np.isfinite(r)):
            return math.inf
        return float(np.mean(r * r))

    rng = np.random.default_rng(seed)
    x_start = _get_params(params)
    best_f = math.inf
    best_x = x_start
    for attempt in range(restarts):
        if attempt == 0:
            x0 = x_start.copy()
        else:
            x0 = x_start * (1.0 + 0.3 * rng.standard_normal(len(x_start)))
            x0 += 0.1 * rng.standard_normal(len(x_start))

        def obj(v):
            _set_params(params, v, exp_range)
            return mse_now()

        xb, fb, _ = nelder_mead(obj, x0, max_iter=iters, init_step=0.25)
        if fb < best_f:
            best_f = fb
            best_x = xb
    if math.isfinite(best_f):
        _set_params(params, best_x, exp_range)
    else:
        _set_params(params, x_start, exp_range)
    return best


# -- GP search --------------------------------------------------------


@dataclass
class SymregConfig:
    """Search settings; defaults are the standard-run values."""

    population: int = 512
    generations: int = 200
    tournament: int = 5
    p_mutation: float = 0.5
    p_crossover: float = 0.4
    p_reproduction: float = 0.1
    parsimony: float = 1e-3
    max_complexity: int = 30
    exponent_sigma: float = 0.25
    exponent_range: tuple = (0.25, 4.0)
    refine_iters: int = 200
    refine_restarts: int = 4
    evolve_refine_iters: int = 25
    init_depth: tuple = (2, 4)
    seed: int = 0

    def __post_init__(self):
        total = self.p_mutation + self.p_crossover + self.p_reproduction
        if abs(total - 1.0) > 1e-9:
            raise ValueError("operator probabilities must sum to 1")
        if self.max_complexity < 3:
            raise ValueError("max complexity must be at least 3")


@dataclass
class Candidate:
    """One Pareto-front member, in physical units with all scaling and
    fitted coefficients folded in; `loss` is the standardized-target
    MSE the search ranked it by."""

    expr: Expr
    sexpr: str
    complexity: int
    loss: float

    def predict(self, env: dict):
        return evaluate(self.expr, env)


@dataclass
class SymregResult:
    front: list
    best: Candidate
    names: list
    evaluations: int
    generations_run: int
    history: list = field(default_factory=list)


class _Search:
    def __init__(self, cfg: SymregConfig, names, env, y):
        self.cfg = cfg
        self.names = names
        self.env = env
        self.y = y
        self.n = len(y)
        self.ones = np.ones(self.n)
        self.cache = {}
        self.evals = 0

    # generation

    def random_leaf(self, rng):
        if rng.random() < 0.7:
            return Var(self.names[int(rng.integers(len(self.names)))])
        return Const(float(rng.normal()))

    def random_tree(self, rng, depth, full):
        if depth <= 0 or (not full and rng.random() < 0.3):
            return self.random_leaf(rng)
        r = rng.random()
        if r < 0.55:
            op = Binary.OPS[int(rng.integers(3))]
            return Binary(
                op,
                self.random_tree(rng, depth - 1, full),
                self.random_tree(rng, depth - 1, full),
            )
        if r < 0.85:
            op = Unary.OPS[int(rng.integers(3))]
            return Unary(op, self.random_tree(rng, depth - 1, full))
        lo, hi = self.cfg.exponent_range
        power = float(min(max(rng.normal(1.5, 0.75), lo), hi))
        # abs-wrapped base keeps fractional powers real-valued
        return PowConst(Unary("abs", self.random_tree(rng, depth - 1, full)), power)

    def random_factor(self, rng):
        """One multiplicative primitive over a single variable."""
        v = Var(self.names[int(rng.integers(len(self.names)))])
        r = rng.random()
        if r < 0.35:
            return v
        if r < 0.55:
            return Unary("abs", v)
        if r < 0.7:
            return Unary("sign", v)
        lo, hi = self.cfg.exponent_range
        power = float(min(max(rng.normal(1.5, 0.75), lo), hi))
        return PowConst(Unary("abs", v), power)

    def random_product(self, rng):
        """Product of 1-3 primitives; the native shape of rate laws."""
        k = 1 + int(rng.integers(3))
        node = self.random_factor(rng)
        for _ in range(k - 1):
            node = Binary("mul", node, self.random_factor(rng))
        return node

    # variation

    def tournament(self, rng, pop, fits):
        idx = rng.integers(len(pop), size=self.cfg.tournament)
        best = min(idx, key=lambda i: fits[i])
        return pop[best]

    def replace(self, root, target, replacement):
        if root is target:
            return replacement

        def walk(node):
            for attr in ("child", "left", "right"):
                if hasattr(node, attr):
                    c = getattr(node, attr)
                    if c is target:
                        setattr(node, attr, replacement)
                        return True
                    if not isinstance(c, (Const, Var)) and walk(c):
                        return True
            return False

        walk(root)
        return root

    def mutate(self, rng, e):
        e = copy_expr(e)
        nodes = list(_nodes(e))
        target = nodes[int(rng.integers(len(nodes)))]
        r = rng.random()
        # point mutation: swap an operator in place
        if r < 0.15:
            if isinstance(target, Binary):
                target.op = Binary.OPS[int(rng.integers(3))]
                return e
            if isinstance(target, Unary):
                target.op = Unary.OPS[int(rng.integers(3))]
                return e
        # term extension: offer a new additive shape at the root
        if r < 0.3:
            return Binary("add", e, self.random_product(rng))
        # factor injection: multiply the target node by a primitive
        if r < 0.45:
            return self.replace(
                e, target, Binary("mul", target, self.random_factor(rng))
            )
        # constant / exponent jitter
        if isinstance(target, PowConst) and r < 0.7:
            lo, hi = self.cfg.exponent_range
            target.power = float(
                min(max(target.power + rng.normal(0.0, self.cfg.exponent_sigma), lo), hi)
            )
            return e
        if isinstance(target, Const) and r < 0.7:
            target.value = float(
                target.value + rng.normal(0.0, 0.3 * (abs(target.value) + 0.1))
            )
            return e
        # subtree replacement
        new_sub = self.random_tree(rng, int(rng.integers(1, 3)), False)
        return self.replace(e, target, new_sub)

    def crossover(self, rng, a, b):
        a = copy_expr(a)
        nodes_a = list(_nodes(a))
        nodes_b = list(_nodes(b))
        ta = nodes_a[int(rng.integers(len(nodes_a)))]
        tb = copy_expr(nodes_b[int(rng.integers(len(nodes_b)))])
        return self.replace(a, ta, tb)

    # fitness: least-squares coefficients per top-level term, folded
    # back into the tree, plus a free intercept

    def _ols(self, e):
        terms = _terms_of(e)
        cols = []
        keep = []
        for t in terms:
            if isinstance(t, Const):
                continue
            h = evaluate(t, self.env)
            if np.ndim(h) == 0:
                h = np.full(self.n, float(h))
            cols.append(h)
            keep.append(t)
        if not cols:
            a = float(np.mean(self.y))
            r = self.y - a
            return float(np.mean(r * r)), a, Const(0.0)
        H = np.column_stack(cols + [self.ones])
        if not np.all(np.isfinite(H)):
            return math.inf, 0.0, e
        try:
            beta, *_ = np.linalg.lstsq(H, self.y, rcond=None)
        except np.linalg.LinAlgError:
            return math.inf, 0.0, e
        r = H @ beta - self.y
        mse = float(np.mean(r * r))
        folded = []
        for bi, t in zip(beta[:-1], keep):
            coef, shape = _strip_outer(t)
            c = float(bi * coef) if coef != 1.0 else float(bi)
            if c == 1.0:
                folded.append(shape)
            else:
                folded.append(Binary("mul", Const(c), shape))
        return mse, float(beta[-1]), _build_chain("add", folded)

    def fitness(self, e):
        key = _shape_key(e)
        hit = self.cache.get(key)
        if hit is not None:
            fit, mse, a, folded_s = hit
            return fit, mse, a, from_sexpr(folded_s)
        if complexity(e) > self.cfg.max_complexity:
            res = (math.inf, math.inf, 0.0, e)
        else:
            self.evals += 1
            mse, a, folded = self._ols(e)
            if math.isfinite(mse):
                fit = mse + self.cfg.parsimony * complexity(folded)
            else:
                fit = math.inf
            res = (fit, mse, a, folded)
        self.cache[key] = (res[0], res[1], res[2], to_sexpr(res[3]))
        return res

    def refine(self, e, iters, rng, restarts=1):
        """Nelder-Mead over the scalars least squares cannot reach
        (inner constants, exponents), in place; returns fresh fitness."""
        params = _inner_params(e)
        if not params or complexity(e) > self.cfg.max_complexity:
            return self.fitness(e)
        x_start = _get_params(params)
        best_x = x_start
        best_m = self._ols(e)[0]

        def obj(v):
            _set_params(params, v, self.cfg.exponent_range)
            self.evals += 1
            return self._ols(e)[0]

        for attempt in range(restarts):
            if attempt == 0:
                x0 = x_start.copy()
            else:
                x0 = x_start * (1.0 + 0.3 * rng.standard_normal(len(x_start)))
            xb, fb, _ = nelder_mead(obj, x0, max_iter=iters, init_step=0.25)
            if fb < best_m:
                best_m = fb
                best_x = xb
        _set_params(params, best_x, self.cfg.exponent_range)
        mse, a, folded = self._ols(e)
        if math.isfinite(mse):
            fit = mse + self.cfg.parsimony * complexity(folded)
        else:
            fit = math.inf
        return fit, mse, a, folded


def discover(target, features: dict, config: SymregConfig | None = None) -> SymregResult:
    """Search for expressions mapping the named feature vectors onto
    the target, returning the refined Pareto front and the elbow pick.
    Deterministic for fixed inputs and seed."""
    cfg = config or SymregConfig()
    y_raw = np.asarray(target, dtype=float)
    names = list(features)
    cols = {k: np.asarray(v, dtype=float) for k, v in features.items()}
    n = len(y_raw)
    for k, v in cols.items():
        if v.shape != (n,):
            raise ValueError(f"feature {k!r} length does not match target")
    if n < 10 * cfg.max_complexity:
        raise ValueError(
            f"need at least {10 * cfg.max_complexity} samples for "
            f"max complexity {cfg.max_complexity}, got {n}"
        )

    # scale-only standardization
    scales = {}
    env = {}
    for k, v in cols.items():
        s = float(np.std(v)) or 1.0
        scales[k] = s
        env[k] = v / s
    ys = float(np.std(y_raw)) or 1.0
    y = y_raw / ys

    rng = np.random.default_rng(cfg.seed)
    search = _Search(cfg, names, env, y)

    pop = []
    lo_d, hi_d = cfg.init_depth
    for i in range(cfg.population):
        if i % 2 == 0:
            depth = lo_d + i % (hi_d - lo_d + 1)
            pop.append(search.random_tree(rng, depth, i % 4 == 0))
        else:
            pop.append(search.random_product(rng))

    front = {}  # complexity -> (mse, expr, intercept)

    def consider(folded, mse, a):
        if not math.isfinite(mse):
            return
        comp = complexity(folded)
        cur = front.get(comp)
        if cur is None or mse < cur[0]:
            front[comp] = (mse, copy_expr(folded), a)

    def run_generation(individuals):
        fits = []
        out = []
        for e in individuals:
            fit, mse, a, folded = search.fitness(e)
            fits.append(fit)
            out.append(folded)
            consider(folded, mse, a)
        return out, fits

    pop, fits = run_generation(pop)
    if not front:
        raise ValueError("operator alphabet cannot fit data")

    history = []
    stall = 0
    gens_run = 0
    for gen in range(cfg.generations):
        gens_run = gen + 1
        new_pop = [copy_expr(ex) for _, (_, ex, _) in sorted(front.items())]
        del new_pop[cfg.population // 4 :]  # front elitism, capped
        front_pool = [ex for _, (_, ex, _) in sorted(front.items())]

        def parent():
            # parsimony pressure fights growth, so lineages toward a
            # richer law are fitness-declining; drawing some parents
            # straight off the front keeps those paths alive
            if rng.random() < 0.2:
                return front_pool[int(rng.integers(len(front_pool)))]
            return search.tournament(rng, pop, fits)

        while len(new_pop) < cfg.population:
            r = rng.random()
            if r < cfg.p_mutation:
                child = search.mutate(rng, parent())
            elif r < cfg.p_mutation + cfg.p_crossover:
                child = search.crossover(rng, parent(), parent())
            else:
                child = copy_expr(parent())
            if complexity(child) > cfg.max_complexity:
                child = copy_expr(search.tournament(rng, pop, fits))
            new_pop.append(child)
        pop, fits = run_generation(new_pop)
        # refine inner constants on the fittest decile, then re-rank
        decile = max(1, cfg.population // 10)
        order = np.argsort(fits)
        for i in order[:decile]:
            fit, mse, a, folded = search.refine(pop[i], cfg.evolve_refine_iters, rng)
            pop[i] = folded
            fits[i] = fit
            consider(folded, mse, a)
        best_mse = min(m for m, _, _ in front.values())
        history.append(best_mse)
        # once a front member explains the target to round-off there is
        # nothing left to search for
        if best_mse < 1e-13:
            stall += 1
            if stall >= 5:
                break
        else:
            stall = 0

    # full refinement of the final front, then physical-unit reporting
    results = []
    for comp, (mse, e, a) in sorted(front.items()):
        e2 = copy_expr(e)
        fit, mse2, a2, folded = search.refine(
            e2, cfg.refine_iters, rng, restarts=cfg.refine_restarts
        )
        if mse2 <= mse:
            mse, a, e = mse2, a2, folded
        phys = substitute_scales(e, scales, ys, a)
        phys = prune_small_terms(phys, cols)
        results.append((complexity(phys), mse, phys))

    results.sort(key=lambda t: (t[0], t[1]))
    front_list = []
    best_mse = math.inf
    for comp, mse, phys in results:
        if mse >= best_mse:
            continue
        best_mse = mse
        front_list.append(
            Candidate(expr=phys, sexpr=to_sexpr(phys), complexity=comp, loss=mse)
        )
    chosen = select_model(front_list)
    return SymregResult(
        front=front_list,
        best=chosen,
        names=names,
        evaluations=search.evals,
        generations_run=gens_run,
        history=history,
    )


def select_model(front) -> Candidate:
    """Pick the front member with the largest loss drop from its
    simpler neighbor; ties break toward lower complexity."""
    if not front:
        raise ValueError("empty front")
    if len(front) == 1:
        return front[0]
    best_i = 0
    best_ratio = -math.inf
    for i in range(1, len(front)):
        prev = max(front[i - 1].loss, 1e-15)
        cur = max(front[i].loss, 1e-15)
        ratio = prev / cur
        if ratio > best_ratio:
            best_ratio = ratio
            best_i = i
    return front[best_i]
