"""Expression trees, constant fitting, and the GP search.

Fitted constants are checked against brute-force grid oracles; the
search itself is exercised on small problems whose unique best answer
is known by construction.
"""

import math

import numpy as np
import pytest

from hystereq import symreg as sr
from hystereq.symreg import (
    Binary,
    Candidate,
    Const,
    PowConst,
    SymregConfig,
    Unary,
    Var,
)

HYST_LAW = (
    "(+ (* 4 xdot) (+ (* -5 (* (abs xdot) (* (pow (abs z) 0.5) z)))"
    " (* 4 (* xdot (pow (abs z) 1.5)))))"
)


# -- evaluation -------------------------------------------------------


def test_eval_simple_product():
    e = sr.from_sexpr("(* 4 xdot)")
    assert sr.eval_expr(e, {"xdot": 0.5}) == 2.0


def test_eval_hysteretic_law_at_unit_point():
    # 4*1 - 5*1*1*1 + 4*1*1 = 3
    e = sr.from_sexpr(HYST_LAW)
    assert sr.eval_expr(e, {"xdot": 1.0, "z": 1.0}) == pytest.approx(3.0)


def test_eval_fractional_power_of_abs():
    e = PowConst(Unary("abs", Var("z")), 1.5)
    assert sr.eval_expr(e, {"z": -4.0}) == pytest.approx(8.0)


def test_eval_unbound_variable_raises():
    with pytest.raises(ValueError):
        sr.eval_expr(Var("q"), {"z": 1.0})


def test_eval_negative_base_fractional_power_is_nonfinite():
    """Domain violations surface as a non-finite sentinel, not a raise."""
    assert math.isnan(sr.eval_expr(PowConst(Var("z"), 0.5), {"z": -4.0}))


def test_odd_symmetry_of_the_hysteretic_law():
    """The link law flips sign under (xdot, z) -> (-xdot, -z)."""
    e = sr.from_sexpr(HYST_LAW)
    rng = np.random.default_rng(2)
    xd, z = rng.uniform(-2, 2, 50), rng.uniform(-2, 2, 50)
    pos = sr.evaluate(e, {"xdot": xd, "z": z})
    neg = sr.evaluate(e, {"xdot": -xd, "z": -z})
    assert np.max(np.abs(pos + neg)) < 1e-12


# -- serialization ----------------------------------------------------


def test_sexpr_round_trip():
    for text in (
        "(* 4 xdot)",
        HYST_LAW,
        "(+ (* -2.5 (abs x)) (sign z))",
        "(- x (neg z))",
    ):
        e = sr.from_sexpr(text)
        assert sr.to_sexpr(sr.from_sexpr(sr.to_sexpr(e))) == sr.to_sexpr(e)


def test_from_sexpr_rejects_malformed():
    for bad in ("(+ x", "(foo x z)", "(+ x z))", "", "(pow x)"):
        with pytest.raises(ValueError):
            sr.from_sexpr(bad)


def test_infix_rendering():
    pairs = [
        (
            "(+ (* 50000 xdot) (+ (* -800 (* (abs xdot) z)) (* 1100 (* xdot (abs z)))))",
            "50000*xdot - 800*|xdot|*z + 1100*xdot*|z|",
        ),
        ("(* x (* -2 z))", "x*(-2*z)"),
        ("(pow (* x xdot) 2)", "(x*xdot)^2"),
    ]
    for text, rendered in pairs:
        assert sr.to_infix(sr.from_sexpr(text)) == rendered


def test_complexity_counts_powconst_twice():
    assert sr.complexity(Var("x")) == 1
    assert sr.complexity(sr.from_sexpr("(* 4 xdot)")) == 3
    assert sr.complexity(sr.from_sexpr("(pow (abs z) 1.5)")) == 4


# -- canonical form ---------------------------------------------------


def test_canonicalize_sign_power_identity():
    e = sr.from_sexpr("(* (sign z) (pow (abs z) 1.5))")
    assert sr.to_sexpr(sr.canonicalize(e)) == "(* (pow (abs z) 0.5) z)"


def test_canonicalize_commutative_order():
    a = sr.canonicalize(sr.from_sexpr("(+ x z)"))
    b = sr.canonicalize(sr.from_sexpr("(+ z x)"))
    assert sr.to_sexpr(a) == sr.to_sexpr(b)


def test_canonicalize_folds_constants():
    e = sr.canonicalize(sr.from_sexpr("(* 2 (* 3 x))"))
    assert sr.to_sexpr(e) == "(* 6 x)"


def test_structure_key_ignores_coefficients_and_rounds_exponents():
    jittered = sr.from_sexpr(
        "(+ (* 4.1 xdot) (+ (* -5.2 (* (abs xdot) (* (pow (abs z) 0.5486) z)))"
        " (* 3.9 (* xdot (pow (abs z) 1.5486)))))"
    )
    clean = sr.from_sexpr(HYST_LAW)
    assert sr.structure_key(jittered) == sr.structure_key(clean)
    assert sr.structure_key(jittered, exp_digits=2) != sr.structure_key(clean, exp_digits=2)


def test_fractional_exponents_listing():
    assert sr.fractional_exponents(sr.from_sexpr(HYST_LAW)) == [0.5, 1.5]
    assert sr.fractional_exponents(Var("x")) == []


def test_prune_small_terms_drops_negligible_only():
    e = sr.from_sexpr("(+ (* 4 xdot) (+ (* 1e-9 z) 2e-12))")
    rng = np.random.default_rng(0)
    env = {"xdot": rng.uniform(-1, 1, 200), "z": rng.uniform(-1, 1, 200)}
    pruned = sr.prune_small_terms(e, env, rel_tol=1e-4)
    assert sr.to_sexpr(pruned) == "(* 4 xdot)"
    # a lone term never prunes to nothing
    single = sr.from_sexpr("(* 1e-9 z)")
    assert sr.to_sexpr(sr.prune_small_terms(single, env, rel_tol=1e-4)) == sr.to_sexpr(single)


# -- constant fitting -------------------------------------------------


def test_fit_constants_linear_coefficient():
    rng = np.random.default_rng(1)
    xd = rng.uniform(-2, 2, 300)
    e = Binary("mul", Const(1.0), Var("xdot"))
    out = sr.fit_constants(e, 4.0 * xd, {"xdot": xd})
    coef = out.left.value
    assert coef == pytest.approx(4.0, abs=1e-6)


def test_fit_constants_power_law_against_grid_oracle():
    rng = np.random.default_rng(2)
    z = rng.uniform(0.1, 2.0, 400)
    target = np.abs(z) ** 1.5

    # brute-force grid confirms (a, p) = (1, 1.5) is the basin bottom
    grid_best = min(
        ((a, p) for a in np.linspace(0.5, 1.5, 21) for p in np.linspace(1.0, 2.0, 21)),
        key=lambda ap: float(np.mean((ap[0] * np.abs(z) ** ap[1] - target) ** 2)),
    )
    assert grid_best == (1.0, 1.5)

    e = Binary("mul", Const(0.7), PowConst(Unary("abs", Var("z")), 1.2))
    out = sr.fit_constants(e, target, {"z": z})
    assert out.left.value == pytest.approx(1.0, abs=1e-3)
    assert out.right.power == pytest.approx(1.5, abs=1e-3)


def test_fit_constants_without_tunables_is_identity():
    e = Var("x")
    out = sr.fit_constants(e, np.ones(20), {"x": np.ones(20)})
    assert sr.to_sexpr(out) == "x"
    assert out is not e  # still a copy


# -- model selection --------------------------------------------------


def _front(entries):
    return [
        Candidate(expr=Var("x"), sexpr="x", complexity=c, loss=l)
        for c, l in entries
    ]


def test_select_model_knee():
    front = _front([(1, 1.0), (5, 1e-6), (9, 9e-7)])
    assert sr.select_model(front).complexity == 5


def test_select_model_single_member():
    front = _front([(3, 0.5)])
    assert sr.select_model(front).complexity == 3


def test_select_model_tie_prefers_simpler():
    # power-of-two losses make both drop ratios exactly 1024
    front = _front([(1, 1.0), (3, 2.0**-10), (5, 2.0**-20)])
    assert sr.select_model(front).complexity == 3


def test_select_model_empty_raises():
    with pytest.raises(ValueError):
        sr.select_model([])


# -- GP search --------------------------------------------------------


def small_cfg(**kw):
    base = dict(population=64, generations=10, max_complexity=10, seed=0)
    base.update(kw)
    return SymregConfig(**base)


def test_discover_constant_target():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, 120)
    res = sr.discover(np.full(120, 2.5), {"x": x}, small_cfg(generations=5))
    simplest = res.front[0]
    assert simplest.complexity == 1
    assert sr.eval_expr(simplest.expr, {"x": 0.0}) == pytest.approx(2.5, rel=1e-6)
    assert simplest.loss < 1e-12


def test_discover_recovers_linear_law():
    rng = np.random.default_rng(4)
    x = rng.uniform(-2, 2, 150)
    res = sr.discover(3.0 * x, {"x": x}, small_cfg())
    best = sr.select_model(res.front)
    assert sr.structure_key(best.expr) == sr.structure_key(sr.from_sexpr("(* 3 x)"))
    coef = sr._strip_outer(best.expr)[0]
    assert coef == pytest.approx(3.0, rel=1e-6)


def test_discover_deterministic_under_seed():
    rng = np.random.default_rng(5)
    x = rng.uniform(-2, 2, 120)
    y = 2.0 * x + x * np.abs(x)
    a = sr.discover(y, {"x": x}, small_cfg(generations=6))
    b = sr.discover(y, {"x": x}, small_cfg(generations=6))
    assert [c.sexpr for c in a.front] == [c.sexpr for c in b.front]
    assert a.evaluations == b.evaluations


def test_discover_front_is_a_valid_pareto_set():
    rng = np.random.default_rng(6)
    x = rng.uniform(-2, 2, 150)
    z = rng.uniform(-2, 2, 150)
    y = 2.0 * x - 0.5 * z * np.abs(z)
    res = sr.discover(y, {"x": x, "z": z}, small_cfg(generations=8))
    front = res.front
    comps = [c.complexity for c in front]
    losses = [c.loss for c in front]
    assert comps == sorted(comps) and len(set(comps)) == len(comps)
    assert all(losses[i] > losses[i + 1] for i in range(len(losses) - 1))


def test_discover_rejects_short_data():
    with pytest.raises(ValueError):
        sr.discover(np.ones(40), {"x": np.ones(40)}, small_cfg(max_complexity=10))


def test_discover_rejects_length_mismatch():
    with pytest.raises(ValueError):
        sr.discover(np.ones(120), {"x": np.ones(119)}, small_cfg())
