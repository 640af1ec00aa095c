"""Sparse regression baseline over a fixed candidate library.

The library enumerates integer-power absolute-value terms of the
hysteretic rate (plus a linear motion library), and coefficients are
fit by sequentially thresholded least squares: ridge-regularized
least squares on the active set, zeroing of small coefficients, and
repeat until the active set stops changing. Thresholding happens in
scale-free units (coefficient times column scale over target scale),
so a single dimensionless threshold covers wildly different columns.

Fits convert to the expression-tree form used by the symbolic
regression module, so downstream simulation and reporting treat both
model families identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import symreg

__all__ = [
    "SparseFit",
    "build_library",
    "select_threshold",
    "stlsq",
    "to_expression",
]

_INT_POWERS = (1, 2, 3, 4, 5)


def _motion_features():
    feats = [
        ("x", "x"),
        ("x^3", "(* x (* x x))"),
        ("xdot", "xdot"),
        ("z", "z"),
        ("u", "u"),
    ]
    return feats


def _hysteretic_features():
    feats = [("xdot", "xdot")]
    for p in _INT_POWERS:
        feats.append((f"xdot*|z|^{p}", f"(* xdot (pow (abs z) {p}))"))
    for p in _INT_POWERS:
        if p == 1:
            feats.append(("|xdot|*z", "(* (abs xdot) z)"))
        else:
            feats.append(
                (f"|xdot|*|z|^{p - 1}*z", f"(* (abs xdot) (* (pow (abs z) {p - 1}) z))")
            )
    for p in _INT_POWERS:
        feats.append((f"z*|z|^{p}", f"(* z (pow (abs z) {p}))"))
    return feats


_LIBRARIES = {
    "motion_cubic": _motion_features,
    "hysteretic_abs": _hysteretic_features,
}


def _channel(data, name):
    if isinstance(data, dict):
        if name not in data:
            raise ValueError(f"library needs channel {name!r}")
        return np.asarray(data[name], dtype=float)
    v = getattr(data, name, None)
    if v is None:
        raise ValueError(f"library needs channel {name!r}")
    return np.asarray(v, dtype=float)


def build_library(kind: str, data):
    """Evaluate a named library columnwise; returns (matrix, names).

    `data` is a mapping or object providing the channels each feature
    references (x, xdot, z, u as applicable).
    """
    if kind not in _LIBRARIES:
        raise ValueError(f"unknown library kind {kind!r}")
    feats = [(name, symreg.from_sexpr(s)) for name, s in _LIBRARIES[kind]()]
    needed = set()
    for _, e in feats:
        needed |= symreg.variables(e)
    env = {name: _channel(data, name) for name in sorted(needed)}
    cols = []
    names = []
    for name, e in feats:
        cols.append(np.asarray(symreg.evaluate(e, env), dtype=float))
        names.append(name)
    return np.column_stack(cols), names


@dataclass
class SparseFit:
    """STLSQ result; inactive features carry an exact zero."""

    names: list
    coef: np.ndarray
    active: np.ndarray
    mse: float
    threshold: float

    def predict(self, H: np.ndarray) -> np.ndarray:
        return H @ self.coef

    def terms(self) -> dict:
        return {n: float(c) for n, c, a in zip(self.names, self.coef, self.active) if a}


def stlsq(
    H: np.ndarray,
    y,
    names,
    threshold: float,
    ridge: float = 1e-8,
    max_iter: int = 20,
) -> SparseFit:
    """Sequentially thresholded least squares.

    Each pass solves ridge least squares on the active columns in
    scale-free units and drops coefficients below `threshold`; the
    procedure is a fixed point once the active set stops changing.
    Thresholding everything away yields the empty model with residual
    equal to the target variance.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = H.shape
    if k < 1:
        raise ValueError("need at least one library column")
    if n <= k:
        raise ValueError("need more samples than library columns")

    s_col = H.std(axis=0)
    s_col[s_col == 0.0] = 1.0
    s_y = float(y.std()) or 1.0
    Hs = H / s_col
    ys = y / s_y

    active = np.ones(k, dtype=bool)
    w = np.zeros(k)
    for _ in range(max_iter):
        if not active.any():
            break
        A = Hs[:, active]
        G = A.T @ A + ridge * np.eye(A.shape[1])
        w_act = np.linalg.solve(G, A.T @ ys)
        w = np.zeros(k)
        w[active] = w_act
        new_active = np.abs(w) >= threshold
        w[~new_active] = 0.0
        if (new_active == active).all():
            break
        active = new_active

    coef = w * s_y / s_col
    coef[~active] = 0.0
    if active.any():
        resid = H[:, active] @ coef[active] - y
        mse = float(np.mean(resid * resid))
    else:
        mse = float(np.var(y))
    return SparseFit(
        names=list(names),
        coef=coef,
        active=active,
        mse=mse,
        threshold=float(threshold),
    )


def select_threshold(
    H: np.ndarray,
    y,
    names,
    scorer=None,
    thresholds=None,
    ridge: float = 1e-8,
    holdout: float = 0.2,
):
    """Sweep thresholds, score each candidate fit, refit the winner on
    all samples.

    Candidate fits use the leading 1 - holdout fraction of the samples;
    `scorer(fit)` returns a lower-is-better number for the held-out
    tail (the caller typically forward-simulates there). Without a
    scorer the tail's one-step residual MSE is used. Returns
    (best fit refit on everything, list of (threshold, score)).
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    if thresholds is None:
        thresholds = np.logspace(-3.0, 0.0, 10)
    n = len(y)
    split = max(int(n * (1.0 - holdout)), H.shape[1] + 1)
    H_head, y_head = H[:split], y[:split]
    H_tail, y_tail = H[split:], y[split:]

    if scorer is None:

        def scorer(fit):
            if not len(y_tail):
                return fit.mse
            r = fit.predict(H_tail) - y_tail
            return float(np.mean(r * r))

    swept = []
    best = None
    for th in thresholds:
        fit = stlsq(H_head, y_head, names, th, ridge=ridge)
        score = float(scorer(fit))
        swept.append((float(th), score))
        if not np.isfinite(score):
            continue
        if best is None or score < best[0]:
            best = (score, float(th))
    if best is None:
        best = (float("inf"), float(thresholds[0]))
    final = stlsq(H, y, names, best[1], ridge=ridge)
    return final, swept


def to_expression(fit: SparseFit, kind: str) -> symreg.Expr:
    """Render an STLSQ fit as a canonical expression tree."""
    feats = _LIBRARIES[kind]()
    by_name = dict(feats)
    terms = []
    for name, c, a in zip(fit.names, fit.coef, fit.active):
        if not a or c == 0.0:
            continue
        terms.append(
            symreg.Binary("mul", symreg.Const(float(c)), symreg.from_sexpr(by_name[name]))
        )
    if not terms:
        return symreg.Const(0.0)
    node = terms[0]
    for t in terms[1:]:
        node = symreg.Binary("add", node, t)
    return symreg.canonicalize(node)
