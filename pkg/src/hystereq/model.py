"""Discovered two-equation models and their closed-loop replay.

A model couples a motion equation for the acceleration with a link
equation for the internal-variable rate. The motion side is either the
fixed oscillator template m*xddot + c*xdot + k*x**p + alpha*z = u with
identified parameters, or a free-form expression over (x, xdot, z, u).
The link side is always an expression zdot = g(xdot, z).

``resimulate`` integrates the coupled 3-state system with the same RK4
stage layout as the data simulator, so a model holding the true
equations reproduces the reference trajectory. ``refine`` polishes all
numeric constants of a discovered model against measured channels by
closed-loop least squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares

from . import symreg
from .simulate import (
    BLOWUP_LIMIT,
    BoucWenParams,
    Dataset,
    Excitation,
    SimulationDiverged,
    _excitation_meta,
)

MOTION_PARAMS = ("m", "c", "k", "alpha", "stiffness_power")
MOTION_VARS = ("x", "xdot", "z", "u")
LINK_VARS = ("xdot", "z")


@dataclass
class DiscoveredModel:
    """One oscillator's governing equations in explicit form."""

    motion: dict | symreg.Expr
    link: symreg.Expr
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.motion, dict):
            missing = set(MOTION_PARAMS) - set(self.motion)
            if missing:
                raise ValueError(f"motion parameters missing: {sorted(missing)}")
            if self.motion["m"] == 0:
                raise ValueError("mass must be nonzero")
        elif isinstance(self.motion, symreg.Expr):
            extra = symreg.variables(self.motion) - set(MOTION_VARS)
            if extra:
                raise ValueError(f"motion uses unknown variables: {sorted(extra)}")
        else:
            raise TypeError("motion must be a parameter dict or an expression")
        if not isinstance(self.link, symreg.Expr):
            raise TypeError("link must be an expression")
        extra = symreg.variables(self.link) - set(LINK_VARS)
        if extra:
            raise ValueError(f"link uses unknown variables: {sorted(extra)}")

    @property
    def parametric(self) -> bool:
        return isinstance(self.motion, dict)

    def acceleration(self, x, xdot, z, u):
        if self.parametric:
            p = self.motion
            x = np.asarray(x, dtype=float)
            return (u - p["c"] * xdot - p["k"] * x ** p["stiffness_power"] - p["alpha"] * z) / p["m"]
        return symreg.evaluate(self.motion, {"x": x, "xdot": xdot, "z": z, "u": u})

    def link_rate(self, xdot, z):
        return symreg.evaluate(self.link, {"xdot": xdot, "z": z})

    def equations(self) -> dict:
        """Display strings for both equations."""
        if self.parametric:
            p = self.motion
            pw = "" if p["stiffness_power"] == 1 else f"^{p['stiffness_power']:g}"
            motion = (
                f"{p['m']:.6g}*xddot + {p['c']:.6g}*xdot + "
                f"{p['k']:.6g}*x{pw} + {p['alpha']:.6g}*z = u"
            )
        else:
            motion = f"xddot = {symreg.to_infix(self.motion)}"
        return {"motion": motion, "link": f"zdot = {symreg.to_infix(self.link)}"}

    def describe(self) -> dict:
        """Serializable summary (used by meta sidecars and reports)."""
        motion = dict(self.motion) if self.parametric else symreg.to_sexpr(self.motion)
        return {
            "motion": motion,
            "link": symreg.to_sexpr(self.link),
            "provenance": dict(self.provenance),
        }


def link_expression(A: float, beta: float, gamma: float, n: float) -> symreg.Expr:
    """Canonical expression for A*v - beta*|v|*|z|^(n-1)*z - gamma*v*|z|^n."""
    v = lambda: symreg.Var("xdot")
    z = lambda: symreg.Var("z")
    az = lambda: symreg.Unary("abs", symreg.Var("z"))
    if n == 1:
        t_b = symreg.Binary("mul", symreg.Unary("abs", v()), z())
        t_g = symreg.Binary("mul", v(), az())
    else:
        t_b = symreg.Binary(
            "mul",
            symreg.Unary("abs", v()),
            symreg.Binary("mul", symreg.PowConst(az(), n - 1.0), z()),
        )
        t_g = symreg.Binary("mul", v(), symreg.PowConst(az(), float(n)))
    e = symreg.Binary(
        "add",
        symreg.Binary("mul", symreg.Const(A), v()),
        symreg.Binary(
            "add",
            symreg.Binary("mul", symreg.Const(-beta), t_b),
            symreg.Binary("mul", symreg.Const(-gamma), t_g),
        ),
    )
    return symreg.canonicalize(e)


def from_bouc_wen(params: BoucWenParams) -> DiscoveredModel:
    """Model holding the reference equations (round-trip checks, baselines)."""
    motion = {
        "m": params.m,
        "c": params.c,
        "k": params.k,
        "alpha": params.alpha,
        "stiffness_power": params.stiffness_power,
    }
    link = link_expression(params.A, params.beta, params.gamma, params.n)
    return DiscoveredModel(motion=motion, link=link, provenance={"source": "reference"})


# -- scalar compilation ------------------------------------------------


def compile_expr(e: symreg.Expr, names: tuple):
    """Compile a tree to a scalar function of one positional tuple.

    The integrator calls the result per stage, so closures beat
    dict-environment evaluation by an order of magnitude.
    """
    index = {n: i for i, n in enumerate(names)}

    def build(node):
        if isinstance(node, symreg.Const):
            val = float(node.value)
            return lambda a: val
        if isinstance(node, symreg.Var):
            if node.name not in index:
                raise ValueError(f"unbound variable {node.name!r}")
            i = index[node.name]
            return lambda a: a[i]
        if isinstance(node, symreg.Unary):
            ch = build(node.child)
            if node.op == "neg":
                return lambda a: -ch(a)
            if node.op == "abs":
                return lambda a: abs(ch(a))

            def sgn(a, ch=ch):
                t = ch(a)
                return 0.0 if t == 0.0 else math.copysign(1.0, t)

            return sgn
        if isinstance(node, symreg.Binary):
            lf, rf = build(node.left), build(node.right)
            if node.op == "add":
                return lambda a: lf(a) + rf(a)
            if node.op == "sub":
                return lambda a: lf(a) - rf(a)
            return lambda a: lf(a) * rf(a)
        if isinstance(node, symreg.PowConst):
            ch = build(node.child)
            pw = float(node.power)
            if pw == int(pw):
                ip = int(pw)
                return lambda a: ch(a) ** ip

            def powf(a, ch=ch, pw=pw):
                b = ch(a)
                # fractional power of a negative base has no real value
                return b ** pw if b >= 0.0 else math.nan

            return powf
        raise TypeError(type(node))

    return build(e)


def _motion_fn(model: DiscoveredModel):
    """Scalar acceleration function f(x, v, z, u)."""
    if model.parametric:
        p = model.motion
        m, c, k, alpha = p["m"], p["c"], p["k"], p["alpha"]
        sp = p["stiffness_power"]
        return lambda x, v, z, u: (u - c * v - k * x ** sp - alpha * z) / m
    f = compile_expr(model.motion, MOTION_VARS)
    return lambda x, v, z, u: f((x, v, z, u))


# -- closed-loop integration -------------------------------------------


def _rk4(f, g, u_grid, u_half, dt, t0, x0, v0, z0):
    """RK4 over the 3-state system; same stage layout as the simulator."""
    N = len(u_grid)
    xs = np.empty(N)
    vs = np.empty(N)
    zs = np.empty(N)
    x, v, z = float(x0), float(v0), float(z0)
    xs[0], vs[0], zs[0] = x, v, z

    half = 0.5 * dt
    sixth = dt / 6.0
    for j in range(N - 1):
        u0 = u_grid[j]
        um = u_half[j]
        u1 = u_grid[j + 1]

        a1 = f(x, v, z, u0)
        s1 = g((v, z))

        x2 = x + half * v
        v2 = v + half * a1
        z2 = z + half * s1
        a2 = f(x2, v2, z2, um)
        s2 = g((v2, z2))

        x3 = x + half * v2
        v3 = v + half * a2
        z3 = z + half * s2
        a3 = f(x3, v3, z3, um)
        s3 = g((v3, z3))

        x4 = x + dt * v3
        v4 = v + dt * a3
        z4 = z + dt * s3
        a4 = f(x4, v4, z4, u1)
        s4 = g((v4, z4))

        x = x + sixth * (v + 2.0 * (v2 + v3) + v4)
        v = v + sixth * (a1 + 2.0 * (a2 + a3) + a4)
        z = z + sixth * (s1 + 2.0 * (s2 + s3) + s4)

        if not (
            math.isfinite(x)
            and math.isfinite(v)
            and math.isfinite(z)
            and abs(x) < BLOWUP_LIMIT
            and abs(z) < BLOWUP_LIMIT
        ):
            raise SimulationDiverged(t0 + dt * (j + 1))

        xs[j + 1], vs[j + 1], zs[j + 1] = x, v, z

    return xs, vs, zs


def resimulate(
    model: DiscoveredModel,
    excitation: Excitation,
    x0: float = 0.0,
    xdot0: float = 0.0,
    z0: float = 0.0,
) -> Dataset:
    """Closed-loop replay of a model under a known drive.

    This is the honest test of a discovery: nothing is teacher-forced,
    the learned link equation produces z as the integration runs.
    Raises :class:`SimulationDiverged` (carrying the blow-up time) if
    the state leaves +/- 1e12.
    """
    N = excitation.n_samples
    if N < 2:
        raise ValueError("need at least two samples")
    dt = 1.0 / excitation.sample_rate
    t_grid = excitation.times
    u_grid = np.asarray(excitation.eval(t_grid), dtype=float)
    u_half = np.asarray(excitation.eval(t_grid[:-1] + 0.5 * dt), dtype=float)

    f = _motion_fn(model)
    g = compile_expr(model.link, LINK_VARS)
    xs, vs, zs = _rk4(f, g, u_grid, u_half, dt, 0.0, x0, xdot0, z0)

    xddot = np.asarray(model.acceleration(xs, vs, zs, u_grid), dtype=float)
    meta = {
        "model": model.describe(),
        "excitation": _excitation_meta(excitation),
        "initial_conditions": {"x0": float(x0), "xdot0": float(xdot0), "z0": float(z0)},
        "noise": None,
        "resimulated": True,
    }
    return Dataset(t=t_grid, u=u_grid, x=xs, xdot=vs, xddot=xddot, z=zs, meta=meta)


def resimulate_record(
    model: DiscoveredModel,
    ds: Dataset,
    x0: float | None = None,
    xdot0: float | None = None,
    z0: float | None = None,
) -> Dataset:
    """Closed-loop replay against a measured record's drive.

    The input has no closed form, so half-step values come from a cubic
    spline through the samples. Initial conditions default to the
    record's first samples (z0 to the record's meta, else 0).
    """
    if len(ds) < 2:
        raise ValueError("need at least two samples")
    if x0 is None:
        x0 = float(ds.x[0])
    if xdot0 is None:
        xdot0 = float(ds.xdot[0])
    if z0 is None:
        z0 = float(ds.meta.get("initial_conditions", {}).get("z0", 0.0))
    f = _motion_fn(model)
    g = compile_expr(model.link, LINK_VARS)
    xs, vs, zs = _rk4(
        f, g, ds.u, _half_u(ds), ds.dt, float(ds.t[0]), x0, xdot0, z0
    )
    xddot = np.asarray(model.acceleration(xs, vs, zs, ds.u), dtype=float)
    meta = {
        "model": model.describe(),
        "excitation": ds.meta.get("excitation", {"kind": "from_record"}),
        "initial_conditions": {"x0": float(x0), "xdot0": float(xdot0), "z0": float(z0)},
        "noise": None,
        "resimulated": True,
    }
    return Dataset(t=ds.t.copy(), u=ds.u.copy(), x=xs, xdot=vs, xddot=xddot, z=zs, meta=meta)


# -- constant refinement -----------------------------------------------


def _half_u(ds: Dataset) -> np.ndarray:
    # measured drive has no closed form; quartic-accurate midpoints from a spline
    spl = CubicSpline(ds.t, ds.u)
    return spl(ds.t[:-1] + 0.5 * ds.dt)


def _gauge_consts(motion: symreg.Expr) -> set:
    """ids of constants to freeze so the z scale stays pinned.

    With z unobserved, scaling z down and its motion coefficient up is
    an exact symmetry (for n = 1 links) or a near one; the coefficient
    of the bare-z motion term is therefore held at its incoming value.
    """
    frozen = set()
    for term in symreg._terms_of(motion):
        if (
            isinstance(term, symreg.Binary)
            and term.op == "mul"
            and isinstance(term.left, symreg.Const)
            and isinstance(term.right, symreg.Var)
            and term.right.name == "z"
        ):
            frozen.add(id(term.left))
    return frozen


def refine(
    model: DiscoveredModel,
    datasets,
    observed: tuple = ("x", "xdot", "xddot"),
    max_nfev: int = 200,
):
    """Polish every numeric constant by closed-loop least squares.

    All constants of both equations (parametric motion: m, c, k with
    alpha held fixed as the z-scale gauge) are fit jointly so that
    resimulating each record from its own initial state reproduces the
    measured channels. Returns (refined model, info dict).
    """
    datasets = list(datasets)
    if not datasets:
        raise ValueError("need at least one record")
    exp_range = (0.05, 8.0)

    # one shared working tree per equation; residuals write theta into it
    # and recompile, so no cross-copy bookkeeping is needed
    link_w = symreg.copy_expr(model.link)
    link_params = symreg._collect_params(link_w)
    if model.parametric:
        motion_w = dict(model.motion)
        head = [motion_w["m"], motion_w["c"], motion_w["k"]]
        motion_params = []
    else:
        motion_w = symreg.copy_expr(model.motion)
        frozen = _gauge_consts(motion_w)
        motion_params = [
            (n, a) for n, a in symreg._collect_params(motion_w) if id(n) not in frozen
        ]
        head = list(symreg._get_params(motion_params))
    n_motion = len(head)
    theta0 = np.array(head + list(symreg._get_params(link_params)), dtype=float)

    prepared = []
    for ds in datasets:
        ic = ds.meta.get("initial_conditions", {})
        prepared.append(
            {
                "ds": ds,
                "u_half": _half_u(ds),
                "z0": float(ic.get("z0", 0.0)),
                "scale": {
                    ch: max(float(np.std(getattr(ds, ch))), 1e-12) for ch in observed
                },
            }
        )

    def apply(theta):
        if model.parametric:
            motion_w["m"], motion_w["c"], motion_w["k"] = (float(v) for v in theta[:3])
        else:
            symreg._set_params(motion_params, theta[:n_motion], exp_range)
        symreg._set_params(link_params, theta[n_motion:], exp_range)

    work = DiscoveredModel(
        motion=motion_w, link=link_w, provenance=dict(model.provenance)
    )

    def residuals(theta):
        apply(theta)
        f = _motion_fn(work)
        g = compile_expr(link_w, LINK_VARS)
        out = []
        for p in prepared:
            ds = p["ds"]
            try:
                xs, vs, zs = _rk4(
                    f, g, ds.u, p["u_half"], ds.dt, float(ds.t[0]),
                    float(ds.x[0]), float(ds.xdot[0]), p["z0"],
                )
                sim = {"x": xs, "xdot": vs}
                if "xddot" in observed:
                    sim["xddot"] = np.asarray(
                        work.acceleration(xs, vs, zs, ds.u), dtype=float
                    )
                for ch in observed:
                    out.append((sim[ch] - getattr(ds, ch)) / p["scale"][ch])
            except SimulationDiverged:
                out.append(np.full(len(ds) * len(observed), 1e3))
        return np.concatenate(out)

    initial_cost = float(0.5 * np.sum(residuals(theta0) ** 2))
    sol = least_squares(
        residuals, theta0, method="lm", max_nfev=max_nfev, xtol=1e-15, ftol=1e-15
    )
    apply(sol.x)
    refined = DiscoveredModel(
        motion=dict(motion_w) if model.parametric else symreg.canonicalize(motion_w),
        link=symreg.canonicalize(link_w),
        provenance=dict(model.provenance),
    )
    info = {
        "cost": float(sol.cost),
        "initial_cost": initial_cost,
        "nfev": int(sol.nfev),
        "status": int(sol.status),
        "n_residuals": int(sum(len(p["ds"]) for p in prepared) * len(observed)),
    }
    return refined, info
