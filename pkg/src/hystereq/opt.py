"""Small hand-rolled optimizers used across the package.

Adam drives the tape-based trajectory fits; Nelder-Mead polishes
symbolic-regression constants. Both are deterministic given their
inputs.
"""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam with bias correction and optional per-coordinate step sizes.

    Parameters
    ----------
    n : int
        Number of parameters.
    lr : float or ndarray
        Scalar step size, or one step size per coordinate.
    """

    def __init__(self, n, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = np.asarray(lr, dtype=np.float64)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params, grad):
        """Advance params in place by one update; returns params."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m += (1.0 - b1) * (grad - self.m)
        self.v += (1.0 - b2) * (grad * grad - self.v)
        mhat = self.m / (1.0 - b1 ** self.t)
        vhat = self.v / (1.0 - b2 ** self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return params


def nelder_mead(f, x0, max_iter=200, init_step=0.1, ftol=1e-12, xtol=1e-12):
    """Minimize ``f`` from ``x0`` with the Nelder-Mead simplex method.

    Standard coefficients (reflection 1, expansion 2, contraction 0.5,
    shrink 0.5). The initial simplex perturbs each coordinate by
    ``init_step`` relative to its magnitude (absolute for zeros).

    Returns
    -------
    (x_best, f_best, n_iter)
    """
    x0 = np.asarray(x0, dtype=np.float64)
    n = len(x0)
    if n == 0:
        return x0, float(f(x0)), 0

    simplex = np.empty((n + 1, n))
    simplex[0] = x0
    for i in range(n):
        p = x0.copy()
        p[i] += init_step * abs(p[i]) if p[i] != 0.0 else init_step
        simplex[i + 1] = p
    fvals = np.array([float(f(p)) for p in simplex])

    it = 0
    while it < max_iter:
        order = np.argsort(fvals, kind="stable")
        simplex = simplex[order]
        fvals = fvals[order]
        if (
            abs(fvals[-1] - fvals[0]) <= ftol
            and np.max(np.abs(simplex[1:] - simplex[0])) <= xtol
        ):
            break
        it += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + (centroid - worst)
        fr = float(f(xr))
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = float(f(xe))
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = centroid + 0.5 * (xr - centroid)
            else:
                xc = centroid + 0.5 * (worst - centroid)
            fc = float(f(xc))
            if fc < min(fr, fvals[-1]):
                simplex[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
                    fvals[i] = float(f(simplex[i]))

    best = int(np.argmin(fvals))
    return simplex[best].copy(), float(fvals[best]), it
