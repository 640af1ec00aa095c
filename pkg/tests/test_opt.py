"""Optimizers: first-step algebra, convergence, and cross-checks."""

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from hystereq.opt import Adam, nelder_mead


def test_adam_first_step_closed_form():
    """After one step the bias correction cancels: params move by
    lr * g / (|g| + eps) per coordinate."""
    lr, eps = 0.01, 1e-8
    params = np.array([1.0, -2.0, 0.5])
    grad = np.array([0.3, -0.7, 0.0])
    opt = Adam(3, lr=lr, eps=eps)
    out = opt.step(params, grad)
    expected = np.array([1.0, -2.0, 0.5]) - lr * grad / (np.abs(grad) + eps)
    assert np.allclose(out, expected, rtol=0, atol=1e-15)
    assert out is params  # in-place update


def test_adam_matches_reference_recurrence():
    rng = np.random.default_rng(0)
    params = rng.normal(size=4)
    ref = params.copy()
    opt = Adam(4, lr=0.05, beta1=0.9, beta2=0.999, eps=1e-8)
    m = np.zeros(4)
    v = np.zeros(4)
    for t in range(1, 8):
        g = rng.normal(size=4)
        opt.step(params, g)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mhat = m / (1.0 - 0.9**t)
        vhat = v / (1.0 - 0.999**t)
        ref -= 0.05 * mhat / (np.sqrt(vhat) + 1e-8)
        assert np.allclose(params, ref, rtol=1e-12)


def test_adam_converges_on_quadratic():
    target = np.array([3.0, -1.5])
    params = np.zeros(2)
    opt = Adam(2, lr=0.1)
    for _ in range(600):
        opt.step(params, 2.0 * (params - target))
    assert np.allclose(params, target, atol=1e-3)


def test_adam_per_coordinate_step_sizes():
    params = np.array([1.0, 1.0])
    opt = Adam(2, lr=np.array([0.1, 0.0]))
    for _ in range(5):
        opt.step(params, np.array([1.0, 1.0]))
    assert params[0] < 1.0
    assert params[1] == 1.0


def test_nelder_mead_quadratic_bowl():
    f = lambda x: float((x[0] - 2.0) ** 2 + (x[1] + 1.0) ** 2)
    x, fx, it = nelder_mead(f, np.array([0.0, 0.0]), max_iter=500)
    assert np.allclose(x, [2.0, -1.0], atol=1e-5)
    assert fx < 1e-10
    assert 0 < it <= 500


def test_nelder_mead_rosenbrock():
    f = lambda x: float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2)
    x, fx, _ = nelder_mead(f, np.array([-1.2, 1.0]), max_iter=2000)
    assert fx < 1e-8
    assert np.allclose(x, [1.0, 1.0], atol=1e-3)


def test_nelder_mead_comparable_to_scipy():
    f = lambda x: float(np.sum((x - np.array([0.3, -0.8, 1.7])) ** 2) + 0.1 * np.sum(x**4))
    x0 = np.array([1.0, 1.0, 1.0])
    ours = nelder_mead(f, x0, max_iter=2000)
    ref = scipy_minimize(f, x0, method="Nelder-Mead", options={"maxiter": 2000, "xatol": 1e-10, "fatol": 1e-12})
    assert ours[1] <= ref.fun + 1e-8


def test_nelder_mead_empty_and_deterministic():
    f = lambda x: 7.0
    x, fx, it = nelder_mead(f, np.array([]))
    assert len(x) == 0 and fx == 7.0 and it == 0

    g = lambda x: float((x[0] - 3.0) ** 2)
    a = nelder_mead(g, np.array([0.0]))
    b = nelder_mead(g, np.array([0.0]))
    assert np.array_equal(a[0], b[0]) and a[1] == b[1] and a[2] == b[2]
