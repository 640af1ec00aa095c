"""Simulator, excitations, and noise injection.

Trajectory accuracy is checked against independent references: the
closed-form damped-oscillator solution and a high-accuracy adaptive
integrator, never against this module's own output.
"""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.signal import chirp

from hystereq import simulate as sim
from hystereq.simulate import (
    BoucWenParams,
    Dataset,
    Multisine,
    SimulationDiverged,
    SineSweep,
    Sinusoid,
    add_noise,
    excitation_from_spec,
)

COMPLEX = dict(
    m=1.0, c=0.8, k=0.5, alpha=1.0, A=4.0, beta=5.0, gamma=-4.0, n=1.5,
    stiffness_power=3,
)


def test_linear_free_decay_matches_closed_form():
    """alpha = 0 and A = 0 reduce to m x'' + c x' + k x = 0."""
    m, c, k = 1.0, 0.4, 9.0
    params = BoucWenParams(m=m, c=c, k=k, alpha=0.0, A=0.0, beta=0.0, gamma=0.0, n=1.0)
    exc = Sinusoid(duration=2.0, sample_rate=1000.0, amplitude=0.0, omega=1.0)
    ds = sim.simulate(params, exc, x0=1.0, xdot0=0.0)

    w0 = math.sqrt(k / m)
    zeta = c / (2.0 * math.sqrt(k * m))
    wd = w0 * math.sqrt(1.0 - zeta * zeta)
    envelope = np.exp(-zeta * w0 * ds.t)
    x_ref = envelope * (np.cos(wd * ds.t) + (zeta * w0 / wd) * np.sin(wd * ds.t))
    assert np.max(np.abs(ds.x - x_ref)) < 1e-8
    assert np.allclose(ds.z, 0.0)


def test_trajectory_matches_adaptive_integrator():
    """Full coupled system vs solve_ivp at tight tolerance."""
    params = BoucWenParams(**COMPLEX)
    exc = Sinusoid(duration=2.0, sample_rate=100.0, amplitude=1.0, omega=2.0)
    ds = sim.simulate(params, exc, x0=0.3, xdot0=-0.2)

    def rhs(t, y):
        x, v, z = y
        u = math.sin(2.0 * t)
        a = (u - 0.8 * v - 0.5 * x**3 - z) / 1.0
        s = 4.0 * v - 5.0 * abs(v) * abs(z) ** 0.5 * z + 4.0 * v * abs(z) ** 1.5
        return [v, a, s]

    ref = solve_ivp(
        rhs, (0.0, ds.t[-1]), [0.3, -0.2, 0.0], t_eval=ds.t,
        rtol=1e-11, atol=1e-12, max_step=0.01,
    )
    assert ref.success
    # the |z|^0.5 kink at z = 0 caps the step error; ~6 shared digits
    scale = np.max(np.abs(ref.y[0]))
    assert np.max(np.abs(ds.x - ref.y[0])) < 2e-6 * scale
    assert np.max(np.abs(ds.z - ref.y[2])) < 5e-6 * np.max(np.abs(ref.y[2]))


def test_rk4_error_scales_as_fourth_order():
    """Halving dt divides the error by ~16. Starting from rest keeps z
    off its sign change for the first second, where the fractional link
    is not C4 and classical order would not apply."""
    params = BoucWenParams(**COMPLEX)

    def x_at(rate):
        exc = Sinusoid(duration=1.0, sample_rate=rate, amplitude=1.0, omega=2.0)
        return sim.simulate(params, exc).x

    coarse, half, ref = x_at(100.0), x_at(200.0), x_at(1600.0)
    err_coarse = np.max(np.abs(coarse - ref[::16]))
    err_half = np.max(np.abs(half - ref[::8]))
    assert 12.0 <= err_coarse / err_half <= 20.0


def test_rest_stays_at_rest():
    params = BoucWenParams(**COMPLEX)
    exc = Sinusoid(duration=1.0, sample_rate=100.0, amplitude=0.0, omega=1.0)
    ds = sim.simulate(params, exc)
    assert np.all(ds.x == 0.0) and np.all(ds.xdot == 0.0) and np.all(ds.z == 0.0)


def test_divergence_raises_with_blowup_time():
    params = BoucWenParams(m=1.0, c=-50.0, k=100.0, alpha=0.0, A=0.0, beta=0.0, gamma=0.0, n=1.0)
    exc = Sinusoid(duration=3.0, sample_rate=200.0, amplitude=0.0, omega=1.0)
    with pytest.raises(SimulationDiverged) as err:
        sim.simulate(params, exc, x0=1.0)
    assert 0.0 < err.value.t < 3.0


def test_param_validation():
    with pytest.raises(ValueError):
        BoucWenParams(m=0.0, c=1.0, k=1.0, alpha=0.0, A=1.0, beta=1.0, gamma=0.0, n=1.0)
    with pytest.raises(ValueError):
        BoucWenParams(m=1.0, c=1.0, k=1.0, alpha=0.0, A=1.0, beta=1.0, gamma=0.0, n=-1.0)
    with pytest.raises(ValueError):
        BoucWenParams(m=1.0, c=1.0, k=1.0, alpha=0.0, A=1.0, beta=1.0, gamma=0.0, n=1.0,
                      stiffness_power=2)


# -- excitations ------------------------------------------------------


def test_sinusoid_values():
    exc = Sinusoid(duration=1.0, sample_rate=50.0, amplitude=2.5, omega=3.0)
    assert np.allclose(exc.eval(exc.times), 2.5 * np.sin(3.0 * exc.times))


def test_sine_sweep_matches_scipy_chirp():
    exc = SineSweep(duration=4.0, sample_rate=500.0, amplitude=3.0, f_start=2.0, f_end=11.0)
    t = exc.times
    ref = 3.0 * chirp(t, f0=2.0, t1=4.0, f1=11.0, method="linear", phi=-90.0)
    assert np.allclose(exc.eval(t), ref, atol=1e-9)


def test_multisine_rms_and_band():
    exc = Multisine(duration=4.0, sample_rate=800.0, amplitude=4.0, f_min=5.0, f_max=150.0, seed=3)
    u = exc.eval(exc.times)
    rms = math.sqrt(float(np.mean(u * u)))
    assert rms == pytest.approx(4.0, rel=0.15)

    spectrum = np.abs(np.fft.rfft(u))
    freqs = np.fft.rfftfreq(len(u), 1.0 / 800.0)
    out_of_band = spectrum[(freqs < 4.5) | (freqs > 150.5)]
    assert np.max(out_of_band) < 1e-6 * np.max(spectrum)


def test_multisine_seed_determinism():
    mk = lambda s: Multisine(duration=1.0, sample_rate=100.0, f_min=2.0, f_max=20.0, seed=s)
    assert np.array_equal(mk(5).eval(mk(5).times), mk(5).eval(mk(5).times))
    assert not np.array_equal(mk(5).eval(mk(5).times), mk(6).eval(mk(6).times))


def test_multisine_rejects_band_above_nyquist():
    with pytest.raises(ValueError):
        Multisine(duration=1.0, sample_rate=100.0, f_min=5.0, f_max=60.0)


def test_fractional_sample_count_rejected():
    with pytest.raises(ValueError):
        Sinusoid(duration=1.0, sample_rate=30.7).n_samples


def test_excitation_from_spec_round_trip():
    exc = SineSweep(duration=2.0, sample_rate=250.0, amplitude=40.0, f_start=20.0, f_end=50.0)
    params = BoucWenParams(m=2.0, c=10.0, k=5e4, alpha=1.0, A=5e4, beta=800.0, gamma=-1100.0, n=1.0)
    ds = sim.simulate(params, exc)
    rebuilt = excitation_from_spec(dict(ds.meta["excitation"]))
    assert isinstance(rebuilt, SineSweep)
    assert np.array_equal(rebuilt.eval(rebuilt.times), ds.u)


def test_excitation_from_spec_rejects_unknowns():
    with pytest.raises(ValueError):
        excitation_from_spec({"kind": "square", "duration": 1.0, "sample_rate": 10.0})
    with pytest.raises(ValueError):
        excitation_from_spec(
            {"kind": "sinusoid", "duration": 1.0, "sample_rate": 10.0, "phase": 0.3}
        )


# -- noise ------------------------------------------------------------


def test_add_noise_realized_snr():
    params = BoucWenParams(**COMPLEX)
    exc = Sinusoid(duration=60.0, sample_rate=400.0, amplitude=1.0, omega=2.0)
    ds = sim.simulate(params, exc, x0=0.3)
    noisy = add_noise(ds, 20.0, seed=1)
    for name in ("x", "xdot", "xddot"):
        clean = getattr(ds, name)
        resid = getattr(noisy, name) - clean
        realized = 10.0 * math.log10(float(np.mean(clean**2) / np.mean(resid**2)))
        assert realized == pytest.approx(20.0, abs=0.5)
    assert np.array_equal(noisy.u, ds.u)
    assert np.array_equal(noisy.z, ds.z)
    assert noisy.meta["noise"] == {"snr_db": 20.0, "seed": 1}


def test_add_noise_inf_is_identity():
    params = BoucWenParams(**COMPLEX)
    exc = Sinusoid(duration=1.0, sample_rate=100.0, amplitude=1.0, omega=2.0)
    ds = sim.simulate(params, exc)
    out = add_noise(ds, math.inf, seed=9)
    assert np.array_equal(out.x, ds.x) and np.array_equal(out.xddot, ds.xddot)
    assert out.meta["noise"] is None


def test_add_noise_deterministic_per_seed():
    params = BoucWenParams(**COMPLEX)
    exc = Sinusoid(duration=1.0, sample_rate=100.0, amplitude=1.0, omega=2.0)
    ds = sim.simulate(params, exc, x0=0.1)
    a, b = add_noise(ds, 25.0, seed=4), add_noise(ds, 25.0, seed=4)
    assert np.array_equal(a.x, b.x)
    assert not np.array_equal(a.x, add_noise(ds, 25.0, seed=5).x)


# -- dataset container ------------------------------------------------


def test_dataset_rejects_ragged_and_nonuniform():
    t = np.linspace(0.0, 1.0, 11)
    ones = np.ones(11)
    with pytest.raises(ValueError):
        Dataset(t=t, u=ones, x=ones, xdot=ones[:-1], xddot=ones)
    warped = t.copy()
    warped[5] += 1e-3
    with pytest.raises(ValueError):
        Dataset(t=warped, u=ones, x=ones, xdot=ones, xddot=ones)


def test_dataset_window_and_properties():
    params = BoucWenParams(**COMPLEX)
    exc = Sinusoid(duration=1.0, sample_rate=100.0, amplitude=1.0, omega=2.0)
    ds = sim.simulate(params, exc, x0=0.2)
    assert ds.dt == pytest.approx(0.01)
    assert ds.sample_rate == pytest.approx(100.0)
    win = ds.window(10, 40)
    assert len(win) == 30
    assert np.array_equal(win.x, ds.x[10:40])
    assert np.array_equal(win.z, ds.z[10:40])
    assert win.meta["window"] == [10, 40]
    win.x[0] = 99.0  # slices are copies, the source stays intact
    assert ds.x[10] != 99.0
