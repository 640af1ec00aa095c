"""Synthetic data generation for hysteretic single-mass oscillators.

The governing equations are

    m xddot + c xdot + k x**p + alpha z = u(t)
    zdot = A xdot - beta |xdot| |z|**(n-1) z - gamma xdot |z|**n

with p in {1, 3} and a (possibly fractional) exponent n > 0. The
internal state z is integrated alongside x and xdot with a fixed-step
classical Runge-Kutta scheme; the acceleration channel is evaluated
algebraically from the motion equation, never by differencing.

Excitations are closed-form signal generators so that intermediate
Runge-Kutta stages sample the exact input rather than an interpolant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

__all__ = [
    "BoucWenParams",
    "Dataset",
    "Excitation",
    "FromFile",
    "Multisine",
    "SimulationDiverged",
    "SineSweep",
    "Sinusoid",
    "add_noise",
    "simulate",
]

BLOWUP_LIMIT = 1e12


class SimulationDiverged(RuntimeError):
    """State left the finite range during integration."""

    def __init__(self, t):
        self.t = t
        super().__init__(f"state became non-finite near t = {t:.6g} s")


@dataclass(frozen=True)
class BoucWenParams:
    """Parameters of the oscillator and its hysteretic link.

    ``stiffness_power`` selects the restoring-force law: 1 for a linear
    spring, 3 for a cubic one.
    """

    m: float
    c: float
    k: float
    alpha: float
    A: float
    beta: float
    gamma: float
    n: float
    stiffness_power: int = 1

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("mass must be positive")
        if self.n <= 0:
            raise ValueError("link exponent n must be positive")
        if self.stiffness_power not in (1, 3):
            raise ValueError("stiffness_power must be 1 or 3")


# -- excitations ------------------------------------------------------


@dataclass
class Excitation:
    """Base class: a closed-form input u(t) over [0, duration)."""

    duration: float
    sample_rate: float

    kind = "none"

    @property
    def n_samples(self) -> int:
        raw = self.duration * self.sample_rate
        n = round(raw)
        if abs(raw - n) > 1e-9:
            raise ValueError(
                f"duration * sample_rate = {raw} is not an integer sample count"
            )
        return n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate

    def eval(self, t):
        raise NotImplementedError


@dataclass
class Sinusoid(Excitation):
    """u(t) = amplitude * sin(omega t), omega in rad/s."""

    amplitude: float = 1.0
    omega: float = 1.0

    kind = "sinusoid"

    def eval(self, t):
        return self.amplitude * np.sin(self.omega * np.asarray(t, dtype=float))


@dataclass
class SineSweep(Excitation):
    """Linear chirp from f_start to f_end (Hz) across the record.

    Instantaneous phase is 2 pi (f_start t + (f_end - f_start) t^2 / 2T),
    so the instantaneous frequency runs linearly from f_start at t = 0
    to f_end at t = duration. ``amplitude`` is the peak value.
    """

    amplitude: float = 1.0
    f_start: float = 1.0
    f_end: float = 10.0

    kind = "sine_sweep"

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        phase = self.f_start * t + (self.f_end - self.f_start) * t * t / (
            2.0 * self.duration
        )
        return self.amplitude * np.sin(2.0 * math.pi * phase)


@dataclass
class Multisine(Excitation):
    """Sum of cosines at equally spaced in-band frequencies.

    Component phases are drawn uniformly from [0, 2 pi) with ``seed``;
    the sum is scaled by amplitude / sqrt(n/2) so that ``amplitude``
    sets the expected RMS of the signal. With ``n_components`` left as
    None one component is placed on every DFT bin inside the band.
    """

    amplitude: float = 1.0
    f_min: float = 1.0
    f_max: float = 10.0
    n_components: int | None = None
    seed: int = 0

    kind = "multisine"

    def __post_init__(self):
        if self.f_max > self.sample_rate / 2.0:
            raise ValueError("band edge above the Nyquist frequency")
        if self.n_components is None:
            self.n_components = int(round((self.f_max - self.f_min) * self.duration)) + 1
        rng = np.random.default_rng(self.seed)
        self._freqs = np.linspace(self.f_min, self.f_max, self.n_components)
        self._phases = rng.uniform(0.0, 2.0 * math.pi, self.n_components)

    @property
    def freqs(self):
        return self._freqs

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        arg = (
            2.0 * math.pi * self._freqs[:, None] * t[None, :]
            + self._phases[:, None]
        )
        scale = self.amplitude / math.sqrt(self.n_components / 2.0)
        out = scale * np.cos(arg).sum(axis=0)
        return out if out.shape else float(out)


@dataclass
class FromFile(Excitation):
    """Input replayed from a two-column (t, u) record; linear interpolation
    between samples, zero outside the recorded span."""

    path: str = ""

    kind = "from_file"

    def __post_init__(self):
        data = np.loadtxt(self.path, delimiter=",", skiprows=1, usecols=(0, 1))
        self._t = data[:, 0]
        self._u = data[:, 1]

    def eval(self, t):
        return np.interp(np.asarray(t, dtype=float), self._t, self._u, left=0.0, right=0.0)


def excitation_from_spec(spec: dict) -> Excitation:
    """Build an excitation from its dict form (inverse of the meta dict)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    by_kind = {cls.kind: cls for cls in (Sinusoid, SineSweep, Multisine, FromFile)}
    cls = by_kind.get(kind)
    if cls is None:
        raise ValueError(f"unknown excitation kind {kind!r}")
    allowed = {f.name for f in fields(cls)}
    extra = set(spec) - allowed
    if extra:
        raise ValueError(f"unknown fields for {kind}: {sorted(extra)}")
    return cls(**spec)


# -- datasets ---------------------------------------------------------


@dataclass
class Dataset:
    """Uniformly sampled record of one experiment.

    ``z`` is only present for simulated data; measured channels are
    x, xdot and xddot. ``meta`` carries provenance (parameters,
    excitation, noise, seeds) and is serialized alongside the arrays.
    """

    t: np.ndarray
    u: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    xddot: np.ndarray
    z: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t)
        for name in ("u", "x", "xdot", "xddot"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"channel {name} length mismatch")
        if self.z is not None and len(self.z) != n:
            raise ValueError("channel z length mismatch")
        if n >= 2:
            steps = np.diff(self.t)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                raise ValueError("time grid is not uniform")

    def __len__(self):
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    def window(self, start: int, stop: int) -> "Dataset":
        """Contiguous sample slice as a new Dataset (z and meta carried)."""
        sl = slice(start, stop)
        meta = dict(self.meta)
        meta["window"] = [int(start), int(stop)]
        return Dataset(
            t=self.t[sl].copy(),
            u=self.u[sl].copy(),
            x=self.x[sl].copy(),
            xdot=self.xdot[sl].copy(),
            xddot=self.xddot[sl].copy(),
            z=None if self.z is None else self.z[sl].copy(),
            meta=meta,
        )

    def copy(self) -> "Dataset":
        return Dataset(
            t=self.t.copy(),
            u=self.u.copy(),
            x=self.x.copy(),
            xdot=self.xdot.copy(),
            xddot=self.xddot.copy(),
            z=None if self.z is None else self.z.copy(),
            meta=dict(self.meta),
        )


# -- integration ------------------------------------------------------


def _link_rate(v, z, A, beta, gamma, n):
    # |z|**(n-1) z written as sign(z) |z|**n so fractional n is safe at z = 0
    za = abs(z)
    zn = za ** n
    sz = 0.0 if z == 0.0 else math.copysign(1.0, z)
    return A * v - beta * abs(v) * sz * zn - gamma * v * zn


def simulate(
    params: BoucWenParams,
    excitation: Excitation,
    x0: float = 0.0,
    xdot0: float = 0.0,
    z0: float = 0.0,
) -> Dataset:
    """Integrate the oscillator and return the sampled record.

    Classical fourth-order Runge-Kutta with dt = 1/sample_rate; the
    excitation is evaluated in closed form at the half-step stage
    times. Raises :class:`SimulationDiverged` if the state leaves
    +/- 1e12 or becomes non-finite.
    """
    N = excitation.n_samples
    if N < 2:
        raise ValueError("need at least two samples")
    dt = 1.0 / excitation.sample_rate
    t_grid = excitation.times
    u_grid = np.asarray(excitation.eval(t_grid), dtype=float)
    u_half = np.asarray(excitation.eval(t_grid[:-1] + 0.5 * dt), dtype=float)

    m, c, k, alpha = params.m, params.c, params.k, params.alpha
    A, beta, gamma, n = params.A, params.beta, params.gamma, params.n
    p = params.stiffness_power

    xs = np.empty(N)
    vs = np.empty(N)
    zs = np.empty(N)
    x, v, z = float(x0), float(xdot0), float(z0)
    xs[0], vs[0], zs[0] = x, v, z

    half = 0.5 * dt
    sixth = dt / 6.0
    for j in range(N - 1):
        u0 = u_grid[j]
        um = u_half[j]
        u1 = u_grid[j + 1]

        a1 = (u0 - c * v - k * x ** p - alpha * z) / m
        s1 = _link_rate(v, z, A, beta, gamma, n)

        x2 = x + half * v
        v2 = v + half * a1
        z2 = z + half * s1
        a2 = (um - c * v2 - k * x2 ** p - alpha * z2) / m
        s2 = _link_rate(v2, z2, A, beta, gamma, n)

        x3 = x + half * v2
        v3 = v + half * a2
        z3 = z + half * s2
        a3 = (um - c * v3 - k * x3 ** p - alpha * z3) / m
        s3 = _link_rate(v3, z3, A, beta, gamma, n)

        x4 = x + dt * v3
        v4 = v + dt * a3
        z4 = z + dt * s3
        a4 = (u1 - c * v4 - k * x4 ** p - alpha * z4) / m
        s4 = _link_rate(v4, z4, A, beta, gamma, n)

        x = x + sixth * (v + 2.0 * (v2 + v3) + v4)
        v = v + sixth * (a1 + 2.0 * (a2 + a3) + a4)
        z = z + sixth * (s1 + 2.0 * (s2 + s3) + s4)

        if not (
            math.isfinite(x)
            and math.isfinite(v)
            and math.isfinite(z)
            and abs(x) < BLOWUP_LIMIT
        ):
            raise SimulationDiverged(t_grid[j + 1])

        xs[j + 1], vs[j + 1], zs[j + 1] = x, v, z

    xddot = (u_grid - c * vs - k * xs ** p - alpha * zs) / m
    meta = {
        "params": params.__dict__.copy(),
        "excitation": _excitation_meta(excitation),
        "initial_conditions": {"x0": float(x0), "xdot0": float(xdot0), "z0": float(z0)},
        "noise": None,
    }
    return Dataset(t=t_grid, u=u_grid, x=xs, xdot=vs, xddot=xddot, z=zs, meta=meta)


def _excitation_meta(exc: Excitation) -> dict:
    out = {"kind": exc.kind, "duration": exc.duration, "sample_rate": exc.sample_rate}
    for key, val in exc.__dict__.items():
        if key.startswith("_") or key in out:
            continue
        if isinstance(val, (int, float, str)) or val is None:
            out[key] = val
    return out


def add_noise(ds: Dataset, snr_db: float, seed: int = 0) -> Dataset:
    """Additive white Gaussian noise on the response channels.

    Per channel (x, xdot, xddot, in that order from one generator) the
    noise variance is mean(channel**2) / 10**(snr_db/10). The input u
    and the internal state z stay clean. ``snr_db = inf`` returns an
    unchanged copy.
    """
    out = ds.copy()
    if math.isinf(snr_db):
        out.meta["noise"] = None
        return out
    rng = np.random.default_rng(seed)
    factor = 10.0 ** (-snr_db / 10.0)
    for name in ("x", "xdot", "xddot"):
        ch = getattr(out, name)
        sigma = math.sqrt(float(np.mean(ch * ch)) * factor)
        setattr(out, name, ch + rng.normal(0.0, sigma, len(ch)))
    out.meta["noise"] = {"snr_db": float(snr_db), "seed": int(seed)}
    return out
