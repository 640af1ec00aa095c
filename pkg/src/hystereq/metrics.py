"""Error metrics, hysteresis-loop extraction, and train/test splits."""

from __future__ import annotations

import math

import numpy as np

from .simulate import Dataset


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def nrmse(pred, truth) -> float:
    """Root mean square error over the truth's range, in percent.

    Scale-invariant: mapping both signals through a*s + b leaves the
    value unchanged for a != 0.
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError("signals must have equal nonzero length")
    rng = float(np.max(truth) - np.min(truth))
    if rng == 0.0:
        raise ValueError("zero range: truth signal is constant")
    return rmse(pred, truth) / rng * 100.0


def snr_db(clean, noisy) -> float:
    """Realized signal-to-noise ratio of a contaminated copy, in dB.

    Power is the mean square, matching the noise injector's convention.
    """
    clean = np.asarray(clean, dtype=float)
    noise = np.asarray(noisy, dtype=float) - clean
    p_noise = float(np.mean(noise**2))
    if p_noise == 0.0:
        raise ValueError("signals are identical, SNR is unbounded")
    return 10.0 * math.log10(float(np.mean(clean**2)) / p_noise)


# -- hysteresis loops --------------------------------------------------


def loop_F(ds: Dataset, k: float, alpha: float, stiffness_power: float = 1) -> dict:
    """Restoring-force and state pairs for hysteresis-loop plots.

    F = k*x**p + alpha*z pointwise. Returns the (x, F) pair plus the
    (x, xdot) and (x, z) pairs. Needs a z channel, true or re-simulated;
    with alpha = 0 the (x, F) curve is single-valued.
    """
    if ds.z is None:
        raise ValueError("dataset has no z channel")
    F = k * ds.x**stiffness_power + alpha * ds.z
    return {"x_F": (ds.x, F), "x_xdot": (ds.x, ds.xdot), "x_z": (ds.x, ds.z)}


def loop_area(x, y) -> float:
    """Signed area swept by the time-ordered (x, y) path.

    Trapezoidal contour integral of y dx with the path closed back to
    its start. For a steady force-displacement cycle this is the energy
    lost per cycle, positive for a dissipative element.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need two equal-length arrays of at least 3 points")
    area = 0.5 * np.sum((y[1:] + y[:-1]) * (x[1:] - x[:-1]))
    return float(area + 0.5 * (y[0] + y[-1]) * (x[0] - x[-1]))


# -- train/test splitting ----------------------------------------------


def time_split(ds: Dataset, fraction: float = 0.6):
    """Head/tail split of one record at the given time fraction."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly inside (0, 1)")
    cut = int(round(len(ds) * fraction))
    if cut == 0 or cut == len(ds):
        raise ValueError("fraction leaves an empty side")
    train = ds.window(0, cut)
    test = ds.window(cut, len(ds))
    for part, name in ((train, "train"), (test, "test")):
        part.meta["split"] = {"scheme": "time_split", "fraction": float(fraction), "part": name}
    return train, test


def by_excitation(datasets, test_kind: str):
    """Hold out every record whose excitation kind matches test_kind."""
    datasets = list(datasets)
    test = [d for d in datasets if d.meta.get("excitation", {}).get("kind") == test_kind]
    train = [d for d in datasets if d not in test]
    if not train or not test:
        raise ValueError(f"excitation kind {test_kind!r} does not split the records")
    return train, test


def by_initial_condition(datasets, n_train: int):
    """First n_train records train, the rest test."""
    datasets = list(datasets)
    if not 0 < n_train < len(datasets):
        raise ValueError("n_train must leave at least one record on each side")
    return datasets[:n_train], datasets[n_train:]


def split_train_test(data, scheme: str = "time_split", **kwargs):
    """Dispatch to the named deterministic splitting scheme."""
    if scheme == "time_split":
        return time_split(data, **kwargs)
    if scheme == "by_excitation":
        return by_excitation(data, **kwargs)
    if scheme == "by_initial_condition":
        return by_initial_condition(data, **kwargs)
    raise ValueError(f"unknown split scheme {scheme!r}")
