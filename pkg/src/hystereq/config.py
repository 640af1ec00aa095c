"""Run configuration: one JSON-serializable record drives a whole run.

Every field has a default (the noise-free benchmark experiment), so an
empty config file is a valid run. A short content digest of the config
travels into every output file for provenance.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields


def _benchmark_params() -> dict:
    return {
        "m": 2.0,
        "c": 10.0,
        "k": 5e4,
        "alpha": 1.0,
        "A": 5e4,
        "beta": 800.0,
        "gamma": -1100.0,
        "n": 1.0,
        "stiffness_power": 1,
    }


def _benchmark_excitation() -> dict:
    return {
        "kind": "sine_sweep",
        "duration": 20.0 / 3.0,
        "sample_rate": 750.0,
        "amplitude": 40.0,
        "f_start": 20.0,
        "f_end": 50.0,
    }


def _benchmark_test_excitation() -> dict:
    return {
        "kind": "multisine",
        "duration": 20.0 / 3.0,
        "sample_rate": 750.0,
        "amplitude": 40.0,
        "f_min": 5.0,
        "f_max": 150.0,
        "seed": 0,
    }


@dataclass
class RunConfig:
    """Settings for one pipeline run. Defaults are the noise-free
    benchmark; the recipe helpers in the pipeline module fill in the
    other experiments."""

    experiment: str = "benchmark"  # benchmark | complex | complex_full | custom
    case: str = "hysteresis"  # learner mode: hysteresis | full
    dataset: str | None = None  # external CSV instead of simulation
    params: dict = field(default_factory=_benchmark_params)
    excitation: dict = field(default_factory=_benchmark_excitation)
    test_excitation: dict | None = field(default_factory=_benchmark_test_excitation)
    initial_conditions: list = field(default_factory=lambda: [[0.0, 0.0]])
    n_train_conditions: int | None = None  # None: all train, tests by excitation
    noise_snr_db: float = float("inf")
    observed: list = field(default_factory=lambda: ["x", "xdot", "xddot"])
    split: dict = field(default_factory=lambda: {"scheme": "time_split", "fraction": 0.6})
    learner: dict = field(default_factory=dict)
    symreg: dict = field(default_factory=dict)
    sindy: dict = field(default_factory=lambda: {"library": "hysteretic_abs"})
    refine: bool = True
    seed: int = 0
    workers: int = 1
    out_dir: str = "runs"

    def __post_init__(self):
        if self.case not in ("hysteresis", "full"):
            raise ValueError(f"unknown case {self.case!r}")
        if self.experiment not in ("benchmark", "complex", "complex_full", "custom"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        bad = set(self.observed) - {"x", "xdot", "xddot"}
        if bad:
            raise ValueError(f"unknown observed channels: {sorted(bad)}")
        if not self.observed:
            raise ValueError("need at least one observed channel")
        if self.workers < 1:
            raise ValueError("workers must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """12-hex content hash; wall-clock never enters the hash."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def config_from_dict(data: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    extra = set(data) - known
    if extra:
        raise ValueError(f"unknown config fields: {sorted(extra)}")
    return RunConfig(**data)


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config parse error at byte {exc.pos}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    return config_from_dict(data)


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
