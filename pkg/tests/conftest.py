"""Shared fixtures.

The session-scoped pipeline reports are expensive (minutes each) and
are only built when an acceptance test asks for them; unit tests stick
to small local data.
"""

from __future__ import annotations

import numpy as np
import pytest

from hystereq import pipeline
from hystereq.simulate import BoucWenParams, SineSweep, Sinusoid, simulate

BENCH_PARAMS = BoucWenParams(
    m=2.0, c=10.0, k=5e4, alpha=1.0, A=5e4, beta=800.0, gamma=-1100.0, n=1.0
)
COMPLEX_PARAMS = BoucWenParams(
    m=1.0, c=0.8, k=0.5, alpha=1.0, A=4.0, beta=5.0, gamma=-4.0, n=1.5,
    stiffness_power=3,
)


@pytest.fixture(scope="session")
def bench_sweep():
    """Short benchmark-system record for unit tests (1 s, 750 Hz)."""
    exc = SineSweep(
        duration=1.0, sample_rate=750.0, amplitude=40.0, f_start=20.0, f_end=50.0
    )
    return simulate(BENCH_PARAMS, exc)


@pytest.fixture(scope="session")
def complex_record():
    """One full record of the cubic fractional-exponent system."""
    exc = Sinusoid(duration=6.0, sample_rate=100.0, amplitude=1.0, omega=2.0)
    return simulate(COMPLEX_PARAMS, exc, x0=0.3, xdot0=-0.2)


@pytest.fixture(scope="session")
def benchmark_report(tmp_path_factory):
    """Full noise-free benchmark pipeline run (several minutes)."""
    out = str(tmp_path_factory.mktemp("bench_run"))
    cfg = pipeline.config_for("benchmark", out_dir=out)
    return cfg, pipeline.run(cfg)


@pytest.fixture(scope="session")
def benchmark_report_20db(tmp_path_factory):
    """Benchmark pipeline at 20 dB measurement noise."""
    out = str(tmp_path_factory.mktemp("bench20_run"))
    cfg = pipeline.config_for("benchmark", noise_snr_db=20.0, out_dir=out)
    return cfg, pipeline.run(cfg)


@pytest.fixture(scope="session")
def complex_report(tmp_path_factory):
    """Full hysteresis-discovery run on the fractional-exponent system."""
    out = str(tmp_path_factory.mktemp("complex_run"))
    cfg = pipeline.config_for("complex", out_dir=out)
    return cfg, pipeline.run(cfg)


@pytest.fixture(scope="session")
def complex_full_report(tmp_path_factory):
    """Full-equation-discovery run on the fractional-exponent system."""
    out = str(tmp_path_factory.mktemp("complex_full_run"))
    cfg = pipeline.config_for("complex_full", out_dir=out)
    return cfg, pipeline.run(cfg)


def criterion(number: int, text: str, ok: bool, detail: str = ""):
    """One visible pass/fail line per acceptance criterion."""
    tag = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"\n[{tag}] criterion {number}: {text}{suffix}")
    assert ok, f"criterion {number} failed: {text}{suffix}"
