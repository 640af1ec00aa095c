"""Timing comparison of the tape interpreter backends.

Runs the same recorded rollout tape through the compiled sweeps and the
pure-Python fallback, each in a child process so the import-time backend
selection is exercised exactly as users hit it.

Usage: python benchmarks/bench_backends.py [--steps N] [--repeats K]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def build_rollout_tape(steps: int):
    """Record an RK4 rollout of the oscillator with tape-leaf parameters.

    Mirrors the shape of the training rollout: per step a handful of
    mul/add/abs/pow nodes feeding a squared-error accumulation.
    """
    from hystereq.adiff import Tape

    tape = Tape()
    m = tape.lift(2.0)
    c = tape.lift(10.0)
    k = tape.lift(5.0)
    A = tape.lift(5.0)
    beta = tape.lift(0.8)
    gamma = tape.lift(-1.1)

    dt = 1e-3
    x = tape.lift(0.01)
    v = tape.lift(0.0)
    z = tape.lift(0.0)
    loss = tape.lift(0.0)
    for j in range(steps):
        u = 40.0 * ((j % 50) / 50.0 - 0.5)
        a = (u - c * v - k * x - z) / m
        s = A * v - beta * abs(v) * z - gamma * v * abs(z)
        x = x + dt * v
        v = v + dt * a
        z = z + dt * s
        loss = loss + (x * x + v * v)
    return tape, loss, [m, c, k, A, beta, gamma]


def run_child(steps: int, repeats: int) -> dict:
    from hystereq._core import BACKEND

    tape, loss, params = build_rollout_tape(steps)
    tape.grad(loss, params)  # warm up both sweep paths

    t0 = time.perf_counter()
    for _ in range(repeats):
        tape.forward(start=0)
    t_fwd = (time.perf_counter() - t0) / repeats

    t0 = time.perf_counter()
    for _ in range(repeats):
        tape.grad(loss, params)
    t_both = (time.perf_counter() - t0) / repeats

    return {
        "backend": BACKEND,
        "nodes": tape.n_nodes,
        "forward_ms": 1e3 * t_fwd,
        "forward_backward_ms": 1e3 * t_both,
    }


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.child:
        print(json.dumps(run_child(args.steps, args.repeats)))
        return 0

    rows = []
    for backend in ("compiled", "python"):
        env = dict(os.environ, HYSTEREQ_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--child",
             "--steps", str(args.steps), "--repeats", str(args.repeats)],
            env=env, capture_output=True, text=True,
        )
        if proc.returncode != 0:
            print(f"{backend}: failed\n{proc.stderr}", file=sys.stderr)
            continue
        rows.append(json.loads(proc.stdout.strip().splitlines()[-1]))

    if not rows:
        return 1
    print(f"{'backend':<10} {'nodes':>8} {'forward':>12} {'fwd+grad':>12}")
    for r in rows:
        print(
            f"{r['backend']:<10} {r['nodes']:>8} "
            f"{r['forward_ms']:>10.2f}ms {r['forward_backward_ms']:>10.2f}ms"
        )
    if len(rows) == 2 and rows[0]["backend"] != rows[1]["backend"]:
        by = {r["backend"]: r for r in rows}
        if "compiled" in by and "python" in by:
            speed = by["python"]["forward_backward_ms"] / by["compiled"]["forward_backward_ms"]
            print(f"compiled speedup: {speed:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
