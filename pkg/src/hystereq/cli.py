"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 acceptance-threshold failure under ``repro``.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

from . import dataio, metrics, pipeline, symreg
from . import model as dmodel
from .config import RunConfig, load_config, save_config
from .simulate import SimulationDiverged, excitation_from_spec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_ACCEPTANCE = 4


def _add_common(sp):
    sp.add_argument("--config", help="JSON run-config file")
    sp.add_argument("--seed", type=int, help="master seed override")
    sp.add_argument("--noise", help="measurement SNR in dB, or 'inf'")
    sp.add_argument("--case", choices=("hysteresis", "full"), help="discovery mode")
    sp.add_argument("--obs", help="observed channels, comma list from x,xdot,xddot")
    sp.add_argument("--out", help="output root directory")
    sp.add_argument(
        "--workers",
        type=int,
        help="worker processes (default: HYSTEREQ_WORKERS or 1)",
    )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hystereq",
        description="Equation discovery for hysteretic oscillators.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="generate the configured records")
    _add_common(sp)
    sp = sub.add_parser("learn", help="recover the internal state trajectory")
    _add_common(sp)
    sp = sub.add_parser("discover", help="full discovery pipeline")
    _add_common(sp)
    sp = sub.add_parser("baseline", help="sparse-regression baseline only")
    _add_common(sp)

    sp = sub.add_parser("predict", help="resimulate a saved model")
    _add_common(sp)
    sp.add_argument("--model", required=True, help="model JSON file")
    sp.add_argument("--dataset", help="CSV record to replay against")
    sp.add_argument("--x0", type=float, default=None)
    sp.add_argument("--xdot0", type=float, default=None)
    sp.add_argument("--z0", type=float, default=None)

    sp = sub.add_parser("evaluate", help="score a saved model on the configured data")
    _add_common(sp)
    sp.add_argument("--model", required=True, help="model JSON file")

    sp = sub.add_parser("plot", help="figures for a dataset, optionally with a model")
    _add_common(sp)
    sp.add_argument("--dataset", required=True, help="CSV record")
    sp.add_argument("--model", help="model JSON file to overlay")

    sp = sub.add_parser("repro", help="reproduce a bundled experiment")
    _add_common(sp)
    sp.add_argument(
        "experiment", choices=("benchmark", "complex", "complex_full")
    )
    return p


def _resolve_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.command == "repro":
        cfg = pipeline.config_for(args.experiment)
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.noise is not None:
        cfg.noise_snr_db = math.inf if args.noise == "inf" else float(args.noise)
    if args.case is not None:
        cfg.case = args.case
    if args.obs is not None:
        obs = [c.strip() for c in args.obs.split(",") if c.strip()]
        bad = set(obs) - {"x", "xdot", "xddot"}
        if bad or not obs:
            raise ValueError(f"bad --obs value {args.obs!r}")
        cfg.observed = obs
    if args.out is not None:
        cfg.out_dir = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    else:
        env = os.environ.get("HYSTEREQ_WORKERS")
        if env:
            cfg.workers = int(env)
    return cfg


def _run_dir(cfg: RunConfig) -> str:
    stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    out = os.path.join(cfg.out_dir, f"{stamp}-{cfg.digest()}")
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_simulate(cfg: RunConfig) -> int:
    out = _run_dir(cfg)
    save_config(cfg, os.path.join(out, "config.json"))
    data = pipeline.make_datasets(cfg)
    for i, ds in enumerate(data["train_fit"]):
        dataio.save_dataset(ds, os.path.join(out, f"train_{i}.csv"))
    for unit in data["replays"]:
        dataio.save_dataset(unit["truth"], os.path.join(out, f"truth_{unit['record']}.csv"))
    print(f"wrote {len(data['train_fit'])} training and "
          f"{len(data['replays'])} truth records to {out}")
    return EXIT_OK


def _cmd_learn(cfg: RunConfig) -> int:
    out = _run_dir(cfg)
    save_config(cfg, os.path.join(out, "config.json"))
    data = pipeline.make_datasets(cfg)
    learn = pipeline.learn_stage(cfg, data)
    for i, ds in enumerate(data["train_fit"]):
        rec = ds.copy()
        rec.z = learn.z_pred[i]
        dataio.save_dataset(rec, os.path.join(out, f"learned_{i}.csv"))
    print(f"loss {learn.loss:.6e} after {learn.n_iters} iterations "
          f"(restart {learn.restart})")
    if "m" in learn.theta:
        print("motion parameters:", {k: round(v, 6) if isinstance(v, float) else v
                                     for k, v in learn.theta.items()})
    print("wrote learned records to", out)
    return EXIT_OK


def _cmd_discover(cfg: RunConfig) -> int:
    report = pipeline.run(cfg)
    eqs = report["model"].equations()
    print("run:", report["out_dir"])
    print("motion:", eqs["motion"])
    print("link:  ", eqs["link"])
    return EXIT_OK


def _cmd_baseline(cfg: RunConfig) -> int:
    out = _run_dir(cfg)
    save_config(cfg, os.path.join(out, "config.json"))
    data = pipeline.make_datasets(cfg)
    learn = pipeline.learn_stage(cfg, data)
    res = pipeline.sindy_baseline(cfg, learn, data)
    dataio.save_model(res["model"], os.path.join(out, "baseline_model.json"),
                      config_digest=cfg.digest())
    eqs = res["model"].equations()
    print("link:  ", eqs["link"])
    print("active terms:", res["link_fit"].terms())
    print("wrote", os.path.join(out, "baseline_model.json"))
    return EXIT_OK


def _cmd_predict(cfg: RunConfig, args) -> int:
    dm = dataio.load_model(args.model)
    out = _run_dir(cfg)
    try:
        if args.dataset:
            truth = dataio.load_dataset(args.dataset)
            sim = dmodel.resimulate_record(
                dm, truth, x0=args.x0, xdot0=args.xdot0, z0=args.z0
            )
        else:
            truth = None
            ics = (args.x0, args.xdot0, args.z0)
            if any(v is None for v in ics):
                print("note: missing initial conditions default to 0")
            exc = excitation_from_spec(cfg.excitation)
            sim = dmodel.resimulate(
                dm, exc,
                x0=args.x0 or 0.0, xdot0=args.xdot0 or 0.0, z0=args.z0 or 0.0,
            )
    except SimulationDiverged as exc:
        print(f"diverged at t = {exc.t:.6g} s")
        return EXIT_DIVERGED
    dataio.save_dataset(sim, os.path.join(out, "prediction.csv"))
    print("wrote", os.path.join(out, "prediction.csv"))
    if truth is not None:
        for ch in ("x", "xdot", "xddot"):
            val = metrics.nrmse(getattr(sim, ch), getattr(truth, ch))
            print(f"nrmse {ch}: {val:.4f} %")
    return EXIT_OK


def _cmd_evaluate(cfg: RunConfig, args) -> int:
    dm = dataio.load_model(args.model)
    out = _run_dir(cfg)
    save_config(cfg, os.path.join(out, "config.json"))
    data = pipeline.make_datasets(cfg)
    result = pipeline.evaluate_model(cfg, dm, data, "model")
    dataio.write_table(
        os.path.join(out, "metrics.csv"),
        ["method", "segment", "record", "metric", "value"],
        result["rows"],
    )
    for row in result["rows"]:
        print(f"{row[1]:<10} {row[2]:<10} {row[3]:<22} {row[4]:.6g}")
    print("wrote", os.path.join(out, "metrics.csv"))
    return EXIT_OK


def _cmd_plot(cfg: RunConfig, args) -> int:
    from . import svgplot

    ds = dataio.load_dataset(args.dataset)
    out = _run_dir(cfg)
    series = [{"x": ds.t, "y": ds.x, "label": "x"}]
    if args.model:
        dm = dataio.load_model(args.model)
        sim = dmodel.resimulate_record(dm, ds)
        series.append({"x": sim.t, "y": sim.x, "label": "model"})
    svgplot.plot(os.path.join(out, "response.svg"), series,
                 title="displacement", xlabel="t [s]", ylabel="x")
    if ds.z is not None:
        svgplot.plot(os.path.join(out, "loop.svg"),
                     [{"x": ds.x, "y": ds.z, "label": "record"}],
                     title="hysteresis loop", xlabel="x", ylabel="z")
    print("wrote figures to", out)
    return EXIT_OK


# -- repro acceptance gates --------------------------------------------


def _repro_checks(cfg: RunConfig, report: dict) -> list:
    rows = report["rows"]
    dm = report["model"]
    checks = []

    def nrmse_of(segment, channel, method="discovered"):
        vals = [
            r[4]
            for r in rows
            if r[0] == method and r[1] == segment and r[3] == f"nrmse_{channel}_percent"
        ]
        return max(vals) if vals else math.nan

    if cfg.experiment == "benchmark":
        if math.isinf(cfg.noise_snr_db):
            checks.append(("training displacement <= 1%", nrmse_of("training", "x") <= 1.0,
                           f"{nrmse_of('training', 'x'):.3f}%"))
            checks.append(("training velocity <= 2%", nrmse_of("training", "xdot") <= 2.0,
                           f"{nrmse_of('training', 'xdot'):.3f}%"))
            checks.append(("held-out excitation displacement <= 2%",
                           nrmse_of("testing2", "x") <= 2.0,
                           f"{nrmse_of('testing2', 'x'):.3f}%"))
            if dm.parametric:
                for name in ("m", "c", "k", "alpha"):
                    rel = abs(dm.motion[name] - cfg.params[name]) / abs(cfg.params[name])
                    checks.append((f"motion {name} within 5%", rel <= 0.05, f"{100 * rel:.2f}%"))
                link_rel = pipeline.compare_link(dm.link, cfg.params)
                worst = max(link_rel.values())
                checks.append(("link coefficients within 15%", worst <= 0.15,
                               f"worst {100 * worst:.2f}%" if math.isfinite(worst) else "structure mismatch"))
        elif cfg.noise_snr_db >= 20.0:
            checks.append(("training displacement <= 6%", nrmse_of("training", "x") <= 6.0,
                           f"{nrmse_of('training', 'x'):.3f}%"))
            checks.append(("held-out excitation displacement <= 6%",
                           nrmse_of("testing2", "x") <= 6.0,
                           f"{nrmse_of('testing2', 'x'):.3f}%"))
    else:
        fracs = [p for p in symreg.fractional_exponents(dm.link) if 1.4 <= p <= 1.7]
        checks.append(("link exponent in [1.4, 1.7]", bool(fracs),
                       str(sorted(symreg.fractional_exponents(dm.link)))))
        ours = nrmse_of("testing", "x")
        base = nrmse_of("testing", "x", method="baseline")
        diverged = [r for r in rows if r[0] == "baseline" and r[3] == "diverged_at_s"]
        if diverged:
            base = math.inf
        checks.append(("discovered testing displacement <= 8%", ours <= 8.0, f"{ours:.3f}%"))
        checks.append(("baseline testing displacement >= 20%", base >= 20.0,
                       "diverged" if math.isinf(base) else f"{base:.3f}%"))
        ratio = base / ours if ours > 0 else math.inf
        checks.append(("baseline/discovered ratio >= 3", ratio >= 3.0,
                       "diverged" if math.isinf(ratio) else f"{ratio:.2f}x"))
    return checks


def _cmd_repro(cfg: RunConfig) -> int:
    report = pipeline.run(cfg)
    eqs = report["model"].equations()
    print("run:", report["out_dir"])
    print("motion:", eqs["motion"])
    print("link:  ", eqs["link"])
    failed = False
    for name, ok, detail in _repro_checks(cfg, report):
        print(f"[{'PASS' if ok else 'FAIL'}] {name} ({detail})")
        failed = failed or not ok
    return EXIT_ACCEPTANCE if failed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
    except (ValueError, OSError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "simulate":
            return _cmd_simulate(cfg)
        if args.command == "learn":
            return _cmd_learn(cfg)
        if args.command == "discover":
            return _cmd_discover(cfg)
        if args.command == "baseline":
            return _cmd_baseline(cfg)
        if args.command == "predict":
            return _cmd_predict(cfg, args)
        if args.command == "evaluate":
            return _cmd_evaluate(cfg, args)
        if args.command == "plot":
            return _cmd_plot(cfg, args)
        if args.command == "repro":
            return _cmd_repro(cfg)
        raise AssertionError(args.command)
    except pipeline.StageError as exc:
        if isinstance(exc.err, SimulationDiverged):
            print(f"stage {exc.stage!r} diverged: {exc.err}", file=sys.stderr)
            return EXIT_DIVERGED
        print(str(exc), file=sys.stderr)
        return 1
    except SimulationDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
