"""End-to-end discovery runs and the bundled experiment recipes.

A run goes simulate (or ingest) -> noise -> internal-variable learning
-> symbolic discovery of the equations (-> sparse-regression baseline)
-> closed-loop resimulation -> metric tables and figures, everything
seeded and written into one run directory.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import dataio, metrics, sindy, svgplot, symreg
from . import model as dmodel
from .config import RunConfig, save_config
from .learner import LearnConfig, LearnResult, fit
from .simulate import (
    BoucWenParams,
    Dataset,
    SimulationDiverged,
    add_noise,
    excitation_from_spec,
    simulate,
)


class StageError(RuntimeError):
    """Failure inside one named pipeline stage."""

    def __init__(self, stage: str, err: BaseException):
        self.stage = stage
        self.err = err
        super().__init__(f"stage {stage!r} failed: {err}")


# -- experiment recipes ------------------------------------------------


def complex_initial_conditions(n: int = 6, seed: int = 7) -> list:
    """Shared draw of (x0, xdot0) pairs; first n-1 train, last tests."""
    rng = np.random.default_rng(seed)
    return [[float(a), float(b)] for a, b in rng.uniform(-1.0, 1.0, (n, 2))]


def config_for(experiment: str, **overrides) -> RunConfig:
    """Bundled recipe for one of the named experiments."""
    if experiment == "benchmark":
        cfg = RunConfig(**overrides)
    elif experiment in ("complex", "complex_full"):
        base = {
            "experiment": experiment,
            "case": "full" if experiment == "complex_full" else "hysteresis",
            "params": {
                "m": 1.0,
                "c": 0.8,
                "k": 0.5,
                "alpha": 1.0,
                "A": 4.0,
                "beta": 5.0,
                "gamma": -4.0,
                "n": 1.5,
                "stiffness_power": 3,
            },
            "excitation": {
                "kind": "sinusoid",
                "duration": 6.0,
                "sample_rate": 100.0,
                "amplitude": 1.0,
                "omega": 2.0,
            },
            "test_excitation": None,
            "initial_conditions": complex_initial_conditions(),
            "n_train_conditions": 5,
            "split": {"scheme": "by_initial_condition"},
            "symreg": {"population": 384, "generations": 100},
        }
        base.update(overrides)
        cfg = RunConfig(**base)
    else:
        raise ValueError(f"unknown experiment {experiment!r}")
    return cfg


# -- worker pool -------------------------------------------------------


def pmap(fn, items, workers: int = 1):
    """Order-preserving map, optionally across processes.

    Results are gathered by index so the outcome does not depend on
    worker count or scheduling.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    try:
        with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
            return list(pool.map(fn, items))
    except (OSError, PermissionError):
        # restricted environments may forbid subprocesses
        return [fn(it) for it in items]


def _discover_task(payload):
    target, features, cfg = payload
    return symreg.discover(target, features, cfg)


# -- data stage --------------------------------------------------------


def make_datasets(cfg: RunConfig) -> dict:
    """Produce training records plus the evaluation replays.

    Each replay pairs a clean truth record with the drive and initial
    state to resimulate from, and labels sample ranges as segments
    (training / testing1 / testing2 / testing).
    """
    if cfg.dataset is not None:
        full = dataio.load_dataset(cfg.dataset)
        frac = float(cfg.split.get("fraction", 0.6))
        train, _ = metrics.time_split(full, frac)
        cut = len(train)
        replays = [
            {
                "record": "dataset",
                "truth": full,
                "excitation": None,
                "ic": (float(full.x[0]), float(full.xdot[0]), 0.0),
                "segments": [("training", 0, cut), ("testing1", cut, len(full))],
            }
        ]
        return {"train_fit": [train], "train_excs": None, "replays": replays}

    params = BoucWenParams(**cfg.params)
    exc = excitation_from_spec(cfg.excitation)
    records = [
        simulate(params, exc, x0=ic[0], xdot0=ic[1]) for ic in cfg.initial_conditions
    ]

    if cfg.n_train_conditions is not None:
        train_clean, test_clean = metrics.by_initial_condition(
            records, cfg.n_train_conditions
        )
        train_fit = [add_noise(d, cfg.noise_snr_db, seed=cfg.seed + i) for i, d in enumerate(train_clean)]
        replays = [
            {
                "record": f"train_{i}",
                "truth": d,
                "excitation": exc,
                "ic": (d.x[0], d.xdot[0], 0.0),
                "segments": [("training", 0, len(d))],
            }
            for i, d in enumerate(train_clean)
        ] + [
            {
                "record": f"test_{i}",
                "truth": d,
                "excitation": exc,
                "ic": (d.x[0], d.xdot[0], 0.0),
                "segments": [("testing", 0, len(d))],
            }
            for i, d in enumerate(test_clean)
        ]
        return {
            "train_fit": train_fit,
            "train_excs": [exc] * len(train_fit),
            "replays": replays,
        }

    # single-record experiments: fit on the head window, score the flown
    # trajectory on both windows, plus a held-out excitation if present
    full = records[0]
    frac = float(cfg.split.get("fraction", 0.6))
    noisy = add_noise(full, cfg.noise_snr_db, seed=cfg.seed)
    train, _ = metrics.time_split(noisy, frac)
    cut = len(train)
    replays = [
        {
            "record": "train",
            "truth": full,
            "excitation": exc,
            "ic": (full.x[0], full.xdot[0], 0.0),
            "segments": [("training", 0, cut), ("testing1", cut, len(full))],
        }
    ]
    if cfg.test_excitation is not None:
        test_exc = excitation_from_spec(cfg.test_excitation)
        test_ds = simulate(params, test_exc)
        replays.append(
            {
                "record": "test",
                "truth": test_ds,
                "excitation": test_exc,
                "ic": (0.0, 0.0, 0.0),
                "segments": [("testing2", 0, len(test_ds))],
            }
        )
    return {"train_fit": [train], "train_excs": [exc], "replays": replays}


# -- learning and discovery stages -------------------------------------


def learn_stage(cfg: RunConfig, data: dict) -> LearnResult:
    opts = dict(cfg.learner)
    for key in ("case", "observed", "seed"):
        opts.pop(key, None)
    opts.setdefault("stiffness_power", int(cfg.params.get("stiffness_power", 1)))
    lcfg = LearnConfig(
        case=cfg.case, observed=tuple(cfg.observed), seed=cfg.seed, **opts
    )
    return fit(data["train_fit"], lcfg, excitations=data["train_excs"])


def _pooled(chunks) -> np.ndarray:
    return np.concatenate([np.asarray(c, dtype=float) for c in chunks])


def discover_link(cfg: RunConfig, learn: LearnResult):
    """Symbolic regression of the z-rate law from the learned state."""
    target = _pooled(learn.zdot_pred)
    features = {
        "xdot": _pooled(learn.xdot_pred),
        "z": _pooled(learn.z_pred),
    }
    return _discover_best(cfg, target, features)


def discover_motion(cfg: RunConfig, learn: LearnResult, data: dict):
    """Symbolic regression of the acceleration law (full-discovery case)."""
    target = _pooled(learn.xddot_pred)
    features = {
        "x": _pooled(learn.x_pred),
        "xdot": _pooled(learn.xdot_pred),
        "z": _pooled(learn.z_pred),
        "u": _pooled([r.u for r in data["train_fit"]]),
    }
    return _discover_best(cfg, target, features)


def _discover_best(cfg: RunConfig, target, features):
    opts = dict(cfg.symreg)
    restarts = int(opts.pop("restarts", 3))
    tasks = []
    for i in range(restarts):
        scfg = symreg.SymregConfig(seed=cfg.seed + i, **opts)
        tasks.append((target, features, scfg))
    results = pmap(_discover_task, tasks, cfg.workers)
    best_i = min(range(len(results)), key=lambda i: (results[i].best.loss, i))
    return results[best_i], [r.best for r in results]


def assemble_model(cfg, learn, link_result, motion_result=None) -> dmodel.DiscoveredModel:
    link = symreg.copy_expr(link_result.best.expr)
    if cfg.case == "hysteresis":
        motion = dict(learn.theta)
    else:
        motion = symreg.copy_expr(motion_result.best.expr)
    provenance = {
        "experiment": cfg.experiment,
        "case": cfg.case,
        "seed": cfg.seed,
        "config_digest": cfg.digest(),
        "link_evaluations": link_result.evaluations,
    }
    if motion_result is not None:
        provenance["motion_evaluations"] = motion_result.evaluations
    return dmodel.DiscoveredModel(motion=motion, link=link, provenance=provenance)


def _prune_negligible(dm, records, rel_tol=1e-4):
    """Drop additive terms whose contribution to the model's own replay
    is below rel_tol of the signal. Returns None when nothing changes
    (or when the replay diverges, where pruning has no evidence)."""
    replays = []
    for r in records:
        try:
            replays.append(dmodel.resimulate_record(dm, r))
        except SimulationDiverged:
            return None
    env = {
        name: np.concatenate([getattr(rep, name) for rep in replays])
        for name in ("x", "xdot", "z")
    }
    env["u"] = np.concatenate([r.u for r in records])
    link = symreg.prune_small_terms(dm.link, env, rel_tol=rel_tol)
    motion = dm.motion
    if not dm.parametric:
        motion = symreg.prune_small_terms(dm.motion, env, rel_tol=rel_tol)
    changed = symreg.to_sexpr(link) != symreg.to_sexpr(dm.link) or (
        not dm.parametric
        and symreg.to_sexpr(motion) != symreg.to_sexpr(dm.motion)
    )
    if not changed:
        return None
    return dmodel.DiscoveredModel(
        motion=motion, link=link, provenance=dict(dm.provenance)
    )


def refine_stage(cfg: RunConfig, dm, data: dict):
    """Polish constants in closed loop, then drop terms the fit has
    pushed to irrelevance and polish once more on the cleaner tree."""
    dm, info = dmodel.refine(dm, data["train_fit"], observed=tuple(cfg.observed))
    for _ in range(2):
        pruned = _prune_negligible(dm, data["train_fit"])
        if pruned is None:
            break
        dm, again = dmodel.refine(
            pruned, data["train_fit"], observed=tuple(cfg.observed)
        )
        info = {
            "cost": again["cost"],
            "initial_cost": info["initial_cost"],
            "nfev": info["nfev"] + again["nfev"],
            "status": again["status"],
            "n_residuals": again["n_residuals"],
        }
    return dm, info


def sindy_baseline(cfg: RunConfig, learn: LearnResult, data: dict) -> dict:
    """Sparse-regression baseline on the same learned internal state.

    One-step regression with threshold sweep, no closed-loop polishing:
    the comparison isolates what the regression stage itself recovers.
    """
    library = cfg.sindy.get("library", "hysteretic_abs")
    pooled = {
        "x": _pooled(learn.x_pred),
        "xdot": _pooled(learn.xdot_pred),
        "z": _pooled(learn.z_pred),
        "u": _pooled([r.u for r in data["train_fit"]]),
    }
    H, names = sindy.build_library(library, pooled)
    link_fit, swept = sindy.select_threshold(H, _pooled(learn.zdot_pred), names)
    link = sindy.to_expression(link_fit, library)

    out = {"link_fit": link_fit, "swept": swept, "library": library}
    if cfg.case == "hysteresis":
        motion = dict(learn.theta)
    else:
        Hm, mnames = sindy.build_library("motion_cubic", pooled)
        motion_fit, _ = sindy.select_threshold(Hm, _pooled(learn.xddot_pred), mnames)
        motion = sindy.to_expression(motion_fit, "motion_cubic")
        out["motion_fit"] = motion_fit
    out["model"] = dmodel.DiscoveredModel(
        motion=motion,
        link=link,
        provenance={
            "experiment": cfg.experiment,
            "case": cfg.case,
            "seed": cfg.seed,
            "config_digest": cfg.digest(),
            "method": "sparse-regression baseline",
        },
    )
    return out


# -- evaluation stage --------------------------------------------------


def _replay(dm, unit):
    x0, xdot0, z0 = unit["ic"]
    if unit["excitation"] is not None:
        return dmodel.resimulate(dm, unit["excitation"], x0=x0, xdot0=xdot0, z0=z0)
    return dmodel.resimulate_record(dm, unit["truth"], x0=x0, xdot0=xdot0, z0=z0)


def evaluate_model(cfg: RunConfig, dm, data: dict, label: str) -> dict:
    """Closed-loop replay of every evaluation unit, scored per segment.

    Returns metric rows [method, segment, record, channel, value] plus
    z-correlation rows where truth z exists; a diverged replay yields
    'diverged' rows carrying the blow-up time instead of NRMSE rows.
    """
    rows = []
    sims = {}
    for unit in data["replays"]:
        truth = unit["truth"]
        try:
            sim = _replay(dm, unit)
        except SimulationDiverged as exc:
            for seg, _, _ in unit["segments"]:
                rows.append([label, seg, unit["record"], "diverged_at_s", float(exc.t)])
            continue
        sims[unit["record"]] = sim
        for seg, lo, hi in unit["segments"]:
            for ch in ("x", "xdot", "xddot"):
                rows.append(
                    [
                        label,
                        seg,
                        unit["record"],
                        f"nrmse_{ch}_percent",
                        metrics.nrmse(getattr(sim, ch)[lo:hi], getattr(truth, ch)[lo:hi]),
                    ]
                )
            if truth.z is not None:
                zc = np.corrcoef(sim.z[lo:hi], truth.z[lo:hi])[0, 1]
                rows.append([label, seg, unit["record"], "z_correlation", float(zc)])
    return {"rows": rows, "sims": sims}


def term_coefficients(e: symreg.Expr) -> dict:
    """Map each top-level term's shape signature to its coefficient."""
    out = {}
    for term in symreg._terms_of(symreg.canonicalize(e)):
        coef, core = symreg._strip_outer(term)
        key = symreg.structure_key(core)
        out[key] = out.get(key, 0.0) + coef
    return out


def compare_link(e: symreg.Expr, params: dict) -> dict:
    """Relative error of each discovered link coefficient against the
    generating law. Terms that do not pair up report infinity."""
    true_link = dmodel.link_expression(
        params["A"], params["beta"], params["gamma"], params["n"]
    )
    truth = term_coefficients(true_link)
    found = term_coefficients(e)
    report = {}
    for key, tv in truth.items():
        if key in found:
            report[key] = abs(found[key] - tv) / abs(tv)
        else:
            report[key] = math.inf
    for key in found:
        if key not in truth:
            report[key] = math.inf
    return report


def segment_value(rows, segment: str, channel: str, reduce=max):
    """Pull one metric out of the evaluation rows (reduced over records)."""
    vals = [
        r[4]
        for r in rows
        if r[1] == segment and r[3] == f"nrmse_{channel}_percent"
    ]
    return reduce(vals) if vals else math.nan


# -- artifacts ---------------------------------------------------------


def _equation_report(dm, refine_info=None) -> str:
    eqs = dm.equations()
    lines = ["motion: " + eqs["motion"], "link:   " + eqs["link"]]
    fracs = sorted(symreg.fractional_exponents(dm.link))
    if fracs:
        lines.append("link exponents: " + ", ".join(f"{p:g}" for p in fracs))
    if refine_info is not None:
        lines.append(
            f"closed-loop refinement: cost {refine_info['initial_cost']:.3e} "
            f"-> {refine_info['cost']:.3e} in {refine_info['nfev']} evaluations"
        )
    return "\n".join(lines) + "\n"


def _figures(out_dir, data, result):
    figs = os.path.join(out_dir, "figs")
    os.makedirs(figs, exist_ok=True)
    sims = result["sims"]
    for unit in data["replays"]:
        rec = unit["record"]
        if rec not in sims:
            continue
        truth, sim = unit["truth"], sims[rec]
        series = [
            {"x": truth.t, "y": truth.x, "label": "reference"},
            {"x": sim.t, "y": sim.x, "label": "discovered"},
        ]
        svgplot.plot(
            os.path.join(figs, f"response_{rec}.svg"),
            series,
            title=f"displacement, {rec}",
            xlabel="t [s]",
            ylabel="x",
        )
        if truth.z is not None:
            svgplot.plot(
                os.path.join(figs, f"loop_{rec}.svg"),
                [
                    {"x": truth.x, "y": truth.z, "label": "reference"},
                    {"x": sim.x, "y": sim.z, "label": "discovered"},
                ],
                title=f"hysteresis loop, {rec}",
                xlabel="x",
                ylabel="z",
            )


def run(cfg: RunConfig, out_dir: str | None = None) -> dict:
    """Execute the full pipeline; returns the report dict.

    Artifacts land in a fresh run directory (timestamped name, digest
    suffix); every file except run.json is byte-reproducible for a
    fixed config.
    """
    t_start = time.time()
    digest = cfg.digest()
    if out_dir is None:
        stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
        out_dir = os.path.join(cfg.out_dir, f"{stamp}-{digest}")
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.json"))

    timings = {}

    def stage(name, fn, *args):
        t0 = time.time()
        try:
            out = fn(*args)
        except StageError:
            raise
        except BaseException as exc:
            raise StageError(name, exc) from exc
        timings[name] = round(time.time() - t0, 3)
        return out

    data = stage("data", make_datasets, cfg)
    for i, ds in enumerate(data["train_fit"]):
        dataio.save_dataset(ds, os.path.join(out_dir, f"train_{i}.csv"))

    learn = stage("learn", learn_stage, cfg, data)

    link_result, link_restarts = stage("discover_link", discover_link, cfg, learn)
    motion_result = None
    if cfg.case == "full":
        motion_result, _ = stage("discover_motion", discover_motion, cfg, learn, data)
    dm = assemble_model(cfg, learn, link_result, motion_result)

    refine_info = None
    if cfg.refine:
        dm, refine_info = stage("refine", refine_stage, cfg, dm, data)

    result = stage("evaluate", evaluate_model, cfg, dm, data, "discovered")
    rows = result["rows"]

    sindy_result = None
    if cfg.experiment in ("complex", "complex_full"):
        sindy_result = stage("baseline", sindy_baseline, cfg, learn, data)
        bl = stage(
            "evaluate_baseline", evaluate_model, cfg, sindy_result["model"], data, "baseline"
        )
        rows += bl["rows"]

    dataio.save_model(dm, os.path.join(out_dir, "model.json"), config_digest=digest)
    if sindy_result is not None:
        dataio.save_model(
            sindy_result["model"],
            os.path.join(out_dir, "baseline_model.json"),
            config_digest=digest,
        )
    dataio.write_table(
        os.path.join(out_dir, "metrics.csv"),
        ["method", "segment", "record", "metric", "value"],
        rows,
    )
    with open(os.path.join(out_dir, "equations.txt"), "w") as fh:
        fh.write(_equation_report(dm, refine_info))
        if sindy_result is not None:
            bl_eqs = sindy_result["model"].equations()
            fh.write("baseline link: " + bl_eqs["link"] + "\n")
    stage("figures", _figures, out_dir, data, result)

    report = {
        "out_dir": out_dir,
        "config_digest": digest,
        "model": dm,
        "learn": learn,
        "link_restarts": [c.sexpr for c in link_restarts],
        "refine": refine_info,
        "rows": rows,
        "sindy": sindy_result,
        "timings": timings,
    }
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(
            {
                "config_digest": digest,
                "wall_clock_s": round(time.time() - t_start, 3),
                "timings_s": timings,
                "equations": dm.equations(),
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    return report
