"""CSV dataset files and JSON model files.

Text formats only, chosen for inspectability: channel data as CSV with
a JSON meta sidecar, models as JSON holding the equations in their
prefix text form. Floats are written with the shortest decimal form
that parses back to the same 64-bit value, so save/load round-trips
are bitwise exact.
"""

from __future__ import annotations

import json
import os

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import symreg
from .learner import diff_z
from .model import DiscoveredModel
from .simulate import Dataset

CHANNEL_ORDER = ("t", "u", "x", "xdot", "xddot", "z")
MODEL_FORMAT = "hystereq-model"
MODEL_VERSION = 1


def _fmt(v: float) -> str:
    return repr(float(v))


def _sidecar(path: str) -> str:
    stem, _ = os.path.splitext(path)
    return stem + ".meta.json"


def save_dataset(ds: Dataset, path: str) -> None:
    """Write the channels as CSV plus a .meta.json sidecar."""
    cols = [c for c in CHANNEL_ORDER if c != "z" or ds.z is not None]
    arrays = [getattr(ds, c) for c in cols]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in zip(*arrays):
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    with open(_sidecar(path), "w") as fh:
        json.dump(ds.meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def load_dataset(path: str, derive: bool = True) -> Dataset:
    """Read a channel CSV back into a Dataset.

    The header must name t and u plus at least one kinematic channel.
    Missing kinematic channels are filled in when ``derive`` is set:
    derivatives by the second-order difference stencil, antiderivatives
    by the cumulative trapezoid from a zero start; the meta records
    which channels were derived.
    """
    with open(path) as fh:
        header = fh.readline().strip()
        names = [h.strip() for h in header.split(",")]
        unknown = set(names) - set(CHANNEL_ORDER)
        if unknown:
            raise ValueError(f"unknown channels in header: {sorted(unknown)}")
        if len(set(names)) != len(names):
            raise ValueError("duplicate channel in header")
        if "t" not in names or "u" not in names:
            raise ValueError("header must name both t and u")
        if not set(names) & {"x", "xdot", "xddot"}:
            raise ValueError("need at least one of x, xdot, xddot")
        try:
            table = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise ValueError(f"malformed CSV body: {exc}") from exc
    if table.shape[0] < 2:
        raise ValueError("need at least two samples")
    if table.shape[1] != len(names):
        raise ValueError("row width does not match header")

    cols = {name: table[:, i].copy() for i, name in enumerate(names)}
    t = cols["t"]
    steps = np.diff(t)
    dt = float(np.mean(steps))
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-6 * abs(dt):
        raise ValueError("non-uniform time grid (relative jitter above 1e-6)")

    meta = {}
    side = _sidecar(path)
    if os.path.exists(side):
        with open(side) as fh:
            meta = json.load(fh)

    derived = []
    if derive:
        if "x" in cols and "xdot" not in cols:
            cols["xdot"] = diff_z(cols["x"], dt)
            derived.append("xdot")
        if "xdot" in cols and "xddot" not in cols:
            cols["xddot"] = diff_z(cols["xdot"], dt)
            derived.append("xddot")
        if "xdot" in cols and "x" not in cols:
            cols["x"] = cumulative_trapezoid(cols["xdot"], dx=dt, initial=0.0)
            derived.append("x")
        if "xddot" in cols and "xdot" not in cols:
            cols["xdot"] = cumulative_trapezoid(cols["xddot"], dx=dt, initial=0.0)
            derived.append("xdot")
            cols["x"] = cumulative_trapezoid(cols["xdot"], dx=dt, initial=0.0)
            derived.append("x")
    missing = {"x", "xdot", "xddot"} - set(cols)
    if missing:
        raise ValueError(f"channels missing and not derivable: {sorted(missing)}")
    if derived:
        meta = dict(meta)
        meta["derived_channels"] = derived

    try:
        return Dataset(
            t=t,
            u=cols["u"],
            x=cols["x"],
            xdot=cols["xdot"],
            xddot=cols["xddot"],
            z=cols.get("z"),
            meta=meta,
        )
    except ValueError:
        # grid passed the 1e-6 gate but not the constructor's tighter
        # uniformity check; snap to the exact mean-step grid
        meta = dict(meta)
        meta["time_regularized"] = True
        return Dataset(
            t=t[0] + dt * np.arange(len(t)),
            u=cols["u"],
            x=cols["x"],
            xdot=cols["xdot"],
            xddot=cols["xddot"],
            z=cols.get("z"),
            meta=meta,
        )


# -- model files -------------------------------------------------------


def save_model(model: DiscoveredModel, path: str, config_digest: str | None = None) -> None:
    """Write a model as JSON with s-expression equations."""
    if model.parametric:
        motion = {"kind": "parameters", "values": dict(model.motion)}
    else:
        motion = {"kind": "expression", "sexpr": symreg.to_sexpr(model.motion)}
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "motion": motion,
        "link": {"sexpr": symreg.to_sexpr(model.link)},
        "provenance": dict(model.provenance),
    }
    if config_digest is not None:
        doc["config_digest"] = config_digest
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> DiscoveredModel:
    """Read a model JSON file; rejects unknown versions, reports the
    byte offset on malformed content."""
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"model file parse error at byte {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unknown model file version: {doc.get('version')!r}")
    motion_doc = doc["motion"]
    if motion_doc["kind"] == "parameters":
        motion = dict(motion_doc["values"])
    elif motion_doc["kind"] == "expression":
        motion = symreg.from_sexpr(motion_doc["sexpr"])
    else:
        raise ValueError(f"unknown motion kind: {motion_doc['kind']!r}")
    link = symreg.from_sexpr(doc["link"]["sexpr"])
    provenance = dict(doc.get("provenance", {}))
    if "config_digest" in doc:
        provenance.setdefault("config_digest", doc["config_digest"])
    return DiscoveredModel(motion=motion, link=link, provenance=provenance)


# -- metric tables -----------------------------------------------------


def write_table(path: str, header: list, rows: list) -> None:
    """Deterministic CSV metric table; cells are formatted as %.10g."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, float):
                    cells.append(f"{v:.10g}")
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")
