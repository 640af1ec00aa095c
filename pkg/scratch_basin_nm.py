"""Nelder-Mead over family shifts with a closed-loop score, 20 dB."""
import math
import time

import numpy as np

from hystereq import learner, pipeline
from hystereq.learner import LearnConfig, fit
from hystereq.opt import nelder_mead

cfg = pipeline.config_for("benchmark", noise_snr_db=20.0)
data = pipeline.make_datasets(cfg)
train = data["train_fit"][0]
truth = data["replays"][0]["truth"]
cut = len(train)
z_true = truth.z[:cut]

lcfg = LearnConfig(observed=("x", "xdot", "xddot"), seed=0, repair=False,
                   restarts=1)
res = fit(data["train_fit"], lcfg, excitations=data["train_excs"])
m_hat, c_hat, k_hat = res.theta["m"], res.theta["c"], res.theta["k"]
z_pre = res.z_pred[0]

ds = train
recs = learner._prepare_records([ds], data["train_excs"], lcfg)
stds = learner._pooled_stds(recs, lcfg)
fam = np.column_stack([ds.xddot, ds.xdot, ds.x])
fam_scale = np.std(fam, axis=0)
fam_n = fam / fam_scale
base = {
    "x": ds.x.astype(float), "v": ds.xdot.astype(float),
    "a": ds.xddot.astype(float), "u": recs[0]["u"], "uh": recs[0]["uh"],
    "dt": ds.dt, "x0": recs[0]["x0"], "v0": recs[0]["v0"],
    "wx": 1.0 / stds["x"], "wv": 1.0 / stds["xdot"], "wa": 1.0 / stds["xddot"],
}
nzt = 3 * len(ds)
evals = [0]

def score(p):
    evals[0] += 1
    z = z_pre + fam_n @ p
    d = p / fam_scale
    m1 = m_hat - d[0]
    if m1 <= 1e-12:
        return 1e12
    r = dict(base, z=z, z0=float(z[0]))
    lib = learner._trapz_lib_fit([r])
    q = np.concatenate([[m1, c_hat - d[1], k_hat - d[2]], lib])
    xs, vs, zs = learner._family_sim(q, r, 1)
    aa = (r["u"] - q[1] * vs - q[2] * xs - zs) / q[0]
    rr = np.concatenate([(xs - r["x"]) * r["wx"], (vs - r["v"]) * r["wv"],
                         (aa - r["a"]) * r["wa"]])
    return float(np.mean(rr * rr))

step = 0.7 * float(np.std(z_pre))
t0 = time.time()
p, f, nit = nelder_mead(score, np.zeros(3), max_iter=600, init_step=step)
d = p / fam_scale
print(f"NM: {time.time() - t0:.1f}s, {evals[0]} evals, {nit} iters, "
      f"score={f:.6g} (rms {math.sqrt(f):.4f})")
print(f"member: m={m_hat - d[0]:.4f} c={c_hat - d[1]:.3f} k={k_hat - d[2]:.1f}"
      f"  (true 2 / 10 / 50000)")
z_shift = z_pre + fam_n @ p
print(f"corr(z_shift, z_true) = {np.corrcoef(z_shift, z_true)[0, 1]:+.4f}")
print(f"score at p=0: {score(np.zeros(3)):.6g}")
