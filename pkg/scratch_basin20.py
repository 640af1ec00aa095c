"""Compare closed-loop refit cost at the found member vs the true member."""
import math
import time

import numpy as np

from hystereq import learner, pipeline
from hystereq.learner import LearnConfig, fit

cfg = pipeline.config_for("benchmark", noise_snr_db=20.0)
data = pipeline.make_datasets(cfg)
train = data["train_fit"][0]
truth = data["replays"][0]["truth"]
cut = len(train)
z_true = truth.z[:cut]

lcfg = LearnConfig(observed=("x", "xdot", "xddot"), seed=0, repair=False,
                   restarts=1)
t0 = time.time()
res = fit(data["train_fit"], lcfg, excitations=data["train_excs"])
print(f"learn (no repair): {time.time() - t0:.1f}s")
m_hat = res.theta["m"]
c_hat = res.theta["c"]
k_hat = res.theta["k"]
print(f"pre-repair theta: m={m_hat:.4f} c={c_hat:.3f} k={k_hat:.1f}")
z_pre = res.z_pred[0]
print(f"corr(z_pre, z_true) = {np.corrcoef(z_pre, z_true)[0, 1]:+.4f}")

# repair scaffolding, mirroring fit()
ds = train
recs = learner._prepare_records([ds], data["train_excs"], lcfg)
stds = learner._pooled_stds(recs, lcfg)
base = {
    "x": ds.x.astype(float), "v": ds.xdot.astype(float),
    "a": ds.xddot.astype(float), "u": recs[0]["u"], "uh": recs[0]["uh"],
    "dt": ds.dt, "x0": recs[0]["x0"], "v0": recs[0]["v0"],
    "wx": 1.0 / stds["x"], "wv": 1.0 / stds["xdot"], "wa": 1.0 / stds["xddot"],
}
nzt = 3 * len(ds)

def member(e, d, g, tag):
    """Shift z to the member with constants (m_hat-e, c_hat-d, k_hat-g)."""
    z = z_pre + e * ds.xddot + d * ds.xdot + g * ds.x
    r = dict(base, z=z, z0=float(z[0]), fam=None)
    lib0 = learner._trapz_lib_fit([r])
    q0 = np.concatenate([[m_hat - e, c_hat - d, k_hat - g], lib0])
    t1 = time.time()
    sol = learner._closed_loop_refit([r], q0, 1, 2000)
    rms = math.sqrt(2.0 * sol.cost / nzt)
    print(f"{tag}: start m={q0[0]:.3f} c={q0[1]:.2f} k={q0[2]:.0f} -> "
          f"m={sol.x[0]:.4f} c={sol.x[1]:.3f} k={sol.x[2]:.1f} "
          f"resid_rms={rms:.4f} nfev={sol.nfev} ({time.time() - t1:.1f}s)")
    return sol, rms

member(0.0, 0.0, 0.0, "as-learned ")
member(m_hat - 0.28, c_hat - 116.0, k_hat - 72800.0, "wrong-found")
sol, rms = member(m_hat - 2.0, c_hat - 10.0, k_hat - 5e4, "true       ")
zt = z_pre + (m_hat - 2.0) * ds.xddot + (c_hat - 10.0) * ds.xdot + (k_hat - 5e4) * ds.x
dm, dc, dk = m_hat - sol.x[0], c_hat - sol.x[1], k_hat - sol.x[2]
z_fix = z_pre + dm * ds.xddot + dc * ds.xdot + dk * ds.x
print(f"true-member z corr (shift only) = {np.corrcoef(zt, z_true)[0, 1]:+.4f}")
print(f"refit z corr = {np.corrcoef(z_fix, z_true)[0, 1]:+.4f}")
