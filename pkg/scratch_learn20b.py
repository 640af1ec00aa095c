"""20 dB learn with the smoothness regularizer enabled."""
import time

import numpy as np

from hystereq import pipeline
from hystereq.learner import LearnConfig, fit

cfg = pipeline.config_for("benchmark", noise_snr_db=20.0)
data = pipeline.make_datasets(cfg)
train = data["train_fit"][0]
truth = data["replays"][0]["truth"]
cut = len(train)
z_true = truth.z[:cut]

lcfg = LearnConfig(observed=("x", "xdot", "xddot"), seed=0, lambda_z=1e-4)
t0 = time.time()
res = fit(data["train_fit"], lcfg, excitations=data["train_excs"])
print(f"learn: {time.time() - t0:.1f}s, n_iters={res.n_iters}, loss={res.loss:.6g}")
print("theta:", {k: (round(v, 4) if isinstance(v, float) else v)
                 for k, v in res.theta.items()})
print("repair:", {k: v for k, v in res.repair.items() if k != "lib"})
print("lib coef:", np.round(res.repair.get("lib", []), 4))
z = res.z_pred[0]
print(f"corr(z_pred, z_true) = {np.corrcoef(z, z_true)[0, 1]:+.6f}")
print(f"z range [{z.min():.2f}, {z.max():.2f}] vs true "
      f"[{z_true.min():.2f}, {z_true.max():.2f}]")
x = res.x_pred[0]
xt = truth.x[:cut]
print(f"replay x nrmse vs clean truth: "
      f"{100 * np.sqrt(np.mean((x - xt) ** 2)) / (xt.max() - xt.min()):.3f}%")
