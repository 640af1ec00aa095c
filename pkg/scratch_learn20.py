"""Reproduce the 20 dB benchmark learn stage and dump internals."""
import time

import numpy as np

from hystereq import learner, pipeline

cfg = pipeline.config_for("benchmark", noise_snr_db=20.0)
data = pipeline.make_datasets(cfg)
train = data["train_fit"][0]
truth = data["replays"][0]["truth"]
cut = len(train)
z_true = truth.z[:cut]

t0 = time.time()
res = pipeline.learn_stage(cfg, data)
print(f"learn: {time.time() - t0:.1f}s, n_iters={res.n_iters}, "
      f"restart={res.restart}, restart_losses={res.restart_losses}")
print(f"loss={res.loss:.6g}, history head={res.loss_history[:3]}, "
      f"tail={res.loss_history[-3:]}")
print("theta:", {k: (round(v, 4) if isinstance(v, float) else v)
                 for k, v in res.theta.items()})
print("repair:", {k: v for k, v in res.repair.items() if k != "lib"})
lib = res.repair.get("lib")
if lib is not None:
    print("lib coef:", np.round(lib, 4))
z = res.z_pred[0]
print(f"corr(z_pred, z_true) = {np.corrcoef(z, z_true)[0, 1]:+.6f}")
print(f"z_pred range [{z.min():.2f}, {z.max():.2f}] vs true "
      f"[{z_true.min():.2f}, {z_true.max():.2f}]")
x = res.x_pred[0]
xt = truth.x[:cut]
print(f"replay x nrmse vs clean truth: "
      f"{100 * np.sqrt(np.mean((x - xt) ** 2)) / (xt.max() - xt.min()):.3f}%")
np.savez("scratch_learn20.npz", z=z, z_true=z_true, x=x, xt=xt)
