import math
import numpy as np
from hystereq import learner, simulate

p = simulate.BoucWenParams(m=2.0, c=10.0, k=5e4, alpha=1.0,
                           A=5e4, beta=800.0, gamma=-1100.0, n=1.0)
T = 20.0 / 3.0
exc = simulate.SineSweep(duration=T, sample_rate=750.0,
                         amplitude=40.0, f_start=20.0, f_end=50.0)
ds = simulate.simulate(p, exc)
train = ds.window(0, int(len(ds) * 0.6))

cfg = learner.LearnConfig(case="hysteresis", restarts=1, seed=0, repair=False)
res = learner.fit(train, cfg, excitations=[exc])
th = res.theta
print("raw theta (post-OLS on unrepaired z):", th)
print("loss:", res.loss, "iters:", res.n_iters)

np.savez("/root/pkg/scratch_fit.npz",
         z_pred=res.z_pred[0], x=train.x, xdot=train.xdot,
         xddot=train.xddot, u=train.u, z_true=train.z, t=train.t,
         dt=train.dt, m=th["m"], c=th["c"], k=th["k"],
         x_pred=res.x_pred[0], xdot_pred=res.xdot_pred[0],
         xddot_pred=res.xddot_pred[0])
print("saved")
