import time
import numpy as np
from hystereq import learner, simulate

p = simulate.BoucWenParams(m=2.0, c=10.0, k=5e4, alpha=1.0,
                           A=5e4, beta=800.0, gamma=-1100.0, n=1.0)
T = 20.0 / 3.0
exc = simulate.SineSweep(duration=T, sample_rate=750.0,
                         amplitude=40.0, f_start=20.0, f_end=50.0)
ds = simulate.simulate(p, exc)
n_train = int(len(ds) * 0.6)
train = ds.window(0, n_train)
print("train samples:", len(train))

cfg = learner.LearnConfig(case="hysteresis", restarts=3, seed=0)
t0 = time.time()
res = learner.fit(train, cfg, excitations=[exc])
t1 = time.time()

print(f"fit time: {t1-t0:.1f} s, iters {res.n_iters}, restart {res.restart}")
print("restart losses:", res.restart_losses)
print("final loss:", res.loss)
print("repair:", res.repair)
th = res.theta
print(f"m={th['m']:.6f} (true 2)   err {100*(th['m']/2-1):+.2f}%")
print(f"c={th['c']:.6f} (true 10)  err {100*(th['c']/10-1):+.2f}%")
print(f"k={th['k']:.2f} (true 5e4) err {100*(th['k']/5e4-1):+.2f}%")
z_true = train.z
z_pred = res.z_pred[0]
corr = np.corrcoef(z_pred, z_true)[0, 1]
print(f"corr(z_pred, z_true) = {corr:.6f}")
# scale match of z itself
lam = np.dot(z_pred, z_true) / np.dot(z_pred, z_pred)
print(f"z scale (true/pred) = {lam:.4f}")
