import time
import numpy as np
from hystereq import learner, simulate

p = simulate.BoucWenParams(m=1.0, c=0.8, k=0.5, alpha=1.0,
                           A=4.0, beta=5.0, gamma=-4.0, n=1.5,
                           stiffness_power=3)
rng = np.random.default_rng(7)
exc = simulate.Sinusoid(duration=6.0, sample_rate=100.0, amplitude=1.0, omega=2.0)
datasets, excs = [], []
for i in range(5):
    x0, v0 = rng.uniform(-1, 1, 2)
    datasets.append(simulate.simulate(p, exc, x0=x0, xdot0=v0))
    excs.append(exc)
print("records:", len(datasets), "x", len(datasets[0]))

cfg = learner.LearnConfig(case="hysteresis", stiffness_power=3, restarts=3, seed=0)
t0 = time.time()
res = learner.fit(datasets, cfg, excitations=excs)
print(f"fit time {time.time()-t0:.1f} s, iters {res.n_iters}, restart {res.restart}")
print("restart losses:", ["%.3e" % x for x in res.restart_losses])
th = res.theta
print(f"m={th['m']:.5f} (1)    err {100*(th['m']-1):+.2f}%")
print(f"c={th['c']:.5f} (0.8)  err {100*(th['c']/0.8-1):+.2f}%")
print(f"k={th['k']:.5f} (0.5)  err {100*(th['k']/0.5-1):+.2f}%")
if "lib" in res.repair:
    lib = res.repair["lib"]
    names = (["v"] + [f"v|z|^{q}" for q in learner.LIB_POWERS]
             + [f"|v|s|z|^{q}" for q in learner.LIB_POWERS]
             + [f"z|z|^{q}" for q in learner.LIB_POWERS])
    print("lib (true: v:4, |v|s|z|^1.5:-5, v|z|^1.5:+4):")
    for nm, cf in zip(names, lib):
        if abs(cf) > 0.02:
            print(f"   {nm:12s} {cf:+.4f}")
corrs = [np.corrcoef(zp, d.z)[0, 1] for zp, d in zip(res.z_pred, datasets)]
print("z corr per record:", ["%.5f" % c for c in corrs])
EOF_MARKER = None
