"""Diagnose the 20 dB benchmark learner init quality."""
import numpy as np

from hystereq import learner, pipeline

cfg = pipeline.config_for("benchmark", noise_snr_db=20.0)
data = pipeline.make_datasets(cfg)
train = data["train_fit"][0]
truth = data["replays"][0]["truth"]
cut = len(train)
z_true = truth.z[:cut]
alpha = cfg.params["alpha"]

print(f"train samples: {cut}, dt={train.dt:.6g}")
print(f"true theta: m=2 c=10 k=5e4, z range [{z_true.min():.3f}, {z_true.max():.3f}]")

def report(tag, m0, c0, k0, extras=None):
    resid = train.u - m0 * train.xddot - c0 * train.xdot - k0 * train.x
    if extras:
        resid = resid - extras.get("const", 0.0)
    z0 = resid / alpha
    corr = np.corrcoef(z0, z_true)[0, 1]
    print(f"{tag}: m0={m0:.4f} c0={c0:.3f} k0={k0:.1f} extras={extras} "
          f"corr(z0, z_true)={corr:+.4f}")

m0, c0, k0, extras = learner._init_motion([train], 1, "hysteresis")
report("augmented", m0, c0, k0, extras)

m0, c0, k0 = learner.init_linear(train, power=1)
report("plain    ", m0, c0, k0)

win = learner.small_amplitude_window(train)
print(f"window: {len(win)} samples, rms(x)={np.sqrt(np.mean(win.x**2)):.4g} "
      f"vs full {np.sqrt(np.mean(train.x**2)):.4g}")
m0, c0, k0 = learner.init_linear(win, power=1)
report("window   ", m0, c0, k0)

# same checks at 25 dB for reference (the documented regime)
cfg25 = pipeline.config_for("benchmark", noise_snr_db=25.0)
data25 = pipeline.make_datasets(cfg25)
train25 = data25["train_fit"][0]
m0, c0, k0, extras = learner._init_motion([train25], 1, "hysteresis")
resid = train25.u - m0 * train25.xddot - c0 * train25.xdot - k0 * train25.x
z25 = (resid - extras.get("const", 0.0)) / alpha
print(f"25dB augmented: m0={m0:.4f} c0={c0:.3f} k0={k0:.1f} "
      f"corr={np.corrcoef(z25, truth.z[:cut])[0, 1]:+.4f}")
