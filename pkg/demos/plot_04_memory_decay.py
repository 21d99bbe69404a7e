"""
Storage time of the spin memory
===============================

Write probe noise into the spins for a while, switch the probe's S_z input
off, and watch the stored excess decay at twice the transverse decay rate.
"""

import numpy as np

from spinmem.params import default_params
from spinmem.sde import SimConfig, decay_autocorrelation, simulate_ensemble

p = default_params()
t_off = 0.02
cfg = SimConfig(duration_s=0.03, dt_s=1 / 16000, frame="rotating", seed=4, sz_gate=(0.0, t_off))
trajs = simulate_ensemble(p, cfg, 300)

# <|c|^2> = <J_z^2 + J_y^2> is J_x for the bare spin state; the rest is stored noise
i0 = int(round(t_off / cfg.dt_s))
excess = []
for k in (0, 8, 16, 32):
    i = i0 + k
    excess.append(np.mean([t.jz[i] ** 2 + t.jy[i] ** 2 for t in trajs]) - p.spin_Jx)
    print(f"t - t_off = {k * cfg.dt_s * 1e3:5.2f} ms: stored excess {excess[-1] / p.spin_Jx:6.3f} J_x, "
          f"relative {excess[-1] / excess[0]:.3f}, exp(-2 Gamma t) = {np.exp(-2 * p.gamma_ang * k * cfg.dt_s):.3f}")

# Without the probe, the precession envelope decays at Gamma
free = p.replace(coupling_a=0.0)
lags = np.array([0.0, 0.5, 1.0, 2.0]) / free.gamma_ang
out = decay_autocorrelation(free, SimConfig(duration_s=10.0, dt_s=1 / 16000, frame="rotating", seed=2), lags)
print("envelope / (J_x/2):", np.round(out["envelope"] / (free.spin_Jx / 2), 3))
print("exp(-Gamma tau):   ", np.round(np.exp(-free.gamma_ang * out["lags_s"]), 3))
