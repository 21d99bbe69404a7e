"""
How the back-action area scales
===============================

Sweep the probe flux, measure coherent and anti-squeezed probes at each point
and regress the back-action area on log-log axes.
"""

import dataclasses

from spinmem.harness import load_plan, run_sweep

plan = load_plan("sweep_sx")

# Closed-form areas: the exponent is exactly 3
dry = run_sweep(dataclasses.replace(plan, dry_run=True))
print(dry.report())

# Full pipeline with a reduced ensemble to keep this quick
sim = run_sweep(dataclasses.replace(plan, n_realizations=60))
print(sim.report())
for row in sim.points:
    print(f"S_x = {row['x']:.2e}: BANA {row['bana']:.4g} +/- {row['bana_err']:.2g}, "
          f"RSN {row['rsn']:.4g} +/- {row['rsn_err']:.2g}")
