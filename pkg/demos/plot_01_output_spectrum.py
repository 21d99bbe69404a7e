"""
The detected spectrum and its noise areas
=========================================

A flat optical floor plus one Lorentzian at the Larmor frequency.  The
Lorentzian holds three pieces: stored probe noise (back-action), projection
noise, and optional technical spin noise.
"""

import numpy as np

from spinmem import analytic
from spinmem.params import default_params

p = default_params()
print(p)

# Evaluate each additive term on a grid around the resonance
f = np.linspace(p.larmor_Hz - 10 * p.gamma_Hz, p.larmor_Hz + 10 * p.gamma_Hz, 9)
terms = analytic.spectrum_terms(p, f)
for name, values in terms.items():
    print(f"{name:>10}:", np.array2string(values, precision=3))

# Areas are integrals over Hz; the back-action area dominates at eps_z = 7
bana = analytic.bana_closed_form(p)
pna = analytic.pna_closed_form(p)
print(f"BANA = {bana:.4g} s^-2, PNA = {pna:.4g} s^-2, ratio {bana / pna:.2f}")

# With a coherent probe the back-action area and the shot-noise level fix the
# projection noise area, whatever the decay rate
coh = p.replace(eps_z=1.0)
for gamma in (40.0, 80.0, 160.0):
    q = coh.replace(gamma_Hz=gamma)
    inferred = analytic.infer_pna(analytic.bana_closed_form(q), q.snl, q.gamma_Hz)
    print(f"gamma {gamma:5.0f} Hz: inferred PNA {inferred:.6g} (closed form {analytic.pna_closed_form(q):.6g})")

# Variance of J_z: the coherent spin state gives J_x/2, back-action adds to it
print(analytic.variance_budget(p))
