"""
Key length against basis bias
=============================

Sweep the comparator reference over the hardware grid and locate the bias
that maximises the final key for a fixed number of raw coincidences.
"""

import numpy as np

from ebqkd import RateModel, bias_curve, improvement, optimize_bias

model = RateModel(raw_count=34644, e_bx=0.069, e_bz=0.065, f_x=1.1, f_z=1.12, eps_per_basis=3e-3)

curve = bias_curve(model, (0.5, 1.0))
q = np.array([p.q for p in curve])
key = np.array([p.final_key_len for p in curve])
for p in curve[::64]:
    print("q=%.3f  n_x=%6d  n_z=%6d  key=%6d" % (p.q, p.n_x, p.n_z, p.final_key_len))

best = optimize_bias(model)
print("optimum q=%.4f (grid %.4f), key %d, flags %s" % (best.q_opt, best.grid_q, best.final_key_len, best.flags))
print("gain over q=0.5 at q=0.8: %.1f%%" % improvement(model, 0.8))

# more data shifts the optimum towards a stronger bias
for raw in (10**4, 10**5, 10**6):
    m = RateModel(raw, 0.069, 0.065, 1.1, 1.12, 3e-3)
    b = optimize_bias(m)
    print("raw=%8d  q_opt=%.3f  gain=%.1f%%" % (raw, b.q_opt, improvement(m, b.grid_q)))

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    plt.plot(q, key)
    plt.xlabel("P(Z)")
    plt.ylabel("final key [bits]")
    plt.show()
