"""Rebuild a Gaussian from its ridgelet transform with tanh as the activation.

The reconstruction integral is truncated to |a| <= A and |b| <= B; enlarging
the domain shrinks the error.
"""

import time

import numpy as np

from randfeat.analysis import RidgeletProfile, admissibility_constant, ridgelet_reconstruct_1d

profile = RidgeletProfile()
print("admissibility constant (m=1):", admissibility_constant(profile, "tanh", 1))

u = np.array([-1.0, 0.0, 1.0])
truth = np.exp(-u * u / 2)
for A, B in ((2.0, 10.0), (3.0, 20.0), (5.0, 40.0)):
    start = time.perf_counter()
    rec = ridgelet_reconstruct_1d(profile, lambda v: np.exp(-v * v / 2), "tanh", u, A, B)
    rel = np.abs(rec.real - truth) / truth
    print(f"A={A:3.0f} B={B:3.0f}  relative errors {np.round(rel, 4)}  "
          f"({time.perf_counter() - start:.1f} s)")
