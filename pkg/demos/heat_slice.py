"""Train random models on the heat solution in five dimensions and print a slice.

The slice runs along the first coordinate with the others fixed at 0.5.
"""

import numpy as np

from randfeat.benchmarks import HeatExperimentConfig, heat_solution, HeatProblem, run_heat_experiment

cfg = HeatExperimentConfig(classes=("RTF", "RN_tanh"), ms=(5,), Ns=(50, 200), J=20_000,
                           seeds=(0,), slice_points=9, slice_range=8.0)
report = run_heat_experiment(cfg)
print(report.summary)

header, rows = report.slices[5]
print("  ".join(f"{h:>10}" for h in header))
for row in rows:
    print("  ".join(f"{v:10.4f}" for v in row))

# the exact solution is radial: shrink the slice point towards the origin
p = HeatProblem(5)
r = np.linspace(0, 15, 6)
print("radial profile:", np.round(heat_solution(p, np.outer(r, np.eye(5)[0])), 4))
