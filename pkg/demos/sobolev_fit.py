"""Fit a 2-d Gaussian bump and its first derivatives with random trig features.

Shows how the derivative weights change the balance between value and
gradient error, then saves the model and reloads it.
"""

import numpy as np

from randfeat import (
    GaussianTarget,
    SobolevFitSpec,
    TrigFamily,
    load_model,
    save_model,
    train_random_feature_model,
    weighted_sobolev_error,
)
from randfeat.sampling import TEST_STREAM, SeededStream

m = 2
target = GaussianTarget(m)

for rule in ("uniform", "order_scaled"):
    spec = SobolevFitSpec(m, k=1, c=rule)
    value_only = SobolevFitSpec(m, k=0)
    print(f"derivative weights: {rule}")
    for N in (16, 64, 256):
        model = train_random_feature_model(TrigFamily(m), N, target, 4000, spec, seed=1)
        test = SeededStream(1, TEST_STREAM)
        full = weighted_sobolev_error(model, target, spec, 20_000, test)
        vals = weighted_sobolev_error(model, target, value_only, 20_000, SeededStream(1, TEST_STREAM))
        print(f"  N={N:4d}  sobolev error {full:.3e}  value error {vals:.3e}")

save_model(model, "sobolev_fit_model.json")
back = load_model("sobolev_fit_model.json")
u = np.array([[0.3, -0.2]])
print("reloaded model agrees:", np.allclose(back(u), model(u)))
print("operation count:", float(model.ledger.total))
