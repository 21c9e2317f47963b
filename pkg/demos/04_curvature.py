"""Curvature telemetry: a circle as a sanity check, then a real training trajectory."""

# %% On a circle of radius r the geometric curvature is 1/r whatever the step.
import numpy as np

from pinncurv.analysis import run_spearman
from pinncurv.geom import track
from pinncurv.optim import OptimizerConfig
from pinncurv.runner import ExperimentConfig, run_single

phi = np.arange(50) * 1e-2
for r in (0.5, 1.0, 4.0):
    pts = r * np.column_stack([np.cos(phi), np.sin(phi)])
    k = [s.kappa_omega for s in track(pts)]
    print(f"radius {r}: kappa_omega in [{min(k):.5f}, {max(k):.5f}]")

# %% During training the curvature rises while the error falls.
record = run_single(ExperimentConfig(OptimizerConfig("ADAM", 1e-3), beta=1.0, epochs=300))
kw = record.series("kappa_omega")
mse = record.series("mse")
for epoch in (2, 10, 50, 150, 300):
    print(f"epoch {epoch:4d}  kappa_omega {kw[epoch]:10.3f}  MSE {mse[epoch]:.3e}")
print(f"Spearman rho(kappa_omega, MSE) = {run_spearman(record):+.3f}")
