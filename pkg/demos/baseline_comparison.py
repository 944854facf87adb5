"""TSWLS against the AOA-only geometry baseline on identical draws.

Run: python3 demos/baseline_comparison.py
"""

from tswls import NoiseModel, default_scenario
from tswls.experiments import run_point

scene = default_scenario()
print(" M  sigma_a   TSWLS MSE     geometry MSE   ratio")
for m in (2, 3):
    sub = scene.subset(m)
    for sigma_a in (0.1, 0.01, 0.001):
        r = run_point(sub, NoiseModel.isotropic(sigma_a, 1e-2, m), 5000, seed=4, algorithms=("tswls", "geometry"))
        t, g = r["tswls"], r["geometry"]
        print(f"{m:>2}  {sigma_a:<8g}  {t.mse:.4e}    {g.mse:.4e}     {t.mse / g.mse:.3f}")
