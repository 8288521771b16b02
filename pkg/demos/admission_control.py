"""
Admission control under overload
================================

Scale traffic until no split of it fits under the load cap, watch the
optimizer warn, then admit each user with probability one half.
"""

import warnings

from vgala import (
    InfeasibleLoadWarning, OptimizerConfig, build_rate_map, load_scenario, min_max_load,
    run_vgala, scale_to_min_max_load, uniform_admission,
)

base = load_scenario("bundled:hetnet10").with_grid(50).with_theta(0.8)

# even the best-balanced split loads some BS to 1.6
hot = scale_to_min_max_load(base, 1.6)
rates = build_rate_map(hot)
print(f"best-balanced peak load: {min_max_load(rates)[0]:.3f}")

with warnings.catch_warnings(record=True) as caught:
    warnings.simplefilter("always", InfeasibleLoadWarning)
    run_vgala(hot, rates, OptimizerConfig())
print("without admission:", caught[0].message if caught else "no warning")

# admitting half the users halves every location's offered load
mu = uniform_admission(rates.n_cells, 0.5)
print(f"peak with mu = 0.5: {min_max_load(rates, mu)[0]:.3f}")
res = run_vgala(hot, rates, OptimizerConfig(), mu)
print(f"with admission: stopped by {res.reason} after {res.iterations} updates, "
      f"peak load {res.rho.max():.3f}, any clamped: {bool(res.clamped.any())}")
