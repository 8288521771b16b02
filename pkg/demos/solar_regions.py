"""
Solar panel efficiency sweep
============================

Green budgets scale with panel efficiency. At zero efficiency no base
station has green capacity; once every budget covers full load, grid
power drops to zero.
"""

from vgala import OptimizerConfig, build_rate_map, load_scenario, sweep_solar

scenario = load_scenario("bundled:hetnet10").with_theta(0.8)
rates = build_rate_map(scenario)
efficiencies = [round(0.05 * i, 2) for i in range(10)]

print(f"{'eff':>5} {'region':>6} {'on-grid W':>10} {'LA on-grid W':>13} {'cells moved':>12}")
for p in sweep_solar(scenario, rates, efficiencies, OptimizerConfig(kappa=4.0)):
    moved = int((p.vgala_choice != p.la_choice).sum())
    print(f"{p.efficiency:>5.2f} {p.region:>6} {p.vgala.on_grid_w:>10.1f} "
          f"{p.la.on_grid_w:>13.1f} {moved:>12d}")

# "cells moved" counts locations served by a different BS than under LA.
# Even with every BS fully green the exponential weights keep flattening
# loads, so the association need not coincide with LA's.
