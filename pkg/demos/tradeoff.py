"""
Latency against on-grid power
=============================

Run the green-aware scheme and its two extremes on the bundled scenario,
then sweep the energy-latency knob kappa.
"""

from vgala import (
    OptimizerConfig, build_rate_map, load_scenario, result_metrics, run_ga, run_la, run_vgala,
    sweep_kappa,
)

# ten base stations (three macro, seven small cells) on a 100 x 100 grid
scenario = load_scenario("bundled:hetnet10").with_theta(0.8)
rates = build_rate_map(scenario)

# kappa = 4 balances latency and grid power; LA ignores energy, GA chases it
config = OptimizerConfig(kappa=4.0)
runs = {
    "vgala": run_vgala(scenario, rates, config),
    "la": run_la(scenario, rates, config),
    "ga": run_ga(scenario, rates, config),
}
print(f"{'scheme':<6} {'latency':>10} {'on-grid W':>10} {'iterations':>10}")
for name, res in runs.items():
    m = result_metrics(res, scenario)
    print(f"{name:<6} {m.latency_metric:>10.3f} {m.on_grid_w:>10.1f} {res.iterations:>10d}")

# larger kappa trades latency for grid power
print("\nkappa sweep")
for row in sweep_kappa(scenario, rates, [0.0, 1.0, 2.0, 4.0, 8.0], config):
    if row.scheme == "vgala":
        print(f"  kappa={row.param_value:<4g} latency={row.latency_metric:8.3f} "
              f"on-grid={row.on_grid_w:7.1f} W")
