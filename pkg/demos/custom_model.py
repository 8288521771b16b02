"""
A custom performance shape
==========================

The objective weights a per-BS performance function f(rho). The default is
the M/G/1 latency rho / (1 - rho); any positive, non-decreasing, convex f
can replace it.
"""

from dataclasses import replace

import numpy as np

from vgala import OptimizerConfig, build_rate_map, load_scenario, run_vgala
from vgala.optimizer import ModelValidationError, generalized_objective

scenario = load_scenario("bundled:hetnet10").with_grid(40).with_theta(0.8)
rates = build_rate_map(scenario)

# a steeper latency proxy that punishes high loads harder
steep = generalized_objective(
    lambda r: r / (1 - r) ** 2,
    lambda r: (1 + r) / (1 - r) ** 3,
    name="steep",
)
for model in (OptimizerConfig().model, steep):
    res = run_vgala(scenario, rates, replace(OptimizerConfig(), model=model))
    print(f"{model.name:<12} peak load {res.rho.max():.3f}, spread {np.ptp(res.rho):.3f}")

# concave shapes are rejected before any run
try:
    generalized_objective(np.sqrt, lambda r: 0.5 / np.sqrt(np.maximum(r, 1e-12)), name="sqrt")
except ModelValidationError as e:
    print("rejected:", e)
