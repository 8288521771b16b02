"""Hybrid-energy base station power model.

Power draw is linear in load on top of a static floor. Harvested (green) power
covers the draw first; whatever is left comes from the grid. Surplus green
power is discarded.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .scenario import BaseStation, Scenario

DEFAULT_EPSILON = 1e-3
STANDARD_IRRADIANCE_W_M2 = 1000.0


def bs_power(bs: BaseStation, rho):
    """Total power draw in watts at load ``rho``."""
    return bs.load_power_coeff_w * np.asarray(rho) + bs.static_power_w


def on_grid_power(bs: BaseStation, rho):
    return np.maximum(bs_power(bs, rho) - bs.green_budget_w, 0.0)


def green_capacity(bs: BaseStation, epsilon: float = DEFAULT_EPSILON) -> float:
    """Largest load the green budget alone can carry, clamped to [eps, 1 - eps]."""
    raw = (bs.green_budget_w - bs.static_power_w) / bs.load_power_coeff_w
    return float(max(epsilon, min(raw, 1.0 - epsilon)))


def green_capacities(scenario: Scenario, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    return np.array([green_capacity(b, epsilon) for b in scenario.stations])


def solar_budget(panel_area_m2, efficiency, irradiance_w_m2=STANDARD_IRRADIANCE_W_M2):
    """Green power in watts from a panel of the given area and cell efficiency."""
    for v in (panel_area_m2, efficiency, irradiance_w_m2):
        if np.any(np.asarray(v) < 0):
            raise ValueError("solar inputs must be non-negative")
    return np.asarray(panel_area_m2) * efficiency * irradiance_w_m2


def with_solar_efficiency(scenario: Scenario, efficiency: float) -> Scenario:
    """Recompute every station's green budget from its panel area at ``efficiency``.

    Stations without a panel area keep their explicit budget.
    """
    stations = []
    for b in scenario.stations:
        if b.panel_area_m2 is None:
            stations.append(b)
            continue
        e = float(solar_budget(b.panel_area_m2, efficiency, scenario.irradiance_w_m2))
        stations.append(replace(b, green_budget_w=e))
    return replace(scenario, stations=tuple(stations), solar_efficiency=efficiency)


@dataclass(frozen=True, eq=False)
class EnergyState:
    rho: np.ndarray
    power_w: np.ndarray
    on_grid_w: np.ndarray
    green_capacity: np.ndarray

    @property
    def total_on_grid_w(self) -> float:
        return float(self.on_grid_w.sum())

    def rows(self, scenario: Scenario):
        """(bs_id, rho, power_w, on_grid_w, green_capacity) for CSV export."""
        for j, b in enumerate(scenario.stations):
            yield (b.id, float(self.rho[j]), float(self.power_w[j]),
                   float(self.on_grid_w[j]), float(self.green_capacity[j]))


def energy_state(scenario: Scenario, rho, epsilon: float = DEFAULT_EPSILON) -> EnergyState:
    rho = np.asarray(rho, dtype=float)
    beta = scenario.station_array("load_power_coeff_w")
    ps = scenario.station_array("static_power_w")
    e = scenario.station_array("green_budget_w")
    power = beta * rho + ps
    return EnergyState(
        rho=rho,
        power_w=power,
        on_grid_w=np.maximum(power - e, 0.0),
        green_capacity=green_capacities(scenario, epsilon),
    )


def total_on_grid(scenario: Scenario, rho) -> np.ndarray:
    """Network on-grid power; ``rho`` may carry leading batch axes."""
    beta = scenario.station_array("load_power_coeff_w")
    ps = scenario.station_array("static_power_w")
    e = scenario.station_array("green_budget_w")
    return np.maximum(beta * np.asarray(rho) + ps - e, 0.0).sum(axis=-1)
