"""Metrics, Monte Carlo user draws and parameter sweeps.

Every sweep emits rows of ``(param_value, scheme, latency_metric, on_grid_w,
iterations)`` so the CLI can dump them straight to CSV.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .baselines import (
    cre_select,
    latency_metric,
    run_ga,
    run_la,
    sweep_cre_bias,
)
from .energy import DEFAULT_EPSILON, energy_state, green_capacities, with_solar_efficiency
from .optimizer import (
    ObjectiveParams,
    OptimizerConfig,
    VGALAResult,
    latency_indicator,
    objective_psi,
    offered_loads,
    run_vgala,
)
from .scenario import RateMap, Scenario

SWEEP_HEADER = ("param_value", "scheme", "latency_metric", "on_grid_w", "iterations")


# -- metrics ------------------------------------------------------------------

class BsMetrics(NamedTuple):
    bs_id: int
    rho: float
    latency: float
    power_w: float
    on_grid_w: float


@dataclass(frozen=True)
class MetricsReport:
    latency_metric: float
    on_grid_w: float
    per_bs: tuple[BsMetrics, ...]
    iterations: int = 0


def compute_metrics(rho, scenario: Scenario, iterations: int = 0,
                    epsilon: float = DEFAULT_EPSILON) -> MetricsReport:
    """Network latency metric and on-grid power at load vector ``rho``."""
    rho = np.asarray(rho, dtype=float)
    lat = latency_indicator(rho, scenario.station_array("vartheta"))
    es = energy_state(scenario, rho, epsilon)
    rows = tuple(
        BsMetrics(b.id, float(rho[j]), float(lat[j]), float(es.power_w[j]), float(es.on_grid_w[j]))
        for j, b in enumerate(scenario.stations)
    )
    return MetricsReport(float(lat.sum()), float(es.on_grid_w.sum()), rows, int(iterations))


def result_metrics(result: VGALAResult, scenario: Scenario) -> MetricsReport:
    return compute_metrics(result.rho, scenario, result.iterations, result.params.epsilon)


# -- Monte Carlo --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class UserDraw:
    positions: np.ndarray  # [n, 2] metres
    bits: np.ndarray  # [n] traffic per user
    cells: np.ndarray  # [n] grid cell of each user
    seed: object = None

    @property
    def n_users(self) -> int:
        return int(self.bits.size)


def _sample_users(scenario: Scenario, mean_count: float, mean_bits: float,
                  rng: np.random.Generator, seed=None) -> UserDraw:
    lam = scenario.lam
    cdf = np.cumsum(lam)
    n = int(rng.poisson(mean_count))
    cells = np.searchsorted(cdf, rng.uniform(0.0, cdf[-1], size=n), side="right")
    cells = np.minimum(cells, lam.size - 1)
    b = scenario.grid.bounds()[cells]
    u = rng.uniform(size=(n, 2))
    pos = np.column_stack([b[:, 0] + u[:, 0] * (b[:, 1] - b[:, 0]),
                           b[:, 2] + u[:, 1] * (b[:, 3] - b[:, 2])])
    bits = rng.exponential(mean_bits, size=n)
    return UserDraw(pos, bits, cells, seed)


def draw_users(scenario: Scenario, mean_count: float = 200.0,
               mean_traffic_bits: float = 250e3, seed: int = 0) -> UserDraw:
    """One second of user arrivals.

    The count is Poisson with mean ``mean_count``; each user lands in a cell
    with probability proportional to its arrival rate and uniformly inside
    it, and carries an exponentially distributed amount of traffic.
    """
    if not mean_count > 0:
        raise ValueError("mean_count must be > 0")
    if not mean_traffic_bits > 0:
        raise ValueError("mean_traffic_bits must be > 0")
    if not scenario.lam.sum() > 0:
        raise ValueError("scenario carries no traffic")
    return _sample_users(scenario, mean_count, mean_traffic_bits, np.random.default_rng(seed), seed)


def draw_loads(draw: UserDraw, selector, rate_map: RateMap) -> np.ndarray:
    """Per-BS load induced by a draw when each cell is served by ``selector[cell]``."""
    bs = np.asarray(selector)[draw.cells]
    r = rate_map.rates[draw.cells, bs]
    return np.bincount(bs, weights=draw.bits / r, minlength=rate_map.n_bs)


def vgala_selector(result: VGALAResult, rate_map: RateMap) -> np.ndarray:
    """Per-cell choice under the converged operation status (frozen between draws)."""
    return np.asarray(result.association.choice)


def cre_selector(bias, rate_map: RateMap) -> np.ndarray:
    return cre_select(bias, rate_map)


@dataclass(frozen=True)
class MonteCarloSummary:
    scheme: str
    n_draws: int
    latency_mean: float
    latency_se: float
    on_grid_mean: float
    on_grid_se: float
    rho_mean: tuple[float, ...]
    clamped_draws: int

    def row(self):
        return (self.scheme, self.n_draws, self.latency_mean, self.latency_se,
                self.on_grid_mean, self.on_grid_se, self.clamped_draws)


MC_HEADER = ("scheme", "n_draws", "latency_mean", "latency_se",
             "on_grid_mean", "on_grid_se", "clamped_draws")


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if x.size < 2:
        return float(x.mean()), math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def monte_carlo_compare(
    scenario: Scenario,
    rate_map: RateMap,
    schemes: Mapping[str, np.ndarray],
    n_draws: int = 500,
    *,
    seed: int = 0,
    mean_count: float | None = None,
    mean_traffic_bits: float | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> dict[str, MonteCarloSummary]:
    """Mean metrics of each per-cell selector over the same random user draws.

    Draw ``i`` uses its own child seed, so results do not depend on which
    schemes are compared. Loads at or above ``1 - eps`` are clamped and the
    draw is counted in ``clamped_draws``.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    lam = scenario.lam
    mean_count = float(lam.sum()) if mean_count is None else mean_count
    if mean_traffic_bits is None:
        mean_traffic_bits = float(np.average(scenario.nu, weights=lam))
    children = np.random.SeedSequence(seed).spawn(n_draws)
    cap = 1.0 - epsilon
    vartheta = scenario.station_array("vartheta")
    names = list(schemes)
    lat = {k: np.empty(n_draws) for k in names}
    grid = {k: np.empty(n_draws) for k in names}
    rho_sum = {k: np.zeros(rate_map.n_bs) for k in names}
    clamped = dict.fromkeys(names, 0)
    for i, child in enumerate(children):
        draw = _sample_users(scenario, mean_count, mean_traffic_bits,
                             np.random.default_rng(child), seed)
        for k in names:
            raw = draw_loads(draw, schemes[k], rate_map)
            over = raw >= cap
            clamped[k] += int(over.any())
            rho = np.where(over, cap, raw)
            lat[k][i] = latency_metric(rho, vartheta)
            grid[k][i] = energy_state(scenario, rho, epsilon).total_on_grid_w
            rho_sum[k] += rho
    out = {}
    for k in names:
        lm, ls = _mean_se(lat[k])
        gm, gs = _mean_se(grid[k])
        out[k] = MonteCarloSummary(k, n_draws, lm, ls, gm, gs,
                                   tuple((rho_sum[k] / n_draws).tolist()), clamped[k])
    return out


# -- sweeps -------------------------------------------------------------------

class SweepRow(NamedTuple):
    param_value: float
    scheme: str
    latency_metric: float
    on_grid_w: float
    iterations: int


def _row(value, scheme, report: MetricsReport) -> SweepRow:
    return SweepRow(float(value), scheme, report.latency_metric, report.on_grid_w, report.iterations)


def _reference_runs(scenario, rate_map, config, admission):
    la = result_metrics(run_la(scenario, rate_map, config, admission), scenario)
    ga = result_metrics(run_ga(scenario, rate_map, config, admission), scenario)
    return la, ga


def sweep_kappa(scenario: Scenario, rate_map: RateMap, kappas: Sequence[float],
                config: OptimizerConfig = OptimizerConfig(), admission=None) -> list[SweepRow]:
    """vGALA at each ``kappa``, with LA and GA reference rows repeated per value."""
    la, ga = _reference_runs(scenario, rate_map, config, admission)
    rows = []
    for k in kappas:
        res = run_vgala(scenario, rate_map, replace(config, kappa=float(k)), admission)
        rows += [_row(k, "vgala", result_metrics(res, scenario)),
                 _row(k, "la", la), _row(k, "ga", ga)]
    return rows


def sweep_theta(scenario: Scenario, rate_map: RateMap, thetas: Sequence[float],
                config: OptimizerConfig = OptimizerConfig(), admission=None) -> list[SweepRow]:
    """vGALA with a uniform ``theta`` applied to every BS."""
    la, ga = _reference_runs(scenario, rate_map, config, admission)
    rows = []
    for t in thetas:
        res = run_vgala(scenario.with_theta(float(t)), rate_map,
                        replace(config, theta=None), admission)
        rows += [_row(t, "vgala", result_metrics(res, scenario)),
                 _row(t, "la", la), _row(t, "ga", ga)]
    return rows


R1, R2, R3, R4 = "R1", "R2", "R3", "R4"


def solar_region(rho_hat: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> str:
    """R1: no BS has green capacity. R4: every BS is saturated with green power.

    In between, R2 while some BS still has none, R3 once every BS has some.
    """
    lo = np.isclose(rho_hat, epsilon, rtol=0, atol=1e-12)
    hi = np.isclose(rho_hat, 1.0 - epsilon, rtol=0, atol=1e-12)
    if lo.all():
        return R1
    if hi.all():
        return R4
    return R2 if lo.any() else R3


@dataclass(frozen=True, eq=False)
class SolarPoint:
    efficiency: float
    region: str
    green_capacity: np.ndarray
    vgala: MetricsReport
    la: MetricsReport
    vgala_choice: np.ndarray
    la_choice: np.ndarray

    @property
    def same_as_la(self) -> bool:
        return bool(np.array_equal(self.vgala_choice, self.la_choice))


def sweep_solar(scenario: Scenario, rate_map: RateMap, efficiencies: Sequence[float],
                config: OptimizerConfig = OptimizerConfig(), admission=None) -> list[SolarPoint]:
    """Rebuild green budgets from panel areas at each efficiency; run vGALA and LA."""
    eff = np.asarray(efficiencies, dtype=float)
    if np.any(np.diff(eff) < 0):
        raise ValueError("efficiencies must be sorted ascending")
    la_res = run_la(scenario, rate_map, config, admission)  # LA ignores energy
    out = []
    for e in eff:
        sc = with_solar_efficiency(scenario, float(e))
        res = run_vgala(sc, rate_map, config, admission)
        rho_hat = green_capacities(sc, config.epsilon)
        out.append(SolarPoint(
            float(e), solar_region(rho_hat, config.epsilon), rho_hat,
            result_metrics(res, sc), result_metrics(la_res, sc),
            np.asarray(res.association.choice), np.asarray(la_res.association.choice),
        ))
    return out


def solar_rows(points: Iterable[SolarPoint]) -> list[SweepRow]:
    rows = []
    for p in points:
        rows += [_row(p.efficiency, "vgala", p.vgala), _row(p.efficiency, "la", p.la)]
    return rows


# -- CRE comparison -----------------------------------------------------------

CRE_SCHEMES = {"cre_la": "latency", "cre_ga": "on_grid", "cre_lg": "psi"}


@dataclass(frozen=True, eq=False)
class CreComparison:
    biases: dict[str, float]
    selectors: dict[str, np.ndarray]
    fluid_psi: dict[str, float]  # objective at the density-level loads
    monte_carlo: dict[str, MonteCarloSummary] = field(default_factory=dict)


def compare_cre(scenario: Scenario, rate_map: RateMap,
                config: OptimizerConfig = OptimizerConfig(), n_draws: int = 500,
                seed: int = 0, kappas: Sequence[float] | None = None,
                cre_grid=None) -> CreComparison:
    """vGALA at each ``kappa`` against the three CRE bias choices on common user draws.

    CRE biases are tuned on the density model with ``config`` (its ``kappa``
    defines the psi criterion). vGALA schemes are named ``vgala_k<kappa>``.
    """
    kappas = (config.kappa,) if kappas is None else tuple(kappas)
    params = ObjectiveParams.from_scenario(scenario, config)
    cap = 1.0 - config.epsilon
    selectors, fluid, biases = {}, {}, {}
    for k in kappas:
        res = run_vgala(scenario, rate_map, replace(config, kappa=float(k)))
        name = f"vgala_k{k:g}"
        selectors[name] = vgala_selector(res, rate_map)
        fluid[name] = res.psi if k == config.kappa else math.nan
    for name, criterion in CRE_SCHEMES.items():
        bias = sweep_cre_bias(scenario, rate_map, criterion, config, cre_grid)
        biases[name] = bias.small_bias
        selectors[name] = cre_selector(bias, rate_map)
        rho = np.minimum(offered_loads(selectors[name], rate_map), cap)
        fluid[name] = float(objective_psi(rho, params))
    mc = monte_carlo_compare(scenario, rate_map, selectors, n_draws, seed=seed,
                             epsilon=config.epsilon)
    return CreComparison(biases, selectors, fluid, mc)


# -- CSV ----------------------------------------------------------------------

def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return path
