"""Reference association schemes and the brute-force oracle.

* LA: latency only, i.e. the iterative scheme with ``kappa = 0``.
* GA: green-energy first, realized as the large-``kappa`` limit with ``theta = 1``.
* CRE: two-tier rate bias; small cells share one bias, macros stay at 1.
* exhaustive oracle: every discrete association of a tiny instance.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .energy import total_on_grid
from .optimizer import (
    AssociationMap,
    ObjectiveParams,
    OptimizerConfig,
    VGALAResult,
    objective_psi,
    offered_loads,
    run_vgala,
)
from .scenario import MACRO, SMALL, RateMap, Scenario

GA_KAPPA = 50.0
ORACLE_LIMIT = 100_000
CRE_CRITERIA = ("latency", "on_grid", "psi")


def run_la(scenario: Scenario, rate_map: RateMap, config: OptimizerConfig = OptimizerConfig(),
           admission=None) -> VGALAResult:
    return run_vgala(scenario, rate_map, replace(config, kappa=0.0), admission)


def run_ga(scenario: Scenario, rate_map: RateMap, config: OptimizerConfig = OptimizerConfig(),
           admission=None, kappa_large: float = GA_KAPPA) -> VGALAResult:
    return run_vgala(scenario, rate_map, replace(config, kappa=kappa_large, theta=1.0), admission)


def latency_metric(rho, vartheta=1.0):
    """Sum of per-BS M/G/1 latency indicators; batch axes allowed."""
    rho = np.asarray(rho, dtype=float)
    return (vartheta * rho / (1.0 - rho)).sum(axis=-1)


# -- CRE ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CreBias:
    z: np.ndarray
    small_bias: float

    @classmethod
    def two_tier(cls, scenario: Scenario, small_bias: float) -> "CreBias":
        if not small_bias > 0:
            raise ValueError("bias must be > 0")
        z = np.where(scenario.tiers == SMALL, small_bias, 1.0)
        return cls(z, float(small_bias))


def cre_select(bias: CreBias | np.ndarray, rate_map: RateMap, cell: int | None = None):
    """Biased max-rate association over candidates, lowest index on ties."""
    z = bias.z if isinstance(bias, CreBias) else np.asarray(bias, dtype=float)
    if np.any(z <= 0):
        raise ValueError("bias values must be > 0")
    rates = rate_map.rates if cell is None else rate_map.rates[cell:cell + 1]
    cand = rate_map.candidate if cell is None else rate_map.candidate[cell:cell + 1]
    with np.errstate(over="ignore"):
        score = np.where(cand, z * rates, -np.inf)
    choice = np.argmax(score, axis=1)
    orphan = ~cand.any(axis=1)
    choice[orphan] = np.argmax(rates[orphan], axis=1)
    return int(choice[0]) if cell is not None else choice


def cre_grid(n_points: int = 49, lo_exp: float = -6.0, hi_exp: float = 6.0) -> np.ndarray:
    return np.logspace(lo_exp, hi_exp, n_points, base=2.0)


@dataclass(frozen=True)
class CrePoint:
    bias: float
    latency_metric: float
    on_grid_w: float
    psi: float
    feasible: bool


def evaluate_cre(scenario: Scenario, rate_map: RateMap, small_bias: float,
                 params: ObjectiveParams) -> tuple[CrePoint, np.ndarray]:
    bias = CreBias.two_tier(scenario, small_bias)
    choice = cre_select(bias, rate_map)
    raw = offered_loads(choice, rate_map)
    cap = 1.0 - params.epsilon
    feasible = bool(np.all(raw <= cap))
    rho = np.minimum(raw, cap)
    point = CrePoint(
        float(small_bias),
        float(latency_metric(rho, params.vartheta)),
        float(total_on_grid(scenario, rho)),
        float(objective_psi(rho, params)),
        feasible,
    )
    return point, choice


def cre_table(scenario: Scenario, rate_map: RateMap, params: ObjectiveParams,
              grid=None) -> list[CrePoint]:
    grid = cre_grid() if grid is None else np.asarray(grid, dtype=float)
    return [evaluate_cre(scenario, rate_map, z, params)[0] for z in grid]


def _criterion_value(p: CrePoint, criterion: str) -> float:
    if not p.feasible:
        return math.inf
    return {"latency": p.latency_metric, "on_grid": p.on_grid_w, "psi": p.psi}[criterion]


def sweep_cre_bias(scenario: Scenario, rate_map: RateMap, criterion: str,
                   config: OptimizerConfig = OptimizerConfig(), grid=None) -> CreBias:
    """Small-tier bias on a log grid minimizing latency, on-grid power or psi.

    Infeasible biases (any BS over capacity) are skipped; the first grid point
    wins ties.
    """
    if criterion not in CRE_CRITERIA:
        raise ValueError(f"criterion must be one of {CRE_CRITERIA}")
    params = ObjectiveParams.from_scenario(scenario, config)
    table = cre_table(scenario, rate_map, params, grid)
    values = [_criterion_value(p, criterion) for p in table]
    best = int(np.argmin(values))
    if not math.isfinite(values[best]):
        raise ValueError("no feasible bias on the grid")
    return CreBias.two_tier(scenario, table[best].bias)


# -- exhaustive oracle --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OracleResult:
    best_psi: float
    best_association: AssociationMap
    best_rho: np.ndarray
    enumerated: int
    feasible_count: int


def _enumerate_loads(rate_map: RateMap, admission, chunk: int = 20_000):
    """Yield (choices, loads) blocks covering every association of the loaded cells."""
    dens = rate_map.load_density
    if admission is not None:
        dens = dens * np.asarray(admission, dtype=float)[:, None]
    loaded = np.flatnonzero(rate_map.loaded)
    options = [np.flatnonzero(rate_map.candidate[x]) for x in loaded]
    n_bs = rate_map.n_bs
    if loaded.size == 0:
        yield np.zeros((1, 0), dtype=np.intp), np.zeros((1, n_bs)), loaded
        return
    it = itertools.product(*options)
    while True:
        rows = list(itertools.islice(it, chunk))
        if not rows:
            return
        block = np.array(rows, dtype=np.intp)
        idx = np.arange(block.shape[0])
        loads = np.zeros((block.shape[0], n_bs))
        for col, x in enumerate(loaded):
            j = block[:, col]
            np.add.at(loads, (idx, j), dens[x, j])
        yield block, loads, loaded


def association_count(rate_map: RateMap) -> int:
    return math.prod(int(rate_map.candidate[x].sum()) for x in np.flatnonzero(rate_map.loaded))


def _full_choice(rate_map: RateMap, loaded, row) -> np.ndarray:
    choice = np.argmax(rate_map.rates, axis=1)  # unloaded cells: max rate, no effect on loads
    choice[loaded] = row
    return choice


def _oracle(rate_map: RateMap, epsilon: float, admission, score, limit: int) -> OracleResult:
    n = association_count(rate_map)
    if n > limit:
        raise ValueError(f"instance has {n} associations, above the oracle limit {limit}")
    cap = 1.0 - epsilon
    best = (math.inf, None, None)
    feasible_count = 0
    for block, loads, loaded in _enumerate_loads(rate_map, admission):
        ok = np.all(loads <= cap, axis=1)
        feasible_count += int(ok.sum())
        if not ok.any():
            continue
        vals = np.full(loads.shape[0], math.inf)
        vals[ok] = score(loads[ok])
        i = int(np.argmin(vals))
        if vals[i] < best[0]:
            best = (float(vals[i]), block[i], loads[i])
    if best[1] is None:
        raise ValueError("no feasible association exists")
    choice = _full_choice(rate_map, loaded, best[1])
    return OracleResult(best[0], AssociationMap(choice), best[2], n, feasible_count)


def exhaustive_oracle(scenario: Scenario, rate_map: RateMap,
                      config: OptimizerConfig = OptimizerConfig(), admission=None,
                      limit: int = ORACLE_LIMIT) -> OracleResult:
    """Minimum of psi over every discrete association whose loads stay within 1 - eps."""
    params = ObjectiveParams.from_scenario(scenario, config)
    return _oracle(rate_map, config.epsilon, admission,
                   lambda loads: objective_psi(loads, params), limit)


def exhaustive_ga_oracle(scenario: Scenario, rate_map: RateMap,
                         config: OptimizerConfig = OptimizerConfig(), admission=None,
                         limit: int = ORACLE_LIMIT) -> OracleResult:
    """Minimum total on-grid power over every feasible discrete association."""
    return _oracle(rate_map, config.epsilon, admission,
                   lambda loads: total_on_grid(scenario, loads), limit)


def cre_tiers_present(scenario: Scenario) -> bool:
    t = set(scenario.tiers.tolist())
    return MACRO in t and SMALL in t
