"""Scenario builders and oracles shared by the test modules."""

import numpy as np
from scipy.optimize import linprog, minimize

from vgala.baselines import exhaustive_oracle
from vgala.config import load_scenario
from vgala.optimizer import (
    OptimizerConfig, objective_psi, operation_status, scale_to_min_max_load,
)
from vgala.scenario import (
    MACRO, SMALL, AreaGrid, BaseStation, ChannelParams, Scenario, build_rate_map, tiny_scenario,
)

TINY_SHAPES = {2: 12, 3: 9, 4: 8}  # BS count -> cells in the single row


def station(i, tier=MACRO, pos=(0.0, 0.0), **kw):
    base = dict(
        tx_power_dbm=46.0 if tier == MACRO else 30.0,
        bandwidth_hz=10e6,
        static_power_w=750.0 if tier == MACRO else 37.0,
        load_power_coeff_w=500.0 if tier == MACRO else 4.0,
    )
    base.update(kw)
    return BaseStation(id=i, tier=tier, position=tuple(pos), **base)


def line_scenario(stations, n_cells, cell=50.0, lam=1.0, nu=250e3, **kw):
    grid = AreaGrid(n_cells * cell, cell, cell)
    return Scenario(grid, tuple(stations), kw.pop("channel", ChannelParams()), lam=lam, nu=nu, **kw)


def tiny_instances(n=10):
    """First ``n`` seeded tiny instances that admit a feasible discrete association.

    BS count cycles 2, 3, 4 with the seed; enumeration stays under 10^5.
    """
    out, seed = [], 0
    while len(out) < n:
        n_bs = 2 + seed % 3
        sc = tiny_scenario(n_bs, TINY_SHAPES[n_bs], seed=seed)
        rm = build_rate_map(sc)
        try:
            exhaustive_oracle(sc, rm, OptimizerConfig())
        except ValueError:
            seed += 1
            continue
        out.append((seed, sc, rm))
        seed += 1
    return out


def hetnet10(grid=None):
    sc = load_scenario("bundled:hetnet10")
    return sc if grid is None else sc.with_grid(grid)


def overloaded(sc: Scenario, factor: float = 1.6) -> Scenario:
    """Traffic scaled so even the best-balanced split loads some BS to ``factor``."""
    return scale_to_min_max_load(sc, factor)


def relaxed_optimum(rm, params, rho_start):
    """Independent solve of the fractional-association problem with SLSQP.

    Variables are per-(location, candidate BS) traffic shares; the start
    reproduces the loads ``rho_start``.
    """
    dens = rm.demand_bps
    cells, bs = np.nonzero(rm.candidate & (dens > 0)[:, None])
    k = cells.size
    rows = np.unique(cells, return_inverse=True)[1]
    A = np.zeros((rm.n_bs, k))
    A[bs, np.arange(k)] = dens[cells] / rm.rates[cells, bs]
    E = np.zeros((rows.max() + 1, k))
    E[rows, np.arange(k)] = 1.0
    cap = 1.0 - params.epsilon
    start = linprog(np.zeros(k), A_eq=np.vstack([A, E]), b_eq=np.r_[rho_start, np.ones(len(E))],
                    bounds=(0, None), method="highs").x
    loads = lambda e: np.clip(A @ e, 0.0, cap)
    res = minimize(
        lambda e: objective_psi(loads(e), params), start,
        jac=lambda e: A.T @ operation_status(loads(e), params),
        method="SLSQP", bounds=[(0.0, 1.0)] * k,
        constraints=[{"type": "eq", "fun": lambda e: E @ e - 1.0, "jac": lambda e: E},
                     {"type": "ineq", "fun": lambda e: cap - A @ e, "jac": lambda e: -A}],
        options={"ftol": 1e-16, "maxiter": 5000},
    )
    return float(objective_psi(loads(res.x), params))
