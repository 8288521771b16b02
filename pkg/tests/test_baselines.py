import itertools

import numpy as np
import pytest

from vgala.baselines import (
    CreBias, association_count, cre_grid, cre_select, cre_table, evaluate_cre,
    exhaustive_ga_oracle, exhaustive_oracle, latency_metric, run_ga, run_la, sweep_cre_bias,
)
from vgala.evaluation import result_metrics
from vgala.optimizer import ObjectiveParams, OptimizerConfig, objective_psi, run_vgala
from vgala.scenario import MACRO, SMALL, RateMap, build_rate_map, random_scenario

from helpers import line_scenario, hetnet10, station


def toy_rate_map(rates, cand=None):
    rates = np.atleast_2d(np.asarray(rates, dtype=float))
    cand = np.ones_like(rates, dtype=bool) if cand is None else np.asarray(cand)
    return RateMap(rates, cand, np.ones(rates.shape[0]))


# -- LA / GA ------------------------------------------------------------------

def test_la_equals_kappa_zero():
    sc = hetnet10(grid=20)
    rm = build_rate_map(sc)
    a = run_la(sc, rm)
    b = run_vgala(sc, rm, OptimizerConfig(kappa=0.0))
    assert a.association == b.association and np.array_equal(a.rho, b.rho)


def test_la_single_bs_offered_load():
    sc = line_scenario([station(0, MACRO, (50.0, 25.0))], 4, lam=0.1)
    rm = build_rate_map(sc)
    res = run_la(sc, rm)
    np.testing.assert_allclose(res.rho, [(rm.demand_bps / rm.rates[:, 0]).sum()])


def test_la_symmetric_pair_balances():
    sc = line_scenario([station(0, SMALL, (0.0, 25.0)), station(1, SMALL, (400.0, 25.0))], 8,
                       lam=2.0)
    res = run_la(sc, build_rate_map(sc), OptimizerConfig(psi_rtol=1e-14, max_iters=3000))
    assert res.rho[0] == pytest.approx(res.rho[1], abs=1e-6)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.filterwarnings("error::vgala.optimizer.InfeasibleLoadWarning")
def test_each_baseline_wins_its_own_objective(seed):
    sc = random_scenario(2, 4, cell_size_m=100.0, arrival_rate=50.0, seed=seed)
    rm = build_rate_map(sc)
    la_res, ga_res = run_la(sc, rm), run_ga(sc, rm)
    la, ga = result_metrics(la_res, sc), result_metrics(ga_res, sc)
    ga_psi = objective_psi(ga_res.rho, ga_res.params)
    assert ga_psi <= objective_psi(la_res.rho, ga_res.params) * (1 + 1e-6)
    assert la.latency_metric <= ga.latency_metric * (1 + 1e-6)


def test_ga_pushes_load_to_rich_bs():
    sc = line_scenario([station(0, SMALL, (0.0, 25.0)), station(1, SMALL, (400.0, 25.0))], 8,
                       lam=2.0)
    rich = sc.with_stations([sc.stations[0].__class__(**{**sc.stations[0].__dict__,
                                                          "green_budget_w": 1e4}),
                             sc.stations[1]])
    rm = build_rate_map(rich)
    assert run_ga(rich, rm).rho[0] > run_la(rich, rm).rho[0]


def test_ga_oracle_no_green_energy():
    # with e = 0 the GA objective is total power, minimized by the lowest total load
    sc = line_scenario([station(0, SMALL, (0.0, 25.0)), station(1, SMALL, (250.0, 25.0))], 6,
                       lam=0.5)
    rm = build_rate_map(sc)
    orc = exhaustive_ga_oracle(sc, rm)
    assert orc.enumerated == 2 ** 6
    best_total = min(
        sum(rm.demand_bps[x] / rm.rates[x, j] for x, j in enumerate(c))
        for c in itertools.product(range(2), repeat=6)
    )
    assert orc.best_psi == pytest.approx(2 * 37.0 + 4.0 * best_total)


# -- CRE ----------------------------------------------------------------------

def test_cre_unit_bias_is_max_rate():
    rm = build_rate_map(hetnet10(grid=20))
    choice = cre_select(np.ones(rm.n_bs), rm)
    masked = np.where(rm.candidate, rm.rates, -np.inf)
    assert np.array_equal(choice, np.argmax(masked, axis=1))


def test_cre_examples():
    assert cre_select([1.0, 3.0], toy_rate_map([10e6, 5e6]), cell=0) == 1
    rm = toy_rate_map([[10e6, 5e6, 1e3], [10e6, 1e-3, 1e-3]],
                      cand=[[True, True, True], [True, False, False]])
    z = [1.0, 1e9, 1e9]  # small tier dominates wherever it is a candidate
    assert cre_select(z, rm).tolist() == [1, 0]


def test_cre_bias_shape():
    sc = hetnet10(grid=10)
    b = CreBias.two_tier(sc, 4.0)
    assert np.all(b.z[sc.tiers == MACRO] == 1.0) and np.all(b.z[sc.tiers == SMALL] == 4.0)
    with pytest.raises(ValueError):
        CreBias.two_tier(sc, 0.0)


def test_cre_grid_default():
    g = cre_grid()
    assert g.size == 49 and g[0] == 2 ** -6 and g[-1] == pytest.approx(2 ** 6)


def test_sweep_returns_grid_minimum():
    sc = hetnet10(grid=20)
    rm = build_rate_map(sc)
    cfg = OptimizerConfig()
    p = ObjectiveParams.from_scenario(sc, cfg)
    for crit, attr in (("latency", "latency_metric"), ("on_grid", "on_grid_w"), ("psi", "psi")):
        bias = sweep_cre_bias(sc, rm, crit, cfg)
        vals = []
        for z in cre_grid():
            pt, _ = evaluate_cre(sc, rm, z, p)
            vals.append(getattr(pt, attr) if pt.feasible else np.inf)
        assert bias.small_bias == cre_grid()[int(np.argmin(vals))]
        assert sweep_cre_bias(sc, rm, crit, cfg).small_bias == bias.small_bias


def test_sweep_psi_at_kappa_zero_matches_latency():
    sc = hetnet10(grid=20)
    rm = build_rate_map(sc)
    cfg = OptimizerConfig(kappa=0.0)
    assert (sweep_cre_bias(sc, rm, "psi", cfg).small_bias
            == sweep_cre_bias(sc, rm, "latency", cfg).small_bias)


def test_sweep_finds_planted_unit_bias():
    # one macro and one small cell with identical rates everywhere except a balanced split
    sc = line_scenario([station(0, MACRO, (0.0, 25.0)),
                        station(1, SMALL, (500.0, 25.0), tx_power_dbm=46.0)], 10, lam=0.5)
    rm = build_rate_map(sc)
    p = ObjectiveParams.from_scenario(sc, OptimizerConfig())
    table = cre_table(sc, rm, p)
    lat = [t.latency_metric if t.feasible else np.inf for t in table]
    best = sweep_cre_bias(sc, rm, "latency").small_bias
    assert best == table[int(np.argmin(lat))].bias
    assert abs(np.log2(best)) <= 0.25 + 1e-12  # within one grid step of 1


def test_sweep_rejects_unknown_criterion():
    sc = hetnet10(grid=10)
    with pytest.raises(ValueError):
        sweep_cre_bias(sc, build_rate_map(sc), "throughput")


# -- oracle -------------------------------------------------------------------

def test_oracle_single_bs():
    sc = line_scenario([station(0, MACRO, (50.0, 25.0))], 3, lam=0.1)
    rm = build_rate_map(sc)
    orc = exhaustive_oracle(sc, rm)
    p = ObjectiveParams.from_scenario(sc, OptimizerConfig())
    assert orc.enumerated == 1
    assert orc.best_psi == pytest.approx(objective_psi(orc.best_rho, p))


def test_oracle_counts_and_brute_force():
    sc = line_scenario([station(0, SMALL, (0.0, 25.0)), station(1, MACRO, (150.0, 25.0))], 3,
                       lam=1.0)
    rm = build_rate_map(sc)
    orc = exhaustive_oracle(sc, rm)
    assert orc.enumerated == association_count(rm) == 8
    p = ObjectiveParams.from_scenario(sc, OptimizerConfig())
    vals = []
    for c in itertools.product(range(2), repeat=3):
        loads = np.zeros(2)
        for x, j in enumerate(c):
            loads[j] += rm.demand_bps[x] / rm.rates[x, j]
        vals.append(objective_psi(loads, p) if np.all(loads <= 1 - 1e-3) else np.inf)
    assert orc.best_psi == pytest.approx(min(vals), rel=1e-12)


def test_oracle_guard():
    sc = line_scenario([station(0, SMALL, (0.0, 25.0)), station(1, SMALL, (150.0, 25.0))], 18,
                       cell=10.0, lam=0.01)
    with pytest.raises(ValueError, match="oracle limit"):
        exhaustive_oracle(sc, build_rate_map(sc))


def test_latency_metric_batch():
    rho = np.array([[0.5, 0.0], [0.9, 0.5]])
    np.testing.assert_allclose(latency_metric(rho), [1.0, 10.0])
