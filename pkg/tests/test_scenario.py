import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vgala.scenario import (
    MACRO, SMALL, AreaGrid, ChannelParams, InfeasibleScenarioError, Scenario, build_rate_map,
    link_budget, pathloss, random_scenario, rate, shannon_rate, sinr, sinr_matrix,
    traffic_density,
)

from helpers import line_scenario, hetnet10, station


# -- grid ---------------------------------------------------------------------

def test_grid_counts_round_up():
    g = AreaGrid(105.0, 40.0, 10.0)
    assert (g.n_cols, g.n_rows, g.n_cells) == (11, 4, 44)
    assert g.areas().sum() == pytest.approx(105.0 * 40.0)


@given(st.floats(1, 500), st.floats(1, 500), st.floats(0.5, 100))
@settings(max_examples=50, deadline=None)
def test_cell_centers_inside_area(w, h, c):
    g = AreaGrid(w, h, c)
    xy = g.centers()
    assert xy.shape == (g.n_cells, 2)
    assert np.all((xy[:, 0] > 0) & (xy[:, 0] < w) & (xy[:, 1] > 0) & (xy[:, 1] < h))
    b = g.bounds()
    assert np.all((b[:, 0] < xy[:, 0]) & (xy[:, 0] < b[:, 1]))


def test_grid_rejects_nonpositive():
    with pytest.raises(ValueError, match="cell_size_m"):
        AreaGrid(10, 10, 0)


def test_station_validation():
    with pytest.raises(ValueError, match="theta"):
        station(0, theta=1.5)
    with pytest.raises(ValueError, match="tier"):
        station(0, tier="femto")


# -- propagation --------------------------------------------------------------

@pytest.mark.parametrize("tier, d, expected", [
    (MACRO, 1000.0, 128.1),
    (SMALL, 10.0, 48.0),
    (MACRO, 100.0, 128.1 - 37.6),
])
def test_pathloss_values(tier, d, expected):
    assert pathloss(tier, d) == pytest.approx(expected, abs=1e-12)


def test_pathloss_clamps_nonpositive_distance():
    assert pathloss(SMALL, 0.0, min_distance_m=5.0) == pathloss(SMALL, 5.0)
    assert pathloss(MACRO, -3.0, min_distance_m=5.0) == pathloss(MACRO, 5.0)


@given(st.floats(1, 5000), st.floats(1, 5000))
def test_pathloss_monotone(a, b):
    a, b = sorted((a, b))
    for tier in (MACRO, SMALL):
        assert pathloss(tier, a) <= pathloss(tier, b)


def _noise_matched_tx(sc, cell, bs):
    # transmit power making the received power equal to the noise floor
    lb = link_budget(sc)
    ch = sc.channel
    noise = ch.noise_dbm + 10 * math.log10(sc.stations[bs].bandwidth_hz)
    return noise - (ch.antenna_gain_db - lb.loss_db[cell, bs] - ch.rayleigh_margin_db)


def test_sinr_single_bs_at_noise_floor():
    sc = line_scenario([station(0, SMALL, (25.0, 25.0))], 3)
    tx = _noise_matched_tx(sc, 2, 0)
    sc = sc.with_stations([replace(sc.stations[0], tx_power_dbm=tx)])
    assert sinr(2, 0, sc) == pytest.approx(1.0, rel=1e-12)


def test_sinr_colocated_pair_near_one():
    quiet = ChannelParams(noise_dbm=-300.0)
    sc = line_scenario([station(0, MACRO, (500.0, 25.0)), station(1, MACRO, (500.0, 25.0))], 4,
                       channel=quiet)
    s = sinr_matrix(sc)
    assert np.allclose(s, 1.0, rtol=1e-6)


def test_sinr_three_bs_independent_recomputation():
    stations = [station(0, MACRO, (30.0, 10.0)), station(1, MACRO, (480.0, 40.0)),
                station(2, SMALL, (250.0, 25.0))]
    sc = line_scenario(stations, 10)
    got = sinr_matrix(sc)
    ch = sc.channel
    for x, (cx, cy) in enumerate(sc.grid.centers()):
        rx = []
        for b in stations:
            d = max(math.hypot(cx - b.position[0], cy - b.position[1]), 25.0)
            pl = (128.1 + 37.6 * math.log10(d / 1000) if b.tier == MACRO
                  else 38 + 10 * math.log10(d))
            dbm = b.tx_power_dbm + 15 - pl - 5 - 9
            rx.append(10 ** (dbm / 10))
        noise = 10 ** ((-174 + 10 * math.log10(10e6)) / 10)
        want = [rx[0] / (noise + rx[1]), rx[1] / (noise + rx[0]), rx[2] / noise]
        np.testing.assert_allclose(got[x], want, rtol=1e-9)
    assert ch.uplink_pathloss_threshold_db == 140.0


@pytest.mark.parametrize("s, expected", [(1.0, 10e6), (3.0, 20e6)])
def test_shannon_rate(s, expected):
    assert shannon_rate(10e6, s) == pytest.approx(expected)


# -- rate map -----------------------------------------------------------------

def test_rate_noncandidate_is_zeta():
    far = line_scenario([station(0, SMALL, (10.0, 25.0))], 3,
                        channel=ChannelParams(receiver_sensitivity_dbm=1e3), lam=0.0)
    assert rate(1, 0, far) == far.channel.zeta


def test_single_bs_column_all_candidates():
    sc = line_scenario([station(0, MACRO, (100.0, 25.0))], 6)
    rm = build_rate_map(sc)
    assert rm.candidate[:, 0].all()


def test_unloaded_uncovered_cell_allowed():
    sc = line_scenario([station(0, SMALL, (25.0, 25.0))], 3,
                       channel=ChannelParams(uplink_pathloss_threshold_db=60.0),
                       lam=np.array([1.0, 0.0, 0.0]))
    rm = build_rate_map(sc)
    assert rm.candidate[0, 0] and not rm.candidate[2].any()


def test_loaded_uncovered_cell_rejected():
    sc = line_scenario([station(0, SMALL, (25.0, 25.0))], 3,
                       channel=ChannelParams(uplink_pathloss_threshold_db=60.0))
    with pytest.raises(InfeasibleScenarioError):
        build_rate_map(sc)


def test_hetnet10_every_cell_covered():
    sc = hetnet10()
    rm = build_rate_map(sc)
    assert sc.n_bs == 10 and (sc.tiers == MACRO).sum() == 3
    assert rm.candidate.any(axis=1).all()


def test_candidate_iff_not_zeta():
    rm = build_rate_map(random_scenario(2, 4, cell_size_m=100.0, seed=5))
    assert np.array_equal(~rm.candidate, rm.rates == rm.zeta)
    assert np.all(rm.rates[rm.candidate] > rm.zeta)


def test_rate_map_deterministic():
    sc = random_scenario(2, 3, cell_size_m=100.0, seed=2,
                         channel=ChannelParams(shadowing_mode="lognormal"))
    a, b = build_rate_map(sc), build_rate_map(sc)
    assert np.array_equal(a.rates, b.rates) and np.array_equal(a.candidate, b.candidate)


def test_rate_linear_in_bandwidth_at_fixed_sinr():
    sc = line_scenario([station(0, SMALL, (25.0, 25.0)), station(1, MACRO, (400.0, 25.0))], 8)
    wide = sc.with_stations([replace(b, bandwidth_hz=2 * b.bandwidth_hz) for b in sc.stations])
    # noise is per Hz, so a wider band also lifts the noise floor; hold SINR fixed
    s = sinr_matrix(sc)
    r1 = shannon_rate(sc.station_array("bandwidth_hz"), s)
    r2 = shannon_rate(wide.station_array("bandwidth_hz"), s)
    np.testing.assert_allclose(r2, 2 * r1)


def test_rate_nonincreasing_with_distance():
    sc = line_scenario([station(0, MACRO, (0.0, 25.0))], 20)
    r = build_rate_map(sc).rates[:, 0]
    assert np.all(np.diff(r) <= 0)


def test_traffic_density():
    sc = line_scenario([station(0, SMALL, (25.0, 25.0))], 2, lam=np.array([0.0, 4.0]), nu=250e3)
    rm = build_rate_map(sc)
    assert traffic_density(0, 0, rm) == 0.0
    assert traffic_density(1, 0, rm) == pytest.approx(1e6 / rm.rates[1, 0])


def test_hetnet10_total_offered_traffic():
    sc = hetnet10()
    assert sc.demand_bps.sum() == pytest.approx(200 * 250e3)


def test_with_grid_keeps_total_rate():
    sc = hetnet10(grid=25)
    assert sc.grid.n_cells == 625
    assert sc.lam.sum() == pytest.approx(200.0)
