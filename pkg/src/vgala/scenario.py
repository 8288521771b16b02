"""World description: area grid, base stations, propagation and per-location rates.

Everything here is built once per balancing run and never mutated afterwards.
Locations are the cells of a regular grid; the arrival rate attached to a cell
is the area-integrated arrival density, so load integrals become finite sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

MACRO = "macro"
SMALL = "small"
TIERS = (MACRO, SMALL)

#: Rate assigned to (location, BS) pairs outside the uplink-pathloss candidate set.
ZETA_BPS = 1e-3


class InfeasibleScenarioError(ValueError):
    """A location carrying traffic has no candidate base station."""


def _count(extent: float, cell: float) -> int:
    # rounding slivers below 1e-9 cells are folded into the last cell
    return max(1, math.ceil(extent / cell - 1e-9))


@dataclass(frozen=True)
class AreaGrid:
    """Rectangular service area split into square cells, indexed row-major."""

    width_m: float
    height_m: float
    cell_size_m: float

    def __post_init__(self):
        for name in ("width_m", "height_m", "cell_size_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")

    @property
    def n_cols(self) -> int:
        return _count(self.width_m, self.cell_size_m)

    @property
    def n_rows(self) -> int:
        return _count(self.height_m, self.cell_size_m)

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    def _edges(self, n, extent):
        lo = np.arange(n) * self.cell_size_m
        hi = np.minimum(lo + self.cell_size_m, extent)
        hi[-1] = extent
        return lo, hi

    def centers(self) -> np.ndarray:
        """(n_cells, 2) array of cell centers; partial edge cells use their own midpoint."""
        xl, xh = self._edges(self.n_cols, self.width_m)
        yl, yh = self._edges(self.n_rows, self.height_m)
        cx = (xl + xh) / 2
        cy = (yl + yh) / 2
        gx, gy = np.meshgrid(cx, cy)  # rows index y
        return np.column_stack([gx.ravel(), gy.ravel()])

    def areas(self) -> np.ndarray:
        xl, xh = self._edges(self.n_cols, self.width_m)
        yl, yh = self._edges(self.n_rows, self.height_m)
        return np.outer(yh - yl, xh - xl).ravel()

    def bounds(self) -> np.ndarray:
        """(n_cells, 4) array of ``x_lo, x_hi, y_lo, y_hi`` per cell."""
        xl, xh = self._edges(self.n_cols, self.width_m)
        yl, yh = self._edges(self.n_rows, self.height_m)
        r, c = self.row_col(np.arange(self.n_cells))
        return np.column_stack([xl[c], xh[c], yl[r], yh[r]])

    def row_col(self, index):
        return np.divmod(index, self.n_cols)


class LocationCell(NamedTuple):
    center: tuple[float, float]
    lam: float  # arrivals/s attributed to the cell
    nu: float  # bits per arrival


@dataclass(frozen=True)
class BaseStation:
    id: int
    tier: str
    position: tuple[float, float]
    tx_power_dbm: float
    bandwidth_hz: float
    static_power_w: float
    load_power_coeff_w: float
    green_budget_w: float = 0.0
    theta: float = 0.8
    vartheta: float = 1.0
    panel_area_m2: float | None = None

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValueError(f"tier must be one of {TIERS}, got {self.tier!r}")
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth_hz must be > 0")
        if self.static_power_w < 0:
            raise ValueError("static_power_w must be >= 0")
        if not self.load_power_coeff_w > 0:
            raise ValueError("load_power_coeff_w must be > 0")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.vartheta > 0:
            raise ValueError("vartheta must be > 0")
        if self.green_budget_w < 0:
            raise ValueError("green_budget_w must be >= 0")


@dataclass(frozen=True)
class ChannelParams:
    """Link budget terms. Defaults follow the COST-231 style table used for HetNets.

    Macro pathloss takes distance in km, small-cell pathloss in m.
    ``shadowing_mode='lognormal'`` replaces the fixed shadowing margin with a
    seeded zero-mean log-normal draw of standard deviation ``shadowing_db``
    added on top of the margin-free link.
    """

    shadowing_db: float = 5.0
    rayleigh_margin_db: float = 9.0
    antenna_gain_db: float = 15.0
    noise_dbm: float = -174.0  # per Hz
    receiver_sensitivity_dbm: float = -123.0
    uplink_pathloss_threshold_db: float = 140.0
    shadowing_mode: str = "fixed"
    zeta: float = ZETA_BPS

    def __post_init__(self):
        if self.shadowing_mode not in ("fixed", "lognormal"):
            raise ValueError("shadowing_mode must be 'fixed' or 'lognormal'")
        for name in ("receiver_sensitivity_dbm", "uplink_pathloss_threshold_db"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.zeta > 0:
            raise ValueError("zeta must be > 0")


@dataclass(frozen=True, eq=False)
class Scenario:
    grid: AreaGrid
    stations: tuple[BaseStation, ...]
    channel: ChannelParams
    lam: np.ndarray  # per cell, arrivals/s
    nu: np.ndarray  # per cell, bits/arrival
    seed: int = 0
    solar_efficiency: float | None = None
    irradiance_w_m2: float = 1000.0

    def __post_init__(self):
        stations = tuple(sorted(self.stations, key=lambda b: b.id))
        ids = [b.id for b in stations]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate base station ids: {ids}")
        if not stations:
            raise ValueError("scenario needs at least one base station")
        lam = np.array(np.broadcast_to(self.lam, (self.grid.n_cells,)), dtype=float)
        nu = np.array(np.broadcast_to(self.nu, (self.grid.n_cells,)), dtype=float)
        if np.any(lam < 0):
            raise ValueError("lambda must be >= 0 in every cell")
        if np.any(nu <= 0):
            raise ValueError("nu must be > 0 in every cell")
        lam.flags.writeable = False
        nu.flags.writeable = False
        object.__setattr__(self, "stations", stations)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "nu", nu)

    @property
    def n_bs(self) -> int:
        return len(self.stations)

    @property
    def demand_bps(self) -> np.ndarray:
        """Offered traffic per cell, lambda * nu in bit/s."""
        return self.lam * self.nu

    def cell(self, index: int) -> LocationCell:
        c = self.grid.centers()[index]
        return LocationCell((float(c[0]), float(c[1])), float(self.lam[index]), float(self.nu[index]))

    def station_array(self, name: str) -> np.ndarray:
        return np.array([getattr(b, name) for b in self.stations], dtype=float)

    @property
    def tiers(self) -> np.ndarray:
        return np.array([b.tier for b in self.stations])

    def with_stations(self, stations: Sequence[BaseStation]) -> "Scenario":
        return replace(self, stations=tuple(stations))

    def with_theta(self, theta: float) -> "Scenario":
        return self.with_stations([replace(b, theta=theta) for b in self.stations])

    def with_grid(self, cells_per_side: int) -> "Scenario":
        """Re-grid to ``cells_per_side`` columns, keeping total arrival rate and mean nu."""
        cell = max(self.grid.width_m, self.grid.height_m) / cells_per_side
        grid = AreaGrid(self.grid.width_m, self.grid.height_m, cell)
        total = float(self.lam.sum())
        area = grid.areas()
        lam = total * area / area.sum()
        nu = float(np.average(self.nu, weights=self.lam)) if total > 0 else float(self.nu.mean())
        return replace(self, grid=grid, lam=lam, nu=nu)


def uniform_traffic(grid: AreaGrid, arrival_rate: float) -> np.ndarray:
    """Spread ``arrival_rate`` (arrivals/s over the whole area) over cells by area."""
    areas = grid.areas()
    return arrival_rate * areas / areas.sum()


# -- propagation --------------------------------------------------------------

def pathloss(tier: str, distance_m, min_distance_m: float = 1.0):
    """Distance-dependent pathloss in dB.

    Macro: ``128.1 + 37.6 log10(d_km)``. Small cell: ``38 + 10 log10(d_m)``.
    Distances below ``min_distance_m`` (including zero and negatives) are
    clamped to it; scenarios pass half a grid cell.
    """
    d = np.maximum(np.asarray(distance_m, dtype=float), min_distance_m)
    if tier == MACRO:
        out = 128.1 + 37.6 * np.log10(d / 1000.0)
    elif tier == SMALL:
        out = 38.0 + 10.0 * np.log10(d)
    else:
        raise ValueError(f"unknown tier {tier!r}")
    return out if out.ndim else float(out)


def dbm_to_mw(x):
    return np.power(10.0, np.asarray(x, dtype=float) / 10.0)


def _distances(scenario: Scenario) -> np.ndarray:
    centers = scenario.grid.centers()
    pos = np.array([b.position for b in scenario.stations], dtype=float)
    return np.linalg.norm(centers[:, None, :] - pos[None, :, :], axis=-1)


def _shadowing(scenario: Scenario, shape) -> np.ndarray:
    ch = scenario.channel
    if ch.shadowing_mode == "fixed":
        return np.full(shape, ch.shadowing_db)
    rng = np.random.default_rng(scenario.seed)
    return rng.normal(0.0, ch.shadowing_db, size=shape)


@dataclass(frozen=True, eq=False)
class LinkBudget:
    pathloss_db: np.ndarray  # [cells, BSs], distance term only
    loss_db: np.ndarray  # pathloss + shadowing (uplink pathloss estimate)
    rx_dbm: np.ndarray  # received power per (cell, BS)


def link_budget(scenario: Scenario) -> LinkBudget:
    ch = scenario.channel
    dist = _distances(scenario)
    pl = np.empty_like(dist)
    half = scenario.grid.cell_size_m / 2
    for j, b in enumerate(scenario.stations):
        pl[:, j] = pathloss(b.tier, dist[:, j], min_distance_m=half)
    loss = pl + _shadowing(scenario, pl.shape)
    tx = scenario.station_array("tx_power_dbm")
    rx = tx[None, :] + ch.antenna_gain_db - loss - ch.rayleigh_margin_db
    return LinkBudget(pl, loss, rx)


def sinr_matrix(scenario: Scenario, budget: LinkBudget | None = None) -> np.ndarray:
    """Linear SINR for every (cell, BS) under static full-load same-tier interference."""
    budget = budget or link_budget(scenario)
    rx_mw = dbm_to_mw(budget.rx_dbm)
    bw = scenario.station_array("bandwidth_hz")
    noise_mw = dbm_to_mw(scenario.channel.noise_dbm + 10 * np.log10(bw))
    tiers = scenario.tiers
    sinr = np.empty_like(rx_mw)
    for t in TIERS:
        cols = np.flatnonzero(tiers == t)
        if cols.size == 0:
            continue
        total = rx_mw[:, cols].sum(axis=1, keepdims=True)
        interference = total - rx_mw[:, cols]
        sinr[:, cols] = rx_mw[:, cols] / (noise_mw[cols] + interference)
    return sinr


def sinr(cell: int, bs: int, scenario: Scenario) -> float:
    return float(sinr_matrix(scenario)[cell, bs])


def shannon_rate(bandwidth_hz, sinr_linear):
    return np.asarray(bandwidth_hz) * np.log2(1.0 + np.asarray(sinr_linear))


def candidate_mask(scenario: Scenario, budget: LinkBudget | None = None) -> np.ndarray:
    """Pairs passing receiver sensitivity and the uplink pathloss threshold."""
    budget = budget or link_budget(scenario)
    ch = scenario.channel
    return (budget.rx_dbm >= ch.receiver_sensitivity_dbm) & (
        budget.loss_db <= ch.uplink_pathloss_threshold_db
    )


@dataclass(frozen=True, eq=False)
class RateMap:
    """Per-location downlink rates and candidate sets, plus offered traffic per cell."""

    rates: np.ndarray  # [cells, BSs] bit/s
    candidate: np.ndarray  # [cells, BSs] bool
    demand_bps: np.ndarray  # [cells] lambda * nu
    zeta: float = ZETA_BPS

    def __post_init__(self):
        for a in (self.rates, self.candidate, self.demand_bps):
            a.flags.writeable = False

    @property
    def n_cells(self) -> int:
        return self.rates.shape[0]

    @property
    def n_bs(self) -> int:
        return self.rates.shape[1]

    @property
    def load_density(self) -> np.ndarray:
        """Load a cell would place on each BS if associated with it."""
        return self.demand_bps[:, None] / self.rates

    @property
    def loaded(self) -> np.ndarray:
        return self.demand_bps > 0

    def rows(self):
        """(cell_index, bs_index, rate_bps, candidate) tuples for CSV export."""
        for x in range(self.n_cells):
            for j in range(self.n_bs):
                yield x, j, float(self.rates[x, j]), bool(self.candidate[x, j])


def rate(cell: int, bs: int, scenario: Scenario) -> float:
    """Downlink rate of ``bs`` at ``cell``; zeta when the pair is not a candidate."""
    budget = link_budget(scenario)
    if not candidate_mask(scenario, budget)[cell, bs]:
        return scenario.channel.zeta
    s = sinr_matrix(scenario, budget)[cell, bs]
    return float(shannon_rate(scenario.stations[bs].bandwidth_hz, s))


def build_rate_map(scenario: Scenario) -> RateMap:
    budget = link_budget(scenario)
    s = sinr_matrix(scenario, budget)
    cand = candidate_mask(scenario, budget)
    r = shannon_rate(scenario.station_array("bandwidth_hz")[None, :], s)
    zeta = scenario.channel.zeta
    # a real link that rounds below zeta is useless as a candidate
    cand &= r > zeta
    r = np.where(cand, r, zeta)
    demand = scenario.demand_bps.copy()
    orphan = (demand > 0) & ~cand.any(axis=1)
    if orphan.any():
        bad = np.flatnonzero(orphan)
        raise InfeasibleScenarioError(
            f"{bad.size} loaded cell(s) have no candidate BS, first at index {bad[0]}"
        )
    return RateMap(r, cand, demand, zeta)


def traffic_density(cell: int, bs: int, rate_map: RateMap) -> float:
    """Load contributed by ``cell`` to ``bs`` if it were associated there."""
    d = rate_map.demand_bps[cell]
    if d == 0:
        return 0.0
    return float(d / rate_map.rates[cell, bs])


# -- generators ---------------------------------------------------------------

def random_stations(
    n_macro: int,
    n_small: int,
    grid: AreaGrid,
    rng: np.random.Generator,
    *,
    macro_tx_dbm: float = 46.0,
    small_tx_dbm: float = 30.0,
    bandwidth_hz: float = 10e6,
    theta: float = 0.8,
    macro_budget_w: tuple[float, float] = (750.0, 1300.0),
    small_budget_w: tuple[float, float] = (37.0, 48.0),
    efficiency: float = 0.174,
    irradiance: float = 1000.0,
) -> list[BaseStation]:
    """Uniformly placed stations with panel areas drawn so the green budget falls in range."""
    out = []
    for i in range(n_macro + n_small):
        tier = MACRO if i < n_macro else SMALL
        lo, hi = macro_budget_w if tier == MACRO else small_budget_w
        budget = float(rng.uniform(lo, hi))
        area = budget / (efficiency * irradiance)
        pos = (float(rng.uniform(0, grid.width_m)), float(rng.uniform(0, grid.height_m)))
        out.append(
            BaseStation(
                id=i,
                tier=tier,
                position=pos,
                tx_power_dbm=macro_tx_dbm if tier == MACRO else small_tx_dbm,
                bandwidth_hz=bandwidth_hz,
                static_power_w=750.0 if tier == MACRO else 37.0,
                load_power_coeff_w=500.0 if tier == MACRO else 4.0,
                green_budget_w=budget,
                theta=theta,
                panel_area_m2=area,
            )
        )
    return out


def random_scenario(
    n_macro: int,
    n_small: int,
    *,
    width_m: float = 2000.0,
    height_m: float = 2000.0,
    cell_size_m: float = 20.0,
    arrival_rate: float = 200.0,
    bits_per_arrival: float = 250e3,
    seed: int = 0,
    channel: ChannelParams | None = None,
    **station_kw,
) -> Scenario:
    """Randomly deployed HetNet with uniform traffic, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    grid = AreaGrid(width_m, height_m, cell_size_m)
    stations = random_stations(n_macro, n_small, grid, rng, **station_kw)
    return Scenario(
        grid=grid,
        stations=tuple(stations),
        channel=channel or ChannelParams(),
        lam=uniform_traffic(grid, arrival_rate),
        nu=bits_per_arrival,
        seed=seed,
        solar_efficiency=station_kw.get("efficiency", 0.174),
    )


def tiny_scenario(
    n_bs: int,
    n_cols: int,
    n_rows: int = 1,
    *,
    cell_size_m: float = 50.0,
    target_load: float = 0.4,
    seed: int = 0,
) -> Scenario:
    """Small random instance for brute-force checks.

    Tiers alternate macro/small, stations are placed uniformly, per-cell
    arrival rates are gamma distributed and then scaled so the max-rate
    association carries ``target_load`` per BS on average.
    """
    rng = np.random.default_rng(seed)
    grid = AreaGrid(n_cols * cell_size_m, n_rows * cell_size_m, cell_size_m)
    n_macro = (n_bs + 1) // 2
    stations = random_stations(n_macro, n_bs - n_macro, grid, rng)
    shape = rng.gamma(2.0, 1.0, size=grid.n_cells)
    sc = Scenario(grid, tuple(stations), ChannelParams(), lam=shape, nu=250e3, seed=seed)
    best = build_rate_map(sc).rates.max(axis=1)
    per_arrival = (sc.nu / best * shape).sum()
    lam = shape * target_load * n_bs / per_arrival
    return replace(sc, lam=lam)
