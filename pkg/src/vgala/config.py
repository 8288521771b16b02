"""JSON scenario files and experiment configuration.

A scenario file fixes the geometry, traffic, channel and every base station.
An experiment file names a scenario (a path, or ``bundled:<name>`` for the
files shipped in :mod:`vgala.data`) plus optimizer and sweep settings.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .optimizer import OptimizerConfig
from .scenario import AreaGrid, BaseStation, ChannelParams, Scenario

BUNDLED_PREFIX = "bundled:"
EXPERIMENTS = ("run", "sweep-kappa", "sweep-theta", "sweep-solar",
               "compare-cre", "oracle-check", "monte-carlo")
TINY_SCENARIOS = ("tiny_a", "tiny_b", "tiny_c")


class ConfigError(ValueError):
    """Schema or domain violation in a configuration file."""


# -- scenario files -----------------------------------------------------------

_STATION_KEYS = {f.name for f in fields(BaseStation)}
_CHANNEL_KEYS = {f.name for f in fields(ChannelParams)}


def _check_keys(d: dict, allowed, where: str):
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}; allowed {sorted(allowed)}")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing required field '{key}'")
    return d[key]


def scenario_to_dict(sc: Scenario) -> dict:
    stations = []
    for b in sc.stations:
        d = asdict(b)
        d["position"] = list(b.position)
        stations.append(d)
    lam = sc.lam
    nu = sc.nu
    return {
        "area": {"width_m": sc.grid.width_m, "height_m": sc.grid.height_m,
                 "cell_size_m": sc.grid.cell_size_m},
        "traffic": {
            "lam": float(lam[0]) if np.all(lam == lam[0]) else lam.tolist(),
            "nu": float(nu[0]) if np.all(nu == nu[0]) else nu.tolist(),
        },
        "channel": asdict(sc.channel),
        "solar": {"efficiency": sc.solar_efficiency, "irradiance_w_m2": sc.irradiance_w_m2},
        "seed": sc.seed,
        "stations": stations,
    }


def scenario_from_dict(d: dict, where: str = "scenario") -> Scenario:
    _check_keys(d, {"area", "traffic", "channel", "solar", "seed", "stations"}, where)
    area = _require(d, "area", where)
    _check_keys(area, {"width_m", "height_m", "cell_size_m"}, f"{where}.area")
    traffic = _require(d, "traffic", where)
    _check_keys(traffic, {"lam", "nu", "arrival_rate"}, f"{where}.traffic")
    channel = d.get("channel", {})
    _check_keys(channel, _CHANNEL_KEYS, f"{where}.channel")
    solar = d.get("solar", {})
    _check_keys(solar, {"efficiency", "irradiance_w_m2"}, f"{where}.solar")
    try:
        grid = AreaGrid(**area)
        if "arrival_rate" in traffic:
            if "lam" in traffic:
                raise ConfigError(f"{where}.traffic: give 'lam' or 'arrival_rate', not both")
            a = grid.areas()
            lam = traffic["arrival_rate"] * a / a.sum()
        else:
            lam = np.asarray(_require(traffic, "lam", f"{where}.traffic"), dtype=float)
        stations = []
        for i, s in enumerate(_require(d, "stations", where)):
            _check_keys(s, _STATION_KEYS, f"{where}.stations[{i}]")
            s = dict(s)
            s["position"] = tuple(s["position"])
            stations.append(BaseStation(**s))
        return Scenario(
            grid=grid,
            stations=tuple(stations),
            channel=ChannelParams(**channel),
            lam=lam,
            nu=np.asarray(_require(traffic, "nu", f"{where}.traffic"), dtype=float),
            seed=int(d.get("seed", 0)),
            solar_efficiency=solar.get("efficiency"),
            irradiance_w_m2=float(solar.get("irradiance_w_m2", 1000.0)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def save_scenario(sc: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(scenario_to_dict(sc), indent=1) + "\n")
    return path


def bundled_path(name: str) -> Path:
    p = resources.files("vgala") / "data" / f"{name}.json"
    if not p.is_file():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return Path(str(p))


def resolve_scenario_path(ref: str, base: Path | None = None) -> Path:
    if ref.startswith(BUNDLED_PREFIX):
        return bundled_path(ref[len(BUNDLED_PREFIX):])
    p = Path(ref)
    if not p.is_absolute() and base is not None:
        p = base / p
    if not p.is_file():
        raise ConfigError(f"scenario: file not found: {p}")
    return p


def load_scenario(ref: str, base: Path | None = None) -> Scenario:
    path = resolve_scenario_path(ref, base)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"scenario file {path}: invalid JSON ({e})") from e
    return scenario_from_dict(data, where=str(path.name))


# -- experiment config --------------------------------------------------------

DEFAULT_KAPPAS = (0.0, 2.0, 4.0, 8.0)
DEFAULT_THETAS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_EFFICIENCIES = tuple(round(0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = BUNDLED_PREFIX + "hetnet10"
    experiment: str = "run"
    out: str = "out"
    seed: int = 0
    kappa: float = 4.0
    theta: float | None = 0.8  # uniform override; None keeps per-BS values
    epsilon: float = 1e-3
    sigma_armijo: float = 0.3
    xi: float = 0.5
    max_iters: int = 500
    psi_rtol: float = 1e-8
    psi_tol: float | None = None
    uplink_pathloss_threshold_db: float = 140.0
    grid: int | None = None  # cells per side; None keeps the scenario grid
    draws: int = 500
    admission_mu: float | None = None
    kappas: tuple[float, ...] = DEFAULT_KAPPAS
    thetas: tuple[float, ...] = DEFAULT_THETAS
    efficiencies: tuple[float, ...] = DEFAULT_EFFICIENCIES
    base_dir: str | None = field(default=None, compare=False)  # for relative scenario paths

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed: must be a non-negative integer, got {self.seed!r}")
        if self.theta is not None and not 0.0 <= self.theta <= 1.0:
            raise ConfigError(f"theta: must lie in [0, 1], got {self.theta}")
        if self.grid is not None and (not isinstance(self.grid, int) or self.grid < 1):
            raise ConfigError(f"grid: must be a positive integer, got {self.grid!r}")
        if not isinstance(self.draws, int) or self.draws < 1:
            raise ConfigError(f"draws: must be a positive integer, got {self.draws!r}")
        if self.admission_mu is not None and not 0.0 <= self.admission_mu <= 1.0:
            raise ConfigError(f"admission_mu: must lie in [0, 1], got {self.admission_mu}")
        if not self.uplink_pathloss_threshold_db > 0:
            raise ConfigError("uplink_pathloss_threshold_db: must be > 0")
        for name in ("kappas", "thetas", "efficiencies"):
            vals = getattr(self, name)
            if not vals or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
                raise ConfigError(f"{name}: must be a non-empty list of finite numbers")
        if any(k < 0 for k in self.kappas):
            raise ConfigError("kappas: every kappa must be >= 0")
        if any(not 0 <= t <= 1 for t in self.thetas):
            raise ConfigError("thetas: every theta must lie in [0, 1]")
        if any(e < 0 for e in self.efficiencies) or list(self.efficiencies) != sorted(self.efficiencies):
            raise ConfigError("efficiencies: must be non-negative and ascending")
        try:
            self.optimizer_config()
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            kappa=self.kappa, epsilon=self.epsilon, sigma_armijo=self.sigma_armijo,
            xi=self.xi, max_iters=self.max_iters, psi_rtol=self.psi_rtol,
            psi_tol=self.psi_tol,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        for k in ("kappas", "thetas", "efficiencies"):
            d[k] = list(d[k])
        return d

    def build_scenario(self) -> Scenario:
        base = Path(self.base_dir) if self.base_dir else None
        sc = load_scenario(self.scenario, base)
        sc = replace(sc, channel=replace(
            sc.channel, uplink_pathloss_threshold_db=self.uplink_pathloss_threshold_db))
        if self.theta is not None:
            sc = sc.with_theta(self.theta)
        if self.grid is not None:
            sc = sc.with_grid(self.grid)
        return sc


_CONFIG_FIELDS = {f.name: f for f in fields(ExperimentConfig) if f.name != "base_dir"}
_INT_FIELDS = {"seed", "max_iters", "draws", "grid"}


def config_from_dict(d: dict[str, Any], base_dir=None) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config: top level must be a JSON object")
    _check_keys(d, _CONFIG_FIELDS, "config")
    if "scenario" not in d:
        raise ConfigError("config: missing required field 'scenario'")
    kw = {}
    for k, v in d.items():
        if k in _INT_FIELDS and v is not None and (isinstance(v, bool) or not isinstance(v, int)):
            raise ConfigError(f"{k}: must be an integer, got {v!r}")
        if k in ("kappas", "thetas", "efficiencies"):
            if not isinstance(v, list):
                raise ConfigError(f"{k}: must be a list")
            v = tuple(float(x) for x in v)
        kw[k] = v
    return ExperimentConfig(**kw, base_dir=None if base_dir is None else str(base_dir))


def load_config(path) -> ExperimentConfig:
    """Read and validate an experiment file; missing fields take their defaults."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path}: invalid JSON ({e})") from e
    cfg = config_from_dict(data, base_dir=path.parent.resolve())
    resolve_scenario_path(cfg.scenario, Path(cfg.base_dir))
    return cfg


def dump_config(cfg: ExperimentConfig, path=None) -> str:
    text = json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def defaults_table() -> str:
    cfg = ExperimentConfig()
    rows = [(k, v) for k, v in cfg.to_dict().items()]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"  {k:<{width}}  {v}" for k, v in rows)
