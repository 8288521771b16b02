"""Command-line entry point: ``vgala <experiment> [flags]``."""

from __future__ import annotations

import argparse
import json
import platform
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .baselines import exhaustive_oracle, run_ga, run_la
from .config import (
    BUNDLED_PREFIX,
    EXPERIMENTS,
    TINY_SCENARIOS,
    ConfigError,
    ExperimentConfig,
    defaults_table,
    dump_config,
    load_config,
)
from .energy import energy_state
from .evaluation import (
    MC_HEADER,
    SWEEP_HEADER,
    compare_cre,
    monte_carlo_compare,
    result_metrics,
    solar_rows,
    sweep_kappa,
    sweep_solar,
    sweep_theta,
    vgala_selector,
    write_csv,
)
from .optimizer import (
    BacktrackingError,
    InfeasibleLoadWarning,
    feasible_start,
    min_max_load,
    objective_psi,
    offered_loads,
    run_vgala,
    uniform_admission,
)
from .scenario import InfeasibleScenarioError, build_rate_map

EXIT_OK, EXIT_FAIL, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 1, 2, 3
ORACLE_RTOL = 1e-4


class InfeasibleLoadError(RuntimeError):
    """No split of the (admitted) traffic keeps every BS below the load cap."""


def _setup(cfg: ExperimentConfig):
    sc = cfg.build_scenario()
    rm = build_rate_map(sc)
    adm = None if cfg.admission_mu is None else uniform_admission(rm.n_cells, cfg.admission_mu)
    if feasible_start(rm, cfg.epsilon, adm) is None:
        peak, _ = min_max_load(rm, adm)
        raise InfeasibleLoadError(f"best-balanced peak BS load is {peak:.3f}, "
                                  f"above the cap 1 - epsilon = {1 - cfg.epsilon:g}")
    return sc, rm, adm


def _metrics_row(name, res, sc):
    m = result_metrics(res, sc)
    return (name, m.latency_metric, m.on_grid_w, m.iterations, res.psi, res.reason)


def _run(cfg, out: Path) -> list[Path]:
    sc, rm, adm = _setup(cfg)
    opt = cfg.optimizer_config()
    res = run_vgala(sc, rm, opt, adm)
    n = rm.n_bs
    files = [
        write_csv(out / "trace.csv",
                  ("iteration", "psi", "delta", "backtrack_steps", *[f"rho_{j}" for j in range(n)]),
                  res.trace.rows()),
        write_csv(out / "coverage.csv", ("row", "col", "bs_id"), res.association.grid_rows(sc)),
        write_csv(out / "bs_state.csv", ("bs_id", "rho", "power_w", "on_grid_w", "green_capacity"),
                  energy_state(sc, res.rho, opt.epsilon).rows(sc)),
    ]
    rows = [_metrics_row("vgala", res, sc),
            _metrics_row("la", run_la(sc, rm, opt, adm), sc),
            _metrics_row("ga", run_ga(sc, rm, opt, adm), sc)]
    files.append(write_csv(out / "summary.csv",
                           ("scheme", "latency_metric", "on_grid_w", "iterations", "psi", "stop"),
                           rows))
    print(f"vGALA stopped by {res.reason} after {res.iterations} updates, psi={res.psi:.6g}")
    for r in rows:
        print(f"  {r[0]:<6} latency={r[1]:.4f}  on_grid={r[2]:.2f} W")
    return files


def _sweep(cfg, out: Path) -> list[Path]:
    sc, rm, adm = _setup(cfg)
    opt = cfg.optimizer_config()
    if cfg.experiment == "sweep-kappa":
        rows = sweep_kappa(sc, rm, cfg.kappas, opt, adm)
        return [write_csv(out / "sweep_kappa.csv", SWEEP_HEADER, rows)]
    if cfg.experiment == "sweep-theta":
        rows = sweep_theta(sc, rm, cfg.thetas, opt, adm)
        return [write_csv(out / "sweep_theta.csv", SWEEP_HEADER, rows)]
    pts = sweep_solar(sc, rm, cfg.efficiencies, opt, adm)
    return [
        write_csv(out / "sweep_solar.csv", SWEEP_HEADER, solar_rows(pts)),
        write_csv(out / "solar_regions.csv", ("efficiency", "region", "same_as_la"),
                  [(p.efficiency, p.region, p.same_as_la) for p in pts]),
    ]


def _compare_cre(cfg, out: Path) -> list[Path]:
    sc, rm, _ = _setup(cfg)
    cmp = compare_cre(sc, rm, cfg.optimizer_config(), cfg.draws, cfg.seed, cfg.kappas)
    for s in cmp.monte_carlo.values():
        print(f"  {s.scheme:<10} latency={s.latency_mean:.4f}±{s.latency_se:.4f}  "
              f"on_grid={s.on_grid_mean:.2f}±{s.on_grid_se:.2f} W  clamped={s.clamped_draws}")
    return [
        write_csv(out / "compare_cre.csv", MC_HEADER, [s.row() for s in cmp.monte_carlo.values()]),
        write_csv(out / "cre_biases.csv", ("scheme", "small_bias", "fluid_psi"),
                  [(k, b, cmp.fluid_psi[k]) for k, b in cmp.biases.items()]),
    ]


def _monte_carlo(cfg, out: Path) -> list[Path]:
    sc, rm, adm = _setup(cfg)
    opt = cfg.optimizer_config()
    schemes = {
        "vgala": vgala_selector(run_vgala(sc, rm, opt, adm), rm),
        "la": vgala_selector(run_la(sc, rm, opt, adm), rm),
        "ga": vgala_selector(run_ga(sc, rm, opt, adm), rm),
    }
    mc = monte_carlo_compare(sc, rm, schemes, cfg.draws, seed=cfg.seed, epsilon=opt.epsilon)
    return [write_csv(out / "monte_carlo.csv", MC_HEADER, [s.row() for s in mc.values()])]


def _oracle_check(cfg, out: Path):
    refs = ([BUNDLED_PREFIX + t for t in TINY_SCENARIOS]
            if cfg.scenario == ExperimentConfig.scenario else [cfg.scenario])
    opt = cfg.optimizer_config()
    rows, ok = [], True
    for ref in refs:
        c = replace(cfg, scenario=ref)
        sc, rm, adm = _setup(c)
        res = run_vgala(sc, rm, opt, adm)
        orc = exhaustive_oracle(sc, rm, opt, adm)
        assoc = offered_loads(res.association.choice, rm, adm)
        assoc_psi = (float(objective_psi(assoc, res.params))
                     if np.all(assoc <= 1 - opt.epsilon) else float("inf"))
        gap = (res.psi - orc.best_psi) / orc.best_psi
        passed = abs(gap) <= ORACLE_RTOL
        ok &= passed
        rows.append((ref, orc.best_psi, res.psi, assoc_psi, gap, orc.enumerated,
                     orc.feasible_count, "PASS" if passed else "FAIL"))
        print(f"{'PASS' if passed else 'FAIL'} {ref}: oracle psi={orc.best_psi:.8g} "
              f"vGALA psi={res.psi:.8g} (association psi={assoc_psi:.8g}, rel gap {gap:.2e})")
    f = write_csv(out / "oracle_check.csv",
                  ("scenario", "oracle_psi", "vgala_psi", "association_psi", "rel_gap",
                   "enumerated", "feasible", "status"), rows)
    return [f], ok


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run ``cfg.experiment``, write CSVs and ``manifest.json`` into ``cfg.out``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", InfeasibleLoadWarning)
            if cfg.experiment == "run":
                files = _run(cfg, out)
            elif cfg.experiment.startswith("sweep-"):
                files = _sweep(cfg, out)
            elif cfg.experiment == "compare-cre":
                files = _compare_cre(cfg, out)
            elif cfg.experiment == "monte-carlo":
                files = _monte_carlo(cfg, out)
            else:
                files, ok = _oracle_check(cfg, out)
    except (InfeasibleLoadError, InfeasibleScenarioError) as e:
        print(f"error: infeasible load: {e}. Lower the traffic or set admission_mu "
              "(per-location admission probability) in the config.", file=sys.stderr)
        return EXIT_INFEASIBLE
    except BacktrackingError as e:
        print(f"error: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    saturated = {str(w.message) for w in caught if issubclass(w.category, InfeasibleLoadWarning)}
    for w in sorted(saturated):
        print(f"warning: a run ended at the load cap: {w}", file=sys.stderr)
    manifest = {
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "files": sorted(p.name for p in files),
        "versions": {"vgala": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    dump_config(cfg, out / "config.json")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vgala",
        description="Green-energy and latency aware load balancing experiments.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="config defaults:\n" + defaults_table(),
    )
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", type=Path, help="experiment JSON file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--draws", type=int)
    p.add_argument("--grid", type=int, help="cells per side of the re-gridded area")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        over = {k: getattr(args, k) for k in ("out", "seed", "kappa", "theta", "draws", "grid")
                if getattr(args, k) is not None}
        cfg = replace(cfg, experiment=args.experiment, **over)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_FAIL
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
