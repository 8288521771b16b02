"""Green-energy and latency aware traffic load balancing for HetNets."""

from .scenario import (
    AreaGrid, BaseStation, ChannelParams, RateMap, Scenario, build_rate_map, random_scenario,
    tiny_scenario,
)
from .energy import energy_state, green_capacities, with_solar_efficiency
from .optimizer import (
    InfeasibleLoadWarning, OptimizerConfig, min_max_load, objective_psi, operation_status,
    run_vgala, scale_to_min_max_load, uniform_admission,
)
from .baselines import cre_select, exhaustive_oracle, run_ga, run_la, sweep_cre_bias
from .evaluation import (
    compare_cre, compute_metrics, monte_carlo_compare, result_metrics, sweep_kappa, sweep_solar,
    sweep_theta,
)
from .config import ExperimentConfig, load_config, load_scenario

__version__ = "0.1.0"
