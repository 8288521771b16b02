"""Green-energy and latency aware load balancing by conditional-gradient iteration.

The network objective is ``psi(rho) = sum_j vartheta_j * w_j(rho_j) * f(rho_j)``
with ``w_j = exp(kappa * theta_j * (rho_j - rho_hat_j))`` and, by default, the
M/G/1 latency shape ``f(rho) = rho / (1 - rho)``.

Each iteration has two halves:

* user side: every location picks ``argmax_j r_j(x) / phi_j`` where
  ``phi = grad psi`` is the per-BS operation status (an access price);
* BS side: the loads implied by those picks, ``M``, define a direction
  ``M - rho``; a backtracking (Armijo) search picks the step and the loads
  move to ``delta * rho + (1 - delta) * M``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.optimize import linprog, minimize_scalar
from scipy.special import logsumexp

from .energy import green_capacities
from .scenario import RateMap, Scenario, build_rate_map

ArrayFn = Callable[[np.ndarray], np.ndarray]


class BacktrackingError(RuntimeError):
    """Line search exceeded its depth cap."""


class ModelValidationError(ValueError):
    """A custom performance model is not positive, non-decreasing and convex."""


class InfeasibleLoadWarning(UserWarning):
    """Some base station is pinned at the 1 - eps load cap; admission control is needed."""


# -- performance models -------------------------------------------------------

def _mg1_f(rho):
    return rho / (1.0 - rho)


def _mg1_df(rho):
    return 1.0 / (1.0 - rho) ** 2


def _mg1_d2f(rho):
    return 2.0 / (1.0 - rho) ** 3


@dataclass(frozen=True)
class PerformanceModel:
    """Per-BS performance shape ``f`` with first (and optionally second) derivative."""

    name: str
    f: ArrayFn
    df: ArrayFn
    d2f: ArrayFn | None = None

    def second_derivative(self, rho, h=1e-6):
        if self.d2f is not None:
            return self.d2f(rho)
        # central difference of df, pulled inside [0, 1)
        rho = np.asarray(rho, dtype=float)
        lo = np.maximum(rho - h, 0.0)
        hi = rho + h
        return (self.df(hi) - self.df(lo)) / (hi - lo)


MG1_LATENCY = PerformanceModel("mg1_latency", _mg1_f, _mg1_df, _mg1_d2f)


def latency_indicator(rho, vartheta=1.0):
    """M/G/1 latency indicator ``vartheta * rho / (1 - rho)``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho >= 1.0) or np.any(rho < 0.0):
        raise ValueError("latency indicator needs 0 <= rho < 1")
    out = vartheta * _mg1_f(rho)
    return out if np.ndim(out) else float(out)


def weight(rho, theta, rho_hat, kappa):
    """Green-energy weight on a BS's latency term; below 1 while load stays under green capacity."""
    return np.exp(kappa * np.asarray(theta) * (np.asarray(rho) - np.asarray(rho_hat)))


def generalized_objective(
    f: ArrayFn,
    df: ArrayFn,
    d2f: ArrayFn | None = None,
    *,
    name: str = "custom",
    epsilon: float = 1e-3,
    n_grid: int = 1001,
) -> PerformanceModel:
    """Register a custom performance shape after checking it on a grid of [0, 1 - eps].

    ``f`` must be non-negative (strictly positive away from zero load),
    non-decreasing and convex there; otherwise :class:`ModelValidationError`
    names the first offending grid point.
    """
    model = PerformanceModel(name, f, df, d2f)
    grid = np.linspace(0.0, 1.0 - epsilon, n_grid)
    fv = np.asarray(f(grid), dtype=float)
    dv = np.asarray(df(grid), dtype=float)
    d2v = np.asarray(model.second_derivative(grid), dtype=float)
    scale = max(1.0, float(np.max(np.abs(fv))))
    checks = [
        ("f >= 0", fv >= 0),
        ("f > 0 on loaded range", (fv > 0) | (grid == 0)),
        ("f' >= 0", dv >= -1e-12 * scale),
        ("f'' >= 0", d2v >= -1e-6 * max(1.0, float(np.max(np.abs(d2v))))),
        ("finite", np.isfinite(fv) & np.isfinite(dv) & np.isfinite(d2v)),
    ]
    for label, ok in checks:
        if not np.all(ok):
            i = int(np.argmin(ok))
            raise ModelValidationError(f"{name}: {label} violated at rho={grid[i]:.6g}")
    return model


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    kappa: float = 4.0
    epsilon: float = 1e-3
    sigma_armijo: float = 0.3
    xi: float = 0.5
    max_iters: int = 500
    psi_rtol: float = 1e-8  # termination tolerance relative to psi(rho(1))
    psi_tol: float | None = None  # absolute, overrides psi_rtol when set
    theta: float | None = None  # overrides every station's theta when set
    max_backtracks: int = 60
    model: PerformanceModel = MG1_LATENCY

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if not 0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if not 0 < self.sigma_armijo < 0.5:
            raise ValueError(f"sigma_armijo must lie in (0, 0.5), got {self.sigma_armijo}")
        if not 0 < self.xi < 1:
            raise ValueError(f"xi must lie in (0, 1), got {self.xi}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.psi_rtol > 0:
            raise ValueError("psi_rtol must be > 0")
        if self.psi_tol is not None and not self.psi_tol >= 0:
            raise ValueError("psi_tol must be >= 0")
        if self.theta is not None and not 0 <= self.theta <= 1:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be >= 1")


@dataclass(frozen=True, eq=False)
class ObjectiveParams:
    kappa: float
    theta: np.ndarray
    rho_hat: np.ndarray
    vartheta: np.ndarray
    epsilon: float = 1e-3
    model: PerformanceModel = MG1_LATENCY

    @classmethod
    def from_scenario(cls, scenario: Scenario, config: OptimizerConfig) -> "ObjectiveParams":
        theta = scenario.station_array("theta")
        if config.theta is not None:
            theta = np.full_like(theta, config.theta)
        return cls(
            kappa=config.kappa,
            theta=theta,
            rho_hat=green_capacities(scenario, config.epsilon),
            vartheta=scenario.station_array("vartheta"),
            epsilon=config.epsilon,
            model=config.model,
        )


def _check_domain(rho, params: ObjectiveParams):
    rho = np.asarray(rho, dtype=float)
    cap = 1.0 - params.epsilon
    if np.any(rho < 0) or np.any(rho > cap * (1 + 1e-12)):
        raise ValueError(f"loads must lie in [0, {cap}]")
    return rho


def objective_terms(rho, params: ObjectiveParams) -> np.ndarray:
    rho = _check_domain(rho, params)
    w = weight(rho, params.theta, params.rho_hat, params.kappa)
    return params.vartheta * w * params.model.f(rho)


def objective_psi(rho, params: ObjectiveParams):
    """Weighted network objective; leading axes of ``rho`` are treated as a batch."""
    out = objective_terms(rho, params).sum(axis=-1)
    return out if np.ndim(out) else float(out)


def operation_status(rho, params: ObjectiveParams) -> np.ndarray:
    """Per-BS price ``phi_j = d psi / d rho_j``."""
    rho = _check_domain(rho, params)
    a = params.kappa * params.theta
    w = weight(rho, params.theta, params.rho_hat, params.kappa)
    m = params.model
    return params.vartheta * w * (a * m.f(rho) + m.df(rho))


def diag_hessian(rho, params: ObjectiveParams) -> np.ndarray:
    """Diagonal of the Hessian of psi; off-diagonal entries vanish by separability."""
    rho = _check_domain(rho, params)
    a = params.kappa * params.theta
    w = weight(rho, params.theta, params.rho_hat, params.kappa)
    m = params.model
    return params.vartheta * w * (a * a * m.f(rho) + 2 * a * m.df(rho) + m.second_derivative(rho))


# -- user side ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AssociationMap:
    """Chosen BS index for every grid cell."""

    choice: np.ndarray

    def one_hot(self, n_bs: int) -> np.ndarray:
        return np.eye(n_bs, dtype=bool)[self.choice]

    def grid_rows(self, scenario: Scenario):
        """(row, col, bs_id) for coverage-map CSV export."""
        ids = [b.id for b in scenario.stations]
        rows, cols = scenario.grid.row_col(np.arange(self.choice.size))
        for r, c, j in zip(rows, cols, self.choice):
            yield int(r), int(c), ids[int(j)]

    def __eq__(self, other):
        return isinstance(other, AssociationMap) and np.array_equal(self.choice, other.choice)

    __hash__ = None


def _argmax_candidates(score: np.ndarray, rate_map: RateMap) -> np.ndarray:
    # non-candidates never beat a real candidate; np.argmax keeps the lowest index on ties
    masked = np.where(rate_map.candidate, score, -np.inf)
    choice = np.argmax(masked, axis=1)
    orphan = ~rate_map.candidate.any(axis=1)
    if orphan.any():
        choice[orphan] = np.argmax(score[orphan], axis=1)
    return choice


def select_bs(phi, rate_map: RateMap, cell: int | None = None):
    """Rate-per-price argmax for one cell, or for every cell when ``cell`` is None."""
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0) or not np.all(np.isfinite(phi)):
        raise ValueError("operation status must be positive and finite")
    if cell is not None:
        if not rate_map.candidate[cell].any() and rate_map.demand_bps[cell] > 0:
            raise ValueError(f"cell {cell} carries traffic but has no candidate BS")
        sub = RateMap(rate_map.rates[cell:cell + 1].copy(), rate_map.candidate[cell:cell + 1].copy(),
                      rate_map.demand_bps[cell:cell + 1].copy(), rate_map.zeta)
        return int(_argmax_candidates(sub.rates / phi, sub)[0])
    return _argmax_candidates(rate_map.rates / phi, rate_map)


def uniform_admission(n_cells: int, mu: float) -> np.ndarray:
    if not 0 <= mu <= 1:
        raise ValueError(f"admission probability must lie in [0, 1], got {mu}")
    return np.full(n_cells, float(mu))


def offered_loads(choice, rate_map: RateMap, admission=None) -> np.ndarray:
    """Unclamped per-BS load induced by an association (admission-scaled)."""
    choice = np.asarray(choice)
    cells = np.arange(choice.size)
    dens = rate_map.demand_bps / rate_map.rates[cells, choice]
    if admission is not None:
        mu = np.asarray(admission, dtype=float)
        if np.any(mu < 0) or np.any(mu > 1):
            raise ValueError("admission probabilities must lie in [0, 1]")
        dens = mu * dens
    return np.bincount(choice, weights=dens, minlength=rate_map.n_bs)


def perceived_loads(choice, rate_map: RateMap, admission=None, epsilon: float = 1e-3) -> np.ndarray:
    return np.minimum(offered_loads(choice, rate_map, admission), 1.0 - epsilon)


# -- BS side ------------------------------------------------------------------

def _line_search(rho, M, params: ObjectiveParams, config: OptimizerConfig, psi_rho, phi,
                 chunk: int = 16):
    gap = float(phi @ (M - rho))
    cap = 1.0 - params.epsilon
    # step sizes xi**m built by repeated multiplication, tried in blocks of depths
    steps = np.cumprod(np.r_[1.0, np.full(config.max_backtracks, config.xi)])
    for lo in range(0, steps.size, chunk):
        step = steps[lo:lo + chunk, None]
        cand = (1.0 - step) * rho + step * M
        # psi is +inf past the load cap
        ok = np.all(cand <= cap, axis=1)
        psi_c = np.full(ok.size, np.inf)
        if ok.any():
            psi_c[ok] = objective_psi(cand[ok], params)
        accept = np.flatnonzero(psi_c <= psi_rho + config.sigma_armijo * step[:, 0] * gap)
        if accept.size:
            i = int(accept[0])
            return 1.0 - float(step[i, 0]), lo + i, cand[i], float(psi_c[i])
    raise BacktrackingError(
        f"Armijo condition not met after {config.max_backtracks} backtracking steps (gap={gap:.3e})"
    )


def backtrack_delta(rho, M, params: ObjectiveParams, config: OptimizerConfig):
    """Return ``(delta, steps)``: the first ``delta = 1 - xi**m`` passing the Armijo test."""
    rho = np.asarray(rho, dtype=float)
    M = np.asarray(M, dtype=float)
    delta, steps, _, _ = _line_search(
        rho, M, params, config, objective_psi(rho, params), operation_status(rho, params)
    )
    return delta, steps


@dataclass
class IterationTrace:
    """One row per load vector visited; row 0 is the initial point."""

    psi: list = field(default_factory=list)
    delta: list = field(default_factory=list)
    backtrack_steps: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    direction_gap: list = field(default_factory=list)  # phi . (M - rho) at the previous point

    def append(self, psi, delta, steps, rho, gap):
        self.psi.append(float(psi))
        self.delta.append(float(delta))
        self.backtrack_steps.append(int(steps))
        self.rho.append(np.array(rho, dtype=float))
        self.direction_gap.append(float(gap))

    def __len__(self):
        return len(self.psi)

    @property
    def iterations(self) -> int:
        return len(self.psi) - 1

    def psi_array(self) -> np.ndarray:
        return np.array(self.psi)

    def rows(self):
        """(iter, psi, delta, backtrack_steps, rho_1..rho_n) for CSV export."""
        for k in range(len(self)):
            yield (k + 1, self.psi[k], self.delta[k], self.backtrack_steps[k], *self.rho[k].tolist())


@dataclass(frozen=True, eq=False)
class VGALAState:
    rho: np.ndarray
    phi: np.ndarray
    psi: float
    k: int = 1
    overloaded: np.ndarray | None = None  # BSs over the cap when no feasible start exists


@dataclass(frozen=True, eq=False)
class StepResult:
    state: VGALAState
    choice: np.ndarray
    perceived: np.ndarray
    offered: np.ndarray
    delta: float
    steps: int
    gap: float
    fixed_point: bool


def min_max_load(rate_map: RateMap, admission=None) -> tuple[float, np.ndarray]:
    """Smallest achievable maximum BS load over fractional associations.

    Solves the linear program ``min t`` subject to every BS load ``<= t``,
    with each location's traffic split over its candidate BSs. Returns ``t``
    and the loads of an optimal split (a valid relaxed point).
    """
    n = rate_map.n_bs
    dens = rate_map.demand_bps
    if admission is not None:
        dens = dens * np.asarray(admission, dtype=float)
    cells, bs = np.nonzero(rate_map.candidate & (dens > 0)[:, None])
    if cells.size == 0:
        return 0.0, np.zeros(n)
    k = cells.size
    a = dens[cells] / rate_map.rates[cells, bs]
    rows = np.unique(cells, return_inverse=True)[1]
    m = int(rows.max()) + 1
    # variables: one share per candidate pair, then t
    c = np.zeros(k + 1)
    c[-1] = 1.0
    a_ub = sparse.hstack([sparse.csr_matrix((a, (bs, np.arange(k))), shape=(n, k)),
                          sparse.csr_matrix(-np.ones((n, 1)))])
    a_eq = sparse.hstack([sparse.csr_matrix((np.ones(k), (rows, np.arange(k))), shape=(m, k)),
                          sparse.csr_matrix((m, 1))])
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(n), A_eq=a_eq, b_eq=np.ones(m),
                  bounds=(0, None), method="highs-ipm")
    if res.status != 0:
        raise RuntimeError(f"min-max load program failed: {res.message}")
    eta = np.clip(res.x[:k], 0.0, None)
    eta /= np.bincount(rows, weights=eta)[rows]
    rho = np.bincount(bs, weights=a * eta, minlength=n)
    return float(rho.max()), rho


def scale_to_min_max_load(scenario: Scenario, target: float) -> Scenario:
    """Rescale arrival rates so the best-balanced peak load equals ``target``.

    ``target > 1`` gives a scenario no association can serve, which is the
    setting admission control is for. The peak load is linear in traffic.
    """
    if not target > 0:
        raise ValueError(f"target must be > 0, got {target}")
    t, _ = min_max_load(build_rate_map(scenario))
    if t <= 0:
        raise ValueError("scenario carries no traffic")
    return replace(scenario, lam=scenario.lam * (target / t))


def _smooth_max_descent(rho, rate_map: RateMap, cap: float, admission,
                        sharpness: float = 20.0, max_iters: int = 500) -> np.ndarray:
    """Conditional-gradient steps on ``log sum_j exp(sharpness * rho_j)``.

    A cheap way to pull an overloaded start under the cap. Iterates are convex
    combinations of association loads, so they stay valid relaxed points.
    """
    for _ in range(max_iters):
        if np.all(rho < cap):
            break
        # softmax prices; common scaling does not change the argmax
        phi = np.maximum(np.exp(sharpness * (rho - rho.max())), np.finfo(float).tiny)
        d = offered_loads(select_bs(phi, rate_map), rate_map, admission) - rho
        res = minimize_scalar(lambda t: logsumexp(sharpness * (rho + t * d)),
                              bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-10})
        if res.x <= 0 or not np.any(d):
            break
        rho = rho + float(res.x) * d
    return rho


def feasible_start(rate_map: RateMap, epsilon: float, admission=None) -> np.ndarray | None:
    """A relaxed load vector with every BS below ``1 - epsilon``, or None.

    Tries the max-rate association, then a smooth max-load descent from it,
    then the exact min-max-load program; None means no relaxed point fits.
    """
    cap = 1.0 - epsilon
    rho = offered_loads(select_bs(np.ones(rate_map.n_bs), rate_map), rate_map, admission)
    if np.all(rho < cap):
        return rho
    rho = _smooth_max_descent(rho, rate_map, cap, admission)
    if np.all(rho < cap):
        return rho
    t, rho = min_max_load(rate_map, admission)
    return rho if t < cap else None


def initial_state(rate_map: RateMap, params: ObjectiveParams, admission=None) -> VGALAState:
    """Max-rate association loads, repaired into the load cap when they overflow it.

    If no feasible relaxed point is found, falls back to the capped max-rate
    loads and records the overloaded BSs on the state.
    """
    rho = feasible_start(rate_map, params.epsilon, admission)
    over = None
    if rho is None:
        choice = select_bs(np.ones(rate_map.n_bs), rate_map)
        raw = offered_loads(choice, rate_map, admission)
        over = raw > 1.0 - params.epsilon
        rho = np.minimum(raw, 1.0 - params.epsilon)
    return VGALAState(rho, operation_status(rho, params), objective_psi(rho, params), 1, over)


def step(state: VGALAState, rate_map: RateMap, params: ObjectiveParams,
         config: OptimizerConfig, admission=None) -> StepResult:
    """One user-side selection plus one BS-side backtracking update.

    The search direction uses the association's uncapped loads so every
    iterate stays a convex combination of association loads; steps that
    would push a BS past ``1 - eps`` are rejected by the line search.
    """
    choice = select_bs(state.phi, rate_map)
    offered = offered_loads(choice, rate_map, admission)
    M = np.minimum(offered, 1.0 - params.epsilon)
    if np.array_equal(offered, state.rho):
        return StepResult(state, choice, M, offered, 0.0, 0, 0.0, True)
    gap = float(state.phi @ (offered - state.rho))
    delta, steps, rho, psi = _line_search(state.rho, offered, params, config, state.psi, state.phi)
    new = VGALAState(rho, operation_status(rho, params), psi, state.k + 1)
    return StepResult(new, choice, M, offered, delta, steps, gap, False)


@dataclass(frozen=True, eq=False)
class VGALAResult:
    association: AssociationMap
    rho: np.ndarray
    phi: np.ndarray
    trace: IterationTrace
    reason: str  # "fixed_point" | "psi_tol" | "max_iters"
    clamped: np.ndarray  # BSs whose converged load sits at 1 - eps
    params: ObjectiveParams

    @property
    def psi(self) -> float:
        return self.trace.psi[-1]

    @property
    def iterations(self) -> int:
        return self.trace.iterations

    @property
    def feasible(self) -> bool:
        return not self.clamped.any()


def run_vgala(
    scenario: Scenario,
    rate_map: RateMap,
    config: OptimizerConfig = OptimizerConfig(),
    admission=None,
    params: ObjectiveParams | None = None,
) -> VGALAResult:
    """Iterate user-side selection and BS-side load updates to convergence.

    Stops at an exact fixed point ``M(rho) == rho``, when the objective moves
    by less than the tolerance, or after ``config.max_iters`` updates. Emits
    :class:`InfeasibleLoadWarning` if the final association overloads a BS.
    """
    params = params or ObjectiveParams.from_scenario(scenario, config)
    state = start = initial_state(rate_map, params, admission)
    tol = config.psi_tol if config.psi_tol is not None else config.psi_rtol * state.psi
    trace = IterationTrace()
    trace.append(state.psi, math.nan, 0, state.rho, math.nan)
    reason = "max_iters"
    for _ in range(config.max_iters):
        res = step(state, rate_map, params, config, admission)
        if res.fixed_point:
            reason = "fixed_point"
            break
        trace.append(res.state.psi, res.delta, res.steps, res.state.rho, res.gap)
        done = abs(res.state.psi - state.psi) < tol
        state = res.state
        if done:
            reason = "psi_tol"
            break
    choice = select_bs(state.phi, rate_map)
    # pinned at the cap, or no feasible start: offered traffic does not fit
    clamped = state.rho >= (1.0 - params.epsilon) * (1 - 1e-9)
    if start.overloaded is not None:
        clamped |= start.overloaded
    if clamped.any():
        warnings.warn(
            f"BS index(es) {np.flatnonzero(clamped).tolist()} saturate at 1 - eps; "
            "offered traffic exceeds capacity, set an admission field",
            InfeasibleLoadWarning,
            stacklevel=2,
        )
    return VGALAResult(AssociationMap(choice), state.rho, state.phi, trace, reason, clamped, params)


# -- convergence-rate bound ---------------------------------------------------

def estimate_curvature(params: ObjectiveParams, n_grid: int = 10_000) -> tuple[float, float]:
    """Min and max of the diagonal Hessian over a grid of [0, 1 - eps] for every BS."""
    grid = np.linspace(0.0, 1.0 - params.epsilon, n_grid)
    h = np.stack([
        diag_hessian(np.full(params.theta.shape, r), params) for r in grid
    ])
    return float(h.min()), float(h.max())


def rate_factor(q: float, Q: float, config: OptimizerConfig) -> float:
    """Linear-convergence contraction ``z = 1 - min(2 q s, 2 q s xi / Q)``."""
    if not q > 0:
        raise ValueError(f"strong-convexity estimate must be positive, got q={q}")
    s = config.sigma_armijo
    z = 1.0 - min(2 * q * s, 2 * q * s * config.xi / Q)
    if not 0 < z < 1:
        raise ValueError(f"contraction factor z={z} outside (0, 1)")
    return z


def iterations_for_gap(gap: float, tol: float, z: float) -> int:
    if gap <= tol:
        return 0
    return math.ceil(math.log(gap / tol) / math.log(1.0 / z))


def convergence_bound(psi_initial: float, psi_star: float, q: float, Q: float,
                      config: OptimizerConfig, tol: float) -> int:
    """Upper bound on updates needed to bring psi within ``tol`` of ``psi_star``."""
    return iterations_for_gap(psi_initial - psi_star, tol, rate_factor(q, Q, config))


def iterations_to_tolerance(trace: IterationTrace, psi_star: float, tol: float) -> int | None:
    """First update count after which psi is within ``tol`` of ``psi_star``."""
    hits = np.flatnonzero(trace.psi_array() - psi_star <= tol)
    return int(hits[0]) if hits.size else None


def with_kappa(config: OptimizerConfig, kappa: float) -> OptimizerConfig:
    return replace(config, kappa=kappa)
