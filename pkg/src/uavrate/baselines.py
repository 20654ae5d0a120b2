"""The proposed scheme and the four comparison schemes.

Every scheme is the penalty BCD loop with something taken away: the SE model
(average-channel), the per-slot durations (one shared slot length), the
altitude (pinned to h_min) or the whole path (hover-and-fly at h_min).
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np

from .core_model import DesignVars, DomainError, EnvParams, Scenario
from .optimizer import (
    IterationTrace,
    PenaltyConfig,
    hover_and_fly,
    initialize,
    run_algorithm1,
)
from .sca import Restriction
from .stats import QuadratureGrid
from .validation import McReport, monte_carlo_validate

logger = logging.getLogger(__name__)

SCHEMES = ("proposed", "ac", "fixed-slot", "fixed-alt", "fixed-traj")


@dataclass(frozen=True)
class McConfig:
    n_realizations: int = 30_000
    seed: int = 0
    workers: int | None = None


@dataclass
class BaselineResult:
    scheme: str
    plan: DesignVars
    trace: IterationTrace
    grid: QuadratureGrid
    scenario: Scenario
    margin_used: float = 0.0
    re_optimization_count: int = 0
    mc_report: McReport | None = None

    @property
    def completion_time(self) -> float:
        return self.plan.completion_time

    @property
    def feasible_under_mc(self) -> bool | None:
        return None if self.mc_report is None else self.mc_report.all_feasible


class MarginCapError(RuntimeError):
    """The AC margin loop passed its cap without an MC-feasible plan."""

    def __init__(self, message, margin, report=None, attempts=0):
        super().__init__(message)
        self.margin = margin
        self.report = report
        self.attempts = attempts


def _validate(result: BaselineResult, env: EnvParams, mc_config: McConfig | None):
    if mc_config is not None:
        result.mc_report = monte_carlo_validate(
            result.plan, result.scenario, env, mc_config.n_realizations, mc_config.seed,
            grid=result.grid, workers=mc_config.workers)
    return result


def run_proposed(scenario: Scenario, env: EnvParams, grid: QuadratureGrid,
                 config: PenaltyConfig | None = None, mc_config: McConfig | None = None
                 ) -> BaselineResult:
    plan, trace = run_algorithm1(scenario, env, grid, config or PenaltyConfig())
    return _validate(BaselineResult("proposed", plan, trace, grid, scenario), env, mc_config)


def run_ac_based(scenario: Scenario, env: EnvParams, config: PenaltyConfig | None = None,
                 mc_config: McConfig | None = None, *, margin_step: float = 1e-4,
                 margin_cap: float = 1.0, search: bool = True) -> BaselineResult:
    """Average-channel design with an SE margin raised until MC-feasible.

    Margins live on the grid ``j * margin_step``. Instead of stepping j by one,
    the smallest feasible j is found by doubling from the shortfall seen at
    margin 0 and then bisecting, which assumes that a larger margin never
    turns a feasible design infeasible. ``search=False`` returns the margin-0
    design (still MC-checked when ``mc_config`` is given).
    """
    config = config or PenaltyConfig()
    mc_config = mc_config or McConfig()
    if margin_step <= 0 or margin_cap < 0:
        raise DomainError("margin_step must be positive and margin_cap non-negative")
    grid = QuadratureGrid.mean_channel()
    runs: dict[int, BaselineResult] = {}

    def attempt(j: int) -> BaselineResult:
        if j not in runs:
            plan, trace = run_algorithm1(scenario, env, grid, config,
                                         r_min=env.r_min + j * margin_step)
            res = BaselineResult("ac", plan, trace, grid, scenario, margin_used=j * margin_step)
            runs[j] = _validate(res, env, mc_config)
            logger.info("AC margin %.4f: T=%.4f feasible=%s", j * margin_step,
                        plan.completion_time, runs[j].feasible_under_mc)
        return runs[j]

    def finish(res: BaselineResult) -> BaselineResult:
        res.re_optimization_count = len(runs)
        return res

    first = attempt(0)
    if not search or first.feasible_under_mc:
        return finish(first)
    rep = first.mc_report
    shortfall = float(np.max(env.r_min - rep.mean + 1.96 * rep.stderr))
    lo, hi = 0, max(1, math.ceil(shortfall / margin_step))
    while True:
        if hi * margin_step > margin_cap:
            last = runs[lo].mc_report
            raise MarginCapError(
                f"no MC-feasible AC design up to margin {margin_cap:g} "
                f"(last tried {lo * margin_step:.4f}, per-GN MC means {np.round(last.mean, 4)})",
                lo * margin_step, last, len(runs))
        if attempt(hi).feasible_under_mc:
            break
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if attempt(mid).feasible_under_mc:
            hi = mid
        else:
            lo = mid
    return finish(runs[hi])


def run_fixed_slot(scenario: Scenario, env: EnvParams, grid: QuadratureGrid,
                   config: PenaltyConfig | None = None, mc_config: McConfig | None = None
                   ) -> BaselineResult:
    """One slot length shared by all N slots, so T = N * delta."""
    plan, trace = run_algorithm1(scenario, env, grid, config or PenaltyConfig(),
                                 restriction=Restriction(shared_slot=True))
    return _validate(BaselineResult("fixed-slot", plan, trace, grid, scenario), env, mc_config)


def at_altitude(scenario: Scenario, altitude: float) -> Scenario:
    """The scenario with both endpoints moved vertically to ``altitude``."""
    start = np.array([*scenario.q_start[:2], altitude])
    end = np.array([*scenario.q_end[:2], altitude])
    return dataclasses.replace(scenario, q_start=start, q_end=end)


def run_fixed_altitude(scenario: Scenario, env: EnvParams, grid: QuadratureGrid,
                       config: PenaltyConfig | None = None, mc_config: McConfig | None = None
                       ) -> BaselineResult:
    """Every waypoint, endpoints included, at h_min."""
    sc = at_altitude(scenario, scenario.h_min)
    initial, _ = initialize(sc, env, grid, altitude=sc.h_min)
    plan, trace = run_algorithm1(sc, env, grid, config or PenaltyConfig(), initial=initial,
                                 restriction=Restriction(altitude=sc.h_min))
    return _validate(BaselineResult("fixed-alt", plan, trace, grid, sc), env, mc_config)


def fixed_trajectory_plan(scenario: Scenario) -> tuple[DesignVars, np.ndarray]:
    """Hover-and-fly path at h_min with legs flown at V_max.

    Returns the starting plan and the (N,) pinned slot durations (NaN for
    hover slots, whose durations stay free).
    """
    traj, hover_gn, _ = hover_and_fly(scenario, scenario.h_min)
    step = np.linalg.norm(np.diff(traj, axis=0), axis=1)
    travel = hover_gn < 0
    pinned = np.where(travel, step / scenario.v_max, np.nan)
    if np.any(pinned[travel] < scenario.delta_min):
        raise DomainError("a travel slot would be shorter than delta_min")
    slots = np.where(travel, pinned, scenario.delta_max)
    schedule = np.zeros((scenario.n_gns, scenario.n_slots))
    schedule[hover_gn[~travel], np.flatnonzero(~travel)] = 1.0
    return DesignVars(schedule, traj, slots), pinned


def run_fixed_trajectory(scenario: Scenario, env: EnvParams, grid: QuadratureGrid,
                         config: PenaltyConfig | None = None, mc_config: McConfig | None = None
                         ) -> BaselineResult:
    """Only the schedule and the hover-slot durations are optimized."""
    sc = at_altitude(scenario, scenario.h_min)
    initial, pinned = fixed_trajectory_plan(sc)
    restriction = Restriction(trajectory=initial.trajectory.copy(), pinned_slots=pinned)
    plan, trace = run_algorithm1(sc, env, grid, config or PenaltyConfig(), initial=initial,
                                 restriction=restriction)
    return _validate(BaselineResult("fixed-traj", plan, trace, grid, sc), env, mc_config)


def run_scheme(scheme: str, scenario: Scenario, env: EnvParams, grid: QuadratureGrid,
               config: PenaltyConfig | None = None, mc_config: McConfig | None = None,
               **ac_options) -> BaselineResult:
    """Dispatch by scheme tag. ``grid`` is ignored by the AC scheme."""
    if scheme == "proposed":
        return run_proposed(scenario, env, grid, config, mc_config)
    if scheme == "ac":
        return run_ac_based(scenario, env, config, mc_config, **ac_options)
    if scheme == "fixed-slot":
        return run_fixed_slot(scenario, env, grid, config, mc_config)
    if scheme == "fixed-alt":
        return run_fixed_altitude(scenario, env, grid, config, mc_config)
    if scheme == "fixed-traj":
        return run_fixed_trajectory(scenario, env, grid, config, mc_config)
    raise DomainError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
