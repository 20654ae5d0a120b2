"""Penalty block coordinate descent over schedule and trajectory."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core_model import DesignVars, DomainError, EnvParams, Scenario, validate_design
from .sca import (
    Restriction,
    ScaState,
    SubproblemError,
    design_rates,
    round_schedule,
    schedule_slack,
    solve_scheduling_lp,
    solve_trajectory_subproblem,
)
from .stats import QuadratureGrid

logger = logging.getLogger(__name__)

HOVER_ALTITUDE = 100.0


class InfeasibleScenarioError(DomainError):
    """The endpoints cannot be joined within N * delta_max * v_max."""


@dataclass(frozen=True)
class PenaltyConfig:
    eta0: float = 1.0
    eta_max: float = 1e5
    growth: float = 1.5
    conv_tol: float = 1e-3
    max_outer: int = 100
    slack_tol: float = 1e-6
    inner_passes: int = 5

    def __post_init__(self):
        if not self.eta0 > 0:
            raise DomainError("eta0 must be positive")
        if not self.eta_max >= self.eta0:
            raise DomainError("eta_max must be >= eta0")
        if not self.growth > 1:
            raise DomainError("growth must exceed 1")
        if not self.conv_tol > 0:
            raise DomainError("conv_tol must be positive")
        if self.max_outer < 1:
            raise DomainError("max_outer must be >= 1")
        if self.inner_passes < 1:
            raise DomainError("inner_passes must be >= 1")

    def eta(self, r: int) -> float:
        """Penalty weight used in outer iteration ``r`` (0-based)."""
        return min(self.eta0 * self.growth**r, self.eta_max)


@dataclass
class IterationRecord:
    iteration: int
    completion_time: float
    objective: float
    slack: float
    eta: float
    rates: np.ndarray
    passes: int = 1


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    residual_infeasible: bool = False

    def __len__(self):
        return len(self.records)

    @property
    def completion_times(self):
        return np.array([r.completion_time for r in self.records])

    @property
    def etas(self):
        return np.array([r.eta for r in self.records])

    @property
    def slacks(self):
        return np.array([r.slack for r in self.records])


class AlgorithmError(RuntimeError):
    """A subproblem failed; ``trace`` holds the iterations completed so far."""

    def __init__(self, message, trace, best=None):
        super().__init__(message)
        self.trace = trace
        self.best = best


def visit_order(scenario: Scenario) -> list[int]:
    """Greedy nearest-neighbour order of GNs from the start point (horizontal)."""
    left = list(range(scenario.n_gns))
    pos = scenario.q_start[:2]
    order = []
    while left:
        dist = [np.linalg.norm(scenario.gns[k, :2] - pos) for k in left]
        nxt = left.pop(int(np.argmin(dist)))
        order.append(nxt)
        pos = scenario.gns[nxt, :2]
    return order


def _slots_needed(a, b, scenario: Scenario) -> int:
    step = np.asarray(b) - np.asarray(a)
    need = max(np.linalg.norm(step) / scenario.v_max, abs(step[2]) / scenario.v_z)
    return math.ceil(need / scenario.delta_max * (1.0 + 1e-9) - 1e-12)


def hover_and_fly(scenario: Scenario, altitude: float, order=None,
                  start=None, end=None) -> tuple[np.ndarray, np.ndarray, list]:
    """Waypoints of a hover-and-fly path with the fewest travel slots.

    Returns ``(trajectory, hover_gn, legs)`` where ``hover_gn[n]`` is the GN
    hovered over in slot n+1 (-1 while travelling) and ``legs`` lists the
    (first, last) 0-based slot index of every travel leg.
    """
    start = scenario.q_start if start is None else np.asarray(start, dtype=float)
    end = scenario.q_end if end is None else np.asarray(end, dtype=float)
    order = visit_order(scenario) if order is None else order
    stops = [np.array([*scenario.gns[k, :2], altitude]) for k in order]
    points = [start, *stops, end]
    travel = [_slots_needed(points[i], points[i + 1], scenario) for i in range(len(points) - 1)]
    spare = scenario.n_slots - sum(travel)
    if spare < 0:
        raise InfeasibleScenarioError("hover-and-fly tour does not fit in the slot budget")
    K = len(order)
    hover = [spare // K + (1 if i < spare % K else 0) for i in range(K)]
    traj = [start]
    hover_gn = []
    legs = []
    for i in range(len(points) - 1):
        a, b = points[i], points[i + 1]
        m = travel[i]
        if m:
            legs.append((len(hover_gn), len(hover_gn) + m - 1))
        for j in range(1, m + 1):
            traj.append(a + (b - a) * j / m)
            hover_gn.append(-1)
        if i < K:
            for _ in range(hover[i]):
                traj.append(b.copy())
                hover_gn.append(order[i])
    return np.array(traj), np.array(hover_gn), legs


def initialize(scenario: Scenario, env: EnvParams, grid: QuadratureGrid, eta: float = 1.0,
               altitude: float | None = None):
    """Hover-and-fly starting plan and its SCA anchors.

    Every slot lasts delta_max and hovering happens at ``altitude``
    (default 100 m clamped to the altitude range). Falls back to a straight
    flight when the tour does not fit into N slots.
    """
    K, N = scenario.n_gns, scenario.n_slots
    if np.linalg.norm(scenario.q_end - scenario.q_start) > N * scenario.delta_max * scenario.v_max:
        raise InfeasibleScenarioError(
            "end point unreachable: distance exceeds n_slots * delta_max * v_max")
    altitude = HOVER_ALTITUDE if altitude is None else altitude
    altitude = float(np.clip(altitude, scenario.h_min, scenario.h_max))
    try:
        traj, hover_gn, _ = hover_and_fly(scenario, altitude)
    except InfeasibleScenarioError:
        m = _slots_needed(scenario.q_start, scenario.q_end, scenario)
        if m > N:
            raise
        frac = np.minimum(np.arange(N + 1) / max(m, 1), 1.0)[:, None]
        traj = scenario.q_start + frac * (scenario.q_end - scenario.q_start)
        hover_gn = np.full(N, -1)
    schedule = np.zeros((K, N))
    hovering = hover_gn >= 0
    schedule[hover_gn[hovering], np.flatnonzero(hovering)] = 1.0
    plan = DesignVars(schedule, traj, np.full(N, scenario.delta_max))
    report = validate_design(scenario, plan)
    if report:
        raise DomainError(f"initial plan violates constraints: {report.violations}")
    return plan, ScaState.at(plan, scenario, env, grid, eta)


def run_algorithm1(scenario: Scenario, env: EnvParams, grid: QuadratureGrid,
                   config: PenaltyConfig = PenaltyConfig(), *, initial: DesignVars | None = None,
                   restriction: Restriction | None = None, r_min: float | None = None,
                   ) -> tuple[DesignVars, IterationTrace]:
    """Alternate the scheduling LP and the trajectory step until T settles.

    Each outer iteration solves SP1, then re-anchors and re-solves SP2-1 up
    to ``config.inner_passes`` times (stopping once T moves less than
    ``conv_tol``). The outer loop stops when |T^r - T^(r-1)| < conv_tol and
    the time-scaled slack is below ``slack_tol * T``, or after ``max_outer``
    iterations.

    Once an iterate meets the rate constraints, later trajectory steps keep
    the slack at zero: the anchor stays feasible, so T cannot increase and
    feasibility is never traded back for time.
    """
    r_min = env.r_min if r_min is None else r_min
    plan = initial.copy() if initial is not None else initialize(scenario, env, grid)[0]
    trace = IterationTrace()
    t_old = plan.completion_time
    prev_schedule = None
    feasible = False
    for r in range(config.max_outer):
        eta = config.eta(r)
        rates = design_rates(plan.trajectory, scenario.gns, grid, env)
        relaxed, _ = solve_scheduling_lp(rates, plan.slots, r_min, eta)
        schedule = round_schedule(relaxed)
        rho_round = schedule_slack(schedule, rates, plan.slots, r_min)
        if prev_schedule is not None:
            rho_prev = schedule_slack(prev_schedule, rates, plan.slots, r_min)
            if rho_prev < rho_round:
                schedule, rho_round = prev_schedule, rho_prev
        plan = DesignVars(schedule, plan.trajectory, plan.slots)
        slack = rho_round * plan.completion_time
        passes = 0
        for _ in range(config.inner_passes):
            try:
                sol = _trajectory_step(plan, scenario, env, grid, eta, restriction, r_min, feasible)
            except SubproblemError as exc:
                if feasible:
                    # the current plan is feasible; stop refining it this round
                    logger.warning("keeping the current plan: %s", exc)
                    break
                raise AlgorithmError(str(exc), trace, best=plan) from exc
            passes += 1
            if feasible and sol.slack > config.slack_tol * sol.vars.completion_time:
                logger.warning("rejecting a trajectory step that lost feasibility")
                break
            moved = abs(sol.vars.completion_time - plan.completion_time)
            plan, slack = sol.vars, sol.slack
            feasible = feasible or slack <= config.slack_tol * plan.completion_time
            if moved < config.conv_tol:
                break
        prev_schedule = plan.schedule
        t_new = plan.completion_time
        achieved = (plan.schedule * design_rates(plan.trajectory, scenario.gns, grid, env)
                    ) @ plan.slots / t_new
        trace.records.append(IterationRecord(r, t_new, t_new + eta * slack, slack, eta,
                                             achieved, passes))
        logger.info("iter %d: T=%.6f slack=%.3g eta=%.3g passes=%d", r, t_new, slack, eta, passes)
        if abs(t_new - t_old) < config.conv_tol and slack <= config.slack_tol * t_new:
            trace.converged = True
            break
        t_old = t_new
    trace.residual_infeasible = bool(trace.records and
                                     trace.records[-1].slack > config.slack_tol * plan.completion_time)
    return plan, trace


def _trajectory_step(plan, scenario, env, grid, eta, restriction, r_min, hard_rate=False):
    state = ScaState.at(plan, scenario, env, grid, eta)
    return solve_trajectory_subproblem(scenario, env, plan.schedule, state, grid,
                                       restriction=restriction, r_min=r_min, hard_rate=hard_rate)
