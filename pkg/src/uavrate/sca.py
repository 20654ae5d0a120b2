"""Convexified subproblems of the penalty block coordinate descent.

SP1 picks the TDMA schedule for a fixed trajectory (a linear program).
SP2-1 moves the trajectory and slot durations for a fixed schedule. The
non-convex rate constraint is replaced by a chain of conservative bounds:

    delta * r_lb  >=  delta * r_hat(theta_lb)          (LoS prob. at an angle lower bound)
                  >=  delta * r_hat_lb                  (first-order expansion, jointly convex terms)
                  >=  2 mu sqrt(t) - mu^2 / delta       (quadratic transform, 0 <= t <= r_hat_lb)

and the angle lower bound is kept valid through a linearized sine on the
left and a quadratic transform of z / ||q - w|| on the right. Every bound
is tight at the anchor when the auxiliaries take their closed forms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
from scipy import optimize

from .core_model import (
    DesignVars,
    DomainError,
    EnvParams,
    Scenario,
    distance_matrix,
    elevation_angle,
    elevation_matrix,
    los_probability,
    validate_design,
)
from .expected_se import slot_se_matrix
from .stats import QuadratureGrid

logger = logging.getLogger(__name__)

LOG2E = 1.0 / np.log(2.0)
# hard constraints are tightened by this relative margin inside the solver so
# that interior-point round-off never shows up as a violation afterwards
_TIGHTEN = 1e-7
_LENGTH = 100.0
# Angle bounds stay below this value. The linearized sine is flat at 90 deg,
# which would pin an overhead waypoint in place; the price is a LoS
# probability of 0.9970 instead of 0.9983 directly overhead.
ANGLE_CAP = 85.0


class SubproblemError(RuntimeError):
    """Solver failure; carries the best known iterate and residuals."""

    def __init__(self, message, best=None, residuals=None):
        super().__init__(message)
        self.best = best
        self.residuals = residuals or {}


# ---------------------------------------------------------------- scheduling


def solve_scheduling_lp(rates, slots, r_min: float, eta: float = 1.0):
    """Relaxed scheduling LP for a fixed trajectory.

    Minimizes eta * rho subject to 0 <= s <= 1, at most one GN per slot and
    (1/T) sum_n s_k[n] delta[n] r_k[n] >= r_min - rho for every GN.

    Among all minimizers the returned schedule maximizes the smallest
    surplus over r_min, which is what the next trajectory step profits
    from. Returns ``(schedule, rho)``.
    """
    rates = np.asarray(rates, dtype=float)
    slots = np.asarray(slots, dtype=float)
    if rates.ndim != 2 or rates.shape[1] != slots.shape[0]:
        raise DomainError(f"rates {rates.shape} do not match slots {slots.shape}")
    if np.any(rates < 0):
        raise DomainError("rates must be non-negative")
    total = slots.sum()
    if total <= 0:
        raise DomainError("total slot time must be positive")
    K, N = rates.shape
    weights = rates * slots / total
    # variables: s (K*N, row-major), then a free surplus variable m = -rho_free
    n_var = K * N + 1
    c = np.zeros(n_var)
    c[-1] = -1.0
    # r_min - sum_n w_kn s_kn <= -m   <=>  -sum w s + m <= -r_min
    a_rate = np.zeros((K, n_var))
    for k in range(K):
        a_rate[k, k * N:(k + 1) * N] = -weights[k]
    a_rate[:, -1] = 1.0
    a_slot = np.zeros((N, n_var))
    for k in range(K):
        a_slot[np.arange(N), k * N + np.arange(N)] = 1.0
    a_ub = np.vstack([a_rate, a_slot])
    b_ub = np.concatenate([-np.full(K, r_min), np.ones(N)])
    bounds = [(0.0, 1.0)] * (K * N) + [(None, None)]
    res = optimize.linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs",
                           options={"primal_feasibility_tolerance": 1e-10,
                                    "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise SubproblemError(f"scheduling LP failed: {res.message}")
    schedule = np.clip(res.x[:-1].reshape(K, N), 0.0, 1.0)
    rho = max(0.0, -res.x[-1])
    return schedule, rho


def schedule_slack(schedule, rates, slots, r_min: float) -> float:
    """Smallest rho >= 0 for which ``schedule`` meets every rate constraint."""
    slots = np.asarray(slots, dtype=float)
    achieved = (np.asarray(schedule) * np.asarray(rates)) @ slots / slots.sum()
    return float(max(0.0, np.max(r_min - achieved)))


def round_schedule(relaxed) -> np.ndarray:
    """Binary TDMA schedule from a relaxed one.

    Each slot goes to its largest entry (lowest index on ties); a slot stays
    idle only when every entry is below 1e-6.
    """
    relaxed = np.asarray(relaxed, dtype=float)
    out = np.zeros_like(relaxed)
    if relaxed.size == 0:
        return out
    winner = np.argmax(relaxed, axis=0)
    active = relaxed.max(axis=0) >= 1e-6
    out[winner[active], np.flatnonzero(active)] = 1.0
    return out


# ------------------------------------------------------- closed-form updates


def update_lambda(q, w):
    """Quadratic-transform multiplier for z / ||q - w||: sqrt(z) / ||q - w||."""
    q = np.asarray(q, dtype=float)
    d = np.linalg.norm(q - np.asarray(w, dtype=float), axis=-1)
    if np.any(d <= 0):
        raise DomainError("UAV and ground node positions coincide")
    if np.any(q[..., 2] < 0):
        raise DomainError("UAV altitude must be non-negative")
    return np.sqrt(q[..., 2]) / d


def update_mu(delta, r_lb):
    """Quadratic-transform multiplier for delta * r: delta * sqrt(r)."""
    return np.asarray(delta, dtype=float) * np.sqrt(np.asarray(r_lb, dtype=float))


def los_sigmoid_denominator(theta, env: EnvParams):
    """X^L(theta) = 1 + a1 exp(-a2 (theta - a1)), so P^L = 1 / X^L."""
    return 1.0 + env.a1 * np.exp(-env.a2 * (np.asarray(theta, dtype=float) - env.a1))


def nlos_sigmoid_denominator(theta, env: EnvParams):
    """X^N(theta) = 1 + a1 exp(-a2 (2 x_s - theta - a1)), so 1 - P^L = 1 / X^N."""
    theta = np.asarray(theta, dtype=float)
    return 1.0 + env.a1 * np.exp(-env.a2 * (2.0 * env.x_sym - theta - env.a1))


def symmetric_nlos_sigmoid(theta_lb, env: EnvParams):
    """NLoS probability written as a sigmoid mirrored about x_s."""
    return 1.0 / nlos_sigmoid_denominator(theta_lb, env)


def sine_linearization(theta, anchor):
    """First-order expansion of sin(theta deg) at ``anchor`` (an upper bound)."""
    a = np.radians(np.asarray(anchor, dtype=float))
    return np.sin(a) + np.pi / 180.0 * np.cos(a) * (np.asarray(theta, dtype=float) - np.asarray(anchor))


# ------------------------------------------------------------ SCA coefficients


@dataclass(frozen=True)
class ScaCoefficients:
    """Linearization data of r_hat at an anchor, indexed (k, n-1) for slot n.

    The last axis of the ``*_nlos`` tensors runs over the flattened
    (i, j) grid of NLoS fading and shadowing quantiles.
    """

    psi_los: np.ndarray
    psi_nlos: np.ndarray
    chi_los: np.ndarray
    chi_nlos: np.ndarray
    x_los_prev: np.ndarray
    x_nlos_prev: np.ndarray
    y_prev: np.ndarray
    r_hat_prev: np.ndarray

    @property
    def psi_los_mean(self):
        return self.psi_los.mean(axis=-1)

    @property
    def psi_nlos_mean(self):
        return self.psi_nlos.mean(axis=-1)

    @property
    def chi_mean(self):
        return self.chi_los.mean(axis=-1) + self.chi_nlos.mean(axis=-1)


def _grid_gains(grid: QuadratureGrid, env: EnvParams):
    return env.snr_los * grid.gamma_los, env.snr_nlos * grid.gamma_nlos_joint


def compute_sca_coefficients(q_prev, theta_lb_prev, grid: QuadratureGrid, env: EnvParams,
                             gns) -> ScaCoefficients:
    """Coefficients of the lower bound r_hat_lb anchored at ``q_prev[1:]``.

    ``theta_lb_prev`` is (K, N) in degrees.
    """
    q_prev = np.asarray(q_prev, dtype=float)
    theta_lb_prev = np.asarray(theta_lb_prev, dtype=float)
    if np.any((theta_lb_prev < 0) | (theta_lb_prev > 90)):
        raise DomainError("angle anchors must lie in [0, 90] degrees")
    y = distance_matrix(q_prev[1:], gns) ** 2
    x_l = los_sigmoid_denominator(theta_lb_prev, env)
    x_n = nlos_sigmoid_denominator(theta_lb_prev, env)
    g_l, g_n = _grid_gains(grid, env)
    yy = y[..., None]
    pow_l = yy ** (env.alpha_los / 2.0)
    pow_n = yy ** (env.alpha_nlos / 2.0)
    se_l = np.log2(1.0 + g_l / pow_l)
    se_n = np.log2(1.0 + g_n / pow_n)
    psi_l = se_l / x_l[..., None] ** 2
    psi_n = se_n / x_n[..., None] ** 2
    chi_l = env.alpha_los * g_l * LOG2E / (2.0 * yy * (pow_l + g_l)) / x_l[..., None]
    chi_n = env.alpha_nlos * g_n * LOG2E / (2.0 * yy * (pow_n + g_n)) / x_n[..., None]
    r_prev = se_l.mean(axis=-1) / x_l + se_n.mean(axis=-1) / x_n
    return ScaCoefficients(psi_l, psi_n, chi_l, chi_n, x_l, x_n, y, r_prev)


def r_hat(q, theta_lb, w, grid: QuadratureGrid, env: EnvParams):
    """Lower bound on r_lb obtained by evaluating P^L at an angle lower bound."""
    q = np.asarray(q, dtype=float)
    y = np.sum((q - np.asarray(w, dtype=float)) ** 2, axis=-1)[..., None]
    g_l, g_n = _grid_gains(grid, env)
    se_l = np.log2(1.0 + g_l / y ** (env.alpha_los / 2.0)).mean(axis=-1)
    se_n = np.log2(1.0 + g_n / y ** (env.alpha_nlos / 2.0)).mean(axis=-1)
    return se_l / los_sigmoid_denominator(theta_lb, env) + se_n / nlos_sigmoid_denominator(theta_lb, env)


def design_rates(trajectory, gns, grid: QuadratureGrid, env: EnvParams) -> np.ndarray:
    """(K, N) per-slot rate model used by both subproblems: r_hat at the
    true elevation capped at ``ANGLE_CAP``. Never above the quadrature bound."""
    q = np.asarray(trajectory, dtype=float)[None, 1:, :]
    w = np.asarray(gns, dtype=float)[:, None, :]
    theta = np.minimum(elevation_angle(q, w), ANGLE_CAP)
    return r_hat(q, theta, w, grid, env)


def r_hat_lb(q, theta_lb, coeffs: ScaCoefficients, w, k: int, n: int, env: EnvParams):
    """Concave minorant of r_hat for GN ``k`` in slot ``n`` (1-based slot)."""
    i = (k, n - 1)
    y = np.sum((np.asarray(q, dtype=float) - np.asarray(w, dtype=float)) ** 2, axis=-1)
    return (
        coeffs.r_hat_prev[i]
        - coeffs.psi_los_mean[i] * (los_sigmoid_denominator(theta_lb, env) - coeffs.x_los_prev[i])
        - coeffs.psi_nlos_mean[i] * (nlos_sigmoid_denominator(theta_lb, env) - coeffs.x_nlos_prev[i])
        - coeffs.chi_mean[i] * (y - coeffs.y_prev[i])
    )


# ----------------------------------------------------------- trajectory step


@dataclass
class ScaState:
    """Anchors and auxiliaries for one SP2-1 solve.

    ``slots_prev`` is kept next to the trajectory anchor because the
    rate multiplier mu depends on it.
    """

    q_prev: np.ndarray
    slots_prev: np.ndarray
    theta_lb_prev: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    eta: float
    x_sym: float

    @classmethod
    def at(cls, plan: DesignVars, scenario: Scenario, env: EnvParams, grid: QuadratureGrid,
           eta: float, theta_lb=None) -> "ScaState":
        """Anchor at ``plan`` with closed-form lambda and mu.

        Angle anchors default to the true elevation angles capped at
        ``ANGLE_CAP``, so r_hat_lb at the anchor equals :func:`design_rates`.
        """
        q = plan.trajectory
        theta_true = elevation_matrix(q[1:], scenario.gns)
        if theta_lb is None:
            theta_lb = theta_true
        theta_lb = np.clip(np.minimum(theta_lb, theta_true), 0.0, ANGLE_CAP)
        lam = update_lambda(q[None, 1:, :], scenario.gns[:, None, :])
        r_anchor = r_hat(q[None, 1:, :], theta_lb, scenario.gns[:, None, :], grid, env)
        mu = update_mu(plan.slots[None, :], np.maximum(r_anchor, 0.0))
        return cls(q.copy(), plan.slots.copy(), theta_lb, lam, mu, float(eta), env.x_sym)


@dataclass(frozen=True)
class Restriction:
    """Restrictions that turn SP2-1 into a baseline's trajectory step.

    ``shared_slot``: one duration for every slot. ``altitude``: every
    waypoint pinned to this height. ``trajectory``: all waypoints frozen.
    ``pinned_slots``: (N,) durations, NaN where free.
    """

    shared_slot: bool = False
    altitude: float | None = None
    trajectory: np.ndarray | None = None
    pinned_slots: np.ndarray | None = None


@dataclass
class SubproblemSolution:
    vars: DesignVars
    theta_lb: np.ndarray
    slack: float
    objective: float
    kkt_residual: float
    residuals: dict = field(default_factory=dict)


def _kkt_residual(problem: cp.Problem) -> tuple[float, dict]:
    """Scaled primal infeasibility, complementarity and Lagrangian stationarity.

    Gradients come from cvxpy, which reports zero at non-differentiable
    points. A waypoint that does not move between two slots puts a norm at
    its kink, and stationarity is then not meaningful for that solve.
    """
    primal = 0.0
    compl = 0.0
    grad_obj = problem.objective.expr.grad
    grad_l = {v: np.asarray(g.toarray() if hasattr(g, "toarray") else g).ravel()
              for v, g in grad_obj.items() if g is not None}
    scale = 1.0 + abs(problem.value)
    ok = True
    for con in problem.constraints:
        viol = con.violation()
        primal = max(primal, float(np.max(viol)) if np.size(viol) else 0.0)
        dual = con.dual_value
        if dual is None:
            ok = False
            continue
        expr = con.expr
        dual = np.asarray(dual, dtype=float).ravel()
        if isinstance(con, cp.constraints.Inequality):
            compl = max(compl, float(np.max(np.abs(dual * np.asarray(expr.value).ravel()))))
        grads = expr.grad
        for var, g in grads.items():
            if g is None:
                ok = False
                continue
            g = g.toarray() if hasattr(g, "toarray") else np.asarray(g)
            g = np.asarray(g).reshape(var.size, -1)
            grad_l.setdefault(var, np.zeros(var.size))
            grad_l[var] = grad_l[var] + g @ dual
    station = max((float(np.max(np.abs(v))) for v in grad_l.values()), default=0.0)
    res = {"primal": primal, "complementarity": compl / scale,
           "stationarity": station / scale if ok else float("nan")}
    worst = max(v for v in res.values() if np.isfinite(v))
    return worst, res


def solve_trajectory_subproblem(scenario: Scenario, env: EnvParams, schedule, state: ScaState,
                                grid: QuadratureGrid, restriction: Restriction | None = None,
                                r_min: float | None = None, check_kkt: bool = False,
                                hard_rate: bool = False) -> SubproblemSolution:
    """Convexified trajectory and slot-duration step for a fixed schedule.

    The rate constraint is used in time-scaled form: every GN must satisfy
    sum_n s_k[n] (2 mu sqrt(t) - mu^2 / delta) >= r_min * T - slack, with one
    shared slack >= 0 penalized by ``state.eta`` in the objective. With
    ``hard_rate`` the slack is fixed to zero.
    """
    restriction = restriction or Restriction()
    r_min = env.r_min if r_min is None else r_min
    K, N = scenario.n_gns, scenario.n_slots
    schedule = np.asarray(schedule, dtype=float)
    if schedule.shape != (K, N) or np.any((schedule != 0) & (schedule != 1)):
        raise DomainError("schedule must be a binary (K, N) matrix")
    if np.any(schedule.sum(axis=0) > 1):
        raise DomainError("at most one GN per slot")
    theta_true = elevation_matrix(state.q_prev[1:], scenario.gns)
    if np.any(state.theta_lb_prev > theta_true + 1e-9):
        raise DomainError("angle anchors exceed the true elevation at the trajectory anchor")

    k_idx, n_idx = np.nonzero(schedule)  # n_idx is 0-based slot index
    slot_of = n_idx + 1  # waypoint index carrying the slot
    coeffs = compute_sca_coefficients(state.q_prev, state.theta_lb_prev, grid, env, scenario.gns)
    pair = (k_idx, n_idx)
    gns = scenario.gns

    # lengths inside the conic program are in units of _LENGTH meters
    L = _LENGTH
    Q = cp.Variable((N + 1, 3))
    delta = cp.Variable(N)
    slack = cp.Variable()
    vmax = scenario.v_max * (1.0 - _TIGHTEN) / L
    vz = scenario.v_z * (1.0 - _TIGHTEN) / L
    cons = [
        slack >= 0.0,
        Q[0] == scenario.q_start / L,
        Q[N] == scenario.q_end / L,
        Q[:, 2] >= scenario.h_min / L,
        Q[:, 2] <= scenario.h_max / L,
        delta >= scenario.delta_min,
        delta <= scenario.delta_max,
    ]
    if restriction.trajectory is None:
        cons += [
            cp.norm(Q[1:] - Q[:-1], 2, axis=1) <= vmax * delta,
            cp.abs(Q[1:, 2] - Q[:-1, 2]) <= vz * delta,
        ]
    # a frozen path is checked for mobility by the caller who built it
    if restriction.shared_slot and N > 1:
        cons.append(delta[1:] == delta[0])
    if restriction.altitude is not None:
        cons.append(Q[:, 2] == restriction.altitude / L)
    if restriction.trajectory is not None:
        cons.append(Q == np.asarray(restriction.trajectory) / L)
    if restriction.pinned_slots is not None:
        pinned = np.asarray(restriction.pinned_slots, dtype=float)
        mask = np.flatnonzero(np.isfinite(pinned))
        if mask.size:
            cons.append(delta[mask] == pinned[mask])

    P = len(k_idx)
    if P:
        theta = cp.Variable(P)
        t = cp.Variable(P)
        qn = Q[slot_of, :]
        w = gns[k_idx] / L
        anchor = state.theta_lb_prev[pair]
        lam = state.lam[pair]
        mu = state.mu[pair]
        a_rad = np.radians(anchor)
        sin_lin = np.sin(a_rad) + cp.multiply(np.pi / 180.0 * np.cos(a_rad), theta - anchor)
        cons += [
            theta >= 0.0,
            theta <= ANGLE_CAP,
            sin_lin <= 2.0 * np.sqrt(L) * cp.multiply(lam, cp.sqrt(qn[:, 2]))
            - L * cp.multiply(lam**2, cp.norm(qn - w, 2, axis=1)),
        ]
        x_l = 1.0 + env.a1 * cp.exp(-env.a2 * (theta - env.a1))
        x_n = 1.0 + env.a1 * cp.exp(-env.a2 * (2.0 * env.x_sym - theta - env.a1))
        y = cp.sum(cp.square(qn - w), axis=1)
        rhat_lb = (
            coeffs.r_hat_prev[pair]
            - cp.multiply(coeffs.psi_los_mean[pair], x_l - coeffs.x_los_prev[pair])
            - cp.multiply(coeffs.psi_nlos_mean[pair], x_n - coeffs.x_nlos_prev[pair])
            - cp.multiply(coeffs.chi_mean[pair] * L**2, y - coeffs.y_prev[pair] / L**2)
        )
        cons += [t >= 0.0, t <= rhat_lb]
        qt = 2.0 * cp.multiply(mu, cp.sqrt(t)) - cp.multiply(mu**2, cp.inv_pos(delta[n_idx]))
        member = np.zeros((K, P))
        member[k_idx, np.arange(P)] = 1.0
        cons.append(member @ qt >= r_min * cp.sum(delta) - slack)
    else:
        cons.append(np.zeros(K) >= r_min * cp.sum(delta) - slack)

    if hard_rate:
        cons.append(slack == 0.0)
    problem = cp.Problem(cp.Minimize(cp.sum(delta) + state.eta * slack), cons)
    _solve(problem, schedule, state)

    kkt, residuals = _kkt_residual(problem) if check_kkt else (float("nan"), {})
    q_new, d_new = _repair(scenario, Q.value * L, delta.value, restriction)
    if validate_design(scenario, DesignVars(schedule, q_new, d_new)):
        q_new, d_new = _backtrack(scenario, schedule, state, q_new, d_new)
    theta_new = np.zeros((K, N))
    if P:
        theta_new[pair] = np.clip(theta.value, 0.0, ANGLE_CAP)
    theta_new = np.minimum(theta_new, elevation_matrix(q_new[1:], gns))
    plan = DesignVars(schedule.copy(), q_new, d_new)
    # report the slack the repaired plan actually needs, not the solver's value
    rates = design_rates(q_new, gns, grid, env)
    slack_val = schedule_slack(schedule, rates, d_new, r_min) * plan.completion_time
    return SubproblemSolution(plan, theta_new, slack_val, float(problem.value), kkt, residuals)


def _solve(problem: cp.Problem, schedule, state: ScaState):
    """Clarabel first, SCS as a fallback when the interior method stalls."""
    attempts = [(cp.CLARABEL, {"max_iter": 400}),
                (cp.SCS, {"eps": 1e-8, "max_iters": 50_000})]
    message = ""
    for solver, opts in attempts:
        try:
            problem.solve(solver=solver, **opts)
        except cp.error.SolverError as exc:
            message = str(exc)
            logger.info("%s failed on the trajectory step: %s", solver, exc)
            continue
        if problem.status == cp.OPTIMAL:
            return
        if problem.status == cp.OPTIMAL_INACCURATE:
            logger.info("%s solved the trajectory step inaccurately", solver)
            return
        message = f"status {problem.status}"
        if problem.status in (cp.INFEASIBLE, cp.UNBOUNDED):
            break
    raise SubproblemError(f"trajectory subproblem failed: {message}",
                          best=_anchor_plan(schedule, state))


def _backtrack(scenario: Scenario, schedule, state: ScaState, q, delta, steps: int = 40):
    """Largest step from the (valid) anchor towards an invalid repaired point.

    All hard constraints are convex in (Q, delta), so every point between
    two valid plans is valid; bisection keeps the valid end.
    """
    anchor = _anchor_plan(schedule, state)
    if validate_design(scenario, anchor):
        raise SubproblemError("anchor plan violates hard constraints", best=anchor)
    lo, hi = 0.0, 1.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        cand = DesignVars(schedule, state.q_prev + mid * (q - state.q_prev),
                          state.slots_prev + mid * (delta - state.slots_prev))
        if validate_design(scenario, cand):
            hi = mid
        else:
            lo = mid
    logger.info("trajectory step shortened to %.4f of its length", lo)
    return state.q_prev + lo * (q - state.q_prev), state.slots_prev + lo * (delta - state.slots_prev)


def _anchor_plan(schedule, state: ScaState) -> DesignVars:
    return DesignVars(np.asarray(schedule, dtype=float).copy(), state.q_prev.copy(),
                      state.slots_prev.copy())


def _repair(scenario: Scenario, q, delta, restriction: Restriction):
    """Snap interior-point output onto the hard constraints exactly."""
    q = np.array(q, dtype=float)
    q[0] = scenario.q_start
    q[-1] = scenario.q_end
    q[:, 2] = np.clip(q[:, 2], scenario.h_min, scenario.h_max)
    if restriction.altitude is not None:
        q[:, 2] = restriction.altitude
    if restriction.trajectory is not None:
        q = np.array(restriction.trajectory, dtype=float)
    step = np.diff(q, axis=0)
    need = np.maximum(np.linalg.norm(step, axis=1) / scenario.v_max,
                      np.abs(step[:, 2]) / scenario.v_z)
    delta = np.maximum(np.asarray(delta, dtype=float), need)
    if restriction.shared_slot:
        delta = np.full_like(delta, delta.max())
    delta = np.clip(delta, scenario.delta_min, scenario.delta_max)
    if restriction.pinned_slots is not None:
        pinned = np.asarray(restriction.pinned_slots, dtype=float)
        delta = np.where(np.isfinite(pinned), pinned, delta)
    return q, delta


def lower_bound_rates(plan: DesignVars, scenario: Scenario, grid: QuadratureGrid,
                      env: EnvParams) -> np.ndarray:
    """Per-GN time-averaged quadrature lower-bound SE of a plan."""
    se = slot_se_matrix(plan.trajectory, scenario.gns, grid, env)
    return (plan.schedule * se) @ plan.slots / plan.slots.sum()
