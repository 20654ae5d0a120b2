"""Monte Carlo certification of plans, the overestimation scatter and sweeps.

A plan is certified by simulating the mission under the true stochastic
channel: every scheduled slot draws its own LoS state, fading and
shadowing, independently of all other slots and realizations.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import mc
from .core_model import (
    DesignVars,
    DomainError,
    EnvParams,
    Scenario,
    channel_gain,
    db_to_linear,
    distance_matrix,
    draw_fading,
    elevation_matrix,
    instantaneous_se,
    los_probability,
    validate_design,
)
from .expected_se import achieved_rate, slot_se_matrix
from .stats import QuadratureGrid, build_grids

logger = logging.getLogger(__name__)

Z_ONE_SIDED_95 = 1.96
TREND_TOLERANCE = 0.02


@dataclass(frozen=True)
class McReport:
    """Per-GN Monte Carlo rates of a plan next to the optimizer's estimate."""

    mean: np.ndarray
    stderr: np.ndarray
    estimate: np.ndarray
    r_min: float
    n_realizations: int
    seed: int

    @property
    def feasible(self) -> np.ndarray:
        return self.mean >= self.r_min - Z_ONE_SIDED_95 * self.stderr

    @property
    def all_feasible(self) -> bool:
        return bool(np.all(self.feasible))

    def to_dict(self) -> dict:
        return {
            "r_min": self.r_min,
            "n_realizations": self.n_realizations,
            "seed": self.seed,
            "gns": [
                {"gn": k, "mc_mean": float(m), "mc_stderr": float(s),
                 "estimate": float(e), "feasible": bool(f)}
                for k, (m, s, e, f) in enumerate(
                    zip(self.mean, self.stderr, self.estimate, self.feasible))
            ],
        }


def estimated_rates(plan: DesignVars, scenario: Scenario, grid: QuadratureGrid,
                    env: EnvParams) -> np.ndarray:
    """Per-GN rate of a plan under the SE model behind ``grid``."""
    return achieved_rate(plan, slot_se_matrix(plan.trajectory, scenario.gns, grid, env))


def monte_carlo_validate(plan: DesignVars, scenario: Scenario, env: EnvParams, n: int, seed,
                         *, grid: QuadratureGrid | None = None, workers: int | None = None,
                         tol: float = 1e-9) -> McReport:
    """Time-averaged SE of every GN over ``n`` simulated missions.

    The estimate stored next to the MC figures is the plan's rate under
    ``grid`` (default: the U = 40 quadrature bound). ``tol`` is the relative
    tolerance of the hard-constraint check.
    """
    report = validate_design(scenario, plan, tol)
    if report:
        raise DomainError(f"plan violates hard constraints: {report.violations}")
    if n < 2:
        raise DomainError("need at least 2 realizations")
    K = scenario.n_gns
    total = plan.completion_time
    if total <= 0:
        raise DomainError("total mission time must be positive")
    if grid is None:
        grid = build_grids(40, 40, 40, env)
    estimate = estimated_rates(plan, scenario, grid, env)

    k_idx, n_idx = np.nonzero(plan.schedule)
    if k_idx.size == 0:
        zeros = np.zeros(K)
        return McReport(zeros, zeros.copy(), estimate, env.r_min, n, _seed_value(seed))
    q = plan.trajectory[1:]
    dist = distance_matrix(q, scenario.gns)[k_idx, n_idx]
    p_los = los_probability(elevation_matrix(q, scenario.gns)[k_idx, n_idx], env)
    weights = np.zeros((k_idx.size, K))
    weights[np.arange(k_idx.size), k_idx] = plan.schedule[k_idx, n_idx] * plan.slots[n_idx] / total

    def block(rng, size):
        u, g_los, g_nlos, shadow = draw_fading(env, rng, (size, k_idx.size))
        gain = channel_gain(u < p_los, g_los, g_nlos, shadow, dist, env)
        return instantaneous_se(gain, env) @ weights

    moments = mc.run_blocks(block, n, seed, workers)
    return McReport(np.asarray(moments.mean), np.asarray(moments.stderr), estimate,
                    env.r_min, n, _seed_value(seed))


def _seed_value(seed):
    return int(seed) if np.isscalar(seed) else seed


@dataclass(frozen=True)
class ScatterPoint:
    """One (estimated, actual) pair of the overestimation analysis."""

    scheme: str
    gn: int
    estimated: float
    actual: float
    stderr: float

    @property
    def overestimated(self) -> bool:
        """Estimate above the MC rate by more than three standard errors."""
        return self.estimated - self.actual > 3.0 * self.stderr

    @property
    def conservative(self) -> bool:
        """Estimate at or below the MC rate, up to three standard errors."""
        return self.estimated <= self.actual + 3.0 * self.stderr


def overestimation_report(plans, scenario: Scenario, env: EnvParams, n: int, seed,
                          workers: int | None = None) -> list[ScatterPoint]:
    """Estimated vs. simulated rate per scheme and GN.

    ``plans`` maps a scheme tag to ``(plan, grid)``, where ``grid`` is the SE
    model that scheme optimized against.
    """
    points = []
    for scheme, (plan, grid) in plans.items():
        rep = monte_carlo_validate(plan, scenario, env, n, seed, grid=grid, workers=workers)
        for k in range(scenario.n_gns):
            points.append(ScatterPoint(scheme, k, float(rep.estimate[k]), float(rep.mean[k]),
                                       float(rep.stderr[k])))
    return points


# ------------------------------------------------------------------ sweeps

SWEEP_PARAMETERS = ("v_max", "k_rician", "r_min")


@dataclass
class SweepRecord:
    scheme: str
    value: float
    completion_time: float
    converged: bool
    feasible: bool
    error: str | None = None


@dataclass
class SweepResult:
    parameter: str
    values: list
    records: list = field(default_factory=list)

    def times(self, scheme: str) -> np.ndarray:
        """Completion times of ``scheme`` in sweep order (NaN where a run failed)."""
        by_value = {r.value: r for r in self.records if r.scheme == scheme}
        return np.array([by_value[v].completion_time if v in by_value and by_value[v].feasible
                         else np.nan for v in self.values])

    def non_increasing(self, scheme: str, tol: float = TREND_TOLERANCE) -> bool:
        """T never grows by more than ``tol`` (relative) between successive
        feasible values."""
        t = self.times(scheme)
        t = t[np.isfinite(t)]
        return bool(np.all(t[1:] <= t[:-1] * (1.0 + tol)))


def sweep_point(scenario: Scenario, env: EnvParams, parameter: str, value: float):
    """Scenario and environment for one sweep value.

    ``v_max`` keeps the vertical limit at half the 3D limit; ``k_rician`` is
    given in dB.
    """
    if parameter == "v_max":
        return dataclasses.replace(scenario, v_max=value, v_z=value / 2.0), env
    if parameter == "k_rician":
        return scenario, dataclasses.replace(env, k_rician=float(db_to_linear(value)))
    if parameter == "r_min":
        return scenario, dataclasses.replace(env, r_min=value)
    raise DomainError(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}")


def run_sweep(scenario: Scenario, env: EnvParams, parameter: str, values, schemes=("proposed",),
              config=None, grid_sizes=(40, 40, 40), mc_config=None) -> SweepResult:
    """Run every scheme at every parameter value; failures are recorded.

    A run counts as feasible when the penalty BCD loop ends without residual slack
    and, if ``mc_config`` is given, every GN passes the Monte Carlo check.
    """
    from .baselines import run_scheme

    values = [float(v) for v in values]
    if not values:
        raise DomainError("sweep needs at least one value")
    if values != sorted(values):
        raise DomainError("sweep values must be sorted")
    result = SweepResult(parameter, values)
    for value in values:
        sc, ev = sweep_point(scenario, env, parameter, value)
        grid = build_grids(*grid_sizes, ev)
        for scheme in schemes:
            try:
                res = run_scheme(scheme, sc, ev, grid, config, mc_config)
            except Exception as exc:  # one failed point must not end the sweep
                logger.warning("%s at %s=%g failed: %s", scheme, parameter, value, exc)
                result.records.append(SweepRecord(scheme, value, float("nan"), False, False,
                                                  str(exc)))
                continue
            feasible = not res.trace.residual_infeasible
            if res.feasible_under_mc is not None:
                feasible = feasible and res.feasible_under_mc
            result.records.append(SweepRecord(scheme, value, res.completion_time,
                                              res.trace.converged, feasible))
    return result
