import dataclasses

import numpy as np
import pytest

from uavrate.baselines import (
    SCHEMES,
    MarginCapError,
    McConfig,
    at_altitude,
    fixed_trajectory_plan,
    run_ac_based,
    run_scheme,
)
from uavrate.core_model import DomainError, validate_design
from uavrate.stats import QuadratureGrid

from conftest import desk_scenario, tiny_scenario

MC = McConfig(2000, 3)


@pytest.fixture(scope="module")
def near_gn():
    return tiny_scenario(gns=np.array([[60.0, 120.0, 0.0]]))


@pytest.fixture(scope="module")
def results(near_gn, env, grid20):
    return {s: run_scheme(s, near_gn, env, grid20, None, MC) for s in SCHEMES}


def test_every_scheme_returns_a_valid_plan(results):
    for s, res in results.items():
        assert res.scheme == s
        assert not validate_design(res.scenario, res.plan)
        assert res.completion_time == pytest.approx(res.plan.slots.sum())
        assert res.margin_used >= 0
        assert res.feasible_under_mc


def test_restrictions_hold(results, near_gn):
    assert np.ptp(results["fixed-slot"].plan.slots) == pytest.approx(0.0, abs=1e-12)
    for s in ("fixed-alt", "fixed-traj"):
        np.testing.assert_allclose(results[s].plan.trajectory[:, 2], near_gn.h_min)


def test_restricted_schemes_are_not_faster(results):
    t = results["proposed"].completion_time
    for s in ("fixed-slot", "fixed-alt", "fixed-traj"):
        assert results[s].completion_time >= t - 1e-6


def test_ac_uses_mean_channel_grid(results):
    ac = results["ac"]
    assert ac.grid.u_l == ac.grid.u_n == ac.grid.u_nu == 1
    assert ac.re_optimization_count >= 1


def test_fixed_trajectory_plan_is_hover_and_fly(near_gn):
    sc = at_altitude(near_gn, near_gn.h_min)
    plan, pinned = fixed_trajectory_plan(sc)
    assert not validate_design(sc, plan)
    travel = np.isfinite(pinned)
    step = np.linalg.norm(np.diff(plan.trajectory, axis=0), axis=1)
    np.testing.assert_allclose(step[travel], sc.v_max * pinned[travel])
    assert np.all(step[~travel] == 0.0)
    assert np.all(plan.schedule[0, ~travel] == 1.0)


def test_at_altitude_moves_endpoints(near_gn):
    sc = at_altitude(near_gn, 25.0)
    assert sc.q_start[2] == sc.q_end[2] == 25.0
    np.testing.assert_array_equal(sc.q_start[:2], near_gn.q_start[:2])


def test_ac_at_zero_requirement_needs_no_margin(near_gn, env):
    res = run_ac_based(near_gn, dataclasses.replace(env, r_min=0.0), mc_config=MC)
    assert res.margin_used == 0.0 and res.re_optimization_count == 1


def test_ac_margin_cap_failure_carries_diagnostics(env):
    sc = tiny_scenario(gns=np.array([[60.0, 200.0, 0.0]]))
    with pytest.raises(MarginCapError) as info:
        run_ac_based(sc, env, mc_config=MC, margin_cap=0.0)
    assert info.value.report is not None and info.value.attempts == 1
    assert not info.value.report.all_feasible


def test_ac_without_search_returns_margin_zero(env):
    sc = tiny_scenario(gns=np.array([[60.0, 200.0, 0.0]]))
    res = run_ac_based(sc, env, mc_config=MC, search=False)
    assert res.margin_used == 0.0
    assert not res.feasible_under_mc


def test_unknown_scheme(near_gn, env, grid20):
    with pytest.raises(DomainError):
        run_scheme("greedy", near_gn, env, grid20)
