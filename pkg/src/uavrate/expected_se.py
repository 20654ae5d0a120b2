"""Per-slot expected-SE estimators.

Three views of E[log2(1 + SNR)] at a UAV position:

* ``se_lower_bound``: left-endpoint quantile sums, never above the truth;
* ``se_avg_channel``: SE of the mean channel, never below the truth;
* ``se_expected_oracle``: plain Monte Carlo, independent of both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mc
from .core_model import (
    DesignVars,
    DomainError,
    EnvParams,
    channel_gain,
    draw_fading,
    instantaneous_se,
    los_probability,
)
from .core_model import _distance, elevation_angle
from .stats import QuadratureGrid


@dataclass(frozen=True)
class SeBreakdown:
    p_los: np.ndarray
    se_los: np.ndarray
    se_nlos: np.ndarray

    @property
    def se_total(self):
        return self.p_los * self.se_los + (1.0 - self.p_los) * self.se_nlos


def _log_sum_mean(gains, distance, alpha):
    """Mean over the last axis of log2(1 + gains / d^alpha), broadcast over d."""
    d = np.asarray(distance, dtype=float)[..., None]
    return np.log2(1.0 + gains / d**alpha).mean(axis=-1)


def se_lower_bound(q, w, grid: QuadratureGrid, env: EnvParams) -> SeBreakdown:
    """Finite-sum lower bound on the expected SE; broadcasts over positions."""
    d = _distance(q, w)
    theta = elevation_angle(q, w)
    gains_los = env.snr_los * grid.gamma_los
    gains_nlos = env.snr_nlos * grid.gamma_nlos_joint
    return SeBreakdown(
        p_los=los_probability(theta, env),
        se_los=_log_sum_mean(gains_los, d, env.alpha_los),
        se_nlos=_log_sum_mean(gains_nlos, d, env.alpha_nlos),
    )


def se_avg_channel(q, w, env: EnvParams) -> SeBreakdown:
    """Average-channel SE: fading and shadowing replaced by their unit means."""
    return se_lower_bound(q, w, QuadratureGrid.mean_channel(), env)


def slot_se_matrix(trajectory, gns, grid: QuadratureGrid, env: EnvParams) -> np.ndarray:
    """(K, N) per-slot SE for waypoints q[1..N] (end-of-slot positions)."""
    trajectory = np.asarray(trajectory, dtype=float)
    gns = np.asarray(gns, dtype=float)
    bd = se_lower_bound(trajectory[None, 1:, :], gns[:, None, :], grid, env)
    return bd.se_total


def _link_se_samples(distance, theta, env, rng, size):
    u, g_los, g_nlos, shadow = draw_fading(env, rng, size)
    is_los = u < los_probability(theta, env)
    return instantaneous_se(channel_gain(is_los, g_los, g_nlos, shadow, distance, env), env)


def se_expected_oracle(q, w, env: EnvParams, n_draws: int, seed, workers=None):
    """Monte Carlo estimate of E[r] at one position; returns (mean, stderr)."""
    if n_draws < 2:
        raise DomainError("need at least 2 draws")
    d = float(_distance(q, w))
    theta = float(elevation_angle(q, w))
    moments = mc.run_blocks(
        lambda rng, size: _link_se_samples(d, theta, env, rng, size), n_draws, seed, workers
    )
    return float(moments.mean), float(moments.stderr)


def achieved_rate(plan: DesignVars, per_slot_se) -> np.ndarray:
    """Time-averaged SE per GN, (1/T) sum_n s_k[n] delta[n] r_k[n]."""
    total = float(np.sum(plan.slots))
    if total <= 0:
        raise DomainError("total mission time must be positive")
    per_slot_se = np.asarray(per_slot_se, dtype=float)
    weighted = plan.schedule * np.where(plan.schedule != 0, per_slot_se, 0.0)
    return weighted @ plan.slots / total
