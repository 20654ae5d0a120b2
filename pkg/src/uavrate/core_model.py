"""Scenario data, geometry and the probabilistic LoS air-to-ground channel.

Angles are in degrees, positions in meters, powers in watts. Everything
that takes dB values converts at construction time (see ``cli_io``), so
the fields here are already linear.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Raised when an input lies outside the domain of a model function."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class EnvParams:
    """Channel environment, all fields linear."""

    a1: float = 12.08
    a2: float = 0.114
    alpha_los: float = 2.0
    alpha_nlos: float = 2.7
    beta_los: float = 1e-3
    beta_nlos: float = 1e-4
    p_tx: float = 1.0
    noise: float = 1e-10
    k_rician: float = float(10.0 ** 1.5)
    sigma_db: float = 10.0
    r_min: float = 2.4

    def __post_init__(self):
        for name in ("a1", "a2", "beta_los", "beta_nlos", "p_tx", "noise"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be strictly positive")
        if self.k_rician < 0 or self.sigma_db < 0 or self.r_min < 0:
            raise DomainError("k_rician, sigma_db and r_min must be non-negative")
        if not self.alpha_los < self.alpha_nlos:
            raise DomainError("alpha_los must be smaller than alpha_nlos")
        if not self.beta_los > self.beta_nlos:
            raise DomainError("beta_los must be larger than beta_nlos")
        for name in ("alpha_los", "alpha_nlos"):
            if not 2.0 <= getattr(self, name) <= 6.0:
                raise DomainError(f"{name} must lie in [2, 6]")

    @property
    def snr_los(self) -> float:
        """Reference SNR at 1 m under LoS, P_S * beta_L / sigma^2."""
        return self.p_tx * self.beta_los / self.noise

    @property
    def snr_nlos(self) -> float:
        return self.p_tx * self.beta_nlos / self.noise

    @property
    def x_sym(self) -> float:
        """Symmetry point of the LoS sigmoid, a1 + ln(a1)/a2 (degrees)."""
        return self.a1 + np.log(self.a1) / self.a2


@dataclass(frozen=True)
class Scenario:
    gns: np.ndarray
    q_start: np.ndarray
    q_end: np.ndarray
    h_min: float = 10.0
    h_max: float = 200.0
    v_max: float = 20.0
    v_z: float = 10.0
    n_slots: int = 160
    delta_max: float = 0.5
    delta_min: float = 1e-5

    def __post_init__(self):
        gns = np.atleast_2d(np.asarray(self.gns, dtype=float))
        object.__setattr__(self, "gns", gns)
        object.__setattr__(self, "q_start", np.asarray(self.q_start, dtype=float))
        object.__setattr__(self, "q_end", np.asarray(self.q_end, dtype=float))
        if gns.ndim != 2 or gns.shape[1] != 3 or gns.shape[0] < 1:
            raise DomainError("gns must be a (K, 3) array with K >= 1")
        if np.any(gns[:, 2] != 0.0):
            raise DomainError("ground node altitudes must be exactly 0")
        if self.q_start.shape != (3,) or self.q_end.shape != (3,):
            raise DomainError("q_start and q_end must be 3-vectors")
        if not (self.v_max >= self.v_z > 0):
            raise DomainError("need v_max >= v_z > 0")
        if not (0 < self.delta_min < self.delta_max):
            raise DomainError("need 0 < delta_min < delta_max")
        if not (0 <= self.h_min <= self.h_max):
            raise DomainError("need 0 <= h_min <= h_max")
        for name in ("q_start", "q_end"):
            z = getattr(self, name)[2]
            if not self.h_min <= z <= self.h_max:
                raise DomainError(f"{name} altitude outside [h_min, h_max]")
        if int(self.n_slots) < 1:
            raise DomainError("n_slots must be >= 1")
        object.__setattr__(self, "n_slots", int(self.n_slots))

    @property
    def n_gns(self) -> int:
        return self.gns.shape[0]


@dataclass
class DesignVars:
    """A candidate plan: schedule (K, N), trajectory (N+1, 3), slots (N,)."""

    schedule: np.ndarray
    trajectory: np.ndarray
    slots: np.ndarray

    def __post_init__(self):
        self.schedule = np.asarray(self.schedule, dtype=float)
        self.trajectory = np.asarray(self.trajectory, dtype=float)
        self.slots = np.asarray(self.slots, dtype=float)

    @property
    def completion_time(self) -> float:
        return float(np.sum(self.slots))

    def copy(self) -> "DesignVars":
        return DesignVars(self.schedule.copy(), self.trajectory.copy(), self.slots.copy())


@dataclass(frozen=True)
class ChannelDraw:
    is_los: bool
    g_los_power: float
    g_nlos_power: float
    shadow: float
    gain: float


def _distance(q, w):
    d = np.linalg.norm(np.asarray(q, dtype=float) - np.asarray(w, dtype=float), axis=-1)
    if np.any(d <= 0):
        raise DomainError("UAV and ground node positions coincide")
    return d


def elevation_angle(q, w):
    """Elevation angle in degrees of UAV position ``q`` seen from GN ``w``.

    Broadcasts over leading axes of ``q`` and ``w``.
    """
    q = np.asarray(q, dtype=float)
    d = _distance(q, w)
    z = q[..., 2]
    if np.any(z < 0):
        raise DomainError("UAV altitude must be non-negative")
    return np.degrees(np.arcsin(np.clip(z / d, 0.0, 1.0)))


def elevation_matrix(trajectory, gns):
    """(K, M) matrix of elevation angles for M waypoints and K GNs."""
    trajectory = np.asarray(trajectory, dtype=float)
    return elevation_angle(trajectory[None, :, :], np.asarray(gns)[:, None, :])


def distance_matrix(trajectory, gns):
    """(K, M) matrix of 3D UAV-GN distances."""
    trajectory = np.asarray(trajectory, dtype=float)
    return _distance(trajectory[None, :, :], np.asarray(gns)[:, None, :])


def los_probability(theta, env: EnvParams):
    theta = np.asarray(theta, dtype=float)
    return 1.0 / (1.0 + env.a1 * np.exp(-env.a2 * (theta - env.a1)))


def instantaneous_se(gain, env: EnvParams):
    gain = np.asarray(gain, dtype=float)
    return np.log2(1.0 + env.p_tx * gain / env.noise)


def draw_fading(env: EnvParams, rng: np.random.Generator, size=None):
    """Draw (c-uniform, |g^L|^2, |g^N|^2, nu) for ``size`` independent links.

    The LoS state is returned as a uniform variate so that callers can
    threshold it against a position-dependent LoS probability.
    """
    k = env.k_rician
    u = rng.random(size)
    phi = rng.uniform(0.0, 2.0 * np.pi, size)
    scatter = (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)
    if np.isinf(k):
        g_los = np.exp(1j * phi)
    else:
        g_los = np.sqrt(k / (k + 1.0)) * np.exp(1j * phi) + np.sqrt(1.0 / (k + 1.0)) * scatter
    g_nlos_power = rng.exponential(1.0, size)
    bias = np.log(10.0) / 20.0 * env.sigma_db**2
    shadow = 10.0 ** ((env.sigma_db * rng.standard_normal(size) - bias) / 10.0)
    return u, np.abs(g_los) ** 2, g_nlos_power, shadow


def channel_gain(is_los, g_los_power, g_nlos_power, shadow, distance, env: EnvParams):
    c = np.asarray(is_los, dtype=float)
    h_los = g_los_power * env.beta_los / distance**env.alpha_los
    h_nlos = shadow * g_nlos_power * env.beta_nlos / distance**env.alpha_nlos
    return c * h_los + (1.0 - c) * h_nlos


def sample_channel(q, w, env: EnvParams, rng: np.random.Generator) -> ChannelDraw:
    """One realization of the UAV-GN channel at a fixed position pair."""
    d = float(_distance(q, w))
    p_los = float(los_probability(elevation_angle(q, w), env))
    u, g_los_power, g_nlos_power, shadow = draw_fading(env, rng)
    is_los = bool(u < p_los)
    gain = float(channel_gain(is_los, g_los_power, g_nlos_power, shadow, d, env))
    return ChannelDraw(is_los, float(g_los_power), float(g_nlos_power), float(shadow), gain)


@dataclass
class ViolationReport:
    """Worst violation per constraint family; empty when the plan is valid."""

    violations: dict = field(default_factory=dict)

    def __bool__(self):
        return bool(self.violations)

    def __getitem__(self, key):
        return self.violations[key]

    def __contains__(self, key):
        return key in self.violations


def validate_design(scenario: Scenario, plan: DesignVars, tol: float = 1e-9) -> ViolationReport:
    """Check hard constraints of a plan.

    Norm-type constraints are compared with a tolerance relative to their
    bound; schedule constraints use ``tol`` as an absolute tolerance.
    """
    K, N = scenario.n_gns, scenario.n_slots
    S, Q, D = plan.schedule, plan.trajectory, plan.slots
    if S.shape != (K, N) or Q.shape != (N + 1, 3) or D.shape != (N,):
        raise DomainError(
            f"dimension mismatch: schedule {S.shape}, trajectory {Q.shape}, slots {D.shape}"
            f" for K={K}, N={N}"
        )
    out = {}

    def flag(name, excess, scale):
        excess = np.asarray(excess, dtype=float)
        scale = np.maximum(np.asarray(scale, dtype=float), 1.0)
        bad = excess > tol * scale
        if np.any(bad):
            out[name] = float(np.max(excess[bad]))

    flag("start", np.linalg.norm(Q[0] - scenario.q_start), np.linalg.norm(scenario.q_start))
    flag("end", np.linalg.norm(Q[N] - scenario.q_end), np.linalg.norm(scenario.q_end))
    z = Q[:, 2]
    flag("altitude_min", scenario.h_min - z, scenario.h_min)
    flag("altitude_max", z - scenario.h_max, scenario.h_max)
    step = np.diff(Q, axis=0)
    flag("speed", np.linalg.norm(step, axis=1) - scenario.v_max * D, scenario.v_max * D)
    flag("vertical_speed", np.abs(step[:, 2]) - scenario.v_z * D, scenario.v_z * D)
    flag("slot_min", scenario.delta_min - D, scenario.delta_min)
    flag("slot_max", D - scenario.delta_max, scenario.delta_max)
    flag("schedule_bounds", np.maximum(-S, S - 1.0), 1.0)
    flag("schedule_sum", S.sum(axis=0) - 1.0, 1.0)
    return ViolationReport(out)
