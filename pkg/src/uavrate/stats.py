"""Quantiles of the three channel randomness sources and the CDF-domain grids.

The LoS fading power |g^L|^2 of a unit-mean Rician channel with K-factor k
satisfies 2(k+1)|g^L|^2 ~ noncentral chi-square(2 dof, noncentrality 2k).
Its CDF is evaluated with the Poisson mixture of central chi-square terms,

    F(x) = sum_j Pois(j; k) * P(j + 1, (k + 1) x),

where P is the regularized lower incomplete gamma function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .core_model import DomainError, EnvParams

_SERIES_TAIL = 1e-14


def std_normal_quantile(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise DomainError("normal quantile needs 0 < p < 1")
    return special.ndtri(p)


def exp_unit_quantile(p):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p >= 1)):
        raise DomainError("exponential quantile needs 0 <= p < 1")
    return -np.log1p(-p)


def lognormal_shadow_quantile(p, sigma_db: float):
    """Quantile of the bias-corrected (unit-mean) log-normal shadowing gain."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p >= 1)):
        raise DomainError("shadowing quantile needs 0 <= p < 1")
    bias = np.log(10.0) / 20.0 * sigma_db**2
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = 10.0 ** ((sigma_db * special.ndtri(p[pos]) - bias) / 10.0)
    return out if out.ndim else float(out)


def _poisson_window(k: float):
    """Index range [lo, hi] holding all but ~1e-16 of the Poisson(k) mass."""
    spread = 12.0 * np.sqrt(k) + 40.0
    lo = max(0, int(np.floor(k - spread)))
    hi = int(np.ceil(k + spread))
    return lo, hi


def rician_power_cdf(x, k: float):
    """P(|g^L|^2 <= x) for a unit-mean Rician power gain with K-factor ``k``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or k < 0:
        raise DomainError("rician_power_cdf needs x >= 0 and k >= 0")
    if k == 0:
        return -np.expm1(-x)
    if np.isinf(k):
        # pure specular component: the power is exactly 1
        out = (x >= 1.0).astype(float)
        return out if x.ndim else float(out)
    lo, hi = _poisson_window(k)
    j = np.arange(lo, hi + 1, dtype=float)
    log_w = -k + j * np.log(k) - special.gammaln(j + 1.0)
    w = np.exp(log_w)
    # drop the negligible far tail of the mixture
    keep = w > _SERIES_TAIL * w.max()
    j, w = j[keep], w[keep]
    terms = special.gammainc(j[:, None] + 1.0, (k + 1.0) * x.reshape(1, -1))
    out = (w[:, None] * terms).sum(axis=0) / w.sum()
    out = np.clip(out, 0.0, 1.0)
    return out.reshape(x.shape) if x.ndim else float(out[0])


def rician_power_quantile(p, k: float):
    """Inverse of :func:`rician_power_cdf`; p = 0 maps to 0."""
    p_arr = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any((p_arr < 0) | (p_arr >= 1)):
        raise DomainError("rician quantile needs 0 <= p < 1")
    if k == 0:
        out = exp_unit_quantile(p_arr)
        return out if np.ndim(p) else float(out[0])
    if np.isinf(k):
        out = (p_arr > 0).astype(float)
        return out if np.ndim(p) else float(out[0])
    std = np.sqrt(2.0 * k + 1.0) / (k + 1.0)
    out = np.zeros_like(p_arr)
    for idx, pi in enumerate(p_arr):
        if pi == 0.0:
            continue
        hi = 1.0 + 40.0 * std
        while rician_power_cdf(hi, k) < pi:
            hi *= 2.0
        out[idx] = optimize.brentq(
            lambda x: rician_power_cdf(x, k) - pi, 0.0, hi, xtol=1e-14, rtol=1e-13, maxiter=200
        )
    return out if np.ndim(p) else float(out[0])


@dataclass(frozen=True)
class QuadratureGrid:
    """Left-endpoint quantiles of |g^L|^2, |g^N|^2 and the shadowing gain."""

    gamma_los: np.ndarray
    gamma_nlos: np.ndarray
    gamma_shadow: np.ndarray

    @property
    def u_l(self) -> int:
        return len(self.gamma_los)

    @property
    def u_n(self) -> int:
        return len(self.gamma_nlos)

    @property
    def u_nu(self) -> int:
        return len(self.gamma_shadow)

    @property
    def gamma_nlos_joint(self) -> np.ndarray:
        """Flattened outer product gamma^N_i * gamma^nu_j."""
        return np.outer(self.gamma_nlos, self.gamma_shadow).ravel()

    @classmethod
    def mean_channel(cls) -> "QuadratureGrid":
        """Single-point grid at the unit mean; turns every finite sum into
        the average-channel SE."""
        one = np.ones(1)
        return cls(one, one, one)


def build_grids(u_l: int, u_n: int, u_nu: int, env: EnvParams) -> QuadratureGrid:
    if min(u_l, u_n, u_nu) < 1:
        raise DomainError("grid sizes must be >= 1")
    p_l = np.arange(u_l) / u_l
    p_n = np.arange(u_n) / u_n
    p_nu = np.arange(u_nu) / u_nu
    return QuadratureGrid(
        gamma_los=rician_power_quantile(p_l, env.k_rician),
        gamma_nlos=exp_unit_quantile(p_n),
        gamma_shadow=np.atleast_1d(lognormal_shadow_quantile(p_nu, env.sigma_db)),
    )
