"""Per-slot energy observations of an energy detector collecting ``K`` complex samples.

Under PU state ``i`` the slot energy is the sum of ``2K`` squared zero-mean
Gaussians of variance ``sigma_i^2 / 2``, i.e. ``Gamma(shape=K, scale=sigma_i^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from causalcr.pu_chain import SeedLike, make_rng

_EPS = 1e-16
_TINY = 1e-300
_MAX_TERMS = 10_000


def _series_p(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _continued_fraction_q(a: float, x: float) -> float:
    # modified Lentz evaluation of the Legendre continued fraction
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(a, x) = gamma(a, x) / Gamma(a)``."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x < 0:
        raise ValueError("argument must be nonnegative")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _series_p(a, x))
    return max(0.0, 1.0 - _continued_fraction_q(a, x))


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``, accurate in the tail."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x < 0:
        raise ValueError("argument must be nonnegative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _series_p(a, x))
    return min(1.0, _continued_fraction_q(a, x))


@dataclass(frozen=True)
class EmissionModel:
    K: int
    sigma0_sq: float
    sigma1_sq: float

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")
        if not (0.0 < self.sigma0_sq < self.sigma1_sq) or not math.isfinite(self.sigma1_sq):
            raise ValueError("need sigma1_sq > sigma0_sq > 0")
        object.__setattr__(self, "K", int(self.K))

    @classmethod
    def from_snr_db(cls, K: int, snr_db: float, sigma0_sq: float = 1.0) -> "EmissionModel":
        """Model whose signal-to-noise ratio ``sigma_s^2 / sigma0^2`` is ``snr_db`` decibels."""
        if sigma0_sq <= 0:
            raise ValueError("sigma0_sq must be positive")
        return cls(K, sigma0_sq, sigma0_sq * (1.0 + 10.0 ** (snr_db / 10.0)))

    @property
    def snr_linear(self) -> float:
        return (self.sigma1_sq - self.sigma0_sq) / self.sigma0_sq

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.snr_linear)

    def scale(self, state: int) -> float:
        if state not in (0, 1):
            raise ValueError("state must be 0 or 1")
        return self.sigma1_sq if state else self.sigma0_sq


def sample_energy(m: EmissionModel, state, seed: SeedLike = None):
    """Draw slot energies for a single state or an array of states."""
    rng = make_rng(seed)
    states = np.asarray(state)
    if np.any((states != 0) & (states != 1)):
        raise ValueError("states must be 0 or 1")
    scale = np.where(states == 1, m.sigma1_sq, m.sigma0_sq)
    y = rng.gamma(m.K, scale)
    return float(y) if np.ndim(y) == 0 else y


def log_energy_pdf(m: EmissionModel, state: int, y):
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr <= 0):
        raise ValueError("energy must be positive")
    s2 = m.scale(state)
    out = (m.K - 1) * np.log(y_arr) - y_arr / s2 - m.K * math.log(s2) - math.lgamma(m.K)
    return float(out) if out.ndim == 0 else out


def log_density_ratio(m: EmissionModel, y):
    """``log b1(y) - log b0(y)``, affine and strictly increasing in ``y``."""
    y_arr = np.asarray(y, dtype=float)
    out = (m.K * math.log(m.sigma0_sq / m.sigma1_sq)
           + y_arr * (m.sigma1_sq - m.sigma0_sq) / (m.sigma1_sq * m.sigma0_sq))
    return float(out) if out.ndim == 0 else out


def _elementwise(fn, a, y):
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0) or np.any(np.isnan(y_arr)):
        raise ValueError("energy must be nonnegative")
    if y_arr.ndim == 0:
        return fn(a, float(y_arr))
    return np.array([fn(a, v) for v in y_arr.ravel()]).reshape(y_arr.shape)


def energy_cdf(m: EmissionModel, state: int, y):
    """``Pr{y_k <= y | q_k = state}``."""
    s2 = m.scale(state)
    return _elementwise(gamma_p, m.K, np.asarray(y, dtype=float) / s2)


def pfa(m: EmissionModel, theta_e):
    """False-alarm probability ``Pr{y_k > theta_e | q_k = 0}``."""
    return _elementwise(gamma_q, m.K, np.asarray(theta_e, dtype=float) / m.sigma0_sq)


def pm(m: EmissionModel, theta_e):
    """Missed-detection probability ``Pr{y_k <= theta_e | q_k = 1}``."""
    return energy_cdf(m, 1, theta_e)
