"""Transmission rules: LLR thresholding with three calibration methods, and the energy-detector baseline.

A CR transmits in slot ``k+1`` (``u = 1``) when its decision statistic from
slot ``k`` is at or below the threshold.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from causalcr.emission import EmissionModel, energy_cdf, gamma_p
from causalcr.hmm_engine import LlrTrace
from causalcr.pu_chain import TransitionMatrix

NEVER = -math.inf

BISECTION_MAX_ITERS = 200
BRACKET_MAX = 1e300


class CalibrationError(ValueError):
    """The calibration subset is empty, or the method's precondition fails."""


class CalibrationMethod(str, enum.Enum):
    KNOWN = "known"
    ESTIMATED = "estimated"
    UNCONDITIONAL = "unconditional"


@dataclass(frozen=True)
class LlrPolicy:
    """Transmit iff ``z_k <= theta_llr``.

    ``theta_key`` is the same threshold expressed on the tie-free ordering
    key of :class:`LlrTrace`; it is used when whole traces are scored.
    """

    theta_llr: float
    method: CalibrationMethod
    rho_max: float
    theta_key: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.rho_max < 1.0:
            raise ValueError("rho_max must lie in (0, 1)")
        if math.isnan(self.theta_llr) or self.theta_llr == math.inf:
            raise ValueError("theta_llr must be finite or the never-transmit sentinel")


@dataclass(frozen=True)
class BaselinePolicy:
    """Transmit iff the last slot energy is at or below ``theta_e``."""

    theta_e: float

    def __post_init__(self):
        if not self.theta_e >= 0:
            raise ValueError("theta_e must be nonnegative")


@dataclass(frozen=True)
class CalibrationSet:
    """Training LLRs ``z_1 .. z_NT``; ``next_states[k]`` is the label of slot ``k+1``."""

    z: np.ndarray
    next_states: Optional[np.ndarray] = None
    key: Optional[np.ndarray] = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        object.__setattr__(self, "z", z)
        if self.next_states is not None:
            labels = np.asarray(self.next_states, dtype=np.int8)
            if labels.shape != z.shape:
                raise ValueError("labels must align one-to-one with the LLRs")
            object.__setattr__(self, "next_states", labels)
        if self.key is not None:
            key = np.asarray(self.key, dtype=float)
            if key.shape != z.shape:
                raise ValueError("ordering key must align with the LLRs")
            object.__setattr__(self, "key", key)

    @classmethod
    def from_trace(cls, trace: LlrTrace, states=None) -> "CalibrationSet":
        """Pair ``z_k`` with ``states[k+1]``; the last LLR has no label and is dropped.

        ``states`` covers the same slots as ``trace``.
        """
        if states is None:
            return cls(trace.z, None, trace.key)
        states = np.asarray(states)
        if states.size != len(trace):
            raise ValueError("states must cover the same slots as the LLR trace")
        return cls(trace.z[:-1], states[1:], trace.key[:-1])

    def with_labels(self, next_states) -> "CalibrationSet":
        return CalibrationSet(self.z, next_states, self.key)

    def __len__(self):
        return self.z.size


def quantile_index(sorted_values: np.ndarray, p: float) -> int:
    """Index of the conservative order statistic, or -1 for "never transmit"."""
    n = sorted_values.size
    m = math.floor(p * n)
    if m < 1:
        return -1
    idx = m - 1
    # ties straddling position m would push the ECDF above p
    if idx + 1 < n and sorted_values[idx + 1] == sorted_values[idx]:
        idx = int(np.searchsorted(sorted_values, sorted_values[idx], side="left")) - 1
    return idx


def ecdf_quantile(samples, p: float) -> float:
    """Largest sample value whose empirical CDF does not exceed ``p``.

    For distinct samples this is the ``floor(p N)``-th order statistic.
    Returns ``-inf`` when no sample qualifies.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise CalibrationError("empty calibration set")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    idx = quantile_index(x, p)
    return NEVER if idx < 0 else float(x[idx])


def _calibrate(cal: CalibrationSet, mask, rho_max, method, empty_msg) -> LlrPolicy:
    z = cal.z if mask is None else cal.z[mask]
    if z.size == 0:
        raise CalibrationError(empty_msg)
    key = cal.key if mask is None or cal.key is None else cal.key[mask]
    if key is None:
        return LlrPolicy(ecdf_quantile(z, rho_max), method, rho_max)
    order = np.argsort(key, kind="stable")
    idx = quantile_index(key[order], rho_max)
    if idx < 0:
        return LlrPolicy(NEVER, method, rho_max, NEVER)
    return LlrPolicy(float(z[order[idx]]), method, rho_max, float(key[order[idx]]))


def calibrate_known(cal: CalibrationSet, rho_max: float) -> LlrPolicy:
    """Threshold from the LLRs whose true next state is PU-active."""
    if cal.next_states is None:
        raise CalibrationError("known-state calibration needs next-state labels")
    return _calibrate(cal, cal.next_states == 1, rho_max, CalibrationMethod.KNOWN,
                      "no interference-side samples")


def calibrate_estimated(cal: CalibrationSet, q_hat_next, rho_max: float) -> LlrPolicy:
    """Threshold from the LLRs whose smoothed next-state estimate is PU-active.

    Raises :class:`CalibrationError` when no slot is estimated active, which
    is the expected outcome at very low SNR when the PU is mostly idle.
    """
    q_hat_next = np.asarray(q_hat_next)
    if q_hat_next.shape != cal.z.shape:
        raise ValueError("estimated labels must align one-to-one with the LLRs")
    return _calibrate(cal, q_hat_next == 1, rho_max, CalibrationMethod.ESTIMATED,
                      "estimated-active set empty")


def calibrate_unconditional(cal: CalibrationSet, rho_max: float, A: TransitionMatrix) -> LlrPolicy:
    if not A.is_slow_switching:
        raise CalibrationError("safety guarantee requires a01+a10<1")
    return _calibrate(cal, None, rho_max, CalibrationMethod.UNCONDITIONAL,
                      "empty calibration set")


def decide_llr(p: LlrPolicy, z):
    u = np.asarray(z) <= p.theta_llr
    return int(u) if u.ndim == 0 else u.astype(np.int8)


def llr_decisions(p: LlrPolicy, trace: LlrTrace) -> np.ndarray:
    """Decisions ``u_2 .. u_{N+1}`` for every LLR of ``trace``."""
    if p.theta_key is not None:
        return (trace.key <= p.theta_key).astype(np.int8)
    return decide_llr(p, trace.z)


def decide_baseline(p: BaselinePolicy, y):
    y = np.asarray(y)
    if np.any(y < 0):
        raise ValueError("energy must be nonnegative")
    u = y <= p.theta_e
    return int(u) if u.ndim == 0 else u.astype(np.int8)


def baseline_interference(A: TransitionMatrix, m: EmissionModel, theta_e: float) -> float:
    """IR of the energy detector at threshold ``theta_e``: ``a11 P_M + a10 (1 - P_FA)``."""
    return A.a11 * energy_cdf(m, 1, theta_e) + A.a10 * gamma_p(m.K, theta_e / m.sigma0_sq)


def baseline_threshold(A: TransitionMatrix, m: EmissionModel, rho_max: float) -> BaselinePolicy:
    """Energy threshold whose IR equals ``rho_max``, found by bisection.

    The bracket ``[0, B]`` starts at the mean active-slot energy and doubles
    until the IR at ``B`` exceeds ``rho_max``, up to ``BRACKET_MAX``.
    """
    if not 0.0 < rho_max < 1.0:
        raise ValueError("rho_max must lie in (0, 1)")
    rho = lambda t: baseline_interference(A, m, t)  # noqa: E731
    lo, hi = 0.0, m.K * m.sigma1_sq
    while rho(hi) <= rho_max:
        lo, hi = hi, 2.0 * hi
        if hi > BRACKET_MAX:
            return BaselinePolicy(lo)
    for _ in range(BISECTION_MAX_ITERS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if rho(mid) <= rho_max:
            lo = mid
        else:
            hi = mid
    best = min((lo, hi), key=lambda t: abs(rho(t) - rho_max))
    return BaselinePolicy(best)
