"""Causal filtering, smoothing and parameter estimation for the continuous-output HMM.

The filter state is kept normalized at every slot (scaling-factor method);
the a-posteriori LLR of the next PU state only depends on the ratio of the
forward variables, so the normalization does not change it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from causalcr import _kernels
from causalcr.emission import EmissionModel, log_energy_pdf
from causalcr.pu_chain import (
    StationaryDistribution,
    TransitionMatrix,
    stationary_distribution,
)

MAX_ENUMERATION = 16


class DegenerateComponentError(RuntimeError):
    """A hidden state lost all of its responsibility during estimation."""


@dataclass(frozen=True)
class ForwardState:
    """Normalized forward variables after slot ``k``.

    ``log_odds`` is ``log alpha_k(1) / alpha_k(0)`` kept at full precision,
    since ``alpha_norm`` saturates to exactly 0 or 1 for very informative slots.
    """

    alpha_norm: tuple
    log_evidence: float
    k: int
    log_odds: Optional[float] = None

    def __post_init__(self):
        a0, a1 = (float(v) for v in self.alpha_norm)
        if a0 < 0 or a1 < 0 or abs(a0 + a1 - 1.0) > 1e-12:
            raise ValueError("alpha_norm must be a probability pair")
        object.__setattr__(self, "alpha_norm", (a0, a1))
        if self.log_odds is None:
            with np.errstate(divide="ignore"):
                object.__setattr__(self, "log_odds", float(np.log(a1) - np.log(a0)))


@dataclass(frozen=True)
class LlrTrace:
    """A-posteriori LLRs ``z_1 .. z_N`` of one observation stream.

    ``log_odds[k]`` is the filtered log-odds of the current state; ``z`` is a
    strictly monotone function of it (increasing when ``a01 + a10 < 1``,
    decreasing when ``> 1``).  ``z`` is rounded to float64 near the ends of its
    range, so ``key`` gives a tie-free ordering equivalent to ordering by ``z``.
    """

    z: np.ndarray
    log_odds: np.ndarray
    direction: int = 1
    log_likelihood: float = float("nan")

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 1 or not np.all(np.isfinite(z)):
            raise ValueError("LLR trace must be a finite 1-d sequence")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "log_odds", np.asarray(self.log_odds, dtype=float))

    def __len__(self):
        return self.z.size

    @property
    def key(self) -> np.ndarray:
        if self.direction == 0:
            return self.z
        return self.direction * self.log_odds


@dataclass(frozen=True)
class SmoothedStates:
    gamma1: np.ndarray
    q_hat: np.ndarray
    log_likelihood: float = float("nan")
    transition_counts: np.ndarray = field(default=None, repr=False)


def _log_b(m: EmissionModel, y: np.ndarray):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("need a nonempty 1-d observation sequence")
    return log_energy_pdf(m, 0, y), log_energy_pdf(m, 1, y)


def _normalize_log_pair(l0, l1):
    norm = np.logaddexp(l0, l1)
    return (math.exp(l0 - norm), math.exp(l1 - norm)), float(norm)


def forward_init(pi: StationaryDistribution, m: EmissionModel, y1: float) -> ForwardState:
    l0 = math.log(pi.pi0) + log_energy_pdf(m, 0, y1)
    l1 = math.log(pi.pi1) + log_energy_pdf(m, 1, y1)
    alpha, norm = _normalize_log_pair(l0, l1)
    return ForwardState(alpha, norm, 1, log_odds=l1 - l0)


def forward_step(s: ForwardState, A: TransitionMatrix, m: EmissionModel, y_next: float) -> ForwardState:
    z = llr(s, A)
    # predicted log Pr{q_{k+1} = j | y_1..k}
    lp0 = -float(np.logaddexp(0.0, z))
    lp1 = -float(np.logaddexp(0.0, -z))
    l0 = lp0 + log_energy_pdf(m, 0, y_next)
    l1 = lp1 + log_energy_pdf(m, 1, y_next)
    alpha, norm = _normalize_log_pair(l0, l1)
    return ForwardState(alpha, s.log_evidence + norm, s.k + 1, log_odds=z + (l1 - lp1) - (l0 - lp0))


def llr_from_alpha(alpha0: float, alpha1: float, A: TransitionMatrix) -> float:
    """``log (a01 alpha0 + a11 alpha1) / (a00 alpha0 + a10 alpha1)`` for unnormalized alphas."""
    with np.errstate(divide="ignore"):
        lam = float(np.log(alpha1) - np.log(alpha0))
    return float(_kernels.predict_log_odds(lam, A.a00, A.a01, A.a10, A.a11))


def llr(s: ForwardState, A: TransitionMatrix) -> float:
    """A-posteriori log-odds ``z_k`` that the PU is active in the next slot."""
    return float(_kernels.predict_log_odds(s.log_odds, A.a00, A.a01, A.a10, A.a11))


def _direction(A: TransitionMatrix) -> int:
    return int(np.sign(1.0 - A.a01 - A.a10))


def llr_trace(
    A: TransitionMatrix,
    m: EmissionModel,
    y,
    pi: Optional[StationaryDistribution] = None,
) -> LlrTrace:
    """Causal LLRs for the whole sequence ``y``; ``z_k`` depends on ``y_1 .. y_k`` only."""
    pi = pi or stationary_distribution(A)
    lb0, lb1 = _log_b(m, y)
    z, lam, loglik = _kernels.forward_filter(
        lb0, lb1, math.log(pi.pi1 / pi.pi0), A.a00, A.a01, A.a10, A.a11
    )
    return LlrTrace(z, lam, _direction(A), loglik)


def forward_backward(
    A: TransitionMatrix,
    m: EmissionModel,
    y,
    pi: Optional[StationaryDistribution] = None,
) -> SmoothedStates:
    """Smoothed posteriors ``Pr{q_k = 1 | y_1 .. y_N}`` and marginal-MAP states.

    Ties (posterior exactly 0.5) are resolved towards the active state.
    """
    pi = pi or stationary_distribution(A)
    lb0, lb1 = _log_b(m, y)
    gamma, xi, loglik = _kernels.forward_backward(
        lb0, lb1, math.log(pi.pi1 / pi.pi0), A.a00, A.a01, A.a10, A.a11
    )
    gamma1 = gamma[:, 1]
    return SmoothedStates(gamma1, (gamma1 >= 0.5).astype(np.int8), loglik, xi)


def _transition_objective(theta, n_trans, g_first):
    a01, a10 = 1.0 / (1.0 + np.exp(-theta))
    val = (n_trans[0, 0] * math.log1p(-a01) + n_trans[0, 1] * math.log(a01)
           + n_trans[1, 0] * math.log(a10) + n_trans[1, 1] * math.log1p(-a10)
           + g_first[0] * math.log(a10 / (a01 + a10))
           + g_first[1] * math.log(a01 / (a01 + a10)))
    return -val


def _update_transitions(A: TransitionMatrix, n_trans: np.ndarray, g_first: np.ndarray) -> TransitionMatrix:
    """Maximize the expected complete-data log-likelihood over (a01, a10).

    The initial slot is stationary, so its term couples to A; the closed-form
    count ratio is only the starting point.
    """
    clip = lambda p: min(max(p, 1e-12), 1.0 - 1e-12)  # noqa: E731
    candidates = [
        (A.a01, A.a10),
        (clip(n_trans[0, 1] / n_trans[0].sum()), clip(n_trans[1, 0] / n_trans[1].sum())),
    ]
    start = np.log(np.array(candidates[1]) / (1.0 - np.array(candidates[1])))
    res = optimize.minimize(
        _transition_objective, start, args=(n_trans, g_first), method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-13, "maxiter": 2000},
    )
    candidates.append(tuple(clip(p) for p in 1.0 / (1.0 + np.exp(-res.x))))

    def score(c):
        logits = np.log(np.array(c) / (1.0 - np.array(c)))
        return _transition_objective(logits, n_trans, g_first)

    a01, a10 = min(candidates, key=score)
    return TransitionMatrix.from_switching(a01, a10)


def baum_welch(
    y,
    init: tuple,
    max_iters: int = 200,
    tol: float = 1e-8,
):
    """Estimate ``A`` and both state variances by expectation-maximization.

    ``K`` is taken from the initial emission model and held fixed.  The
    initial state distribution is tied to the stationary distribution of the
    current ``A``.

    Parameters
    ----------
    y : array_like
        Slot energies.
    init : (TransitionMatrix, EmissionModel)
        Starting point.
    max_iters : int
    tol : float
        Stop once the relative change of the log-likelihood drops below this.

    Returns
    -------
    A : TransitionMatrix
    m : EmissionModel
        With states ordered so that ``sigma1_sq > sigma0_sq``.
    history : list of float
        Log-likelihood of every model visited, starting with ``init``.
    """
    A, m = init
    y = np.asarray(y, dtype=float)
    K = m.K
    history = []
    for _ in range(max_iters):
        sm = forward_backward(A, m, y)
        history.append(sm.log_likelihood)
        if len(history) > 1 and abs(history[-1] - history[-2]) <= tol * abs(history[-2]):
            break
        g1 = sm.gamma1
        g0 = 1.0 - g1
        w0, w1 = g0.sum(), g1.sum()
        if min(w0, w1) < 1e-8:
            raise DegenerateComponentError("degenerate component")
        s0 = float(g0 @ y) / (K * w0)
        s1 = float(g1 @ y) / (K * w1)
        if not (s0 > 0 and s1 > 0) or s0 == s1:
            raise DegenerateComponentError("degenerate component")
        A = _update_transitions(A, sm.transition_counts, np.array([g0[0], g1[0]]))
        if s1 < s0:
            A = TransitionMatrix.from_switching(A.a10, A.a01)
            s0, s1 = s1, s0
        m = EmissionModel(K, s0, s1)
    else:
        history.append(forward_backward(A, m, y).log_likelihood)
    return A, m, history


def brute_force_posteriors(A: TransitionMatrix, m: EmissionModel, y):
    """Exact ``z_k`` and ``Pr{q_k = 1 | y}`` by enumerating every state path.

    Test oracle; refuses sequences longer than 16 slots.

    Returns
    -------
    z : ndarray
    gamma1 : ndarray
    log_evidence : float
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 1:
        raise ValueError("need at least one observation")
    if n > MAX_ENUMERATION:
        raise ValueError(f"enumeration limited to {MAX_ENUMERATION} slots")
    pi = stationary_distribution(A)
    log_pi = np.log(pi.as_array())
    log_A = np.log(A.as_array())
    log_b = np.stack([log_energy_pdf(m, 0, y), log_energy_pdf(m, 1, y)])

    def prefix_joint(k):
        paths = (np.arange(2 ** k)[:, None] >> np.arange(k)[None, :]) & 1
        lj = log_pi[paths[:, 0]] + log_b[paths[:, 0], 0]
        for t in range(1, k):
            lj = lj + log_A[paths[:, t - 1], paths[:, t]] + log_b[paths[:, t], t]
        return paths, lj

    z = np.empty(n)
    for k in range(1, n + 1):
        paths, lj = prefix_joint(k)
        last = paths[:, -1]
        nxt1 = logsumexp(lj + log_A[last, 1])
        nxt0 = logsumexp(lj + log_A[last, 0])
        z[k - 1] = nxt1 - nxt0
    paths, lj = prefix_joint(n)
    log_ev = logsumexp(lj)
    gamma1 = np.array([
        math.exp(logsumexp(lj[paths[:, k] == 1]) - log_ev) for k in range(n)
    ])
    return z, gamma1, float(log_ev)
