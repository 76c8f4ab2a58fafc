"""Utilization ratio (UR) and interference ratio (IR): measurement, closed forms and the UR upper bound.

UR is ``Pr{u_{k+1} = 1 | q_{k+1} = 0}``; IR is ``Pr{u_{k+1} = 1 | q_{k+1} = 1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from causalcr.pu_chain import TransitionMatrix


@dataclass(frozen=True)
class UrIr:
    """UR/IR pair.  A ratio is ``None`` when its conditioning set is empty."""

    ur: Optional[float]
    ir: Optional[float]
    n_idle: Optional[int] = None
    n_active: Optional[int] = None
    ur_stderr: Optional[float] = None
    ir_stderr: Optional[float] = None


@dataclass(frozen=True)
class ConditionalActionProbs:
    """``p0 = Pr{u_{k+1}=0 | q_k=0}`` and ``p1 = Pr{u_{k+1}=1 | q_k=1}``."""

    p0: float
    p1: float

    def __post_init__(self):
        if not (0.0 <= self.p0 <= 1.0 and 0.0 <= self.p1 <= 1.0):
            raise ValueError("conditional action probabilities must lie in [0, 1]")


def binomial_stderr(p: Optional[float], n: int) -> Optional[float]:
    if p is None or n == 0:
        return None
    return math.sqrt(p * (1.0 - p) / n)


def batch_means_stderr(hits, cond, n_batches: int) -> Optional[float]:
    """Standard error of the ratio ``sum(hits) / sum(cond)`` from contiguous batches.

    ``hits`` and ``cond`` are 0/1 sequences over consecutive slots.  Batches
    longer than the correlation time make the estimate valid for Markov
    dependent slots; for independent slots it agrees with the binomial one.
    """
    hits = np.asarray(hits, dtype=float)
    cond = np.asarray(cond, dtype=float)
    n_batches = min(n_batches, hits.size)
    if n_batches < 2:
        raise ValueError("need at least two batches")
    total = cond.sum()
    if total == 0:
        return None
    ratio = hits.sum() / total
    edges = np.linspace(0, hits.size, n_batches + 1).astype(np.int64)
    h = np.add.reduceat(hits, edges[:-1])
    c = np.add.reduceat(cond, edges[:-1])
    resid = h - ratio * c
    return float(math.sqrt(n_batches / (n_batches - 1) * np.sum(resid ** 2)) / total)


def empirical_ur_ir(u, q, n_batches: Optional[int] = None) -> UrIr:
    """Score decisions ``u`` against the states ``q`` of the same slots.

    Standard errors are binomial by default; pass ``n_batches`` to get
    batch-means errors that account for serial dependence between slots.
    """
    u = np.asarray(u)
    q = np.asarray(q)
    if u.shape != q.shape:
        raise ValueError("decisions and states must be aligned")
    idle = q == 0
    n_idle = int(idle.sum())
    n_active = int(q.size - n_idle)
    ur = float(np.count_nonzero(u[idle])) / n_idle if n_idle else None
    ir = float(np.count_nonzero(u[~idle])) / n_active if n_active else None
    if n_batches is None:
        ur_se, ir_se = binomial_stderr(ur, n_idle), binomial_stderr(ir, n_active)
    else:
        sent = u != 0
        ur_se = batch_means_stderr(sent & idle, idle, n_batches)
        ir_se = batch_means_stderr(sent & ~idle, ~idle, n_batches)
    return UrIr(ur, ir, n_idle, n_active, ur_se, ir_se)


def closed_form_ur_ir(A: TransitionMatrix, probs: ConditionalActionProbs) -> UrIr:
    ur = A.a01 * probs.p1 + A.a00 * (1.0 - probs.p0)
    ir = A.a11 * probs.p1 + A.a10 * (1.0 - probs.p0)
    return UrIr(ur, ir)


def ur_from_ir(A: TransitionMatrix, rho: float, p1: float) -> float:
    """UR of a strategy with IR ``rho`` and ``Pr{u_{k+1}=1 | q_k=1} = p1``."""
    return rho + (1.0 - A.a01 - A.a10) / A.a10 * (rho - p1)


def feasible_p1_range(A: TransitionMatrix, rho: float) -> tuple:
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    lo = max(0.0, (rho - A.a10) / A.a11)
    hi = min(1.0, rho / A.a11)
    return lo, hi


def ur_upper_bound(A: TransitionMatrix, rho_max: float) -> float:
    """Largest UR reachable by any strategy whose IR does not exceed ``rho_max``."""
    if not 0.0 < rho_max < 1.0:
        raise ValueError("rho_max must lie in (0, 1)")
    c = 1.0 - A.a01 - A.a10
    if A.a01 + A.a10 <= 1.0:
        return rho_max + c * min(rho_max / A.a10, (1.0 - rho_max) / A.a11)
    return rho_max - c * min(rho_max / A.a11, (1.0 - rho_max) / A.a10)
