"""Two-state on/off Markov model of primary-user (PU) activity.

State 0 is PU-idle, state 1 is PU-active.  Traces always start from the
stationary distribution unless an explicit initial state is requested.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]

_ROW_TOL = 1e-12


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` (passed through if already one)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic matrix ``[[a00, a01], [a10, a11]]`` with strictly positive entries."""

    a00: float
    a01: float
    a10: float
    a11: float

    def __post_init__(self):
        entries = (self.a00, self.a01, self.a10, self.a11)
        if not all(np.isfinite(e) and 0.0 < e < 1.0 for e in entries):
            raise ValueError(f"transition probabilities must lie in (0, 1), got {entries}")
        if abs(self.a00 + self.a01 - 1.0) > _ROW_TOL or abs(self.a10 + self.a11 - 1.0) > _ROW_TOL:
            raise ValueError("rows of the transition matrix must sum to 1")

    @classmethod
    def from_switching(cls, a01: float, a10: float) -> "TransitionMatrix":
        """Build the matrix from the two switching probabilities."""
        return cls(1.0 - a01, a01, a10, 1.0 - a10)

    @property
    def is_slow_switching(self) -> bool:
        return self.a01 + self.a10 < 1.0

    def as_array(self) -> np.ndarray:
        return np.array([[self.a00, self.a01], [self.a10, self.a11]])


@dataclass(frozen=True)
class StationaryDistribution:
    pi0: float
    pi1: float

    def as_array(self) -> np.ndarray:
        return np.array([self.pi0, self.pi1])


@dataclass(frozen=True)
class StateTrace:
    """Binary PU state sequence ``q_1 .. q_N`` and the seed that produced it."""

    states: np.ndarray
    seed: object = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int8)
        if states.ndim != 1 or states.size < 1:
            raise ValueError("a state trace needs at least one slot")
        if np.any((states != 0) & (states != 1)):
            raise ValueError("states must be 0 or 1")
        object.__setattr__(self, "states", states)

    def __len__(self):
        return self.states.size


def stationary_distribution(A: TransitionMatrix) -> StationaryDistribution:
    s = A.a01 + A.a10
    return StationaryDistribution(A.a10 / s, A.a01 / s)


def sample_trace(
    A: TransitionMatrix,
    n: int,
    seed: SeedLike = None,
    initial_state: Optional[int] = None,
) -> StateTrace:
    """Draw ``n`` consecutive PU states.

    The chain is generated from its sojourn times: a visit to state 0 lasts
    Geometric(a01) slots and a visit to state 1 lasts Geometric(a10) slots,
    which is the same law as stepping the chain slot by slot.

    Parameters
    ----------
    A : TransitionMatrix
    n : int
        Number of slots, at least 1.
    seed : int, SeedSequence or Generator
    initial_state : {0, 1}, optional
        Fix ``q_1`` instead of drawing it from the stationary distribution.
        Intended for tests.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = make_rng(seed)
    if initial_state is None:
        state = int(rng.random() < stationary_distribution(A).pi1)
    elif initial_state in (0, 1):
        state = int(initial_state)
    else:
        raise ValueError("initial_state must be 0 or 1")

    leave = (A.a01, A.a10)
    mean_cycle = 1.0 / A.a01 + 1.0 / A.a10
    out = np.empty(n, dtype=np.int8)
    pos = 0
    while pos < n:
        cycles = int(1.2 * (n - pos) / mean_cycle) + 8
        durations = np.empty(2 * cycles, dtype=np.int64)
        durations[0::2] = rng.geometric(leave[state], size=cycles)
        durations[1::2] = rng.geometric(leave[1 - state], size=cycles)
        labels = np.tile(np.array([state, 1 - state], dtype=np.int8), cycles)
        block = np.repeat(labels, durations)
        take = min(block.size, n - pos)
        out[pos:pos + take] = block[:take]
        pos += take
        # a short block ends on a visit boundary; each cycle ends in the
        # opposite state, so the next visit starts in `state` again
    return StateTrace(out, seed=None if isinstance(seed, np.random.Generator) else seed)


def empirical_transition_counts(trace: StateTrace) -> np.ndarray:
    """2x2 table whose ``[i, j]`` entry counts consecutive ``(q_k, q_{k+1}) = (i, j)`` pairs."""
    q = np.asarray(trace.states if isinstance(trace, StateTrace) else trace, dtype=np.int64)
    if q.size < 2:
        raise ValueError("trace too short")
    pair = 2 * q[:-1] + q[1:]
    return np.bincount(pair, minlength=4).reshape(2, 2)
