"""SNR sweeps comparing the LLR strategies against the energy-detector baseline.

Every SNR point draws its training and evaluation traces from their own
child seed streams, derived from the master seed, the SNR value and the
phase.  Points are therefore independent of grid composition and of the
order in which workers execute them.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from causalcr.emission import EmissionModel, sample_energy
from causalcr.hmm_engine import baum_welch, forward_backward, llr_trace
from causalcr.metrics import empirical_ur_ir, ur_upper_bound
from causalcr.policy import (
    CalibrationError,
    CalibrationSet,
    baseline_threshold,
    calibrate_estimated,
    calibrate_known,
    calibrate_unconditional,
    decide_baseline,
    llr_decisions,
    quantile_index,
)
from causalcr.pu_chain import TransitionMatrix, sample_trace

log = logging.getLogger(__name__)

METHODS = ("baseline", "known", "estimated", "unconditional")
MODEL_SOURCES = ("true", "baum-welch")

TRAIN, EVAL = 0, 1

# contiguous batches for the standard errors; with the default 2e5 evaluation
# slots a batch spans 2000 slots, far beyond the PU sojourn times of interest
STDERR_BATCHES = 100
# delete-a-group jackknife of the calibrated threshold
JACKKNIFE_GROUPS = 20


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    a01: float = 0.1
    a10: float = 0.01
    K: int = 10
    sigma0_sq: float = 1.0
    snr_db: Sequence[float] = (-3.0,)
    rho_max: float = 0.1
    n_train: int = 200_000
    n_eval: int = 200_000
    seed: int = 0
    methods: Sequence[str] = METHODS
    model: str = "true"
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.snr_db:
            raise ConfigError("snr grid must not be empty")
        if any(not math.isfinite(s) for s in self.snr_db):
            raise ConfigError("snr values must be finite")
        if not 0.0 < self.rho_max < 1.0:
            raise ConfigError("rho_max must lie in (0, 1)")
        if self.n_train < 1 or self.n_eval < 1:
            raise ConfigError("n_train and n_eval must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ConfigError(f"methods must be a nonempty subset of {METHODS}, got {self.methods}")
        if self.model not in MODEL_SOURCES:
            raise ConfigError(f"model must be one of {MODEL_SOURCES}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        try:
            self.transition_matrix()
            EmissionModel.from_snr_db(self.K, self.snr_db[0], self.sigma0_sq)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def transition_matrix(self) -> TransitionMatrix:
        return TransitionMatrix.from_switching(self.a01, self.a10)

    def as_dict(self) -> dict:
        return {
            "a01": self.a01, "a10": self.a10, "K": self.K, "sigma0_sq": self.sigma0_sq,
            "snr_db": list(self.snr_db), "rho_max": self.rho_max,
            "n_train": self.n_train, "n_eval": self.n_eval, "seed": self.seed,
            "methods": list(self.methods), "model": self.model,
        }


@dataclass(frozen=True)
class SweepRecord:
    snr_db: float
    method: str
    threshold: Optional[float]
    ur: Optional[float]
    ur_stderr: Optional[float]
    ir: Optional[float]
    ir_stderr: Optional[float]
    eta_max: float
    n_idle: Optional[int]
    n_active: Optional[int]
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class _Phase:
    states: np.ndarray
    energies: np.ndarray
    llr: object = field(default=None)


def _zigzag(v: int) -> int:
    return 2 * v if v >= 0 else -2 * v - 1


def seed_stream(seed: int, snr_db: float, phase: int) -> np.random.SeedSequence:
    """Child stream for one (SNR, phase) pair.

    The SNR enters as an integer number of milli-decibels, zigzag-mapped to
    a nonnegative spawn key.
    """
    snr_key = _zigzag(int(round(snr_db * 1000)))
    return np.random.SeedSequence(seed, spawn_key=(snr_key, phase))


def _simulate_phase(A, m, n_slots, stream) -> _Phase:
    rng = np.random.Generator(np.random.PCG64(stream))
    states = sample_trace(A, n_slots, rng).states
    return _Phase(states, sample_energy(m, states, rng))


def _initial_guess(y: np.ndarray, K: int):
    lo, hi = np.quantile(y, [0.1, 0.9]) / K
    if not hi > lo:
        hi = lo * 1.5
    return TransitionMatrix.from_switching(0.05, 0.05), EmissionModel(K, float(lo), float(hi))


def _rate_at(sorted_keys: np.ndarray, theta: float) -> Optional[float]:
    if sorted_keys.size == 0:
        return None
    return np.searchsorted(sorted_keys, theta, side="right") / sorted_keys.size


def calibration_stderr(train_key, mask, rho_max, eval_key, q_next, n_groups=JACKKNIFE_GROUPS):
    """Standard errors of (UR, IR) caused by estimating the threshold from training data.

    The training slots are cut into ``n_groups`` contiguous groups.  Each
    replicate recomputes the threshold without one group and scores it on the
    evaluation LLRs; the jackknife variance of the scored rates is returned.

    Parameters
    ----------
    train_key : ndarray
        Ordering keys of the training LLRs.
    mask : ndarray of bool or None
        Calibration subset; ``None`` means every training slot.
    rho_max : float
    eval_key : ndarray
        Ordering keys of the evaluation LLRs, aligned with ``q_next``.
    q_next : ndarray
        Evaluation states of the slots the decisions apply to.
    """
    n = train_key.size
    groups = (np.arange(n, dtype=np.int64) * n_groups) // n
    if mask is not None:
        train_key, groups = train_key[mask], groups[mask]
    order = np.argsort(train_key, kind="stable")
    keys, groups = train_key[order], groups[order]
    idle = np.sort(eval_key[q_next == 0])
    active = np.sort(eval_key[q_next == 1])
    reps = []
    for g in range(n_groups):
        kept = keys[groups != g]
        if kept.size == 0:
            continue
        idx = quantile_index(kept, rho_max)
        theta = -np.inf if idx < 0 else kept[idx]
        reps.append((_rate_at(idle, theta), _rate_at(active, theta)))
    out = []
    for col in zip(*reps) if len(reps) > 1 else ((), ()):
        if not col or col[0] is None:
            out.append(None)
            continue
        x = np.asarray(col, dtype=float)
        out.append(float(math.sqrt((x.size - 1) / x.size * np.sum((x - x.mean()) ** 2))))
    return tuple(out)


def _combine(*errors) -> Optional[float]:
    if any(e is None for e in errors):
        return None
    return float(math.sqrt(sum(e * e for e in errors)))


def run_point(cfg: ExperimentConfig, snr_db: float) -> List[SweepRecord]:
    """Calibrate every requested method on a training trace and score it on a fresh one."""
    A = cfg.transition_matrix()
    m = EmissionModel.from_snr_db(cfg.K, snr_db, cfg.sigma0_sq)
    eta_max = ur_upper_bound(A, cfg.rho_max)

    # n + 1 slots give n labelled LLRs / n scored decisions
    train = _simulate_phase(A, m, cfg.n_train + 1, seed_stream(cfg.seed, snr_db, TRAIN))
    A_hat, m_hat = A, m
    if cfg.model == "baum-welch":
        A_hat, m_hat, _ = baum_welch(train.energies, _initial_guess(train.energies, cfg.K))
    train.llr = llr_trace(A_hat, m_hat, train.energies)
    cal = CalibrationSet.from_trace(train.llr, train.states)

    policies = {}
    masks = {"known": cal.next_states == 1, "unconditional": None}
    for method in cfg.methods:
        try:
            if method == "baseline":
                policies[method] = baseline_threshold(A_hat, m_hat, cfg.rho_max)
            elif method == "known":
                policies[method] = calibrate_known(cal, cfg.rho_max)
            elif method == "estimated":
                q_hat = forward_backward(A_hat, m_hat, train.energies).q_hat
                masks[method] = q_hat[1:] == 1
                policies[method] = calibrate_estimated(cal, q_hat[1:], cfg.rho_max)
            else:
                policies[method] = calibrate_unconditional(cal, cfg.rho_max, A_hat)
        except CalibrationError as exc:
            log.info("snr %.3g dB: %s calibration failed: %s", snr_db, method, exc)
            policies[method] = exc

    evaluation = _simulate_phase(A, m, cfg.n_eval + 1, seed_stream(cfg.seed, snr_db, EVAL))
    q_next = evaluation.states[1:]
    eval_llr = None
    records = []
    for method in cfg.methods:
        p = policies[method]
        if isinstance(p, Exception):
            records.append(SweepRecord(snr_db, method, None, None, None, None, None,
                                       eta_max, None, None, f"method-failed: {p}"))
            continue
        cal_se = (0.0, 0.0)
        if method == "baseline":
            # analytic threshold: no calibration noise
            u = decide_baseline(p, evaluation.energies[:-1])
            threshold = p.theta_e
        else:
            if eval_llr is None:
                eval_llr = llr_trace(A_hat, m_hat, evaluation.energies)
            u = llr_decisions(p, eval_llr)[:-1]
            threshold = p.theta_llr
            cal_se = calibration_stderr(cal.key, masks[method], cfg.rho_max,
                                        eval_llr.key[:-1], q_next)
        r = empirical_ur_ir(u, q_next, n_batches=STDERR_BATCHES)
        records.append(SweepRecord(snr_db, method, threshold, r.ur, _combine(r.ur_stderr, cal_se[0]),
                                   r.ir, _combine(r.ir_stderr, cal_se[1]), eta_max,
                                   r.n_idle, r.n_active))
    return records


def _point_task(args):
    cfg, snr = args
    return run_point(cfg, snr)


def sort_records(records) -> List[SweepRecord]:
    order = {m: i for i, m in enumerate(METHODS)}
    return sorted(records, key=lambda r: (r.snr_db, order[r.method]))


def run_sweep(cfg: ExperimentConfig, workers: Optional[int] = None) -> List[SweepRecord]:
    workers = workers or cfg.workers
    tasks = [(cfg, snr) for snr in dict.fromkeys(cfg.snr_db)]
    if workers == 1 or len(tasks) == 1:
        chunks = [_point_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_point_task, tasks))
    return sort_records(r for chunk in chunks for r in chunk)
