"""Online payload estimation: mass from vertical force, CoM offset from moments.

The offset estimate stacks one block ``-skew(f_k) r = tau_k`` per wrench
sample (the moment is ``r x f`` once rotational terms are neglected) and
solves the resulting system by least squares. All forces parallel to one
direction leave the offset component along that direction unobservable;
the rank flag reports that instead of raising.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyWindow, InsufficientSamples, OutsideWindow, SingularDenominator
from .numerics import StackedSystem, skew, solve_least_squares
from .sensing import lowpass

GUARD_EPS = 0.5
FORCE_FLOOR = 1.0
MIN_MASS_SAMPLES = 1
MIN_OFFSET_SAMPLES = 1
RESOLVE_EVERY = 50
OFFSET_FILTER_ALPHA = 0.05


@dataclass(frozen=True)
class MassEstimate:
    m_hat: float = float("nan")
    sample_count: int = 0
    valid: bool = False


@dataclass(frozen=True)
class OffsetEstimate:
    r_hat_raw: np.ndarray
    r_hat_filtered: np.ndarray
    rank: int
    residual_norm: float

    @property
    def identifiable(self) -> bool:
        return self.rank == 3


def estimate_mass_sample(f_pz: float, a_z: float, g_scalar: float,
                         guard_eps: float = GUARD_EPS) -> float:
    denom = a_z - g_scalar
    if not abs(denom) > guard_eps:
        raise SingularDenominator(f"|a_z - g| = {abs(denom):.3g} within guard {guard_eps}")
    return f_pz / denom


def finalize_mass(samples, min_samples: int = MIN_MASS_SAMPLES) -> MassEstimate:
    """Median of accepted per-step mass samples."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0 or samples.size < min_samples:
        raise InsufficientSamples(f"{samples.size} mass samples, need {max(min_samples, 1)}")
    m_hat = float(np.median(samples))
    return MassEstimate(m_hat=m_hat, sample_count=int(samples.size),
                        valid=bool(m_hat > 0 and math.isfinite(m_hat)))


def payload_force_estimate(m_hat: float, a_tcp, g_vec) -> np.ndarray:
    """Predicted payload force ``m_hat (a_tcp - g)``, used directly as F_exc."""
    return m_hat * (np.asarray(a_tcp) - g_vec)


@dataclass
class OffsetBuffer:
    system: StackedSystem = field(default_factory=StackedSystem)
    window_start: float = 0.0
    window_end: float = math.inf
    min_samples: int = MIN_OFFSET_SAMPLES
    dropped: int = 0


def accumulate_offset_sample(buf: OffsetBuffer, f, tau, t: float | None = None,
                             force_floor: float = FORCE_FLOOR) -> bool:
    """Append ``(-skew(f), tau)``; returns False if the sample fell below the force floor."""
    if t is not None and not (buf.window_start <= t <= buf.window_end):
        raise OutsideWindow(f"t={t} outside [{buf.window_start}, {buf.window_end}]")
    if math.hypot(*f) < force_floor:
        buf.dropped += 1
        return False
    buf.system.append(-skew(f), tau)
    return True


def solve_offset(buf: OffsetBuffer, previous: OffsetEstimate | None = None,
                 filter_alpha: float = OFFSET_FILTER_ALPHA) -> OffsetEstimate:
    """Least-squares offset from the buffer.

    ``r_hat_filtered`` starts at the first raw solution and is EMA-updated
    against each later solve when ``previous`` is passed.
    """
    if buf.system.sample_count < max(buf.min_samples, 1):
        raise InsufficientSamples(
            f"{buf.system.sample_count} offset samples, need {max(buf.min_samples, 1)}")
    sol = solve_least_squares(buf.system)
    filtered = sol.solution if previous is None else lowpass(
        previous.r_hat_filtered, sol.solution, filter_alpha)
    return OffsetEstimate(r_hat_raw=sol.solution, r_hat_filtered=filtered,
                          rank=sol.rank, residual_norm=sol.residual_norm)


def offset_rmse(times, estimates, reference, window=None, axis: int = 0) -> float:
    """RMS error of one axis of an estimate series against a fixed reference."""
    times = np.asarray(times, dtype=float)
    est = np.asarray(estimates, dtype=float).reshape(len(times), -1)
    mask = np.isfinite(est[:, axis])
    if window is not None:
        t0, t1 = window
        mask &= (times >= t0) & (times <= t1)
    if not mask.any():
        raise EmptyWindow("no estimates inside the RMSE window")
    err = est[mask, axis] - np.asarray(reference, dtype=float)[axis]
    return float(np.sqrt(np.mean(err * err)))


class PayloadEstimator:
    """Staged estimator driven by the task phase.

    Mass samples are collected while the mass window is open; the offset
    system is fed during the CoM window and re-solved every
    ``resolve_every`` accepted samples. The filtered offset is advanced
    once per control step toward the most recent raw solution.
    """

    def __init__(self, g_scalar: float, guard_eps: float = GUARD_EPS,
                 force_floor: float = FORCE_FLOOR, min_mass_samples: int = MIN_MASS_SAMPLES,
                 min_offset_samples: int = MIN_OFFSET_SAMPLES,
                 resolve_every: int = RESOLVE_EVERY, filter_alpha: float = OFFSET_FILTER_ALPHA):
        self.g_scalar = g_scalar
        self.guard_eps = guard_eps
        self.force_floor = force_floor
        self.min_mass_samples = min_mass_samples
        self.resolve_every = resolve_every
        self.filter_alpha = filter_alpha
        self.mass_samples: list[float] = []
        self.rejected_mass_samples = 0
        self.mass = MassEstimate()
        self.buffer = OffsetBuffer(min_samples=min_offset_samples)
        self.offset: OffsetEstimate | None = None
        self.r_hat_filtered: np.ndarray | None = None
        self._since_solve = 0

    def add_mass_sample(self, f_z: float, a_z: float) -> None:
        try:
            self.mass_samples.append(estimate_mass_sample(f_z, a_z, self.g_scalar, self.guard_eps))
        except SingularDenominator:
            self.rejected_mass_samples += 1

    def finalize_mass(self) -> MassEstimate:
        self.mass = finalize_mass(self.mass_samples, self.min_mass_samples)
        return self.mass

    def open_offset_window(self, t: float) -> None:
        self.buffer.window_start = t
        self.buffer.window_end = math.inf

    def add_offset_sample(self, t: float, f, tau) -> None:
        if accumulate_offset_sample(self.buffer, f, tau, t, self.force_floor):
            self._since_solve += 1
            if (self._since_solve >= self.resolve_every
                    and self.buffer.system.sample_count >= self.buffer.min_samples):
                self.resolve()

    def resolve(self) -> OffsetEstimate:
        sol = solve_least_squares(self.buffer.system)
        if self.r_hat_filtered is None:
            self.r_hat_filtered = sol.solution
        self.offset = OffsetEstimate(sol.solution, self.r_hat_filtered, sol.rank, sol.residual_norm)
        self._since_solve = 0
        return self.offset

    def filter_step(self) -> None:
        if self.offset is None:
            return
        self.r_hat_filtered = lowpass(self.r_hat_filtered, self.offset.r_hat_raw, self.filter_alpha)
        self.offset = OffsetEstimate(self.offset.r_hat_raw, self.r_hat_filtered,
                                     self.offset.rank, self.offset.residual_norm)

    def close_offset_window(self, t: float) -> OffsetEstimate:
        self.buffer.window_end = t
        if self.buffer.system.sample_count < max(self.buffer.min_samples, 1):
            raise InsufficientSamples(
                f"{self.buffer.system.sample_count} offset samples in window")
        if self._since_solve or self.offset is None:
            self.resolve()
        return self.offset
