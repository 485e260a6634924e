"""Force-torque sensor model and the EMA filter applied before estimation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import vec3
from .plant import Wrench

__all__ = ["Wrench", "SensorConfig", "Sensor", "sample_sensor", "lowpass"]


@dataclass(frozen=True)
class SensorConfig:
    sigma_f: float = 0.0
    sigma_tau: float = 0.0
    bias_f: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias_tau: np.ndarray = field(default_factory=lambda: np.zeros(3))
    seed: int = 0

    def __post_init__(self):
        if self.sigma_f < 0 or self.sigma_tau < 0:
            raise ValueError("sensor noise std must be nonnegative")
        object.__setattr__(self, "bias_f", vec3(self.bias_f))
        object.__setattr__(self, "bias_tau", vec3(self.bias_tau))


def sample_sensor(true_wrench: Wrench, cfg: SensorConfig, rng: np.random.Generator) -> Wrench:
    """One measurement: truth + bias + per-axis Gaussian noise.

    Six standard normals are drawn on every call whatever the noise levels,
    so runs that differ only in sigma see the same underlying draws.
    """
    z = rng.standard_normal(6)
    force = true_wrench.force + cfg.bias_f + cfg.sigma_f * z[:3]
    moment = true_wrench.moment + cfg.bias_tau + cfg.sigma_tau * z[3:]
    return Wrench(force, moment)


class Sensor:
    """Stateful sensor owning its RNG stream."""

    def __init__(self, cfg: SensorConfig, seed: int | None = None):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed if seed is None else seed)

    def sample(self, true_wrench: Wrench) -> Wrench:
        return sample_sensor(true_wrench, self.cfg, self.rng)


def lowpass(previous, current_raw, alpha: float):
    """Exponential moving average step: ``alpha*current + (1-alpha)*previous``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * np.asarray(current_raw) + (1.0 - alpha) * np.asarray(previous)
