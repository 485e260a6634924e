"""Translational admittance controller with a feedforward excitation force.

The controller works on the load the payload applies to the wrist (the
reaction of the sensor reading), so an uncompensated payload sags
downward and cancelling it takes ``F_exc = m (a_tcp - g_vec)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonpositiveTimestep
from .numerics import vec3
from .plant import Wrench

DEFAULT_SETTLE_VELOCITY = 1e-3


@dataclass(frozen=True)
class AdmittanceGains:
    """Diagonal virtual inertia, damping and stiffness (per-axis values)."""

    M: np.ndarray = field(default_factory=lambda: np.full(3, 10.0))
    B: np.ndarray = field(default_factory=lambda: np.full(3, 80.0))
    K: np.ndarray = field(default_factory=lambda: np.full(3, 200.0))

    def __post_init__(self):
        for name in ("M", "B", "K"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim == 2:
                if np.count_nonzero(v - np.diag(np.diag(v))):
                    raise ValueError(f"gain {name} must be diagonal")
                v = np.diag(v)
            v = vec3(v)
            if np.any(v <= 0):
                raise ValueError(f"gain {name} must have positive diagonal, got {v}")
            object.__setattr__(self, name, v)

    @classmethod
    def uniform(cls, m: float, b: float, k: float) -> "AdmittanceGains":
        return cls(np.full(3, m), np.full(3, b), np.full(3, k))

    def matrix(self, name: str) -> np.ndarray:
        return np.diag(getattr(self, name))


@dataclass(frozen=True)
class ControllerState:
    p_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    F_exc: np.ndarray = field(default_factory=lambda: np.zeros(3))


class Action(str, enum.Enum):
    NONE = "none"
    GRASP = "grasp"
    RELEASE = "release"
    BEGIN_MASS_WINDOW = "begin_mass_window"
    BEGIN_COM_WINDOW = "begin_com_window"
    END_COM_WINDOW = "end_com_window"


@dataclass(frozen=True)
class Waypoint:
    position: np.ndarray
    tolerance: float = 1e-3
    dwell: float = 0.0
    action: Action = Action.NONE

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        object.__setattr__(self, "action", Action(self.action))
        if not self.tolerance > 0:
            raise ValueError("waypoint tolerance must be positive")
        if self.dwell < 0:
            raise ValueError("waypoint dwell must be nonnegative")


def admittance_accel(state: ControllerState, measured: Wrench | np.ndarray,
                     gains: AdmittanceGains, p_ref) -> np.ndarray:
    """``M^-1 (F - B v - K (p - p_ref) + F_exc)`` for diagonal gains."""
    force = measured.force if isinstance(measured, Wrench) else measured
    net = force - gains.B * state.v_a - gains.K * (state.p_a - p_ref) + state.F_exc
    return net / gains.M


def integrate_controller(state: ControllerState, accel, dt: float) -> ControllerState:
    """Semi-implicit Euler: velocity first, then position with the new velocity."""
    if not dt > 0:
        raise NonpositiveTimestep(f"dt must be positive, got {dt}")
    v = state.v_a + accel * dt
    p = state.p_a + v * dt
    return ControllerState(p_a=p, v_a=v, a_a=np.asarray(accel, dtype=float), F_exc=state.F_exc)


def steady_state_sag(gains: AdmittanceGains, uncompensated_force) -> np.ndarray:
    return np.asarray(uncompensated_force, dtype=float) / gains.K


def waypoint_reached(state: ControllerState, wp: Waypoint,
                     settle_velocity: float = DEFAULT_SETTLE_VELOCITY) -> bool:
    return (math.dist(state.p_a, wp.position) <= wp.tolerance
            and math.hypot(*state.v_a) <= settle_velocity)
