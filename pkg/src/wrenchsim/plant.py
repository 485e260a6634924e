"""Simulated physical truth: TCP kinematics and the payload wrench at the wrist.

Convention: the wrist sensor reports ``f = m (a_C - g_vec)`` with
``g_vec = (0, 0, -9.81)``, so a static 1 kg payload reads ``f_z = +9.81``.
Sensor axes coincide with base axes for the whole task.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonpositiveTimestep
from .numerics import cross, vec3

STANDARD_GRAVITY = -9.81

_ZERO = np.zeros(3)


@dataclass(frozen=True)
class Wrench:
    force: np.ndarray
    moment: np.ndarray

    @classmethod
    def zero(cls) -> "Wrench":
        return cls(np.zeros(3), np.zeros(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])


@dataclass(frozen=True)
class PayloadTruth:
    mass: float
    com_offset: np.ndarray
    inertia: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ValueError(f"payload mass must be positive, got {self.mass}")
        object.__setattr__(self, "com_offset", vec3(self.com_offset))
        inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        if not np.allclose(inertia, inertia.T, atol=1e-12):
            raise ValueError("inertia tensor must be symmetric")
        if np.linalg.eigvalsh(inertia).min() < -1e-12:
            raise ValueError("inertia tensor must be positive semidefinite")
        object.__setattr__(self, "inertia", inertia)


@dataclass(frozen=True)
class GravityModel:
    g_scalar: float = STANDARD_GRAVITY

    @property
    def g_vec(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.g_scalar])


@dataclass(frozen=True)
class KinematicState:
    p_tcp: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_tcp: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a_tcp: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(3))


def com_acceleration(state: KinematicState, r) -> np.ndarray:
    """CoM acceleration of a rigidly attached body offset by ``r`` from the TCP."""
    return state.a_tcp + cross(state.alpha, r) + cross(state.omega, cross(state.omega, r))


def synthesize_wrench(state: KinematicState, payload: PayloadTruth,
                      gravity: GravityModel) -> Wrench:
    """Exact payload wrench at the wrist, rotational terms included."""
    r = payload.com_offset
    if not (state.omega.any() or state.alpha.any()):
        f = payload.mass * (state.a_tcp - gravity.g_vec)
        return Wrench(f, cross(r, f))
    a_c = com_acceleration(state, r)
    f = payload.mass * (a_c - gravity.g_vec)
    I = payload.inertia
    tau = cross(r, f) + I @ state.alpha + cross(state.omega, I @ state.omega)
    return Wrench(f, tau)


def step_plant(state: KinematicState, commanded_velocity, dt: float,
               tracking_lag: float = 0.0, omega=None, alpha=None) -> KinematicState:
    """Advance the TCP one step under a Cartesian velocity command.

    With ``tracking_lag == 0`` the velocity command is met exactly in one
    step; otherwise the velocity follows a first-order lag with that time
    constant (exact discretization). Acceleration is the finite difference of
    velocity over the step; position uses the new velocity.
    """
    if not dt > 0:
        raise NonpositiveTimestep(f"dt must be positive, got {dt}")
    if tracking_lag > 0:
        keep = math.exp(-dt / tracking_lag)
        v_new = commanded_velocity + (state.v_tcp - commanded_velocity) * keep
    else:
        v_new = np.array(commanded_velocity, dtype=float)
    a_new = (v_new - state.v_tcp) / dt
    return KinematicState(
        p_tcp=state.p_tcp + v_new * dt,
        v_tcp=v_new,
        a_tcp=a_new,
        omega=_ZERO if omega is None else omega,
        alpha=_ZERO if alpha is None else alpha,
    )


def angular_perturbation(t: float, amplitude: float, frequency: float):
    """Sinusoidal angular acceleration about the (1,1,1) diagonal axis.

    Returns ``(omega, alpha)`` with omega the exact integral of alpha from
    rest at ``t = 0``.
    """
    axis = np.full(3, 1.0 / math.sqrt(3.0))
    w = 2.0 * math.pi * frequency
    alpha = amplitude * math.sin(w * t) * axis
    omega = amplitude / w * (1.0 - math.cos(w * t)) * axis
    return omega, alpha
