"""Pick-and-place sequencing, offset-corrected placement and placement metrics.

Correction vectors follow the placement-shift convention: the correction
applied to the TCP release point is ``c = -(r_x, r_y, 0)``, so an object
whose CoM sits 85 mm behind the TCP in x gets ``c = (+85, 0)`` mm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .control import Action, ControllerState, Waypoint, waypoint_reached
from .errors import InsufficientSamples, TaskAborted
from .estimation import MassEstimate, OffsetEstimate, PayloadEstimator
from .numerics import vec3

DEFAULT_HALF_WIDTH = 0.005
DEFAULT_WAYPOINT_TIMEOUT = 30.0

_WINDOW_ORDER = (Action.GRASP, Action.BEGIN_MASS_WINDOW, Action.BEGIN_COM_WINDOW,
                 Action.END_COM_WINDOW, Action.RELEASE)


@dataclass(frozen=True)
class TaskPlan:
    waypoints: tuple
    place_nominal: np.ndarray
    layer_height: float = 0.04
    layer_index: int = 0
    support_x: float | None = None
    support_half_width: float = DEFAULT_HALF_WIDTH

    def __post_init__(self):
        wps = tuple(w if isinstance(w, Waypoint) else Waypoint(**w) for w in self.waypoints)
        object.__setattr__(self, "waypoints", wps)
        object.__setattr__(self, "place_nominal", vec3(self.place_nominal))
        if self.support_x is None:
            object.__setattr__(self, "support_x", float(self.place_nominal[0]))
        if self.layer_index < 0:
            raise ValueError("layer index must be nonnegative")
        if not self.layer_height > 0:
            raise ValueError("layer height must be positive")
        if not self.support_half_width > 0:
            raise ValueError("support half width must be positive")
        actions = [w.action for w in wps]
        for a in _WINDOW_ORDER:
            if actions.count(a) != 1:
                raise ValueError(f"plan needs exactly one '{a.value}' waypoint, "
                                 f"found {actions.count(a)}")
        idx = [actions.index(a) for a in _WINDOW_ORDER]
        if idx != sorted(idx):
            raise ValueError("plan actions must run grasp, begin_mass_window, "
                             "begin_com_window, end_com_window, release in order")

    def with_layer(self, n: int) -> "TaskPlan":
        return replace(self, layer_index=n)


@dataclass(frozen=True)
class PlacementResult:
    ideal_correction: np.ndarray
    estimated_correction: np.ndarray
    ideal_corrected_tcp: np.ndarray
    commanded_tcp: np.ndarray
    actual_tcp: np.ndarray
    object_com_final_x: float
    correction_command_error: float = 0.0
    release_error_vs_ideal: float = 0.0
    execution_error: float = 0.0


@dataclass(frozen=True)
class TaskReport:
    mass_estimate: MassEstimate
    offset_estimate: OffsetEstimate | None
    placement: PlacementResult
    offset_rmse_x: float
    tcp_rmse_x: float
    stable: bool
    margin: float
    true_offset: np.ndarray
    place_nominal: np.ndarray
    layer_index: int = 0
    offset_fallback: bool = False
    correction_applied: bool = True

    @property
    def implemented_com_x(self) -> float:
        """Offset realized by the release position, ``p_nom.x - actual_tcp.x``."""
        return float(self.place_nominal[0] - self.placement.actual_tcp[0])


def corrected_place(p_nominal, r_hat) -> np.ndarray:
    p = np.array(p_nominal, dtype=float)
    p[0] -= r_hat[0]
    p[1] -= r_hat[1]
    return p


def stacking_place(p_nominal, r_hat, n: int, h: float) -> np.ndarray:
    if n < 0:
        raise ValueError("layer index must be nonnegative")
    if not h > 0:
        raise ValueError("layer height must be positive")
    p = corrected_place(p_nominal, r_hat)
    p[2] += n * h
    return p


def evaluate_equilibrium(object_com_x: float, support_x: float, half_width: float):
    """Line-support tipping check. Returns ``(stable, margin)``."""
    if not half_width > 0:
        raise ValueError("half width must be positive")
    margin = half_width - abs(object_com_x - support_x)
    return margin >= 0, margin


def _horizontal_dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def placement_errors(res: PlacementResult) -> PlacementResult:
    """Fill the three horizontal placement error norms."""
    return replace(
        res,
        correction_command_error=_horizontal_dist(res.ideal_correction, res.estimated_correction),
        release_error_vs_ideal=_horizontal_dist(res.actual_tcp, res.ideal_corrected_tcp),
        execution_error=_horizontal_dist(res.actual_tcp, res.commanded_tcp),
    )


def build_placement(plan: TaskPlan, r_true, r_used, actual_tcp) -> PlacementResult:
    n, h = plan.layer_index, plan.layer_height
    r_true = np.asarray(r_true, dtype=float)
    r_used = np.asarray(r_used, dtype=float)
    actual_tcp = np.asarray(actual_tcp, dtype=float)
    res = PlacementResult(
        # 0.0 - x keeps a zero offset from printing as -0.0
        ideal_correction=np.array([0.0 - r_true[0], 0.0 - r_true[1], 0.0]),
        estimated_correction=np.array([0.0 - r_used[0], 0.0 - r_used[1], 0.0]),
        ideal_corrected_tcp=stacking_place(plan.place_nominal, r_true, n, h),
        commanded_tcp=stacking_place(plan.place_nominal, r_used, n, h),
        actual_tcp=actual_tcp,
        object_com_final_x=float(actual_tcp[0] + r_true[0]),
    )
    return placement_errors(res)


@dataclass
class TaskSettings:
    correction: str = "mandatory"          # mandatory | optional | off
    settle_velocity: float = 1e-3
    waypoint_timeout: float = DEFAULT_WAYPOINT_TIMEOUT
    forced_offset: np.ndarray | None = None


@dataclass
class PickPlaceTask:
    """Waypoint sequencer for one pick-and-place cycle.

    An action fires when its waypoint completes: the reach test passes and
    the dwell time has elapsed. Waypoints after the CoM window are shifted
    by the horizontal correction, and the release waypoint is replaced by
    the stacking target.
    """

    plan: TaskPlan
    estimator: PayloadEstimator
    settings: TaskSettings = field(default_factory=TaskSettings)

    def __post_init__(self):
        self.waypoints = list(self.plan.waypoints)
        self.index = 0
        self.activated_at = 0.0
        self.reached_at: float | None = None
        self.phase = "approach"
        self.attached = False
        self.compensating = False
        self.done = False
        self.r_used = np.zeros(3)
        self.offset_fallback = False
        self.release_tcp: np.ndarray | None = None
        self.com_window: tuple[float, float] | None = None
        self.mass_window: tuple[float, float] | None = None

    @property
    def target(self) -> Waypoint:
        return self.waypoints[min(self.index, len(self.waypoints) - 1)]

    def observe(self, t: float, force, moment, a_tcp) -> None:
        if self.phase == "mass_window":
            self.estimator.add_mass_sample(force[2], a_tcp[2])
        elif self.phase == "com_window":
            self.estimator.add_offset_sample(t, force, moment)
            self.estimator.filter_step()

    def update(self, t: float, ctrl: ControllerState, p_tcp) -> np.ndarray:
        """Advance the sequence; returns the reference position for this step."""
        if self.done:
            return self.target.position
        wp = self.target
        if self.reached_at is None:
            if waypoint_reached(ctrl, wp, self.settings.settle_velocity):
                self.reached_at = t
            elif t - self.activated_at > self.settings.waypoint_timeout:
                raise TaskAborted("WaypointTimeout",
                                  f"waypoint {self.index} not reached within "
                                  f"{self.settings.waypoint_timeout} s")
        if self.reached_at is not None and t - self.reached_at >= wp.dwell - 1e-12:
            self._fire(wp.action, t, p_tcp)
            self.index += 1
            self.reached_at = None
            self.activated_at = t
            if self.index >= len(self.waypoints):
                self.done = True
                self.phase = "done"
        return self.target.position

    def _fire(self, action: Action, t: float, p_tcp) -> None:
        if action is Action.GRASP:
            self.attached = True
            self.phase = "grasped"
        elif action is Action.BEGIN_MASS_WINDOW:
            self.phase = "mass_window"
            self.mass_window = (t, math.inf)
        elif action is Action.BEGIN_COM_WINDOW:
            self.mass_window = (self.mass_window[0], t)
            try:
                mass = self.estimator.finalize_mass()
            except InsufficientSamples as exc:
                raise TaskAborted("InsufficientMassSamples", str(exc)) from exc
            if not mass.valid:
                raise TaskAborted("InsufficientMassSamples", f"invalid mass estimate {mass.m_hat}")
            self.compensating = True
            self.phase = "com_window"
            self.com_window = (t, math.inf)
            self.estimator.open_offset_window(t)
        elif action is Action.END_COM_WINDOW:
            self.com_window = (self.com_window[0], t)
            self._end_com_window(t)
            self.phase = "transport"
        elif action is Action.RELEASE:
            self.release_tcp = np.array(p_tcp, dtype=float)
            self.attached = False
            self.phase = "retreat"

    def _end_com_window(self, t: float) -> None:
        try:
            est = self.estimator.close_offset_window(t)
        except InsufficientSamples as exc:
            est = None
            detail = str(exc)
        else:
            detail = f"stacked system rank {est.rank} < 3"
        mode = self.settings.correction
        if self.settings.forced_offset is not None:
            r_used = np.asarray(self.settings.forced_offset, dtype=float)
        elif mode == "off":
            r_used = np.zeros(3)
        elif est is None or not est.identifiable:
            if mode == "mandatory":
                raise TaskAborted("NotIdentifiable", detail)
            self.offset_fallback = True
            r_used = np.zeros(3)
        else:
            r_used = est.r_hat_filtered
        self.r_used = np.array(r_used, dtype=float)
        shift = np.array([-self.r_used[0], -self.r_used[1], 0.0])
        target = stacking_place(self.plan.place_nominal, self.r_used,
                                self.plan.layer_index, self.plan.layer_height)
        for i in range(self.index + 1, len(self.waypoints)):
            wp = self.waypoints[i]
            pos = target if wp.action is Action.RELEASE else wp.position + shift
            self.waypoints[i] = replace(wp, position=pos)


def run_pick_place(plan: TaskPlan, scenario) -> TaskReport:
    """Run one cycle of ``scenario`` with ``plan`` substituted; returns the report."""
    from .sim import run_simulation

    report, _ = run_simulation(replace(scenario, plan=plan))
    return report
