"""Fixed-step loop coupling plant, sensor, estimators, controller and task."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .control import Action, AdmittanceGains, ControllerState, Waypoint, admittance_accel, integrate_controller
from .errors import NumericalDivergence, TaskAborted
from .estimation import PayloadEstimator
from .plant import (GravityModel, KinematicState, PayloadTruth, Wrench, angular_perturbation,
                    step_plant, synthesize_wrench)
from .sensing import Sensor, SensorConfig
from .task import PickPlaceTask, TaskPlan, TaskReport, TaskSettings, build_placement, evaluate_equilibrium

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class AngularPerturbation:
    amplitude: float
    frequency: float

    def __post_init__(self):
        if self.amplitude < 0 or not self.frequency > 0:
            raise ValueError("angular perturbation needs amplitude >= 0 and frequency > 0")


@dataclass(frozen=True)
class EstimatorConfig:
    guard_eps: float = 0.5
    force_floor: float = 1.0
    min_mass_samples: int = 1
    min_offset_samples: int = 1
    resolve_every: int = 50
    filter_alpha: float = 0.05


@dataclass(frozen=True)
class Compensation:
    """How F_exc is formed: from the mass estimate, a given mass, or not at all."""

    mode: str = "estimated"   # estimated | known | off
    mass: float | None = None

    def __post_init__(self):
        if self.mode not in ("estimated", "known", "off"):
            raise ValueError(f"unknown compensation mode {self.mode!r}")


@dataclass(frozen=True)
class Replay:
    """Recorded inputs substituted for simulated ones.

    ``wrench_stream`` (N x 6) replaces the sensor step by step;
    ``estimated_offset`` fixes the offset used for placement;
    ``actual_tcp_xy`` overrides the recorded horizontal release position.
    """

    wrench_stream: np.ndarray | None = None
    estimated_offset: np.ndarray | None = None
    actual_tcp_xy: np.ndarray | None = None


@dataclass(frozen=True)
class Scenario:
    payload: PayloadTruth
    plan: TaskPlan
    gravity: GravityModel = field(default_factory=GravityModel)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    gains: AdmittanceGains = field(default_factory=AdmittanceGains)
    dt: float = 0.002
    tracking_lag: float = 0.0
    angular_perturbation: AngularPerturbation | None = None
    seed: int = 0
    compensation: Compensation = field(default_factory=Compensation)
    correction: str = "mandatory"
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    settle_velocity: float = 1e-3
    waypoint_timeout: float = 30.0
    replay: Replay | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.tracking_lag < 0:
            raise ValueError("tracking lag must be nonnegative")
        if self.correction not in ("mandatory", "optional", "off"):
            raise ValueError(f"unknown correction mode {self.correction!r}")


def _axes(prefix, suffix=""):
    return [f"{prefix}_{a}{suffix}" for a in "xyz"]


LOG_COLUMNS = (
    ["t"]
    + _axes("p_ref") + _axes("p_a") + _axes("v_a") + _axes("p_tcp")
    + _axes("f_meas") + _axes("tau_meas") + _axes("f_true") + _axes("tau_true")
    + _axes("f_exc") + ["m_hat"]
    + _axes("r_hat", "_raw") + _axes("r_hat", "_filtered")
)
CSV_COLUMNS = LOG_COLUMNS[:1] + ["phase"] + LOG_COLUMNS[1:]


@dataclass
class TrajectoryLog:
    """Per-step records. ``data`` holds the numeric columns of ``LOG_COLUMNS``."""

    data: np.ndarray
    phase: list
    dt: float

    def __len__(self):
        return len(self.phase)

    def column(self, name: str) -> np.ndarray:
        return self.data[:, LOG_COLUMNS.index(name)]

    def vector(self, prefix: str, suffix: str = "") -> np.ndarray:
        return np.column_stack([self.column(c) for c in _axes(prefix, suffix)])

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    def phase_mask(self, *phases) -> np.ndarray:
        return np.array([p in phases for p in self.phase], dtype=bool)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row, ph in zip(self.data, self.phase):
                cells = [f"{v:.9g}" for v in row]
                w.writerow([cells[0], ph] + cells[1:])

    @classmethod
    def from_csv(cls, path) -> "TrajectoryLog":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != CSV_COLUMNS:
            raise ValueError(f"{path}: not a trajectory log (bad header)")
        body = rows[1:]
        data = np.array([[float(r[0])] + [float(v) for v in r[2:]] for r in body]).reshape(-1, len(LOG_COLUMNS))
        dt = float(data[1, 0] - data[0, 0]) if len(body) > 1 else float("nan")
        return cls(data=data, phase=[r[1] for r in body], dt=dt)


def _compensation_force(scn: Scenario, task: PickPlaceTask, est: PayloadEstimator, a_tcp, g_vec):
    mode = scn.compensation.mode
    if mode == "off" or not task.attached:
        return np.zeros(3)
    if mode == "known":
        m = scn.payload.mass if scn.compensation.mass is None else scn.compensation.mass
        return m * (a_tcp - g_vec)
    if task.compensating and est.mass.valid:
        return est.mass.m_hat * (a_tcp - g_vec)
    return np.zeros(3)


def _rates(scn: Scenario, t: float):
    if scn.angular_perturbation is None:
        return None, None
    ap = scn.angular_perturbation
    return angular_perturbation(t, ap.amplitude, ap.frequency)


def run_simulation(scenario: Scenario, compute_ideal: bool = True):
    """Run one pick-and-place cycle. Returns ``(TaskReport, TrajectoryLog)``.

    Raises TaskAborted (with the partial log attached) or NumericalDivergence.
    """
    scn = scenario
    dt = scn.dt
    g_vec = scn.gravity.g_vec
    gains = scn.gains
    estimator = PayloadEstimator(
        scn.gravity.g_scalar, guard_eps=scn.estimator.guard_eps,
        force_floor=scn.estimator.force_floor, min_mass_samples=scn.estimator.min_mass_samples,
        min_offset_samples=scn.estimator.min_offset_samples,
        resolve_every=scn.estimator.resolve_every, filter_alpha=scn.estimator.filter_alpha)
    forced = None
    if scn.replay is not None and scn.replay.estimated_offset is not None:
        forced = np.asarray(scn.replay.estimated_offset, dtype=float)
    task = PickPlaceTask(scn.plan, estimator, TaskSettings(
        correction=scn.correction, settle_velocity=scn.settle_velocity,
        waypoint_timeout=scn.waypoint_timeout, forced_offset=forced))
    sensor = Sensor(scn.sensor, seed=scn.seed)
    stream = None if scn.replay is None else scn.replay.wrench_stream

    start = scn.plan.waypoints[0].position
    plant = KinematicState(p_tcp=start.copy())
    ctrl = ControllerState(p_a=start.copy())
    rows: list = []
    phases: list = []
    nan3 = (math.nan,) * 3
    zero_wrench = Wrench.zero()

    k = 0
    try:
        while True:
            t = k * dt
            true = synthesize_wrench(plant, scn.payload, scn.gravity) if task.attached else zero_wrench
            if stream is not None:
                if k >= len(stream):
                    raise TaskAborted("ReplayExhausted", f"wrench stream ended at step {k}")
                meas = Wrench(stream[k, :3], stream[k, 3:])
            else:
                meas = sensor.sample(true)
            task.observe(t, meas.force, meas.moment, plant.a_tcp)
            ctrl = replace(ctrl, F_exc=_compensation_force(scn, task, estimator, plant.a_tcp, g_vec))
            phase = task.phase
            p_ref = task.update(t, ctrl, plant.p_tcp)
            # the controller sees the load on the wrist, i.e. the reaction of the sensor reading
            accel = admittance_accel(ctrl, -meas.force, gains, p_ref)
            off = estimator.offset
            rows.append([t, *p_ref.tolist(), *ctrl.p_a.tolist(), *ctrl.v_a.tolist(),
                         *plant.p_tcp.tolist(), *meas.force.tolist(), *meas.moment.tolist(),
                         *true.force.tolist(), *true.moment.tolist(), *ctrl.F_exc.tolist(),
                         estimator.mass.m_hat,
                         *(nan3 if off is None else off.r_hat_raw.tolist()),
                         *(nan3 if off is None else off.r_hat_filtered.tolist())])
            phases.append(phase)
            if task.done:
                break
            ctrl = integrate_controller(ctrl, accel, dt)
            omega, alpha = _rates(scn, (k + 1) * dt)
            plant = step_plant(plant, ctrl.v_a, dt, scn.tracking_lag, omega, alpha)
            # NaN fails the comparison too
            if not np.abs(np.concatenate((ctrl.p_a, ctrl.v_a, plant.a_tcp))).max() <= DIVERGENCE_LIMIT:
                raise NumericalDivergence(f"state exceeded {DIVERGENCE_LIMIT:g} at t={t + dt:.6g}")
            k += 1
    except TaskAborted as exc:
        exc.log = TrajectoryLog(np.array(rows, dtype=float).reshape(-1, len(LOG_COLUMNS)), phases, dt)
        raise

    log = TrajectoryLog(np.array(rows, dtype=float), phases, dt)
    report = _build_report(scn, task, estimator, log, compute_ideal)
    return report, log


def _build_report(scn: Scenario, task: PickPlaceTask, est: PayloadEstimator,
                  log: TrajectoryLog, compute_ideal: bool) -> TaskReport:
    actual = task.release_tcp.copy()
    if scn.replay is not None and scn.replay.actual_tcp_xy is not None:
        actual[:2] = scn.replay.actual_tcp_xy
    r_true = scn.payload.com_offset
    placement = build_placement(scn.plan, r_true, task.r_used, actual)
    stable, margin = evaluate_equilibrium(placement.object_com_final_x, scn.plan.support_x,
                                          scn.plan.support_half_width)
    t0, t1 = task.com_window
    in_window = (log.t >= t0) & (log.t <= t1)
    r_raw_x = log.column("r_hat_x_raw")
    sel = in_window & np.isfinite(r_raw_x)
    offset_rmse = float(np.sqrt(np.mean((r_raw_x[sel] - r_true[0]) ** 2))) if sel.any() else math.nan
    tcp_rmse = math.nan
    if compute_ideal and in_window.any():
        ideal = ideal_trace_from_log(scn, log)
        err = log.column("p_tcp_x")[in_window] - ideal[in_window, 0]
        tcp_rmse = float(np.sqrt(np.mean(err * err)))
    return TaskReport(
        mass_estimate=est.mass,
        offset_estimate=est.offset,
        placement=placement,
        offset_rmse_x=offset_rmse,
        tcp_rmse_x=tcp_rmse,
        stable=bool(stable),
        margin=float(margin),
        true_offset=r_true.copy(),
        place_nominal=scn.plan.place_nominal.copy(),
        layer_index=scn.plan.layer_index,
        offset_fallback=task.offset_fallback,
        correction_applied=scn.correction != "off" or task.settings.forced_offset is not None,
    )


def ideal_trace_from_log(scn: Scenario, log: TrajectoryLog) -> np.ndarray:
    """Admittance positions with the payload wrench perfectly cancelled.

    Replays the logged reference schedule through the same controller with
    zero net force, so the result lies on the same time grid as ``log``.
    """
    p_ref = log.vector("p_ref")
    ctrl = ControllerState(p_a=log.vector("p_a")[0].copy())
    zero = np.zeros(3)
    out = np.empty_like(p_ref)
    for k in range(len(p_ref)):
        out[k] = ctrl.p_a
        accel = admittance_accel(ctrl, zero, scn.gains, p_ref[k])
        ctrl = integrate_controller(ctrl, accel, scn.dt)
    return out


def ideal_admittance_trace(scenario: Scenario, log: TrajectoryLog | None = None) -> np.ndarray:
    if log is None:
        _, log = run_simulation(scenario, compute_ideal=False)
    return ideal_trace_from_log(scenario, log)


def reference_plan(place_nominal=(-0.30, 0.30, 0.10), pick=(-0.60, 0.30, 0.10),
                   transport=(-0.45, 0.30, 0.22), clearance: float = 0.30,
                   layer_index: int = 0, layer_height: float = 0.04,
                   support_half_width: float = 0.005) -> TaskPlan:
    """Waypoints of the canonical task in the X-Z plane (meters).

    approach above the object, descend and grasp, mass window while holding,
    CoM window on the move to the transport point, then pre-place, place and
    retreat.
    """
    px, py, pz = pick
    qx, qy, qz = place_nominal
    wps = [
        Waypoint((px, py, clearance), 1e-3, 0.0, Action.NONE),
        Waypoint((px, py, pz), 5e-4, 0.2, Action.GRASP),
        Waypoint((px, py, pz), 0.1, 0.0, Action.BEGIN_MASS_WINDOW),
        Waypoint((px, py, pz), 0.1, 1.0, Action.BEGIN_COM_WINDOW),
        Waypoint(transport, 2e-3, 0.0, Action.END_COM_WINDOW),
        Waypoint((qx, qy, clearance), 2e-3, 0.0, Action.NONE),
        Waypoint(place_nominal, 5e-4, 5.0, Action.RELEASE),
        Waypoint((qx, qy, clearance), 2e-3, 0.0, Action.NONE),
    ]
    return TaskPlan(tuple(wps), np.asarray(place_nominal, dtype=float), layer_height=layer_height,
                    layer_index=layer_index, support_x=float(place_nominal[0]),
                    support_half_width=support_half_width)


def box_inertia(mass: float, size) -> np.ndarray:
    a, b, c = size
    return mass / 12.0 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])


def reference_scenario(**overrides) -> Scenario:
    """Canonical fixture: 1 kg block, CoM 85 mm from the TCP along x."""
    base = dict(
        payload=PayloadTruth(1.0, np.array([0.085, 0.0, 0.0]), box_inertia(1.0, (0.30, 0.06, 0.06))),
        plan=reference_plan(),
    )
    base.update(overrides)
    return Scenario(**base)
