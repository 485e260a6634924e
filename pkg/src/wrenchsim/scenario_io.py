"""Scenario documents (YAML) and report serialization.

Parsing is strict: unknown keys and out-of-range values raise
``ScenarioError`` naming the field path and, where known, the source line.
The schema is documented in ``scenarios/README.md``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .control import Action, AdmittanceGains, Waypoint
from .errors import ScenarioError
from .plant import GravityModel, PayloadTruth
from .sensing import SensorConfig
from .sim import AngularPerturbation, Compensation, EstimatorConfig, Replay, Scenario
from .task import TaskPlan, TaskReport


@dataclass(frozen=True)
class LayerPayload:
    com_offset: np.ndarray
    mass: float | None = None
    inertia: np.ndarray | None = None


def _line_map(node, path=(), out=None):
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _line_map(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out)
    return out


class _Doc:
    """Typed accessors over the parsed document with path-aware errors."""

    def __init__(self, data, lines):
        self.data = data
        self.lines = lines

    def fail(self, path, msg):
        dotted = ".".join(str(p) for p in path) or "<root>"
        line = None
        for i in range(len(path), -1, -1):
            if path[:i] in self.lines:
                line = self.lines[path[:i]]
                break
        raise ScenarioError(msg, field=dotted, line=line)

    def get(self, path, default=None, required=False):
        node = self.data
        for p in path:
            if isinstance(node, dict) and p in node:
                node = node[p]
            elif isinstance(node, list) and isinstance(p, int) and p < len(node):
                node = node[p]
            else:
                if required:
                    self.fail(path, "missing required field")
                return default
        return node

    def mapping(self, path, allowed, required=False):
        m = self.get(path, required=required)
        if m is None:
            return None
        if not isinstance(m, dict):
            self.fail(path, "expected a mapping")
        for key in m:
            if key not in allowed:
                self.fail(path + (key,), f"unknown key (allowed: {', '.join(sorted(allowed))})")
        return m

    def number(self, path, default=None, required=False, lo=None, lo_open=False, integer=False):
        v = self.get(path, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, f"expected a number, got {v!r}")
        if integer and not float(v).is_integer():
            self.fail(path, f"expected an integer, got {v!r}")
        if not math.isfinite(v):
            self.fail(path, "must be finite")
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.fail(path, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
        return int(v) if integer else float(v)

    def vector(self, path, n=3, default=None, required=False):
        v = self.get(path, default, required)
        if v is None:
            return None
        if not isinstance(v, list) or len(v) != n:
            self.fail(path, f"expected a list of {n} numbers")
        return np.array([self.number(path + (i,)) for i in range(n)])

    def matrix3(self, path, default=None):
        v = self.get(path, default)
        if v is None:
            return None
        if not isinstance(v, list) or len(v) != 3:
            self.fail(path, "expected a 3x3 nested list")
        return np.array([self.vector(path + (i,)) for i in range(3)])

    def choice(self, path, options, default):
        v = self.get(path, default)
        if v not in options:
            self.fail(path, f"expected one of {', '.join(options)}, got {v!r}")
        return v


_TOP = {"payload", "gravity_mps2", "sensor", "gains", "plan", "dt_s", "tracking_lag_s",
        "angular_perturbation", "seed", "compensation", "correction", "estimator",
        "controller", "replay", "stack"}


def parse_scenario(text: str, base_dir: Path | None = None):
    """Parse a scenario document. Returns ``(Scenario, layer_payloads)``."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                            line=None if mark is None else mark.line + 1) from exc
    if node is None or not isinstance(data, dict):
        raise ScenarioError("scenario document must be a mapping")
    d = _Doc(data, _line_map(node))
    d.mapping((), _TOP)

    p = ("payload",)
    d.mapping(p, {"mass_kg", "com_offset_m", "inertia_kgm2"}, required=True)
    mass = d.number(p + ("mass_kg",), required=True, lo=0, lo_open=True)
    payload = _payload(d, p, mass)

    gravity = GravityModel(d.number(("gravity_mps2",), -9.81))

    s = ("sensor",)
    d.mapping(s, {"sigma_f_N", "sigma_tau_Nm", "bias_f_N", "bias_tau_Nm"})
    sensor = SensorConfig(
        sigma_f=d.number(s + ("sigma_f_N",), 0.0, lo=0),
        sigma_tau=d.number(s + ("sigma_tau_Nm",), 0.0, lo=0),
        bias_f=d.vector(s + ("bias_f_N",), default=[0, 0, 0]),
        bias_tau=d.vector(s + ("bias_tau_Nm",), default=[0, 0, 0]),
    )

    gp = ("gains",)
    d.mapping(gp, {"M", "B", "K"})
    gains = {}
    for name, default in (("M", 10.0), ("B", 80.0), ("K", 200.0)):
        v = d.vector(gp + (name,), default=[default] * 3)
        if np.any(v <= 0):
            d.fail(gp + (name,), "diagonal gains must be positive")
        gains[name] = v
    gains = AdmittanceGains(**gains)

    plan = _plan(d)

    ap = ("angular_perturbation",)
    pert = None
    if d.mapping(ap, {"amp", "freq"}) is not None:
        pert = AngularPerturbation(d.number(ap + ("amp",), required=True, lo=0),
                                   d.number(ap + ("freq",), required=True, lo=0, lo_open=True))

    cp = ("compensation",)
    d.mapping(cp, {"mode", "mass_kg"})
    comp = Compensation(d.choice(cp + ("mode",), ("estimated", "known", "off"), "estimated"),
                        d.number(cp + ("mass_kg",), lo=0))

    ep = ("estimator",)
    d.mapping(ep, {"guard_eps_mps2", "force_floor_N", "min_mass_samples", "min_offset_samples",
                   "resolve_every", "filter_alpha"})
    estimator = EstimatorConfig(
        guard_eps=d.number(ep + ("guard_eps_mps2",), 0.5, lo=0),
        force_floor=d.number(ep + ("force_floor_N",), 1.0, lo=0),
        min_mass_samples=d.number(ep + ("min_mass_samples",), 1, lo=1, integer=True),
        min_offset_samples=d.number(ep + ("min_offset_samples",), 1, lo=1, integer=True),
        resolve_every=d.number(ep + ("resolve_every",), 50, lo=1, integer=True),
        filter_alpha=d.number(ep + ("filter_alpha",), 0.05, lo=0),
    )
    if estimator.filter_alpha > 1:
        d.fail(ep + ("filter_alpha",), "must lie in [0, 1]")

    ctl = ("controller",)
    d.mapping(ctl, {"settle_velocity_mps", "waypoint_timeout_s"})

    scenario = Scenario(
        payload=payload, plan=plan, gravity=gravity, sensor=sensor, gains=gains,
        dt=d.number(("dt_s",), 0.002, lo=0, lo_open=True),
        tracking_lag=d.number(("tracking_lag_s",), 0.0, lo=0),
        angular_perturbation=pert,
        seed=d.number(("seed",), 0, lo=0, integer=True),
        compensation=comp,
        correction=d.choice(("correction",), ("mandatory", "optional", "off"), "mandatory"),
        estimator=estimator,
        settle_velocity=d.number(ctl + ("settle_velocity_mps",), 1e-3, lo=0, lo_open=True),
        waypoint_timeout=d.number(ctl + ("waypoint_timeout_s",), 30.0, lo=0, lo_open=True),
        replay=_replay(d, base_dir),
    )
    return scenario, _stack(d, mass)


def _payload(d: _Doc, p, mass):
    offset = d.vector(p + ("com_offset_m",), required=True)
    inertia = d.matrix3(p + ("inertia_kgm2",), default=[[0, 0, 0]] * 3)
    try:
        return PayloadTruth(mass, offset, inertia)
    except ValueError as exc:
        d.fail(p + ("inertia_kgm2",), str(exc))


def _plan(d: _Doc) -> TaskPlan:
    p = ("plan",)
    d.mapping(p, {"waypoints", "place_nominal_m", "layer_height_m", "layers", "support_x_m",
                  "support_half_width_m"}, required=True)
    raw = d.get(p + ("waypoints",), required=True)
    if not isinstance(raw, list) or not raw:
        d.fail(p + ("waypoints",), "expected a nonempty list")
    wps = []
    actions = [a.value for a in Action]
    for i in range(len(raw)):
        w = p + ("waypoints", i)
        d.mapping(w, {"position_m", "tolerance_m", "dwell_s", "action"}, required=True)
        wps.append(Waypoint(
            position=d.vector(w + ("position_m",), required=True),
            tolerance=d.number(w + ("tolerance_m",), 1e-3, lo=0, lo_open=True),
            dwell=d.number(w + ("dwell_s",), 0.0, lo=0),
            action=Action(d.choice(w + ("action",), actions, "none")),
        ))
    place = d.vector(p + ("place_nominal_m",), required=True)
    try:
        return TaskPlan(
            waypoints=tuple(wps), place_nominal=place,
            layer_height=d.number(p + ("layer_height_m",), 0.04, lo=0, lo_open=True),
            layer_index=d.number(p + ("layers",), 0, lo=0, integer=True),
            support_x=d.number(p + ("support_x_m",), float(place[0])),
            support_half_width=d.number(p + ("support_half_width_m",), 0.005, lo=0, lo_open=True),
        )
    except ValueError as exc:
        d.fail(p + ("waypoints",), str(exc))


def _replay(d: _Doc, base_dir):
    r = ("replay",)
    if d.mapping(r, {"wrench_csv", "estimated_correction_mm", "actual_tcp_mm"}) is None:
        return None
    stream = None
    path = d.get(r + ("wrench_csv",))
    if path is not None:
        full = Path(path) if base_dir is None else Path(base_dir) / path
        try:
            stream = load_wrench_stream(full)
        except (OSError, ValueError) as exc:
            d.fail(r + ("wrench_csv",), str(exc))
    corr = d.vector(r + ("estimated_correction_mm",), n=2)
    actual = d.vector(r + ("actual_tcp_mm",), n=2)
    return Replay(
        wrench_stream=stream,
        estimated_offset=None if corr is None else np.array([-corr[0], -corr[1], 0.0]) / 1000.0,
        actual_tcp_xy=None if actual is None else actual / 1000.0,
    )


def _stack(d: _Doc, default_mass):
    raw = d.get(("stack",))
    if raw is None:
        return None
    if not isinstance(raw, list) or not raw:
        d.fail(("stack",), "expected a nonempty list of layer payloads")
    layers = []
    for i in range(len(raw)):
        s = ("stack", i)
        d.mapping(s, {"com_offset_m", "mass_kg", "inertia_kgm2"}, required=True)
        layers.append(LayerPayload(
            com_offset=d.vector(s + ("com_offset_m",), required=True),
            mass=d.number(s + ("mass_kg",), lo=0, lo_open=True),
            inertia=d.matrix3(s + ("inertia_kgm2",)),
        ))
    return layers


def load_scenario(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}", field=str(path)) from exc
    return parse_scenario(text, base_dir=path.parent)


def load_wrench_stream(path) -> np.ndarray:
    """Read an N x 6 wrench stream.

    Accepts either ``fx,fy,fz,tx,ty,tz`` columns or a trajectory log, from
    which the measured force and moment columns are taken.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: wrench stream is empty")
    header = rows[0]
    for names in (["fx", "fy", "fz", "tx", "ty", "tz"],
                  ["f_meas_x", "f_meas_y", "f_meas_z", "tau_meas_x", "tau_meas_y", "tau_meas_z"]):
        if all(n in header for n in names):
            idx = [header.index(n) for n in names]
            return np.array([[float(r[i]) for i in idx] for r in rows[1:]])
    raise ValueError(f"{path}: expected columns fx..tz or f_meas_*/tau_meas_*")


def _mm(v):
    if v is None:
        return None
    if np.ndim(v) == 0:
        v = float(v)
        return None if not math.isfinite(v) else v * 1000.0
    return [_mm(x) for x in np.asarray(v, dtype=float)]


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def object_row(report: TaskReport, index: int = 1) -> dict:
    """One row of the per-object CoM table (x values in mm)."""
    return {
        "object": index,
        "actual_com_x_mm": _mm(report.true_offset[0]),
        "estimated_com_x_mm": _mm(-report.placement.estimated_correction[0]),
        "implemented_com_x_mm": _mm(report.implemented_com_x),
        "stable": report.stable,
        "margin_mm": _mm(report.margin),
    }


def report_dict(report: TaskReport) -> dict:
    """Serialize a report; every length is in mm (internal meters x 1000)."""
    pl = report.placement
    off = report.offset_estimate
    return {
        "status": "completed",
        "layer_index": report.layer_index,
        "mass_estimate": {
            "m_hat_kg": _num(report.mass_estimate.m_hat),
            "sample_count": report.mass_estimate.sample_count,
            "valid": report.mass_estimate.valid,
        },
        "offset_estimate": None if off is None else {
            "r_hat_raw_mm": _mm(off.r_hat_raw),
            "r_hat_filtered_mm": _mm(off.r_hat_filtered),
            "rank": off.rank,
            "identifiable": off.identifiable,
            "residual_norm_Nm": _num(off.residual_norm),
        },
        "true_offset_mm": _mm(report.true_offset),
        "offset_fallback": report.offset_fallback,
        "placement": {
            "target_mm": _mm(report.place_nominal),
            "ideal_correction_mm": _mm(pl.ideal_correction),
            "ideal_corrected_tcp_mm": _mm(pl.ideal_corrected_tcp),
            "estimated_correction_mm": _mm(pl.estimated_correction),
            "commanded_tcp_mm": _mm(pl.commanded_tcp),
            "actual_tcp_mm": _mm(pl.actual_tcp),
            "object_com_final_x_mm": _mm(pl.object_com_final_x),
        },
        "metrics": {
            "offset_rmse_x_mm": _mm(report.offset_rmse_x),
            "tcp_rmse_x_mm": _mm(report.tcp_rmse_x),
            "correction_command_error_mm": _mm(pl.correction_command_error),
            "release_error_vs_ideal_mm": _mm(pl.release_error_vs_ideal),
            "execution_error_mm": _mm(pl.execution_error),
            "stable_layers": int(report.stable),
            "objects": [object_row(report)],
        },
    }


def summary_text(report: TaskReport) -> str:
    d = report_dict(report)
    pl, m = d["placement"], d["metrics"]

    def xy(v):
        return f"({v[0]:.2f}, {v[1]:.2f})"

    lines = [
        f"mass estimate              {d['mass_estimate']['m_hat_kg']:.4f} kg "
        f"({d['mass_estimate']['sample_count']} samples)",
    ]
    if d["offset_estimate"] is not None:
        oe = d["offset_estimate"]
        lines.append(f"offset estimate (filtered) {xy(oe['r_hat_filtered_mm'])} mm, rank {oe['rank']}")
    lines += [
        f"target equilibrium point   {xy(pl['target_mm'])} mm",
        f"ideal correction vector    {xy(pl['ideal_correction_mm'])} mm",
        f"ideal corrected TCP        {xy(pl['ideal_corrected_tcp_mm'])} mm",
        f"estimated correction       {xy(pl['estimated_correction_mm'])} mm",
        f"commanded TCP release      {xy(pl['commanded_tcp_mm'])} mm",
        f"correction-command error   {m['correction_command_error_mm']:.2f} mm",
        f"actual TCP release         {xy(pl['actual_tcp_mm'])} mm",
        f"release error vs ideal     {m['release_error_vs_ideal_mm']:.2f} mm",
        f"execution error            {m['execution_error_mm']:.2f} mm",
        f"object CoM final x         {pl['object_com_final_x_mm']:.3f} mm "
        f"({'stable' if report.stable else 'UNSTABLE'}, margin {report.margin * 1000:.3f} mm)",
    ]
    if m["offset_rmse_x_mm"] is not None:
        lines.append(f"x-offset RMSE (CoM window) {m['offset_rmse_x_mm']:.4f} mm")
    if m["tcp_rmse_x_mm"] is not None:
        lines.append(f"TCP x RMSE vs ideal        {m['tcp_rmse_x_mm']:.4f} mm")
    return "\n".join(lines) + "\n"
