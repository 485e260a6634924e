"""Command-line front end: ``run``, ``sweep``, ``stack`` and ``plotdata``.

Exit codes: 0 success, 1 usage or configuration error, 2 task aborted.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import NumericalDivergence, ScenarioError, TaskAborted
from .plant import PayloadTruth
from .scenario_io import load_scenario, object_row, report_dict, summary_text
from .sim import AngularPerturbation, run_simulation

EXIT_OK, EXIT_USAGE, EXIT_ABORT = 0, 1, 2

SWEEP_PARAMETERS = ("sensor.sigma_tau", "sensor.sigma_f", "tracking_lag", "angular_perturbation.amp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed-override", type=int, default=None, help="replace the scenario seed")
    common.add_argument("--dt", type=float, default=None, help="override the control timestep [s]")
    common.add_argument("--quiet", action="store_true", help="suppress the printed summary")

    parser = _Parser(prog="wrenchsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="run one pick-and-place scenario")
    p.add_argument("scenario")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", parents=[common], help="seeded trials over one parameter")
    p.add_argument("scenario")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    p.add_argument("--values", type=float, nargs="*", required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--out", required=True)

    p = sub.add_parser("stack", parents=[common], help="stack several independent payloads")
    p.add_argument("scenario")
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("plotdata", parents=[common], help="extract logged signals in narrow format")
    p.add_argument("trajectory")
    p.add_argument("--signals", nargs="+", required=True)
    p.add_argument("--out", required=True)
    return parser


def _load(args):
    scenario, layers = load_scenario(args.scenario)
    if args.seed_override is not None:
        scenario = replace(scenario, seed=args.seed_override)
    if args.dt is not None:
        if not args.dt > 0:
            raise UsageError("--dt must be positive")
        scenario = replace(scenario, dt=args.dt)
    return scenario, layers


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def _echo(args, text):
    if not args.quiet:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    scenario, _ = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        report, traj = run_simulation(scenario)
    except TaskAborted as exc:
        if exc.log is not None:
            exc.log.to_csv(out / "trajectory.csv")
        _write_json(out / "report.json", {"status": "aborted", "reason": exc.reason, "detail": exc.detail})
        print(f"task aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    traj.to_csv(out / "trajectory.csv")
    _write_json(out / "report.json", report_dict(report))
    text = summary_text(report)
    (out / "summary.txt").write_text(text)
    _echo(args, text)
    return EXIT_OK


def _apply_param(scenario, name: str, value: float):
    if name == "sensor.sigma_tau":
        return replace(scenario, sensor=replace(scenario.sensor, sigma_tau=value))
    if name == "sensor.sigma_f":
        return replace(scenario, sensor=replace(scenario.sensor, sigma_f=value))
    if name == "tracking_lag":
        return replace(scenario, tracking_lag=value)
    if name == "angular_perturbation.amp":
        freq = 1.0 if scenario.angular_perturbation is None else scenario.angular_perturbation.frequency
        return replace(scenario, angular_perturbation=AngularPerturbation(value, freq))
    raise UsageError(f"unknown sweep parameter {name!r}; choose from {', '.join(SWEEP_PARAMETERS)}")


def _trial(scenario):
    """Offset RMSE and |object CoM - support| in meters, or None if aborted."""
    try:
        report, _ = run_simulation(scenario, compute_ideal=False)
    except TaskAborted:
        return None
    return report.offset_rmse_x, abs(report.placement.object_com_final_x - scenario.plan.support_x)


def _workers() -> int:
    raw = os.environ.get("WRENCHSIM_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"WRENCHSIM_THREADS must be an integer, got {raw!r}")
    if n <= 0:
        return os.cpu_count() or 1
    return n


def sweep(scenario, param: str, values, trials: int, workers: int = 1):
    """Run ``trials`` seeded runs per value; seeds are shared across values."""
    if not values:
        raise UsageError("sweep needs at least one value")
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    jobs = [replace(_apply_param(scenario, param, v), seed=scenario.seed + i)
            for v in values for i in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial, jobs))
    else:
        results = [_trial(j) for j in jobs]
    rows = []
    for j, v in enumerate(values):
        chunk = [r for r in results[j * trials:(j + 1) * trials] if r is not None]
        arr = np.array(chunk, dtype=float).reshape(-1, 2) * 1000.0
        rows.append({
            "parameter": param,
            "value": v,
            "trials": trials,
            "aborted": trials - len(chunk),
            "offset_rmse_x_mm_mean": float(arr[:, 0].mean()) if len(arr) else math.nan,
            "offset_rmse_x_mm_std": float(arr[:, 0].std()) if len(arr) else math.nan,
            "placement_error_mm_mean": float(arr[:, 1].mean()) if len(arr) else math.nan,
            "placement_error_mm_std": float(arr[:, 1].std()) if len(arr) else math.nan,
        })
    return rows


def cmd_sweep(args) -> int:
    scenario, _ = _load(args)
    rows = sweep(scenario, args.param, args.values, args.trials, _workers())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in r.items()})
    for r in rows:
        note = f" ({r['aborted']} aborted)" if r["aborted"] else ""
        _echo(args, f"{r['parameter']}={r['value']:g}: offset RMSE x "
                    f"{r['offset_rmse_x_mm_mean']:.6g} +/- {r['offset_rmse_x_mm_std']:.3g} mm, "
                    f"placement error {r['placement_error_mm_mean']:.6g} mm{note}\n")
    return EXIT_OK


STACK_COLUMNS = ["object", "actual_com_x_mm", "estimated_com_x_mm", "implemented_com_x_mm",
                 "stable", "margin_mm", "status"]


def stack_runs(scenario, layer_payloads, layers: int):
    """One cycle per layer. Returns ``(reports, rows, abort)``; stops at the first abort."""
    if layers < 1:
        raise UsageError("--layers must be >= 1")
    if layer_payloads is not None and len(layer_payloads) < layers:
        raise ScenarioError(f"scenario lists {len(layer_payloads)} layer payloads, "
                            f"{layers} requested", field="stack")
    reports, rows = [], []
    for n in range(layers):
        payload = scenario.payload
        if layer_payloads is not None:
            lp = layer_payloads[n]
            payload = PayloadTruth(
                payload.mass if lp.mass is None else lp.mass, lp.com_offset,
                payload.inertia if lp.inertia is None else lp.inertia)
        scn = replace(scenario, payload=payload, plan=scenario.plan.with_layer(n), seed=scenario.seed + n)
        try:
            report, _ = run_simulation(scn, compute_ideal=False)
        except TaskAborted as exc:
            rows.append({"object": n + 1, "actual_com_x_mm": payload.com_offset[0] * 1000.0,
                         "estimated_com_x_mm": None, "implemented_com_x_mm": None,
                         "stable": False, "margin_mm": None, "status": f"aborted:{exc.reason}"})
            return reports, rows, exc
        reports.append(report)
        rows.append({**object_row(report, n + 1), "status": "ok"})
    return reports, rows, None


def cmd_stack(args) -> int:
    scenario, layer_payloads = _load(args)
    reports, rows, abort = stack_runs(scenario, layer_payloads, args.layers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "stack.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=STACK_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else f"{v:.9g}" if isinstance(v, float) else v)
                        for k, v in r.items()})
    _write_json(out / "report.json", {
        "status": "aborted" if abort else "completed",
        "reason": abort.reason if abort else None,
        "stable_layers": sum(1 for r in reports if r.stable),
        "objects": rows,
        "layers": [report_dict(r) for r in reports],
    })
    header = f"{'Object':<8}{'Actual CoM':>12}{'Estimated CoM':>15}{'Implemented CoM':>17}  stable\n"
    text = header
    for r in rows:
        def f(v):
            return "-" if v is None else f"{v:.2f}"
        text += (f"Object {r['object']:<1}{f(r['actual_com_x_mm']):>12}{f(r['estimated_com_x_mm']):>15}"
                 f"{f(r['implemented_com_x_mm']):>17}  {r['stable'] if r['status'] == 'ok' else r['status']}\n")
    _echo(args, text)
    if abort:
        print(f"stacking halted at layer {len(rows)}: {abort}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


def cmd_plotdata(args) -> int:
    path = Path(args.trajectory)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}")
    if len(rows) < 2:
        raise UsageError(f"{path}: trajectory log is empty")
    header = rows[0]
    missing = [s for s in args.signals if s not in header or s in ("t", "phase")]
    if missing:
        raise UsageError(f"unknown signal(s) {', '.join(missing)}; available: "
                         f"{', '.join(c for c in header if c not in ('t', 'phase'))}")
    idx = [header.index(s) for s in args.signals]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "signal", "value"])
        for r in rows[1:]:
            for s, i in zip(args.signals, idx):
                w.writerow([r[0], s, r[i]])
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "stack": cmd_stack, "plotdata": cmd_plotdata}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalDivergence as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
