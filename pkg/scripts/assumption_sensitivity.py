"""How far the offset estimate drifts when its modelling assumptions are broken.

Two knobs: angular acceleration of the payload (the estimator ignores
rotational dynamics) and a first-order lag between commanded and actual TCP
velocity (which turns into placement execution error).

    python3 scripts/assumption_sensitivity.py
"""
import argparse

import numpy as np

from wrenchsim.sim import AngularPerturbation, reference_scenario, run_simulation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--amplitudes", type=float, nargs="+", default=[0.0, 0.25, 0.5, 1.0, 2.0, 4.0])
    ap.add_argument("--frequency", type=float, default=1.0)
    ap.add_argument("--lags", type=float, nargs="+", default=[0.0, 0.01, 0.05, 0.1])
    args = ap.parse_args()

    print("angular amplitude [rad/s^2]   |r_hat - r| [mm]   object CoM error [mm]")
    for amp in args.amplitudes:
        scn = reference_scenario(angular_perturbation=AngularPerturbation(amp, args.frequency))
        rep, _ = run_simulation(scn, compute_ideal=False)
        err = np.linalg.norm(rep.offset_estimate.r_hat_raw - scn.payload.com_offset) * 1e3
        com = (rep.placement.object_com_final_x - scn.plan.support_x) * 1e3
        print(f"{amp:>27g}   {err:>16.4f}   {com:>21.4f}")

    print()
    print("tracking lag [s]   execution error [mm]   TCP x RMSE [mm]")
    for lag in args.lags:
        rep, _ = run_simulation(reference_scenario(tracking_lag=lag))
        print(f"{lag:>16g}   {rep.placement.execution_error * 1e3:>20.4f}   {rep.tcp_rmse_x * 1e3:>15.4f}")


if __name__ == "__main__":
    main()
