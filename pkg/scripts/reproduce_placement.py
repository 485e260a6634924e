"""Print the recorded-trial placement geometry and the three-layer stacking table.

    python3 scripts/reproduce_placement.py
"""
from pathlib import Path

from wrenchsim.cli import stack_runs
from wrenchsim.scenario_io import load_scenario, summary_text
from wrenchsim.sim import run_simulation

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def main():
    scn, _ = load_scenario(SCENARIOS / "replay.yaml")
    report, _ = run_simulation(scn)
    print("placement geometry (replayed estimate and release position)")
    print(summary_text(report))

    scn, layers = load_scenario(SCENARIOS / "stack.yaml")
    _, rows, abort = stack_runs(scn, layers, len(layers))
    print(f"{'object':<8}{'actual':>10}{'estimated':>12}{'implemented':>13}{'margin':>9}  stable")
    for r in rows:
        print(f"{r['object']:<8}{r['actual_com_x_mm']:>10.2f}{r['estimated_com_x_mm']:>12.2f}"
              f"{r['implemented_com_x_mm']:>13.2f}{r['margin_mm']:>9.2f}  {r['stable']}")
    if abort is not None:
        print(f"stacking halted: {abort}")


if __name__ == "__main__":
    main()
