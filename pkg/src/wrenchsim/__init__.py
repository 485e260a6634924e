"""Translational admittance control with online payload mass and CoM-offset estimation."""
from .sim import Scenario, reference_scenario, run_simulation

__version__ = "0.1.0"
__all__ = ["Scenario", "reference_scenario", "run_simulation"]
