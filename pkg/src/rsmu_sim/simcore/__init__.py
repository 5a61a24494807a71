"""Scenario config, the tick engine, metrics and log replay."""
from .config import ScenarioConfig, ScenarioError, load_scenario, parse_scenario
from .engine import CoverageError, Simulation, SimulationResult, inject_event, run
from .kinematics import MotionStep, VehicleKinematics, step_vehicle
from .metrics import MetricsError, collect_metrics, read_log
from .replay import OracleResult, replay_views

__all__ = [
    "ScenarioConfig", "ScenarioError", "load_scenario", "parse_scenario", "CoverageError", "Simulation",
    "SimulationResult", "inject_event", "run", "MotionStep", "VehicleKinematics", "step_vehicle",
    "MetricsError", "collect_metrics", "read_log", "OracleResult", "replay_views",
]
