from .canned import CANNED
from .metrics import collect_metrics, emit_metrics
from .runner import RunResult, Sim, build, run, run_all
from .scenario import Scenario, ScenarioError, load_scenario
from .scheduler import Scheduler, Trace

__all__ = ["CANNED", "collect_metrics", "emit_metrics", "RunResult", "Sim", "build", "run", "run_all",
           "Scenario", "ScenarioError", "load_scenario", "Scheduler", "Trace"]
