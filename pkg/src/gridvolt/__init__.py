"""Voltage regulation for radial feeders hosting data-center loads."""

from .control import (
    ControllerState,
    DroopParams,
    active_droop_update,
    adapt_alpha,
    clamp,
    reactive_droop_update,
)
from .network import (
    Bus,
    Line,
    Network,
    NetworkError,
    SensitivityMatrices,
    build_sensitivity,
    load_network,
    load_network_file,
    root_paths,
)
from .powerflow import (
    ConvergenceError,
    Injection,
    NonlinearSolution,
    SolverOptions,
    slack_power,
    solve_distflow_nonlinear,
    solve_lindistflow,
)
from .simulator import (
    ControlConfig,
    Metrics,
    ScenarioConfig,
    SimResult,
    Simulation,
    SweepCell,
    TraceConfig,
    compute_metrics,
    perturb_loads,
    run_scenario,
    sweep,
)
from .workload import (
    DelayReport,
    DvfsModel,
    PowerTrace,
    Query,
    QueryQueue,
    TraceError,
    dvfs_power,
    freq_for_power,
    parse_trace,
    query_delays,
    scale_trace,
    step_queue,
)

__version__ = "0.1.0"

__all__ = [
    "Bus", "Line", "Network", "NetworkError", "SensitivityMatrices",
    "build_sensitivity", "load_network", "load_network_file", "root_paths",
    "ConvergenceError", "Injection", "NonlinearSolution", "SolverOptions",
    "slack_power", "solve_distflow_nonlinear", "solve_lindistflow",
    "ControllerState", "DroopParams", "active_droop_update", "adapt_alpha",
    "clamp", "reactive_droop_update",
    "DelayReport", "DvfsModel", "PowerTrace", "Query", "QueryQueue",
    "TraceError", "dvfs_power", "freq_for_power", "parse_trace",
    "query_delays", "scale_trace", "step_queue",
    "ControlConfig", "Metrics", "ScenarioConfig", "SimResult", "Simulation",
    "SweepCell", "TraceConfig", "compute_metrics", "perturb_loads",
    "run_scenario", "sweep",
    "__version__",
]
