"""Scenario configuration files.

Flat key/value text with sections mirroring the scenario fields, so sweep
grids stay declarative::

    [scenario]
    network = bundled:feeder123.net
    horizon = 600
    solver = linear
    mode = full

    [placement]
    n_dc = 3

    [control]
    kp = 10

Unknown keys are rejected. ``network`` takes a path (relative to the
config file) or ``bundled:<name>`` for a packaged network.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .data import bundled_path
from .simulator import ControlConfig, ScenarioConfig, TraceConfig
from .workload import DvfsModel


class ConfigError(ValueError):
    """Bad scenario configuration file."""


_SCHEMA = {
    "scenario": {"network", "horizon", "dt", "solver", "mode", "sigma", "load_scale"},
    "placement": {"n_dc", "dc_buses", "seed"},
    "control": {"kp", "kq", "alpha0", "gamma", "alpha_max",
                "literal_one_step_backlog", "q_inverter", "q_dc", "s_rating"},
    "traces": {"source", "paths", "peak_kw", "burst_len_s", "gap_s", "ramp_frac",
               "seed", "arrival_window_s", "step_arrival_s", "step_duration_s",
               "step_level"},
    "dvfs": {"f_min", "f_max", "p_idle", "rated"},
    "solver": {"tol", "max_iter"},
}


def _check_schema(cp: configparser.ConfigParser) -> None:
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")


def _get(cp, section, key, conv, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    if raw == "":
        return default
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def _bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(t) for t in raw.replace(",", " ").split())


def resolve_network(spec: str, base_dir: Path) -> Path:
    if spec.startswith("bundled:"):
        return bundled_path(spec.split(":", 1)[1])
    p = Path(spec)
    return p if p.is_absolute() else base_dir / p


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    _check_schema(cp)

    if not cp.has_option("scenario", "network"):
        raise ConfigError("missing required key: [scenario] network")
    network = resolve_network(cp.get("scenario", "network").strip(), path.parent)
    if not Path(network).exists():
        raise ConfigError(f"network file not found: {network}")

    raw_paths = _get(cp, "traces", "paths", str, "")
    trace_paths = tuple(
        str(resolve_network(tok.strip(), path.parent))
        for tok in raw_paths.split(",")
        if tok.strip()
    )
    traces = TraceConfig(
        source=_get(cp, "traces", "source", str, "synthetic"),
        paths=trace_paths,
        peak_kw=_get(cp, "traces", "peak_kw", float, 280.0),
        burst_len_s=_get(cp, "traces", "burst_len_s", float, 40.0),
        gap_s=_get(cp, "traces", "gap_s", float, 10.0),
        ramp_frac=_get(cp, "traces", "ramp_frac", float, 0.15),
        seed=_get(cp, "traces", "seed", int, None),
        arrival_window_s=_get(cp, "traces", "arrival_window_s", float, None),
        step_arrival_s=_get(cp, "traces", "step_arrival_s", float, 0.0),
        step_duration_s=_get(cp, "traces", "step_duration_s", float, 20.0),
        step_level=_get(cp, "traces", "step_level", float, 0.8),
    )
    ctrl = ControlConfig(
        kp=_get(cp, "control", "kp", float, 10.0),
        kq=_get(cp, "control", "kq", float, 5.0),
        alpha0=_get(cp, "control", "alpha0", float, 0.05),
        gamma=_get(cp, "control", "gamma", float, 0.5),
        alpha_max=_get(cp, "control", "alpha_max", float, 1.0),
        literal_one_step_backlog=_get(
            cp, "control", "literal_one_step_backlog", _bool, False
        ),
        q_inverter=_get(cp, "control", "q_inverter", float, 0.05),
        q_dc=_get(cp, "control", "q_dc", float, 0.1),
        s_rating=_get(cp, "control", "s_rating", float, None),
    )
    dvfs = DvfsModel.with_rated_power(
        rated=_get(cp, "dvfs", "rated", float, 1.0),
        f_min=_get(cp, "dvfs", "f_min", float, 210.0),
        f_max=_get(cp, "dvfs", "f_max", float, 1410.0),
        p_idle=_get(cp, "dvfs", "p_idle", float, 0.1),
    )
    try:
        return ScenarioConfig(
            network=network,
            horizon=_get(cp, "scenario", "horizon", int, 120),
            dt=_get(cp, "scenario", "dt", float, 1.0),
            solver=_get(cp, "scenario", "solver", str, "linear"),
            mode=_get(cp, "scenario", "mode", str, "full"),
            sigma=_get(cp, "scenario", "sigma", float, 0.05),
            load_scale=_get(cp, "scenario", "load_scale", float, 1.0),
            n_dc=_get(cp, "placement", "n_dc", int, None),
            dc_buses=_get(cp, "placement", "dc_buses", _int_list, None),
            placement_seed=_get(cp, "placement", "seed", int, None),
            control=ctrl,
            traces=traces,
            dvfs=dvfs,
            solver_tol=_get(cp, "solver", "tol", float, 1e-8),
            solver_max_iter=_get(cp, "solver", "max_iter", int, 100),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
