"""Closed-loop scenario engine on a fixed control interval.

Each step measures bus voltages, lets the local controllers set the next
injections (data centers via the frequency-scaled active loop plus
reactive droop, inverters via reactive droop alone), perturbs the
uncontrolled loads, re-solves the grid, and credits the served energy to
the per-bus query queues.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import control, workload
from .network import (
    ROLE_DC,
    ROLE_INVERTER,
    ROLE_PQ,
    Network,
    build_sensitivity,
    load_network_file,
)
from .powerflow import (
    ConvergenceError,
    Injection,
    SolverOptions,
    slack_power,
    solve_distflow_nonlinear,
    solve_lindistflow,
)
from .workload import DvfsModel, parse_trace

MODES = ("none", "inverter_only", "full")
SOLVERS = ("linear", "nonlinear")

# |v - 1| beyond this is treated as a diverged control loop, not a grid state
DIVERGENCE_LIMIT = 0.5

# seed-stream domains so placement/noise/traces stay independent
_PLACEMENT_DOMAIN = 11
_NOISE_DOMAIN = 12
_TRACE_DOMAIN = 13


@dataclass(frozen=True)
class ControlConfig:
    kp: float = 10.0
    kq: float = 5.0
    alpha0: float = 0.05
    gamma: float = 0.5
    alpha_max: float = 1.0
    literal_one_step_backlog: bool = False
    q_inverter: float = 0.05  # symmetric bound used when the file gives none
    q_dc: float = 0.1
    s_rating: float | None = None


@dataclass(frozen=True)
class TraceConfig:
    source: str = "synthetic"  # synthetic | files | step
    paths: tuple[str, ...] = ()
    peak_kw: float = 280.0
    burst_len_s: float = 40.0
    gap_s: float = 10.0
    ramp_frac: float = 0.15
    seed: int | None = None  # pins query synthesis independently of the run seed
    arrival_window_s: float | None = None  # no arrivals after this; default horizon
    step_arrival_s: float = 0.0
    step_duration_s: float = 20.0
    step_level: float = 0.8


@dataclass(frozen=True)
class ScenarioConfig:
    network: str | Path | Network
    horizon: int = 120
    dt: float = 1.0
    solver: str = "linear"
    mode: str = "full"
    n_dc: int | None = None  # random placement; None keeps the file's dc buses
    dc_buses: tuple[int, ...] | None = None  # explicit placement wins
    placement_seed: int | None = None
    sigma: float = 0.05  # relative Gaussian load noise
    load_scale: float = 1.0  # multiplier on all static base injections
    control: ControlConfig = field(default_factory=ControlConfig)
    traces: TraceConfig = field(default_factory=TraceConfig)
    dvfs: DvfsModel = field(default_factory=DvfsModel)
    solver_tol: float = 1e-8
    solver_max_iter: int = 100

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1 step")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.traces.source not in ("synthetic", "files", "step"):
            raise ValueError("trace source must be synthetic, files or step")
        if self.traces.source == "files" and not self.traces.paths:
            raise ValueError("trace source 'files' needs at least one path")


@dataclass
class SimResult:
    cfg: ScenarioConfig
    seed: int
    dc_buses: tuple[int, ...]
    inverter_buses: tuple[int, ...]
    v_hist: np.ndarray  # (T, N)
    p_ref_hist: np.ndarray  # (T, n_dc), p.u. injections
    p_out_hist: np.ndarray
    q_dc_hist: np.ndarray
    backlog_hist: np.ndarray
    q_inv_hist: np.ndarray  # (T, n_inv)
    slack_hist: np.ndarray  # (T, 2)
    infeasible_steps: list[int]
    diverged: bool
    unstable_gain: bool
    gain_spectral_radius: float
    queues: dict[int, workload.QueryQueue]

    @property
    def horizon_s(self) -> float:
        return self.cfg.horizon * self.cfg.dt


@dataclass(frozen=True)
class Metrics:
    dv_mean: float
    dv_std: float
    dv_max: float
    frac_within_band: float
    delay_mean_s: float
    delay_by_bus: dict[int, float]
    balance_abs_by_bus: dict[int, float]
    balance_rel_by_bus: dict[int, float]
    overdraw_max_by_bus: dict[int, float]  # catch-up draw above reference, p.u.
    n_infeasible: int
    n_censored: int
    diverged: bool
    band: float = 0.05


def perturb_loads(base: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Multiplicative Gaussian noise, truncated at three sigma.

    Every entry is scaled by (1 + sigma * z); callers pass only the
    non-controllable load entries.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return base.copy()
    z = np.clip(rng.standard_normal(base.shape), -3.0, 3.0)
    return base * (1.0 + sigma * z)


def _resolve_placement(net: Network, cfg: ScenarioConfig, seed: int) -> tuple[int, ...]:
    if cfg.dc_buses is not None:
        chosen = tuple(sorted(cfg.dc_buses))
        for b in chosen:
            if b < 1 or b > net.n:
                raise ValueError(f"data-center bus {b} not in network")
        return chosen
    if cfg.n_dc is None:
        return tuple(net.buses_with_role(ROLE_DC))
    eligible = sorted(net.buses_with_role(ROLE_PQ))
    if cfg.n_dc > len(eligible):
        raise ValueError(f"n_dc={cfg.n_dc} exceeds {len(eligible)} eligible buses")
    entropy = cfg.placement_seed if cfg.placement_seed is not None else seed
    rng = np.random.default_rng(np.random.SeedSequence((_PLACEMENT_DOMAIN, entropy)))
    return tuple(sorted(rng.choice(eligible, size=cfg.n_dc, replace=False).tolist()))


def _build_queries(cfg: ScenarioConfig, dc_buses, dt: float, seed: int):
    window = cfg.traces.arrival_window_s
    if window is None:
        window = cfg.horizon * dt
    floor = cfg.dvfs.floor_power
    entropy = cfg.traces.seed if cfg.traces.seed is not None else seed
    loaded = [parse_trace(Path(p).read_text()) for p in cfg.traces.paths]
    queries: dict[int, list[workload.Query]] = {}
    for k, bus in enumerate(dc_buses):
        rng = np.random.default_rng(np.random.SeedSequence((_TRACE_DOMAIN, entropy, bus)))
        if cfg.traces.source == "synthetic":
            qs = workload.synthesize_queries(
                rng, window_s=window, peak_kw=cfg.traces.peak_kw, dt=dt,
                burst_len_s=cfg.traces.burst_len_s, gap_s=cfg.traces.gap_s,
                ramp_frac=cfg.traces.ramp_frac, floor_frac=floor,
            )
        elif cfg.traces.source == "files":
            qs = workload.queries_from_trace(
                loaded[k % len(loaded)], rng, window_s=window,
                peak_kw=cfg.traces.peak_kw, dt=dt,
                burst_len_s=cfg.traces.burst_len_s, gap_s=cfg.traces.gap_s,
                floor_frac=floor,
            )
        else:  # step
            qs = workload.step_queries(
                window_s=window, peak_kw=cfg.traces.peak_kw, dt=dt,
                arrival_t=cfg.traces.step_arrival_s,
                duration_s=cfg.traces.step_duration_s,
                level_frac=cfg.traces.step_level,
            )
        queries[bus] = qs
    return queries


class Simulation:
    """Mutable state of one scenario; :meth:`step` advances one interval."""

    def __init__(self, cfg: ScenarioConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.net = cfg.network if isinstance(cfg.network, Network) else load_network_file(cfg.network)
        self.sens = build_sensitivity(self.net)
        self.opts = SolverOptions(tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
        self.dt = cfg.dt

        self.dc_buses = _resolve_placement(self.net, cfg, seed)
        self.inverter_buses = tuple(
            b for b in self.net.buses_with_role(ROLE_INVERTER) if b not in self.dc_buses
        )
        self.noise_rng = np.random.default_rng(
            np.random.SeedSequence((_NOISE_DOMAIN, seed))
        )

        n = self.net.n
        self.p_static = np.zeros(n)  # uncontrolled base injections, buses 1..N
        self.q_static = np.zeros(n)
        self.noisy = np.zeros(n, dtype=bool)  # entries that receive load noise
        for b in self.net.buses[1:]:
            i = b.id - 1
            if b.id in self.dc_buses:
                continue  # compute load replaces the placeholder
            self.p_static[i] = b.p_base * cfg.load_scale
            self.q_static[i] = b.q_base * cfg.load_scale
            if b.role == ROLE_PQ:
                self.noisy[i] = True

        scale = cfg.traces.peak_kw / self.net.s_base
        self.dc_params: dict[int, control.DroopParams] = {}
        self.inv_params: dict[int, control.DroopParams] = {}
        self.ctrl: dict[int, control.ControllerState] = {}
        cc = cfg.control
        for bus in self.dc_buses:
            fb = self.net.bus(bus)
            q_lo, q_hi = (fb.q_min, fb.q_max) if fb.role == ROLE_DC and fb.q_max > fb.q_min else (-cc.q_dc, cc.q_dc)
            self.dc_params[bus] = control.DroopParams(
                k_p=cc.kp, k_q=cc.kq,
                p_lo=-cfg.dvfs.rated_power * scale,
                p_hi=-cfg.dvfs.floor_power * scale,
                q_lo=q_lo, q_hi=q_hi,
                alpha0=cc.alpha0, alpha_max=cc.alpha_max, gamma=cc.gamma,
                literal_one_step_backlog=cc.literal_one_step_backlog,
                s_rating=cc.s_rating,
            )
            self.ctrl[bus] = control.ControllerState.initial(self.dc_params[bus])
        for bus in self.inverter_buses:
            fb = self.net.bus(bus)
            q_lo, q_hi = (fb.q_min, fb.q_max) if fb.q_max > fb.q_min else (-cc.q_inverter, cc.q_inverter)
            self.inv_params[bus] = control.DroopParams(
                k_q=cc.kq, q_lo=q_lo, q_hi=q_hi, alpha0=cc.alpha0,
                alpha_max=cc.alpha_max, gamma=cc.gamma,
            )
            self.ctrl[bus] = control.ControllerState.initial(
                self.inv_params[bus], q0=control.clamp(fb.q_base, q_lo, q_hi)
            )

        # contraction precheck of the active loop: the measure-then-actuate
        # recursion multiplies voltage errors by -k_p * R restricted to the
        # data-center buses, so a spectral radius >= 1 cannot settle
        self.gain_spectral_radius = 0.0
        if cfg.mode == "full" and self.dc_buses and cc.kp > 0:
            idx = [b - 1 for b in self.dc_buses]
            lam = float(np.linalg.eigvalsh(self.sens.R[np.ix_(idx, idx)]).max())
            self.gain_spectral_radius = cc.kp * lam
        self.unstable_gain = self.gain_spectral_radius >= 1.0

        self.queues = {
            bus: workload.QueryQueue(bus=bus, queries=qs)
            for bus, qs in _build_queries(cfg, self.dc_buses, self.dt, seed).items()
        }
        floor_kw = cfg.dvfs.floor_power * cfg.traces.peak_kw
        self.p_ref = {  # p.u. injection reference, one-step lookahead friendly
            bus: -workload.reference_timeline(
                self.queues[bus].queries, cfg.horizon, self.dt, floor_kw
            ) / self.net.s_base
            for bus in self.dc_buses
        }

        self.t = 0
        self.infeasible_steps: list[int] = []
        self.diverged = False
        self.v = self._solve(self._initial_injection())[0]
        self.inj = self._initial_injection()

    def _initial_injection(self) -> Injection:
        p = self.p_static.copy()
        q = self.q_static.copy()
        for bus in self.dc_buses:
            p[bus - 1] = self.p_ref[bus][0]
        for bus in self.inverter_buses:
            q[bus - 1] = self.ctrl[bus].q_prev
        return Injection(p=p, q=q)

    def _solve(self, inj: Injection):
        if self.cfg.solver == "linear":
            v = solve_lindistflow(self.sens, inj)
            return v, slack_power(self.net, inj)
        sol = solve_distflow_nonlinear(self.net, inj, self.opts)
        return sol.v, slack_power(self.net, inj, sol.v)

    def step(self):
        """Advance one interval: measure, actuate, perturb, solve, serve.

        Returns a record dict for the step just taken.
        """
        cfg = self.cfg
        full = cfg.mode == "full"
        v_meas = self.v

        p = perturb_loads(self.p_static, cfg.sigma, self.noise_rng)
        q = perturb_loads(self.q_static, cfg.sigma, self.noise_rng)
        p[~self.noisy] = self.p_static[~self.noisy]
        q[~self.noisy] = self.q_static[~self.noisy]

        u_p: dict[int, float] = {}
        u_q: dict[int, float] = {}
        for bus in self.dc_buses:
            ref_next = self.p_ref[bus][self.t + 1]
            if full:
                up, st = control.active_droop_update(
                    self.ctrl[bus], self.dc_params[bus], v_meas[bus - 1], ref_next
                )
                uq, st = control.reactive_droop_update(st, self.dc_params[bus], v_meas[bus - 1])
                self.ctrl[bus] = st
            else:
                up, uq = ref_next, 0.0
            u_p[bus], u_q[bus] = up, uq
            p[bus - 1], q[bus - 1] = up, uq
        if cfg.mode in ("inverter_only", "full"):
            for bus in self.inverter_buses:
                uq, st = control.reactive_droop_update(
                    self.ctrl[bus], self.inv_params[bus], v_meas[bus - 1]
                )
                self.ctrl[bus] = st
                u_q[bus] = uq
                q[bus - 1] = uq
        else:
            for bus in self.inverter_buses:
                u_q[bus] = self.ctrl[bus].q_prev
                q[bus - 1] = u_q[bus]

        inj = Injection(p=p, q=q)
        infeasible = False
        try:
            v_next, slack = self._solve(inj)
        except ConvergenceError:
            infeasible = True
            v_next, slack = self.v.copy(), (np.nan, np.nan)

        for bus in self.dc_buses:
            served_kw = -u_p[bus] * self.net.s_base
            workload.step_queue(self.queues[bus], max(served_kw, 0.0), self.dt)
            if full:
                self.ctrl[bus] = control.adapt_alpha(self.ctrl[bus], self.dc_params[bus])

        self.t += 1
        self.v = v_next
        self.inj = inj
        if infeasible:
            self.infeasible_steps.append(self.t)
        if not np.isfinite(v_next).all() or np.abs(v_next - 1.0).max() > DIVERGENCE_LIMIT:
            self.diverged = True
        return {
            "v": v_next,
            "slack": slack,
            "u_p": u_p,
            "u_q": u_q,
            "infeasible": infeasible,
        }


def run_scenario(cfg: ScenarioConfig, seed: int = 0) -> SimResult:
    """Run one scenario to its horizon; deterministic in (cfg, seed).

    On loop divergence the remaining steps are frozen at the last state
    and flagged infeasible, so history lengths always equal the horizon.
    """
    sim = Simulation(cfg, seed)
    T, n = cfg.horizon, sim.net.n
    n_dc, n_inv = len(sim.dc_buses), len(sim.inverter_buses)
    v_hist = np.empty((T, n))
    p_ref_hist = np.empty((T, n_dc))
    p_out_hist = np.empty((T, n_dc))
    q_dc_hist = np.empty((T, n_dc))
    backlog_hist = np.empty((T, n_dc))
    q_inv_hist = np.empty((T, n_inv))
    slack_hist = np.empty((T, 2))

    for t in range(T):
        if sim.diverged:
            v_hist[t] = v_hist[t - 1]
            p_ref_hist[t] = p_ref_hist[t - 1]
            p_out_hist[t] = p_out_hist[t - 1]
            q_dc_hist[t] = q_dc_hist[t - 1]
            backlog_hist[t] = backlog_hist[t - 1]
            if n_inv:
                q_inv_hist[t] = q_inv_hist[t - 1]
            slack_hist[t] = slack_hist[t - 1]
            sim.infeasible_steps.append(t + 1)
            continue
        rec = sim.step()
        v_hist[t] = rec["v"]
        slack_hist[t] = rec["slack"]
        for k, bus in enumerate(sim.dc_buses):
            p_ref_hist[t, k] = sim.p_ref[bus][t + 1]
            p_out_hist[t, k] = rec["u_p"][bus]
            q_dc_hist[t, k] = rec["u_q"][bus]
            backlog_hist[t, k] = sim.ctrl[bus].backlog
        for k, bus in enumerate(sim.inverter_buses):
            q_inv_hist[t, k] = rec["u_q"][bus]

    return SimResult(
        cfg=cfg, seed=seed,
        dc_buses=sim.dc_buses, inverter_buses=sim.inverter_buses,
        v_hist=v_hist, p_ref_hist=p_ref_hist, p_out_hist=p_out_hist,
        q_dc_hist=q_dc_hist, backlog_hist=backlog_hist, q_inv_hist=q_inv_hist,
        slack_hist=slack_hist, infeasible_steps=sorted(set(sim.infeasible_steps)),
        diverged=sim.diverged or sim.unstable_gain,
        unstable_gain=sim.unstable_gain,
        gain_spectral_radius=sim.gain_spectral_radius,
        queues=sim.queues,
    )


def compute_metrics(res: SimResult, band: float = 0.05) -> Metrics:
    """Deviation, service-delay and energy-balance summary of one run.

    Mean deviation is ``mean |v - 1|`` over every recorded bus-step
    sample; steps flagged infeasible are excluded and counted.
    """
    T = res.v_hist.shape[0]
    bad = {s - 1 for s in res.infeasible_steps}
    keep = np.array([t for t in range(T) if t not in bad], dtype=int)
    dev = np.abs(res.v_hist[keep] - 1.0) if keep.size else np.zeros((0, res.v_hist.shape[1]))
    if dev.size:
        dv_mean, dv_std, dv_max = float(dev.mean()), float(dev.std()), float(dev.max())
        frac = float((dev <= band).mean())
    else:
        dv_mean = dv_std = dv_max = float("nan")
        frac = float("nan")

    delay_by_bus: dict[int, float] = {}
    n_censored = 0
    all_delays: list[float] = []
    for bus, queue in res.queues.items():
        rep = workload.query_delays(queue, horizon_end_s=res.horizon_s)
        delay_by_bus[bus] = rep.mean_s
        n_censored += sum(d.censored for d in rep.delays)
        all_delays.extend(d.delay_s for d in rep.delays)
    delay_mean = float(np.mean(all_delays)) if all_delays else 0.0

    balance_abs: dict[int, float] = {}
    balance_rel: dict[int, float] = {}
    overdraw: dict[int, float] = {}
    for k, bus in enumerate(res.dc_buses):
        gaps = res.p_ref_hist[:, k] - res.p_out_hist[:, k]
        denom = float(np.sum(np.abs(res.p_ref_hist[:, k])))
        balance_abs[bus] = abs(float(gaps.sum()))
        balance_rel[bus] = balance_abs[bus] / denom if denom > 0 else 0.0
        overdraw[bus] = max(0.0, float(gaps.max()))

    return Metrics(
        dv_mean=dv_mean, dv_std=dv_std, dv_max=dv_max, frac_within_band=frac,
        delay_mean_s=delay_mean, delay_by_bus=delay_by_bus,
        balance_abs_by_bus=balance_abs, balance_rel_by_bus=balance_rel,
        overdraw_max_by_bus=overdraw,
        n_infeasible=len(res.infeasible_steps), n_censored=n_censored,
        diverged=res.diverged, band=band,
    )


@dataclass(frozen=True)
class SweepCell:
    n_dc: int
    k_p: float
    dv_mean: float  # mean over seeds of per-run mean deviation
    dv_std: float  # mean over seeds of per-run bus-step spread
    delay_mean_s: float
    n_seeds: int
    n_failed: int
    error: str = ""


def max_sweep_workers() -> int:
    raw = os.environ.get("GRIDVOLT_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def sweep(
    base_cfg: ScenarioConfig,
    kp_values,
    dc_counts,
    seeds,
    progress=None,
) -> list[SweepCell]:
    """Grid of (data-center count) x (active droop gain), each cell an
    ensemble over seeds. Cells are independent; failures are recorded and
    the sweep continues. Cell results are ordered by (n_dc, k_p)
    regardless of execution order.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    cells = [(n_dc, kp) for n_dc in dc_counts for kp in kp_values]

    def run_cell(cell):
        n_dc, kp = cell
        cfg = replace(
            base_cfg, n_dc=n_dc, control=replace(base_cfg.control, kp=kp)
        )
        runs, failed, err = [], 0, ""
        for s in seeds:
            try:
                m = compute_metrics(run_scenario(cfg, s))
                if m.diverged or not np.isfinite(m.dv_mean):
                    failed += 1
                    err = err or f"seed {s}: diverged"
                else:
                    runs.append(m)
            except Exception as exc:  # cell isolation: record and move on
                failed += 1
                err = err or f"seed {s}: {exc}"
        if not runs:
            return SweepCell(n_dc, kp, float("nan"), float("nan"), float("nan"),
                             0, failed, err or "all seeds failed")
        return SweepCell(
            n_dc=n_dc, k_p=kp,
            dv_mean=float(np.mean([m.dv_mean for m in runs])),
            dv_std=float(np.mean([m.dv_std for m in runs])),
            delay_mean_s=float(np.mean([m.delay_mean_s for m in runs])),
            n_seeds=len(runs), n_failed=failed, error=err,
        )

    workers = max_sweep_workers()
    if workers == 1:
        results = []
        for cell in cells:
            results.append(run_cell(cell))
            if progress:
                progress(results[-1])
        return results
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run_cell, cells))
    if progress:
        for r in results:
            progress(r)
    return results
