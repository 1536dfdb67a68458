"""Data-center compute demand: GPU power traces, the frequency/power map,
and first-come-first-serve query service with energy tracking.

Power traces are normalized to the thermal design power, so samples live
in [0, ~1.1]. A query is a scaled trace segment; it completes once its
reference energy has been served, however the controller reshaped the
instantaneous power.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_COMPLETION_EPS_KJ = 1e-9


class TraceError(ValueError):
    """Malformed or inconsistent power-trace input."""


@dataclass(frozen=True)
class PowerTrace:
    dt: float  # sample interval, s
    samples: np.ndarray  # normalized power, fraction of TDP

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))
        if self.dt <= 0:
            raise TraceError("dt must be positive")
        if self.samples.size == 0:
            raise TraceError("empty trace")
        if not np.isfinite(self.samples).all() or (self.samples < 0).any():
            raise TraceError("samples must be finite and nonnegative")

    @property
    def duration(self) -> float:
        return self.dt * len(self.samples)


def parse_trace(text: str) -> PowerTrace:
    """Parse ``time_s,power_norm`` CSV into a uniformly sampled trace.

    The sample interval is the median spacing; spacing jitter above 1%
    of it is rejected, as are non-monotone timestamps.
    """
    rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if rows and rows[0].lower().replace(" ", "") == "time_s,power_norm":
        rows = rows[1:]
    if not rows:
        raise TraceError("empty trace")
    times, values = [], []
    for lineno, row in enumerate(rows, start=1):
        parts = row.split(",")
        if len(parts) != 2:
            raise TraceError(f"row {lineno}: expected 'time_s,power_norm'")
        try:
            times.append(float(parts[0]))
            values.append(float(parts[1]))
        except ValueError:
            raise TraceError(f"row {lineno}: non-numeric field") from None
    t = np.asarray(times)
    if len(t) == 1:
        return PowerTrace(dt=1.0, samples=np.asarray(values))
    diffs = np.diff(t)
    if (diffs <= 0).any():
        raise TraceError("time must be strictly increasing")
    dt = float(np.median(diffs))
    if np.abs(diffs - dt).max() > 0.01 * dt:
        raise TraceError("sample spacing jitter exceeds 1%")
    return PowerTrace(dt=dt, samples=np.asarray(values))


def scale_trace(trace: PowerTrace, peak_kw: float, s_base: float) -> np.ndarray:
    """Reference injection series in p.u., scaled so the trace peak draws
    ``peak_kw``. Consumption, hence negative."""
    if peak_kw <= 0:
        raise ValueError("peak_kw must be positive")
    if s_base <= 0:
        raise ValueError("s_base must be positive")
    top = float(trace.samples.max())
    if top <= 0:
        raise ValueError("trace has no power to scale")
    return -(trace.samples / top) * (peak_kw / s_base)


@dataclass(frozen=True)
class DvfsModel:
    """Affine clock-frequency/power map with an idle floor.

    Normalized power is ``p_idle + kappa * f`` on the feasible band
    [f_min, f_max]; by construction the rated draw sits at f_max. A zero
    idle floor recovers pure proportionality.
    """

    f_min: float = 210.0  # MHz
    f_max: float = 1410.0
    p_idle: float = 0.1  # normalized
    kappa: float = 0.9 / 1410.0  # normalized power per MHz

    def __post_init__(self) -> None:
        if not (0 < self.f_min < self.f_max):
            raise ValueError("need 0 < f_min < f_max")
        if self.p_idle < 0 or self.kappa <= 0:
            raise ValueError("need p_idle >= 0 and kappa > 0")

    @classmethod
    def with_rated_power(
        cls, rated: float = 1.0, f_min: float = 210.0, f_max: float = 1410.0,
        p_idle: float = 0.1,
    ) -> "DvfsModel":
        """Model whose draw at f_max equals ``rated`` (normalized)."""
        return cls(f_min=f_min, f_max=f_max, p_idle=p_idle,
                   kappa=(rated - p_idle) / f_max)

    @property
    def rated_power(self) -> float:
        return self.p_idle + self.kappa * self.f_max

    @property
    def floor_power(self) -> float:
        """Lowest reachable draw (at f_min)."""
        return self.p_idle + self.kappa * self.f_min


def dvfs_power(f: float, model: DvfsModel) -> float:
    """Normalized power at clock ``f`` MHz; f is clamped to the feasible band."""
    f = min(max(f, model.f_min), model.f_max)
    return model.p_idle + model.kappa * f


def freq_for_power(p_norm: float, model: DvfsModel) -> float:
    """Clock frequency drawing ``p_norm``; the clamped inverse of dvfs_power."""
    f = (p_norm - model.p_idle) / model.kappa
    return min(max(f, model.f_min), model.f_max)


@dataclass
class Query:
    """One LLM task: a reference power profile and its served-energy progress."""

    id: int
    arrival_t: float  # s
    profile_kw: np.ndarray
    dt: float
    served_kj: float = 0.0
    completion_t: float | None = None

    def __post_init__(self) -> None:
        self.profile_kw = np.asarray(self.profile_kw, dtype=float)
        self.ref_energy_kj = float(self.profile_kw.sum() * self.dt)
        if self.ref_energy_kj <= 0:
            raise ValueError(f"query {self.id}: reference energy must be positive")

    @property
    def duration(self) -> float:
        return len(self.profile_kw) * self.dt

    @property
    def reference_completion_t(self) -> float:
        return self.arrival_t + self.duration

    @property
    def remaining_kj(self) -> float:
        return max(0.0, self.ref_energy_kj - self.served_kj)

    @property
    def done(self) -> bool:
        return self.completion_t is not None


@dataclass
class QueryQueue:
    """FCFS service bookkeeping for one data-center bus."""

    bus: int
    queries: list[Query] = field(default_factory=list)
    t: float = 0.0  # queue clock, advanced by step_queue
    spill_kj: float = 0.0  # power served while no arrived query needed it

    def __post_init__(self) -> None:
        self.queries = sorted(self.queries, key=lambda q: (q.arrival_t, q.id))

    @property
    def pending(self) -> list[Query]:
        return [q for q in self.queries if q.arrival_t > self.t]

    @property
    def active(self) -> list[Query]:
        arrived = [q for q in self.queries if q.arrival_t <= self.t and not q.done]
        return arrived[:1]

    @property
    def completed(self) -> list[Query]:
        return [q for q in self.queries if q.done]

    @property
    def backlog_kj(self) -> float:
        return sum(q.remaining_kj for q in self.queries if q.arrival_t <= self.t)


def step_queue(queue: QueryQueue, served_power_kw: float, dt: float) -> QueryQueue:
    """Credit one step of served energy to the queue, FCFS.

    ``served_power_kw * dt`` kJ flows to the oldest incomplete arrived
    query; overflow cascades to the next. Completion instants are placed
    within the step by constant-power interpolation, so a 100 kJ query
    served at 8 kW completes at exactly t = 12.5 s. Energy served while
    no query is eligible accumulates in ``spill_kj``.
    """
    if served_power_kw < 0:
        raise ValueError("served power must be nonnegative")
    if dt <= 0:
        raise ValueError("dt must be positive")
    t0, t1 = queue.t, queue.t + dt
    queue.t = t1
    if served_power_kw == 0.0:
        return queue
    cursor = t0
    for q in queue.queries:
        if cursor >= t1:
            break
        if q.done:
            continue
        start = max(cursor, q.arrival_t)
        if start >= t1:
            break
        queue.spill_kj += served_power_kw * (start - cursor)
        give = min(served_power_kw * (t1 - start), q.remaining_kj)
        q.served_kj += give
        cursor = start + give / served_power_kw
        if q.remaining_kj <= _COMPLETION_EPS_KJ:
            q.served_kj = q.ref_energy_kj
            q.completion_t = cursor
    queue.spill_kj += served_power_kw * (t1 - cursor)
    return queue


@dataclass(frozen=True)
class QueryDelay:
    bus: int
    query_id: int
    delay_s: float
    censored: bool  # still incomplete at the horizon end


@dataclass(frozen=True)
class DelayReport:
    delays: list[QueryDelay]
    mean_s: float


def query_delays(queue: QueryQueue, horizon_end_s: float | None = None) -> DelayReport:
    """Per-query and mean delay against each query's reference completion.

    A query's delay is when its reference energy was actually served
    minus when the unshaped profile would have finished. Queries still
    incomplete at the horizon are censored at the horizon end.
    """
    end = queue.t if horizon_end_s is None else horizon_end_s
    out = []
    for q in queue.queries:
        if q.done:
            out.append(QueryDelay(queue.bus, q.id, q.completion_t - q.reference_completion_t, False))
        else:
            out.append(QueryDelay(queue.bus, q.id, end - q.reference_completion_t, True))
    mean = float(np.mean([d.delay_s for d in out])) if out else 0.0
    return DelayReport(delays=out, mean_s=mean)


def reference_timeline(
    queries: list[Query], n_steps: int, dt: float, floor_kw: float = 0.0
) -> np.ndarray:
    """Reference bus draw (kW) per step, FCFS playback.

    Entry k is the reference power over the step ending at ``k * dt``, so
    a query arriving at step a plays its first sample during step a+1 and
    an unshaped service schedule completes it exactly at its reference
    completion time. Playback of a query starts at its arrival, or when
    the previous playback ends if the bus is still busy; gaps sit at the
    idle floor. Length is ``n_steps + 1`` so one-step lookahead at the
    last step stays in range.
    """
    out = np.full(n_steps + 1, floor_kw)
    play_end = 0.0
    for q in sorted(queries, key=lambda q: (q.arrival_t, q.id)):
        start = max(q.arrival_t, play_end)
        play_end = start + q.duration
        for k in range(max(0, int(np.floor(start / dt))), n_steps + 1):
            pos = int(np.floor(((k - 0.5) * dt - start) / q.dt + 1e-9))
            if pos < 0:
                continue
            if pos >= len(q.profile_kw):
                break
            out[k] = max(q.profile_kw[pos], floor_kw)
    return out


def synthesize_queries(
    rng: np.random.Generator,
    window_s: float,
    peak_kw: float,
    dt: float = 1.0,
    burst_len_s: float = 40.0,
    gap_s: float = 10.0,
    ramp_frac: float = 0.15,
    floor_frac: float = 0.234,
    id_offset: int = 0,
) -> list[Query]:
    """Seeded synthetic LLM queries: square-ish bursts with second-scale
    swings whose magnitudes sit around ``ramp_frac`` of the peak, separated
    by idle gaps. Profiles never dip below the idle floor fraction and top
    out slightly above rated, like real normalized GPU traces.
    """
    queries: list[Query] = []
    t = float(np.ceil(rng.uniform(0.0, gap_s)))
    qid = id_offset
    while True:
        n = max(4, int(round(rng.uniform(0.5, 1.5) * burst_len_s / dt)))
        if t + n * dt > window_s:
            break
        base = rng.uniform(0.60, 0.80)
        prof = np.empty(n)
        level = base
        seg_left = 0
        for k in range(n):
            if seg_left == 0:
                seg_left = int(rng.integers(2, 7))
                swing = rng.uniform(0.8, 1.2) * ramp_frac
                if rng.random() < 0.04:  # occasional spike past TDP
                    level = rng.uniform(1.0, 1.08)
                else:
                    # walk from the previous level, drifting back toward the
                    # burst base so single-step ramps stay near ramp_frac
                    direction = 1.0 if level <= base else -1.0
                    if rng.random() < 0.35:
                        direction = -direction
                    level = float(np.clip(level + direction * swing, floor_frac, 1.0))
            prof[k] = level
            seg_left -= 1
        prof[0] = max(floor_frac, 0.5 * base)  # arrival ramp-up
        prof[-1] = max(floor_frac, 0.5 * base)  # end-of-generation ramp-down
        queries.append(Query(id=qid, arrival_t=t, profile_kw=prof * peak_kw, dt=dt))
        qid += 1
        t += n * dt + float(np.ceil(rng.uniform(0.5, 1.5) * gap_s))
    return queries


def queries_from_trace(
    trace: PowerTrace,
    rng: np.random.Generator,
    window_s: float,
    peak_kw: float,
    dt: float = 1.0,
    burst_len_s: float = 40.0,
    gap_s: float = 10.0,
    floor_frac: float = 0.234,
    id_offset: int = 0,
) -> list[Query]:
    """Queries built from random snippets of a measured trace."""
    if abs(trace.dt - dt) > 1e-9:
        # resample by nearest neighbor onto the simulation grid
        idx = np.clip((np.arange(0, trace.duration, dt) / trace.dt).astype(int),
                      0, len(trace.samples) - 1)
        samples = trace.samples[idx]
    else:
        samples = trace.samples
    top = float(samples.max())
    if top <= 0:
        raise ValueError("trace has no power to scale")
    norm = samples / top
    queries: list[Query] = []
    t = float(np.ceil(rng.uniform(0.0, gap_s)))
    qid = id_offset
    while True:
        n = max(4, int(round(rng.uniform(0.5, 1.5) * burst_len_s / dt)))
        n = min(n, len(norm))
        if t + n * dt > window_s:
            break
        start = int(rng.integers(0, len(norm) - n + 1))
        prof = np.maximum(norm[start : start + n], floor_frac)
        queries.append(Query(id=qid, arrival_t=t, profile_kw=prof * peak_kw, dt=dt))
        qid += 1
        t += n * dt + float(np.ceil(rng.uniform(0.5, 1.5) * gap_s))
    return queries


def step_queries(
    window_s: float,
    peak_kw: float,
    dt: float = 1.0,
    arrival_t: float = 0.0,
    duration_s: float = 20.0,
    level_frac: float = 0.8,
) -> list[Query]:
    """A single flat-plateau query: the step-change scenario."""
    n = int(round(duration_s / dt))
    if arrival_t + n * dt > window_s:
        raise ValueError("step query does not fit in the window")
    prof = np.full(n, level_frac * peak_kw)
    return [Query(id=0, arrival_t=arrival_t, profile_kw=prof, dt=dt)]


def ramp_histogram(trace: PowerTrace) -> dict[str, float]:
    """Fraction of consecutive-sample ramps by magnitude band.

    Samples are already TDP fractions, so the bands are fractions of the
    thermal design power.
    """
    if len(trace.samples) < 2:
        return {"0-5%": 0.0, "5-10%": 0.0, "10-20%": 0.0, ">20%": 0.0}
    ramps = np.abs(np.diff(trace.samples))
    edges = [(0.0, 0.05, "0-5%"), (0.05, 0.10, "5-10%"),
             (0.10, 0.20, "10-20%"), (0.20, np.inf, ">20%")]
    return {name: float(((ramps >= lo) & (ramps < hi)).mean()) for lo, hi, name in edges}
