"""Per-bus droop controllers.

Data-center buses run two loops: an active-power droop actuated through
GPU frequency scaling, with a backlog term that steers total served
energy back to the reference, and an incremental reactive-power droop.
Inverter buses run only the reactive loop. Every controller sees nothing
but its own bus voltage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class DroopParams:
    k_p: float = 0.0  # p.u. power per p.u. voltage deviation
    k_q: float = 0.0
    p_lo: float = 0.0  # active injection bounds (from the DVFS band)
    p_hi: float = 0.0
    q_lo: float = 0.0
    q_hi: float = 0.0
    alpha0: float = 0.05  # base backlog gain
    alpha_max: float = 1.0
    gamma: float = 0.5  # backlog-gain adaptation slope
    literal_one_step_backlog: bool = False  # replace the running sum with the last gap
    s_rating: float | None = None  # apparent-power circle cap on q, off by default

    def __post_init__(self) -> None:
        if self.k_p < 0 or self.k_q < 0:
            raise ValueError("droop gains must be nonnegative")
        if self.p_lo > self.p_hi or self.q_lo > self.q_hi:
            raise ValueError("bounds must satisfy lo <= hi")
        if not (0.0 <= self.alpha0 <= self.alpha_max):
            raise ValueError("need 0 <= alpha0 <= alpha_max")


@dataclass(frozen=True)
class ControllerState:
    backlog: float = 0.0  # cumulative unserved injection S, p.u.-steps
    alpha: float = 0.05
    q_prev: float = 0.0
    p_out: float = 0.0

    @classmethod
    def initial(cls, params: DroopParams, q0: float = 0.0) -> "ControllerState":
        return cls(backlog=0.0, alpha=params.alpha0, q_prev=q0, p_out=0.0)


def clamp(a: float, lo: float, hi: float) -> float:
    if lo > hi:
        raise ValueError(f"clamp bounds inverted: {lo} > {hi}")
    return max(min(a, hi), lo)


def active_droop_update(
    state: ControllerState, params: DroopParams, v: float, p_ref: float
) -> tuple[float, ControllerState]:
    """Active-power output for the next step and the advanced state.

    The raw command is the reference shifted against the local voltage
    deviation plus the backlog correction::

        u_p = clamp(p_ref - k_p (v - 1) + alpha * S, p_lo, p_hi)

    and the backlog accumulates whatever the clamp and droop left
    unserved: S <- S + (p_ref - u_p). When S returns to zero the total
    served energy equals the total reference energy exactly.
    """
    if v <= 0:
        raise ValueError("voltage must be positive")
    raw = p_ref - params.k_p * (v - 1.0) + state.alpha * state.backlog
    u_p = clamp(raw, params.p_lo, params.p_hi)
    gap = p_ref - u_p
    backlog = gap if params.literal_one_step_backlog else state.backlog + gap
    return u_p, replace(state, backlog=backlog, p_out=u_p)


def reactive_droop_update(
    state: ControllerState, params: DroopParams, v: float
) -> tuple[float, ControllerState]:
    """Incremental reactive droop: u_q = clamp(q_prev - k_q (v - 1), q_lo, q_hi).

    With ``s_rating`` set, the bounds are additionally shrunk to the
    apparent-power circle left over by the current active output.
    """
    if v <= 0:
        raise ValueError("voltage must be positive")
    q_lo, q_hi = params.q_lo, params.q_hi
    if params.s_rating is not None:
        headroom = math.sqrt(max(0.0, params.s_rating**2 - state.p_out**2))
        q_lo, q_hi = max(q_lo, -headroom), min(q_hi, headroom)
        if q_lo > q_hi:
            q_lo = q_hi = 0.0
    u_q = clamp(state.q_prev - params.k_q * (v - 1.0), q_lo, q_hi)
    return u_q, replace(state, q_prev=u_q)


def adapt_alpha(state: ControllerState, params: DroopParams) -> ControllerState:
    """Raise the backlog gain with unserved load: alpha = min(alpha_max, alpha0 + gamma |S|)."""
    alpha = min(params.alpha_max, params.alpha0 + params.gamma * abs(state.backlog))
    return replace(state, alpha=alpha)
