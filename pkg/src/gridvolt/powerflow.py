"""Bus voltage solvers for radial networks.

Two routes: the linear sensitivity model ``v = R p + X q + 1`` used by the
controllers, and the nonlinear branch-flow fixed point (with line losses)
used for simulation fidelity. Injections follow the repo-wide convention:
negative values consume power.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network, SensitivityMatrices


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8  # max per-bus voltage change between sweeps, p.u.
    max_iter: int = 100

    def __post_init__(self) -> None:
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class Injection:
    """Net power injections at buses 1..N (feeder excluded)."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        if self.p.shape != self.q.shape or self.p.ndim != 1:
            raise ValueError("p and q must be 1-d arrays of equal length")
        if not (np.isfinite(self.p).all() and np.isfinite(self.q).all()):
            raise ValueError("injections must be finite")


@dataclass(frozen=True)
class NonlinearSolution:
    v: np.ndarray
    iterations: int
    residual: float
    residual_history: tuple[float, ...] = ()


class ConvergenceError(RuntimeError):
    """Sweep failed to converge; injections are outside the solvable regime."""

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


def solve_lindistflow(sens: SensitivityMatrices, inj: Injection) -> np.ndarray:
    """Linear voltage magnitudes ``v = R p + X q + 1`` for buses 1..N."""
    n = sens.R.shape[0]
    if inj.p.shape != (n,):
        raise ValueError(f"expected {n} injections, got {inj.p.shape[0]}")
    return sens.R @ inj.p + sens.X @ inj.q + 1.0


def _sweep_flows(net: Network, p_full: np.ndarray, q_full: np.ndarray, w: np.ndarray):
    """One backward pass: sending-end branch flows given squared voltages w.

    Returns per-bus arrays indexed by the child bus of each line:
    sending-end active/reactive flow and squared current magnitude.
    """
    n_total = net.n + 1
    p_send = np.zeros(n_total)
    q_send = np.zeros(n_total)
    ell = np.zeros(n_total)
    for b in reversed(net.bfs_order[1:]):
        p_recv = -p_full[b] + sum(p_send[c] for c in net.children[b])
        q_recv = -q_full[b] + sum(q_send[c] for c in net.children[b])
        ln = net.lines[net.parent_line[b]]
        ell[b] = (p_recv**2 + q_recv**2) / w[b]
        p_send[b] = p_recv + ln.r * ell[b]
        q_send[b] = q_recv + ln.x * ell[b]
    return p_send, q_send, ell


def solve_distflow_nonlinear(
    net: Network, inj: Injection, opts: SolverOptions = SolverOptions()
) -> NonlinearSolution:
    """Solve the nonlinear branch-flow equations by backward/forward sweep.

    Backward pass accumulates branch flows leaf-to-root including the
    ``|I|^2 (r, x)`` loss terms; forward pass propagates squared voltage
    magnitudes root-to-leaf. Iterates until the largest voltage change
    drops below ``opts.tol``. Raises :class:`ConvergenceError` when the
    cap is hit, which the simulator records as an infeasible step.
    """
    n = net.n
    if inj.p.shape != (n,):
        raise ValueError(f"expected {n} injections, got {inj.p.shape[0]}")
    p_full = np.concatenate(([0.0], inj.p))
    q_full = np.concatenate(([0.0], inj.q))

    w = np.ones(n + 1)  # squared magnitudes, feeder pinned at 1
    v = np.ones(n + 1)
    history: list[float] = []
    for it in range(1, opts.max_iter + 1):
        p_send, q_send, ell = _sweep_flows(net, p_full, q_full, w)
        w_new = np.ones(n + 1)
        for b in net.bfs_order[1:]:
            ln = net.lines[net.parent_line[b]]
            w_new[b] = (
                w_new[net.parent[b]]
                - 2.0 * (ln.r * p_send[b] + ln.x * q_send[b])
                + (ln.r**2 + ln.x**2) * ell[b]
            )
        if (w_new <= 0).any() or not np.isfinite(w_new).all():
            raise ConvergenceError(it, float("inf"))
        v_new = np.sqrt(w_new)
        residual = float(np.abs(v_new - v).max())
        history.append(residual)
        v, w = v_new, w_new
        if residual < opts.tol:
            return NonlinearSolution(
                v=v[1:].copy(), iterations=it, residual=residual,
                residual_history=tuple(history),
            )
    raise ConvergenceError(opts.max_iter, history[-1])


def slack_power(net: Network, inj: Injection, v: np.ndarray | None = None):
    """Feeder injection balancing the system: consumption plus losses.

    With ``v`` from the nonlinear solver the branch-flow losses are
    included; without it the balance is the lossless one of the linear
    model, ``(-sum p, -sum q)``.
    """
    if v is None:
        return -float(inj.p.sum()), -float(inj.q.sum())
    if v.shape != (net.n,):
        raise ValueError(f"expected {net.n} voltages, got {v.shape[0]}")
    w = np.concatenate(([1.0], v)) ** 2
    p_full = np.concatenate(([0.0], inj.p))
    q_full = np.concatenate(([0.0], inj.q))
    p_send, q_send, _ = _sweep_flows(net, p_full, q_full, w)
    roots = net.children[0]
    return float(sum(p_send[c] for c in roots)), float(sum(q_send[c] for c in roots))
