"""Shared test fixtures: network builders and independent oracles.

The oracles deliberately avoid the library's own construction paths:
sensitivities come from inverting the reduced weighted tree Laplacian and
the two-bus nonlinear solution from scalar bisection.
"""

from __future__ import annotations

import numpy as np

from gridvolt.network import Bus, Line, Network


def make_network(bus_specs, line_specs, s_base=1000.0, v_base=4.16) -> Network:
    """bus_specs: (id, role, p_pu, q_pu[, q_min, q_max]); line_specs: (a, b, r, x)."""
    buses = []
    for spec in bus_specs:
        bid, role, p, q = spec[:4]
        q_lo, q_hi = spec[4:] if len(spec) > 4 else (0.0, 0.0)
        buses.append(Bus(bid, role, p, q, q_lo, q_hi))
    lines = [Line(a, b, r, x) for a, b, r, x in line_specs]
    return Network(buses=buses, lines=lines, s_base=s_base, v_base=v_base)


def two_bus(r=0.02, x=0.01, p=-0.5, q=0.0, role="pq") -> Network:
    extra = (-0.2, 0.2) if role in ("inverter", "dc") else ()
    return make_network(
        [(0, "feeder", 0.0, 0.0), (1, role, p, q, *extra)],
        [(0, 1, r, x)],
    )


def random_tree_network(rng: np.random.Generator, n_buses: int) -> Network:
    """Random radial network: each new bus hangs off a uniformly chosen
    existing bus with log-uniform-ish impedances."""
    buses = [Bus(0, "feeder")]
    lines = []
    for b in range(1, n_buses):
        parent = int(rng.integers(0, b))
        r = float(rng.uniform(0.002, 0.05))
        x = float(rng.uniform(0.002, 0.05))
        buses.append(Bus(b, "pq", float(rng.uniform(-0.05, 0.0)), 0.0))
        lines.append(Line(parent, b, r, x))
    return Network(buses=buses, lines=lines)


def laplacian_sensitivity(net: Network):
    """Oracle for the sensitivity matrices: invert the feeder-grounded
    weighted tree Laplacian built with conductances 1/r (resp. 1/x)."""
    n_total = net.n + 1

    def reduced_inverse(weight_of):
        L = np.zeros((n_total, n_total))
        for ln in net.lines:
            w = 1.0 / weight_of(ln)
            a, b = ln.from_bus, ln.to_bus
            L[a, a] += w
            L[b, b] += w
            L[a, b] -= w
            L[b, a] -= w
        return np.linalg.inv(L[1:, 1:])

    return reduced_inverse(lambda ln: ln.r), reduced_inverse(lambda ln: ln.x)


def bisect_two_bus(r: float, x: float, p: float, q: float):
    """Scalar branch-flow fixed point for a single line, solved by
    bisection on the squared voltage magnitude. Returns (v1, p0, q0).
    """
    c_p, c_q = -p, -q  # consumption, positive

    def mismatch(w: float) -> float:
        ell = (c_p**2 + c_q**2) / w
        p_send = c_p + r * ell
        q_send = c_q + x * ell
        return 1.0 - 2.0 * (r * p_send + x * q_send) + (r**2 + x**2) * ell - w

    lo, hi = 0.25, 1.5
    assert mismatch(lo) < 0 < mismatch(hi) or mismatch(hi) < 0 < mismatch(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (mismatch(lo) < 0) == (mismatch(mid) < 0):
            lo = mid
        else:
            hi = mid
    w = 0.5 * (lo + hi)
    ell = (c_p**2 + c_q**2) / w
    return float(np.sqrt(w)), c_p + r * ell, c_q + x * ell
