#!/usr/bin/env python3
"""Regenerate the bundled 123-bus-scale feeder and sample trace.

The feeder is a representative stand-in for a medium 4.16 kV test system:
a stiff 30-bus trunk with 1-2 bus laterals carrying the loads, ten
uniformly sized var-support inverters, and impedances kept low enough
that the active droop loop stays contractive at the highest gain swept
(k_p = 20) for any choice of five data-center buses.

Deterministic; run from the repo root:  python tools/make_feeder123.py
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from gridvolt.network import Line, Network, Bus, build_sensitivity  # noqa: E402

S_BASE_KVA = 500.0
V_BASE_KV = 4.16
Z_BASE = V_BASE_KV**2 * 1000.0 / S_BASE_KVA  # ohm

N_TRUNK = 36
N_TOTAL = 123  # non-feeder buses
KP_MAX = 20.0
R_OVER_X = 1.5
TRUNK_R = 0.00012
LATERAL_R1 = (0.004, 0.0075)
LATERAL_R2 = (0.0025, 0.005)


def build(rng: np.random.Generator):
    # (id, role, p_kw, q_kvar, q_lo, q_hi), lines as (from, to, r_pu)
    buses = [(0, "feeder", 0.0, 0.0, None)]
    lines = []
    for b in range(1, N_TRUNK + 1):
        p = -float(rng.uniform(1.0, 4.0))
        buses.append((b, "pq", p, 0.33 * p, None))
        lines.append((b - 1, b, TRUNK_R))

    next_id = N_TRUNK + 1
    trunk_cycle = list(range(1, N_TRUNK + 1))
    k = 0
    while next_id <= N_TOTAL:
        anchor = trunk_cycle[k % N_TRUNK]
        k += 1
        p = -float(rng.uniform(4.0, 10.0))
        buses.append((next_id, "pq", p, 0.33 * p, None))
        lines.append((anchor, next_id, float(rng.uniform(*LATERAL_R1))))
        head = next_id
        next_id += 1
        if next_id <= N_TOTAL and rng.random() < 0.75:
            p = -float(rng.uniform(4.0, 10.0))
            buses.append((next_id, "pq", p, 0.33 * p, None))
            lines.append((head, next_id, float(rng.uniform(*LATERAL_R2))))
            next_id += 1

    # ten uniformly sized var-support inverters spread over the laterals
    inverter_ids = list(range(N_TRUNK + 5, N_TOTAL + 1, (N_TOTAL - N_TRUNK) // 10))[:10]
    out_buses = []
    for bid, role, p, q, _ in buses:
        if bid in inverter_ids:
            out_buses.append((bid, "inverter", 0.0, 0.0, (-25.0, 25.0)))
        else:
            out_buses.append((bid, role, p, q, None))
    return out_buses, lines


def stability_margin(buses, lines) -> float:
    """Largest k_p * lambda_max(R) over pessimistic 5-bus placements.

    For each eligible bus the four most strongly coupled eligible buses
    form its worst companion set; couplings are nonnegative, so no other
    placement containing that bus beats it.
    """
    net = Network(
        buses=[Bus(b, role, p / S_BASE_KVA, q / S_BASE_KVA,
                   *(qb if qb else (0.0, 0.0))) for b, role, p, q, qb in buses],
        lines=[Line(f, t, r, r / R_OVER_X) for f, t, r in lines],
        s_base=S_BASE_KVA, v_base=V_BASE_KV,
    )
    R = build_sensitivity(net).R
    eligible = [b - 1 for b, role, *_ in buses if role == "pq"]
    worst = 0.0
    for i in eligible:
        mates = sorted((j for j in eligible if j != i),
                       key=lambda j: R[i, j], reverse=True)[:4]
        sub = np.ix_([i] + mates, [i] + mates)
        worst = max(worst, float(np.linalg.eigvalsh(R[sub]).max()))
    return KP_MAX * worst


def write_net(path: Path, buses, lines) -> None:
    rows = [
        "# 123-bus-scale radial feeder with standard-load placeholders.",
        "# Stiff 30-bus trunk, 1-2 bus load laterals, ten 25 kvar inverters.",
        f"BASE {S_BASE_KVA:g} {V_BASE_KV:g}",
        "",
    ]
    for bid, role, p, q, qb in buses:
        row = f"BUS {bid} {role} {p:.3f} {q:.3f}"
        if qb:
            row += f" {qb[0]:g} {qb[1]:g}"
        rows.append(row)
    rows.append("")
    for f, t, r in lines:
        rows.append(f"LINE {f} {t} {r * Z_BASE:.6f} {r / R_OVER_X * Z_BASE:.6f}")
    path.write_text("\n".join(rows) + "\n")


def write_trace(path: Path, rng: np.random.Generator, n: int = 600) -> None:
    vals = np.full(n, 0.1)
    t = 5
    while t < n - 10:
        burst = int(rng.integers(30, 80))
        base = rng.uniform(0.55, 0.8)
        level = base
        seg = 0
        for k in range(t, min(t + burst, n)):
            if seg == 0:
                seg = int(rng.integers(2, 6))
                if rng.random() < 0.04:
                    level = rng.uniform(1.0, 1.06)
                else:
                    step = rng.uniform(0.10, 0.20)
                    direction = 1.0 if level <= base else -1.0
                    if rng.random() < 0.35:
                        direction = -direction
                    level = float(np.clip(level + direction * step, 0.25, 0.98))
            vals[k] = level
            seg -= 1
        t += burst + int(rng.integers(5, 25))
    rows = ["time_s,power_norm"] + [f"{k},{v:.4f}" for k, v in enumerate(vals)]
    path.write_text("\n".join(rows) + "\n")


def main() -> None:
    rng = np.random.default_rng(20250612)
    buses, lines = build(rng)
    margin = stability_margin(buses, lines)
    print(f"buses: {len(buses)} lines: {len(lines)} kp_max*worst_row: {margin:.3f}")
    assert margin < 1.0, "feeder too weak for the top droop gain"
    out = ROOT / "src" / "gridvolt" / "data"
    write_net(out / "feeder123.net", buses, lines)
    write_trace(out / "sample_trace.csv", np.random.default_rng(7))
    print(f"wrote {out / 'feeder123.net'} and {out / 'sample_trace.csv'}")


if __name__ == "__main__":
    main()
