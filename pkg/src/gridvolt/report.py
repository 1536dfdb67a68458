"""Post-run reporting: tidy curve extracts and rendered figures.

Reads the CSVs written by a run and produces ``curves.csv`` in long
(t, bus, series, value) form plus PNG figures: per-bus voltage
trajectories and the data-center load before/after control.
"""

from __future__ import annotations

import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .runio import fmt, read_timeseries  # noqa: E402


class ReportError(ValueError):
    """Run directory incomplete or a requested bus is absent."""


def _require(run_dir: Path, name: str) -> Path:
    p = run_dir / name
    if not p.exists():
        raise ReportError(f"missing {name} in {run_dir}")
    return p


def load_run(run_dir: str | Path) -> dict:
    run_dir = Path(run_dir)
    manifest = json.loads(_require(run_dir, "manifest.json").read_text())
    voltages = defaultdict(list)  # bus -> [(t, v)]
    for row in read_timeseries(_require(run_dir, "voltages.csv")):
        voltages[int(row["bus"])].append((float(row["t"]), float(row["v_pu"])))
    dc = defaultdict(list)  # bus -> [(t, p_ref, p_served, q, S)]
    for row in read_timeseries(_require(run_dir, "dc_power.csv")):
        dc[int(row["bus"])].append(
            (float(row["t"]), float(row["p_ref_pu"]), float(row["p_served_pu"]),
             float(row["q_pu"]), float(row["S_pu"]))
        )
    return {"manifest": manifest, "voltages": dict(voltages), "dc": dict(dc)}


def default_buses(run: dict) -> list[int]:
    """Two data-center buses, one inverter, one nominal bus, when present."""
    dc = [int(b) for b in run["manifest"].get("dc_buses", [])]
    inv = [int(b) for b in run["manifest"].get("inverter_buses", [])]
    out = dc[:2] + inv[:1]
    for b in sorted(run["voltages"]):
        if b not in out and b not in dc and b not in inv:
            out.append(b)
            break
    return out


def write_report(run_dir: str | Path, out_dir: str | Path | None = None,
                 buses: list[int] | None = None) -> list[Path]:
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    run = load_run(run_dir)
    if buses is None:
        buses = default_buses(run)
    for b in buses:
        if b not in run["voltages"]:
            raise ReportError(f"bus {b} not present in this run")

    rows = []
    for b in buses:
        rows.extend((fmt(t), str(b), "v_pu", fmt(v)) for t, v in run["voltages"][b])
        for t, p_ref, p_served, q, s in run["dc"].get(b, []):
            rows.append((fmt(t), str(b), "p_ref_pu", fmt(p_ref)))
            rows.append((fmt(t), str(b), "p_served_pu", fmt(p_served)))
            rows.append((fmt(t), str(b), "q_pu", fmt(q)))
            rows.append((fmt(t), str(b), "S_pu", fmt(s)))
    curves = out_dir / "curves.csv"
    with open(curves, "w") as fh:
        fh.write("t,bus,series,value\n")
        fh.writelines(",".join(r) + "\n" for r in rows)

    written = [curves]
    written.append(_plot_voltages(run, buses, out_dir))
    if run["dc"]:
        written.append(_plot_dc_load(run, out_dir))
    return written


def _plot_voltages(run: dict, buses: list[int], out_dir: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7.5, 4.0))
    for b in buses:
        ts = run["voltages"][b]
        ax.plot([t for t, _ in ts], [v for _, v in ts], label=f"bus {b}")
    ax.axhline(1.0, color="k", lw=0.8, ls="--")
    ax.axhline(1.05, color="r", lw=0.8, ls=":")
    ax.axhline(0.95, color="r", lw=0.8, ls=":")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("voltage (p.u.)")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = out_dir / "voltage_curves.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _plot_dc_load(run: dict, out_dir: Path) -> Path:
    dc_buses = sorted(run["dc"])
    fig, axes = plt.subplots(
        len(dc_buses), 1, figsize=(7.5, 2.4 * len(dc_buses)), sharex=True, squeeze=False
    )
    for ax, b in zip(axes[:, 0], dc_buses):
        ts = run["dc"][b]
        t = [r[0] for r in ts]
        ax.plot(t, [-r[1] for r in ts], label="reference", lw=1.0)
        ax.plot(t, [-r[2] for r in ts], label="served", lw=1.0)
        ax.set_ylabel(f"bus {b} load (p.u.)")
        ax.grid(True, alpha=0.3)
        ax.legend(loc="best", fontsize=8)
    axes[-1, 0].set_xlabel("time (s)")
    fig.tight_layout()
    path = out_dir / "dc_load.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
