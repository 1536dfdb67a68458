"""Per-run output files: tidy CSVs plus the run manifest.

Floats are written with 17 significant digits so re-parsing any emitted
file reproduces the in-memory values exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import __version__
from .simulator import Metrics, SimResult, SweepCell
from .workload import query_delays


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_manifest(outdir: Path, config_path, seeds, extra: dict | None = None) -> Path:
    payload = {
        "tool": "gridvolt",
        "version": __version__,
        "config": str(config_path),
        "seeds": list(seeds),
        "output_dir": str(outdir),
    }
    if extra:
        payload.update(extra)
    path = outdir / "manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def update_manifest(outdir: Path, **fields) -> None:
    path = outdir / "manifest.json"
    payload = json.loads(path.read_text())
    payload.update(fields)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_run_outputs(res: SimResult, metrics: Metrics, outdir: Path) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    dt = res.cfg.dt
    T, n = res.v_hist.shape
    written = []

    rows = [
        (fmt((t + 1) * dt), str(b + 1), fmt(res.v_hist[t, b]))
        for t in range(T)
        for b in range(n)
    ]
    _write_rows(outdir / "voltages.csv", ["t", "bus", "v_pu"], rows)
    written.append(outdir / "voltages.csv")

    rows = [
        (
            fmt((t + 1) * dt), str(bus),
            fmt(res.p_ref_hist[t, k]), fmt(res.p_out_hist[t, k]),
            fmt(res.q_dc_hist[t, k]), fmt(res.backlog_hist[t, k]),
        )
        for t in range(T)
        for k, bus in enumerate(res.dc_buses)
    ]
    _write_rows(
        outdir / "dc_power.csv",
        ["t", "bus", "p_ref_pu", "p_served_pu", "q_pu", "S_pu"],
        rows,
    )
    written.append(outdir / "dc_power.csv")

    rows = [
        (fmt((t + 1) * dt), fmt(res.slack_hist[t, 0]), fmt(res.slack_hist[t, 1]))
        for t in range(T)
    ]
    _write_rows(outdir / "slack.csv", ["t", "p0_pu", "q0_pu"], rows)
    written.append(outdir / "slack.csv")

    rows = []
    for bus in res.dc_buses:
        rep = query_delays(res.queues[bus], horizon_end_s=res.horizon_s)
        rows.extend(
            (str(bus), str(d.query_id), fmt(d.delay_s), fmt(d.censored))
            for d in rep.delays
        )
    _write_rows(outdir / "delays.csv", ["bus", "query_id", "delay_s", "censored"], rows)
    written.append(outdir / "delays.csv")

    mrows = [
        ("dv_mean_pu", fmt(metrics.dv_mean)),
        ("dv_std_pu", fmt(metrics.dv_std)),
        ("dv_max_pu", fmt(metrics.dv_max)),
        ("frac_within_band", fmt(metrics.frac_within_band)),
        ("band_pu", fmt(metrics.band)),
        ("delay_mean_s", fmt(metrics.delay_mean_s)),
        ("n_infeasible", fmt(metrics.n_infeasible)),
        ("n_censored", fmt(metrics.n_censored)),
        ("diverged", fmt(metrics.diverged)),
    ]
    for bus in sorted(metrics.delay_by_bus):
        mrows.append((f"delay_bus_{bus}_s", fmt(metrics.delay_by_bus[bus])))
    for bus in sorted(metrics.balance_abs_by_bus):
        mrows.append((f"balance_abs_bus_{bus}_pu", fmt(metrics.balance_abs_by_bus[bus])))
        mrows.append((f"balance_rel_bus_{bus}", fmt(metrics.balance_rel_by_bus[bus])))
        mrows.append((f"overdraw_max_bus_{bus}_pu", fmt(metrics.overdraw_max_by_bus[bus])))
    _write_rows(outdir / "metrics.csv", ["metric", "value"], mrows)
    written.append(outdir / "metrics.csv")
    return written


def write_sweep_outputs(cells: list[SweepCell], outdir: Path) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = [
        (
            str(c.n_dc), fmt(c.k_p), fmt(c.dv_mean), fmt(c.dv_std),
            fmt(c.delay_mean_s), str(c.n_seeds), str(c.n_failed), c.error,
        )
        for c in cells
    ]
    _write_rows(
        outdir / "sweep.csv",
        ["n_dc", "k_p", "dv_mean_pu", "dv_std_pu", "delay_mean_s",
         "n_seeds", "n_failed", "error"],
        rows,
    )
    md = sweep_markdown(cells)
    (outdir / "sweep.md").write_text(md)
    return [outdir / "sweep.csv", outdir / "sweep.md"]


def sweep_markdown(cells: list[SweepCell]) -> str:
    """Pivot the sweep into one row per data-center count, one column pair
    (deviation, delay) per gain."""
    kps = sorted({c.k_p for c in cells})
    dcs = sorted({c.n_dc for c in cells})
    by_key = {(c.n_dc, c.k_p): c for c in cells}
    head = ["No. of Data Centers"]
    for kp in kps:
        head += [f"dV (p.u.) kp={kp:g}", f"Avg Delay (s) kp={kp:g}"]
    lines = ["| " + " | ".join(head) + " |",
             "|" + "---|" * len(head)]
    for n_dc in dcs:
        row = [str(n_dc)]
        for kp in kps:
            c = by_key.get((n_dc, kp))
            if c is None or c.n_seeds == 0:
                row += ["failed", "failed"]
            else:
                row += [f"{c.dv_mean:.3f} ± {c.dv_std:.3f}", f"{c.delay_mean_s:.1f}"]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def read_metrics(path: Path) -> dict[str, float]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["metric"]] = float(row["value"])
    return out


def read_timeseries(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
