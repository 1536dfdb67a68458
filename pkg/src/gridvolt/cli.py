"""Command-line entry points: validate, run, sweep, report.

Exit codes: 0 success, 1 validation/runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .network import NetworkError, build_sensitivity, load_network_file
from .report import ReportError, write_report
from .runio import (
    update_manifest,
    write_manifest,
    write_run_outputs,
    write_sweep_outputs,
)
from .simulator import compute_metrics, run_scenario, sweep
from .workload import TraceError, parse_trace, ramp_histogram

_MODE_ALIASES = {"inverter": "inverter_only"}


def _fail(check: str, message: str) -> int:
    print(f"FAIL {check}: {message}")
    return 1


def cmd_validate(args) -> int:
    path = Path(args.network)
    if not path.exists():
        return _fail("network", f"file not found: {path}")
    try:
        net = load_network_file(path)
    except NetworkError as exc:
        return _fail("radial" if "radial" in str(exc) else "parse", str(exc))
    roles = {}
    for b in net.buses:
        roles[b.role] = roles.get(b.role, 0) + 1
    role_txt = ", ".join(f"{k} {v}" for k, v in sorted(roles.items()))
    print(f"network: {path}")
    print(f"buses: {len(net.buses)} ({role_txt}); lines: {len(net.lines)}")
    print("radial: yes")
    sens = build_sensitivity(net)
    try:
        np.linalg.cholesky(sens.R)
        np.linalg.cholesky(sens.X)
    except np.linalg.LinAlgError as exc:
        return _fail("positive-definite", str(exc))
    print("R,X positive definite: yes")

    for tpath in args.trace or []:
        tp = Path(tpath)
        if not tp.exists():
            return _fail("trace", f"file not found: {tp}")
        try:
            trace = parse_trace(tp.read_text())
        except TraceError as exc:
            return _fail("trace", f"{tp}: {exc}")
        hist = ramp_histogram(trace)
        hist_txt = ", ".join(f"{k} {v:.0%}" for k, v in hist.items())
        print(
            f"trace {tp}: samples {len(trace.samples)}, dt {trace.dt:g} s, "
            f"peak {trace.samples.max():.3f}, ramps: {hist_txt}"
        )
    print("all checks passed")
    return 0


def _prepare_outdir(out: str, force: bool) -> Path:
    outdir = Path(out)
    if outdir.exists() and any(outdir.iterdir()) and not force:
        raise ConfigError(
            f"output directory {outdir} is not empty (use --force to overwrite)"
        )
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.solver:
        cfg = replace(cfg, solver=args.solver)
    if args.mode:
        cfg = replace(cfg, mode=_MODE_ALIASES.get(args.mode, args.mode))
    outdir = _prepare_outdir(args.out, args.force)
    write_manifest(outdir, args.config, [args.seed])
    started = time.perf_counter()
    res = run_scenario(cfg, args.seed)
    metrics = compute_metrics(res)
    write_run_outputs(res, metrics, outdir)
    update_manifest(
        outdir,
        dc_buses=list(res.dc_buses),
        inverter_buses=list(res.inverter_buses),
        elapsed_s=round(time.perf_counter() - started, 3),
        solver=cfg.solver,
        mode=cfg.mode,
    )
    flags = ""
    if res.diverged:
        flags = "  [DIVERGED]"
    elif res.infeasible_steps:
        flags = f"  [{len(res.infeasible_steps)} infeasible steps]"
    print(
        f"mean |dV| {metrics.dv_mean:.5f} p.u., max {metrics.dv_max:.5f}, "
        f"within band {metrics.frac_within_band:.1%}, "
        f"mean delay {metrics.delay_mean_s:.2f} s{flags}"
    )
    print(f"outputs in {outdir}")
    return 0


def _parse_floats(raw: str) -> list[float]:
    return [float(t) for t in raw.replace(",", " ").split()]


def _parse_counts(raw: str) -> list[int]:
    if ":" in raw:
        lo, hi = raw.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in raw.replace(",", " ").split()]


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    kps = _parse_floats(args.kp)
    dcs = _parse_counts(args.dc)
    if not kps or not dcs:
        raise ConfigError("empty sweep grid")
    seeds = list(range(args.seeds))
    outdir = _prepare_outdir(args.out, args.force)
    write_manifest(outdir, args.config, seeds, extra={"kp": kps, "n_dc": dcs})
    started = time.perf_counter()

    def progress(cell):
        status = f"{cell.n_seeds} ok" + (f", {cell.n_failed} failed" if cell.n_failed else "")
        print(
            f"  n_dc={cell.n_dc} kp={cell.k_p:g}: dV {cell.dv_mean:.4f} "
            f"± {cell.dv_std:.4f} p.u., delay {cell.delay_mean_s:.2f} s ({status})"
        )

    cells = sweep(cfg, kps, dcs, seeds, progress=progress)
    write_sweep_outputs(cells, outdir)
    update_manifest(outdir, elapsed_s=round(time.perf_counter() - started, 3))
    ok = sum(1 for c in cells if c.n_seeds > 0)
    print(f"{ok}/{len(cells)} cells succeeded; outputs in {outdir}")
    return 0 if ok else 1


def cmd_report(args) -> int:
    buses = _parse_counts(args.buses) if args.buses else None
    written = write_report(args.run_dir, out_dir=args.out, buses=buses)
    for p in written:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gridvolt",
        description="Voltage regulation scenarios for feeders with data-center loads",
    )
    ap.add_argument("--version", action="version", version=f"gridvolt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a network file and optional traces")
    p.add_argument("network")
    p.add_argument("--trace", action="append", help="power trace CSV (repeatable)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run one scenario and write its outputs")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--solver", choices=["linear", "nonlinear"])
    p.add_argument("--mode", choices=["none", "inverter", "inverter_only", "full"])
    p.add_argument("--force", action="store_true", help="write into a non-empty directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid of gain x data-center count over seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--kp", default="1,10,20", help="comma list of droop gains")
    p.add_argument("--dc", default="1:5", help="counts, comma list or lo:hi range")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds (0..n-1)")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="curve extracts and figures from a run directory")
    p.add_argument("--in", dest="run_dir", required=True)
    p.add_argument("--out", help="destination (defaults to the run directory)")
    p.add_argument("--buses", help="comma list of bus ids to plot")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "sweep" and args.seeds < 1:
        ap.error("--seeds must be at least 1")
    try:
        return args.func(args)
    except (ConfigError, NetworkError, TraceError, ReportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
