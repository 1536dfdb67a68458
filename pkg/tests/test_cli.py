"""Command surface: exit codes, emitted files, round-trip formatting."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from gridvolt.cli import main
from gridvolt.config import ConfigError, load_config
from gridvolt.data import bundled_path
from gridvolt.runio import fmt, read_metrics

SMALL_CONFIG = """
[scenario]
network = bundled:sixbus.net
horizon = 30
solver = linear
mode = full
sigma = 0.0

[control]
kp = 10

[traces]
source = step
peak_kw = 280
step_duration_s = 10
"""


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "demo.ini"
    p.write_text(SMALL_CONFIG)
    return p


class TestValidate:
    def test_bundled_network_passes(self, capsys):
        rc = main(["validate", str(bundled_path("sixbus.net"))])
        out = capsys.readouterr().out
        assert rc == 0
        assert "radial: yes" in out
        assert "positive definite: yes" in out

    def test_cyclic_network_fails(self, tmp_path, capsys):
        bad = tmp_path / "cycle.net"
        bad.write_text(
            "BUS 0 feeder 0 0\nBUS 1 pq -1 0\nBUS 2 pq -1 0\n"
            "LINE 0 1 1 1\nLINE 1 2 1 1\nLINE 2 0 1 1\n"
        )
        rc = main(["validate", str(bad)])
        out = capsys.readouterr().out
        assert rc == 1
        assert "not radial" in out

    def test_trace_stats_reported(self, capsys):
        rc = main([
            "validate", str(bundled_path("sixbus.net")),
            "--trace", str(bundled_path("sample_trace.csv")),
        ])
        out = capsys.readouterr().out
        assert rc == 0
        assert "ramps:" in out and "10-20%" in out

    def test_bad_trace_fails(self, tmp_path, capsys):
        t = tmp_path / "bad.csv"
        t.write_text("time_s,power_norm\n0,0.5\n0,0.6\n")
        rc = main(["validate", str(bundled_path("sixbus.net")), "--trace", str(t)])
        assert rc == 1
        assert "FAIL trace" in capsys.readouterr().out

    def test_missing_file(self, capsys):
        assert main(["validate", "nope.net"]) == 1


class TestRun:
    def test_writes_expected_files(self, small_config, tmp_path, capsys):
        out = tmp_path / "run1"
        rc = main(["run", "--config", str(small_config), "--seed", "3",
                   "--out", str(out)])
        assert rc == 0
        for name in ("manifest.json", "voltages.csv", "dc_power.csv",
                     "slack.csv", "delays.csv", "metrics.csv"):
            assert (out / name).exists(), name
        stdout = capsys.readouterr().out
        assert "mean |dV|" in stdout and "delay" in stdout
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"] == [3]
        assert manifest["dc_buses"] == [3]

    def test_deterministic_metrics_bytes(self, small_config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", str(small_config), "--seed", "5",
                     "--out", str(a)]) == 0
        assert main(["run", "--config", str(small_config), "--seed", "5",
                     "--out", str(b)]) == 0
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
        assert (a / "voltages.csv").read_bytes() == (b / "voltages.csv").read_bytes()

    def test_refuses_nonempty_outdir(self, small_config, tmp_path, capsys):
        out = tmp_path / "run"
        out.mkdir()
        (out / "junk.txt").write_text("x")
        rc = main(["run", "--config", str(small_config), "--out", str(out)])
        assert rc == 1
        assert "--force" in capsys.readouterr().err

    def test_force_overwrites(self, small_config, tmp_path):
        out = tmp_path / "run"
        out.mkdir()
        (out / "junk.txt").write_text("x")
        rc = main(["run", "--config", str(small_config), "--out", str(out), "--force"])
        assert rc == 0

    def test_mode_override(self, small_config, tmp_path):
        out = tmp_path / "run-none"
        rc = main(["run", "--config", str(small_config), "--out", str(out),
                   "--mode", "none"])
        assert rc == 0
        assert json.loads((out / "manifest.json").read_text())["mode"] == "none"

    def test_round_trip_voltages(self, small_config, tmp_path):
        out = tmp_path / "rt"
        main(["run", "--config", str(small_config), "--out", str(out)])
        with open(out / "voltages.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        # re-formatting a parsed value reproduces the file text exactly
        for row in rows[:50]:
            assert fmt(float(row["v_pu"])) == row["v_pu"]


class TestSweep:
    def test_minimal_grid(self, small_config, tmp_path, capsys):
        out = tmp_path / "sw"
        rc = main(["sweep", "--config", str(small_config), "--kp", "5",
                   "--dc", "1", "--seeds", "2", "--out", str(out)])
        assert rc == 0
        with open(out / "sweep.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert rows[0]["n_dc"] == "1"
        assert int(rows[0]["n_seeds"]) == 2
        assert (out / "sweep.md").exists()

    def test_zero_seeds_usage_error(self, small_config, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["sweep", "--config", str(small_config), "--kp", "5",
                  "--dc", "1", "--seeds", "0", "--out", str(tmp_path / "x")])
        assert exc.value.code == 2

    def test_dc_range_syntax(self, small_config, tmp_path):
        out = tmp_path / "sw2"
        rc = main(["sweep", "--config", str(small_config), "--kp", "5",
                   "--dc", "1:2", "--seeds", "1", "--out", str(out)])
        assert rc == 0
        with open(out / "sweep.csv", newline="") as fh:
            assert len(list(csv.DictReader(fh))) == 2


class TestReport:
    def test_curves_and_figures(self, small_config, tmp_path):
        run_dir = tmp_path / "run"
        main(["run", "--config", str(small_config), "--out", str(run_dir)])
        rc = main(["report", "--in", str(run_dir)])
        assert rc == 0
        assert (run_dir / "curves.csv").exists()
        assert (run_dir / "voltage_curves.png").exists()
        assert (run_dir / "dc_load.png").exists()
        with open(run_dir / "curves.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        series = {r["series"] for r in rows}
        assert {"v_pu", "p_ref_pu", "p_served_pu"} <= series

    def test_missing_bus_named(self, small_config, tmp_path, capsys):
        run_dir = tmp_path / "run"
        main(["run", "--config", str(small_config), "--out", str(run_dir)])
        rc = main(["report", "--in", str(run_dir), "--buses", "99"])
        assert rc == 1
        assert "bus 99" in capsys.readouterr().err

    def test_missing_run_dir(self, tmp_path, capsys):
        rc = main(["report", "--in", str(tmp_path / "nothing")])
        assert rc == 1


class TestConfig:
    def test_bundled_configs_load(self):
        for name in ("sixbus_step.ini", "feeder123.ini"):
            cfg = load_config(bundled_path(name))
            assert cfg.horizon >= 30

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[scenario]\nnetwork = bundled:sixbus.net\nwarp = 9\n")
        with pytest.raises(ConfigError, match="warp"):
            load_config(p)

    def test_unknown_section_rejected(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[scenario]\nnetwork = bundled:sixbus.net\n[magic]\nx = 1\n")
        with pytest.raises(ConfigError, match="magic"):
            load_config(p)

    def test_missing_network_rejected(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[scenario]\nhorizon = 10\n")
        with pytest.raises(ConfigError, match="network"):
            load_config(p)

    def test_relative_network_path(self, tmp_path):
        net = tmp_path / "tiny.net"
        net.write_text("BUS 0 feeder 0 0\nBUS 1 pq -1 0\nLINE 0 1 0.1 0.1\n")
        p = tmp_path / "cfg.ini"
        p.write_text("[scenario]\nnetwork = tiny.net\n")
        cfg = load_config(p)
        assert Path(cfg.network).exists()

    def test_values_parsed(self, tmp_path):
        p = tmp_path / "cfg.ini"
        p.write_text(
            "[scenario]\nnetwork = bundled:sixbus.net\nhorizon = 77\n"
            "[control]\nkp = 3.5\nliteral_one_step_backlog = true\n"
            "[placement]\ndc_buses = 3\n"
            "[dvfs]\np_idle = 0\n"
        )
        cfg = load_config(p)
        assert cfg.horizon == 77
        assert cfg.control.kp == 3.5
        assert cfg.control.literal_one_step_backlog is True
        assert cfg.dc_buses == (3,)
        assert cfg.dvfs.p_idle == 0.0
        assert np.isclose(cfg.dvfs.rated_power, 1.0)
