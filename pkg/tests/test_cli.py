import json

import pytest

from fxtqp.cli import main
from fxtqp.simulation import monitor, trace_from_csv


def run_cli(*argv):
    return main(list(argv))


class TestRun:
    def test_synthetic_run_writes_outputs(self, tmp_path):
        code = run_cli("--scenario", "synthetic:int1d", "--out", str(tmp_path))
        assert code == 0
        run_dir = tmp_path / "synthetic_int1d"
        summary = json.loads((run_dir / "summary.json").read_text())
        assert summary["outcome"]["kind"] == "all_phases_met"
        assert (run_dir / "trace.csv").exists()

    def test_unknown_field_is_config_error(self, tmp_path):
        assert run_cli("--scenario", "acc", "--set", "bogus=1",
                       "--out", str(tmp_path)) == 2

    def test_malformed_set_is_config_error(self, tmp_path):
        assert run_cli("--scenario", "acc", "--set", "novalue",
                       "--out", str(tmp_path)) == 2

    def test_negative_dt_is_config_error(self, tmp_path):
        assert run_cli("--scenario", "acc", "--dt", "-0.1",
                       "--out", str(tmp_path)) == 2

    def test_deadline_miss_exits_4(self, tmp_path):
        code = run_cli("--scenario", "acc", "--set", "v_f0=17",
                       "--set", "horizon=11.0", "--out", str(tmp_path))
        assert code == 4

    def test_solver_failure_exits_3(self, tmp_path):
        # aggressive reach pressure makes the disturbed-mode slack pin
        # infeasible once the headway margin crosses the freeze level
        code = run_cli("--scenario", "acc", "--set", "v_f0=27",
                       "--set", "d_delta=100", "--set", "q1_disturbed=50",
                       "--out", str(tmp_path))
        assert code == 3

    def test_env_var_sets_default_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FXTQP_OUT", str(tmp_path / "from-env"))
        assert run_cli("--scenario", "synthetic:int1d") == 0
        assert (tmp_path / "from-env" / "synthetic_int1d" / "trace.csv").exists()

    def test_acc_run_summary_reports_band_and_safety(self, tmp_path):
        code = run_cli("--scenario", "acc", "--set", "v_f0=21",
                       "--out", str(tmp_path))
        assert code == 0
        summary = json.loads((tmp_path / "acc" / "summary.json").read_text())
        assert summary["reach_times"][0] <= 10.0
        assert summary["max_h_per_branch"]["headway"] <= 0.0
        trace = trace_from_csv(tmp_path / "acc" / "trace.csv")
        stats = monitor(trace)
        assert stats["max_h_per_branch"] == summary["max_h_per_branch"]
        assert stats["max_abs_u"] == summary["max_abs_u"]
        cert = summary["fixed_time_certificate"]
        assert cert["delta1_sup"] == stats["max_delta1"]
        assert cert["regime"] in ("global_within_deadline", "global_fixed_time",
                                  "local_fixed_time")
        assert cert["bound_T"] is None or cert["bound_T"] > 0

    def test_certificate_run_level_bound(self, tmp_path):
        # the synthetic 1-D case keeps the slack nonpositive, so the
        # run-level certificate is the deadline itself
        code = run_cli("--scenario", "synthetic:int1d", "--out", str(tmp_path))
        assert code == 0
        summary = json.loads(
            (tmp_path / "synthetic_int1d" / "summary.json").read_text())
        cert = summary["fixed_time_certificate"]
        assert cert["within_deadline"] is True
        assert cert["bound_T"] == pytest.approx(2.0)
        assert summary["reach_times"][0] <= cert["bound_T"]


class TestSweep:
    def test_empty_value_list_is_noop(self, tmp_path):
        assert run_cli("--scenario", "acc", "--sweep", "v_f0=",
                       "--out", str(tmp_path)) == 0
        assert not (tmp_path / "sweep.csv").exists()

    def test_sweep_aggregates_and_exit_code(self, tmp_path):
        code = run_cli("--scenario", "acc", "--sweep", "v_f0=21,24",
                       "--set", "horizon=12.0", "--jobs", "2",
                       "--out", str(tmp_path))
        assert code == 0
        lines = (tmp_path / "sweep.csv").read_text().strip().splitlines()
        assert lines[0].startswith("v_f0,")
        assert len(lines) == 3
        for sub in ("v_f0=21", "v_f0=24"):
            assert (tmp_path / sub / "trace.csv").exists()

    def test_sweep_propagates_failures(self, tmp_path):
        code = run_cli("--scenario", "acc", "--sweep", "v_f0=17,21",
                       "--set", "horizon=11.0", "--out", str(tmp_path))
        assert code == 4


class TestVerifyBounds:
    def test_small_grid_passes(self, tmp_path):
        grid = tmp_path / "grid.json"
        grid.write_text(json.dumps({
            "alpha": [1.0], "mu": [2.0],
            "delta1": [0.0, 2.5], "V0": [0.01, 1.0], "dt": 5e-4,
        }))
        code = run_cli("--verify-bounds", "--grid-json", str(grid),
                       "--out", str(tmp_path))
        assert code == 0
        rows = (tmp_path / "bounds.csv").read_text().strip().splitlines()
        assert rows[0].startswith("alpha1,")
        assert len(rows) == 5
        # the out-of-domain point is reported, not failed
        out_of_domain = [r for r in rows[1:] if ",False," in r]
        assert len(out_of_domain) == 1 and out_of_domain[0].endswith("True")
