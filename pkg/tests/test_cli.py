import json

from sloc.cli import DEFAULTS, main, validate_config


def write_config(tmp_path, payload):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return str(path)


class TestValidateConfig:
    def test_minimal_config_fills_defaults(self, tmp_path):
        path = write_config(
            tmp_path, {"target": {"kind": "gaussian", "mean": [0.0], "cov": [[1.0]]}}
        )
        cfg, errors, warnings = validate_config(path)
        assert not errors and not warnings
        assert cfg.dt == DEFAULTS["dt"]
        assert cfg.paths == DEFAULTS["paths"]
        assert cfg.seed == DEFAULTS["seed"]

    def test_negative_dt_names_field(self, tmp_path):
        path = write_config(tmp_path, {"dt": -0.001})
        cfg, errors, _ = validate_config(path)
        assert cfg is None
        assert any("dt" in e for e in errors)

    def test_unknown_key_warns_but_accepts(self, tmp_path):
        path = write_config(tmp_path, {"foo": 1})
        cfg, errors, warnings = validate_config(path)
        assert cfg is not None and not errors
        assert any("foo" in w for w in warnings)

    def test_errors_are_aggregated(self, tmp_path):
        path = write_config(tmp_path, {"dt": -1, "paths": 0, "level": 3})
        cfg, errors, _ = validate_config(path)
        assert cfg is None
        assert len(errors) >= 3

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        cfg, errors, _ = validate_config(str(path))
        assert cfg is None
        assert any("malformed" in e for e in errors)

    def test_bad_target_reported(self, tmp_path):
        path = write_config(tmp_path, {"target": {"kind": "dirac"}})
        cfg, errors, _ = validate_config(path)
        assert cfg is None
        assert any("target" in e for e in errors)


class TestCliRuns:
    def test_config_error_exits_two(self, tmp_path, capsys):
        path = write_config(tmp_path, {"dt": -1})
        code = main(["lsi", "--config", path, "--out", str(tmp_path / "out")])
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_lsi_subcommand_tabulates(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["lsi", "--seed", "7", "--out", str(out)])
        assert code == 0
        captured = capsys.readouterr().out
        assert "global: PASS" in captured
        schedule = (out / "lsi_schedule.csv").read_text()
        assert schedule.splitlines()[0] == "tau,lam,big_lam,gamma,factor"
        bounds = (out / "lsi_bounds.csv").read_text().splitlines()
        row_eta_one = [r for r in bounds if r.startswith("1,")][0]
        assert row_eta_one.split(",")[1] == "0.5"
        report = json.loads((out / "report.json").read_text())
        assert report["global_pass"] is True

    def test_csv_outputs_byte_identical_across_runs(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["lsi", "--seed", "11", "--out", str(out)]) == 0
        for name in ("report.csv", "lsi_schedule.csv", "lsi_bounds.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_simulate_emits_trajectories(self, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["simulate", "--seed", "3", "--out", str(out), "--paths", "4", "--dt", "0.05"]
        )
        assert code == 0
        tilt_lines = (out / "tilt_trajectories.csv").read_text().splitlines()
        assert tilt_lines[0] == "stream_id,t,c_1,m_1"
        assert len(tilt_lines) == 1 + 4 * 21
        chan_lines = (out / "channel_trajectories.csv").read_text().splitlines()
        assert chan_lines[0] == "stream_id,time,x_1"

    def test_simulate_byte_identical(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["simulate", "--seed", "5", "--out", str(out), "--paths", "2", "--dt", "0.1"]) == 0
        assert (out_a / "tilt_trajectories.csv").read_bytes() == (
            out_b / "tilt_trajectories.csv"
        ).read_bytes()

    def test_seed_env_fallback(self, tmp_path, monkeypatch):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        monkeypatch.setenv("SLOC_SEED", "123")
        assert main(["simulate", "--out", str(out_a), "--paths", "2", "--dt", "0.1"]) == 0
        monkeypatch.delenv("SLOC_SEED")
        assert main(["simulate", "--seed", "123", "--out", str(out_b), "--paths", "2", "--dt", "0.1"]) == 0
        assert (out_a / "tilt_trajectories.csv").read_bytes() == (
            out_b / "tilt_trajectories.csv"
        ).read_bytes()

    def test_report_subcommand_exit_codes(self, tmp_path, capsys):
        out = tmp_path / "out"
        out.mkdir()
        payload = {
            "global_pass": False,
            "checks": [
                {
                    "name": "x",
                    "observed": 1.0,
                    "tolerance": 0.5,
                    "passed": False,
                    "runtime": 0.0,
                    "detail": "",
                }
            ],
        }
        (out / "report.json").write_text(json.dumps(payload))
        assert main(["report", "--out", str(out)]) == 1
        assert "FAIL" in capsys.readouterr().out
        assert main(["report", "--out", str(tmp_path / "missing")]) == 2

    def test_workers_do_not_change_reports(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["lsi", "--seed", "2", "--out", str(out_a), "--workers", "1"]) == 0
        assert main(["lsi", "--seed", "2", "--out", str(out_b), "--workers", "4"]) == 0
        assert (out_a / "report.csv").read_bytes() == (out_b / "report.csv").read_bytes()

    def test_equiv_subcommand_reduced_budget(self, tmp_path, capsys):
        # Full budgets live in the acceptance battery; this exercises the CLI
        # dispatch, report files, and exit code on a small run.
        config = write_config(
            tmp_path,
            {"paths": 2000, "dt": 2e-3, "particles": 400, "seed": 7},
        )
        out = tmp_path / "out"
        code = main(["equiv", "--config", config, "--out", str(out)])
        assert code == 0
        captured = capsys.readouterr().out
        assert "tilt-vs-channel/ks" in captured and "global: PASS" in captured
        report = json.loads((out / "report.json").read_text())
        assert report["global_pass"] is True
        names = [c["name"] for c in report["checks"]]
        assert "tweedie/finite-difference" in names
        assert "flow/potential-equation" in names

    def test_bridge_subcommand_writes_artifacts(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["bridge", "--seed", "9", "--out", str(out), "--paths", "2000"])
        assert code == 0
        assert (out / "coupling.csv").exists()
        assert json.loads((out / "sinkhorn_trace.json").read_text())["converged"] is True

    def test_rgd_subcommand_writes_artifacts(self, tmp_path):
        out = tmp_path / "out"
        code = main(["rgd", "--seed", "9", "--out", str(out), "--paths", "2000"])
        assert code == 0
        lines = (out / "chain_trace.csv").read_text().splitlines()
        assert lines[0] == "iteration,x_1,kl"
        stability = json.loads((out / "stability_report.json").read_text())
        assert stability["all_pass"] is True

    def test_csv_format_prints_rows(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["lsi", "--seed", "4", "--out", str(out), "--format", "csv"]) == 0
        first = capsys.readouterr().out.splitlines()[0]
        assert first == "name,observed,tolerance,passed"

    def test_non_gaussian_target_warns_for_equiv(self, tmp_path, capsys):
        config = write_config(
            tmp_path,
            {
                "target": {"kind": "potential-ref", "name": "quartic"},
                "paths": 2000,
                "dt": 2e-3,
                "particles": 400,
                "seed": 7,
            },
        )
        out = tmp_path / "out"
        code = main(["equiv", "--config", config, "--out", str(out)])
        assert code == 0
        assert "standard normal instead" in capsys.readouterr().err
