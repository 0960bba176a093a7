import json
import math
import subprocess
import sys

import numpy as np
import pytest

from avformation import ConfigError, Formation, HdvParams, canonicalize, string_stability_index
from avformation.cli import main
from avformation.experiments import (
    DEFAULT_WEIGHTS,
    SWEEP_HEADER,
    ExperimentConfig,
    closed_grid,
    config_from_dict,
    fmt,
    interior_grid,
    load_config,
    most_even_formation,
    platoon_formation,
    run_scale,
    run_sweep,
    run_table1,
    write_scale_csv,
    write_sweep_csv,
)


def tiny_config(**overrides):
    base = dict(
        n=6, k=2,
        alpha_grid=(0.5, 1.2), beta_grid=(0.5, 1.2), s_star_grid=(14.0, 20.0),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.n == 12 and cfg.k == 4
        assert len(cfg.alpha_grid) == 8
        assert len(cfg.s_star_grid) == 7
        # the default spacing grid stays off the degenerate ramp endpoints
        assert min(cfg.s_star_grid) > cfg.s_st
        assert max(cfg.s_star_grid) < cfg.s_go

    def test_grid_helpers(self):
        assert closed_grid(0.0, 1.0, 3) == (0.0, 0.5, 1.0)
        assert interior_grid(5.0, 35.0, 4) == (11.0, 17.0, 23.0, 29.0)
        with pytest.raises(ConfigError):
            closed_grid(0.0, 1.0, 0)

    def test_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(k=20)
        with pytest.raises(ConfigError):
            ExperimentConfig(alpha_grid=())
        with pytest.raises(ConfigError):
            ExperimentConfig(threads=0)

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ConfigError):
            config_from_dict({"n": 6, "ka": 2})

    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "n": 6, "k": 2,
            "alpha_grid": [0.5, 1.2],
            "beta_grid": {"min": 0.5, "max": 1.2, "count": 2},
            "s_star_grid": [14.0, 20.0],
            "threads": 1,
        }))
        cfg = load_config(path)
        assert cfg.n == 6
        assert cfg.beta_grid == (0.5, 1.2)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)


class TestSweep:
    def test_grid_order_and_xi_recomputation(self):
        cfg = tiny_config()
        records = run_sweep(cfg)
        assert len(records) == 8
        expected_cells = [
            (a, b, s)
            for a in cfg.alpha_grid for b in cfg.beta_grid for s in cfg.s_star_grid
        ]
        assert [(r.alpha, r.beta, r.s_star) for r in records] == expected_cells
        for r in records:
            hdv = HdvParams(r.alpha, r.beta, cfg.v_max, cfg.s_st, cfg.s_go)
            assert r.xi == string_stability_index(hdv, r.s_star)
            assert r.error is None
            assert r.best_j >= r.worst_j

    def test_csv_deterministic(self, tmp_path):
        cfg = tiny_config()
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        write_sweep_csv(run_sweep(cfg), first)
        write_sweep_csv(run_sweep(cfg), second)
        assert first.read_bytes() == second.read_bytes()
        lines = first.read_text().splitlines()
        assert lines[0] == SWEEP_HEADER
        assert len(lines) == 9

    def test_parallel_matches_serial(self, tmp_path):
        serial, parallel = tmp_path / "s.csv", tmp_path / "p.csv"
        write_sweep_csv(run_sweep(tiny_config(threads=1)), serial)
        write_sweep_csv(run_sweep(tiny_config(threads=2)), parallel)
        assert serial.read_bytes() == parallel.read_bytes()

    def test_degenerate_cells_become_error_rows(self, tmp_path):
        cfg = tiny_config(s_star_grid=(5.0, 20.0))  # s*=5 has zero ramp slope
        records = run_sweep(cfg)
        errors = [r for r in records if r.error is not None]
        valid = [r for r in records if r.error is None]
        assert len(errors) == 4 and len(valid) == 4
        out = tmp_path / "err.csv"
        write_sweep_csv(records, out)
        error_lines = [l for l in out.read_text().splitlines() if ",error," in l]
        assert len(error_lines) == 4
        for line in error_lines:
            assert line.split(",")[4:8] == ["error", "error", "nan", "nan"]

    def test_float_format_nine_significant_digits(self):
        assert fmt(1 / 3) == "0.333333333"
        assert fmt(-0.5003353452890641) == "-0.500335345"
        assert fmt(12.0) == "12"


class TestTable1:
    def test_best_classes(self):
        rows = run_table1()
        assert [r.best_class for r in rows] == ["Platoon", "Uniform", "Abnormal"]
        # the abnormal optimum is the rotational class of {1, 6, 7, 8}
        assert rows[2].best == canonicalize(Formation(12, (1, 6, 7, 8)))


class TestScale:
    def test_small_study(self, typical_driver, tmp_path):
        rows = run_scale([8, 12], 4, typical_driver, 20.0, DEFAULT_WEIGHTS)
        assert [r.n for r in rows] == [8, 12]
        for row in rows:
            assert row.j_uniform > row.j_platoon
        out = tmp_path / "scale.csv"
        write_scale_csv(rows, out)
        lines = out.read_text().splitlines()
        assert lines[0] == "n,J_platoon,J_uniform,gap"
        assert len(lines) == 3

    def test_degenerate_when_all_autonomous(self, typical_driver):
        rows = run_scale([4], 4, typical_driver, 20.0, DEFAULT_WEIGHTS)
        assert rows[0].gap == pytest.approx(0.0, abs=1e-12)

    def test_formation_builders(self):
        assert platoon_formation(12, 4).members == (1, 2, 3, 4)
        assert most_even_formation(12, 4).members == (1, 4, 7, 10)
        assert most_even_formation(10, 4).members == (1, 3, 6, 8)


class TestCli:
    def test_counterexample_command(self, capsys):
        assert main(["counterexample"]) == 0
        out = capsys.readouterr().out
        assert "holds: False" in out
        assert "n = 12" in out

    def test_counterexample_override_validation(self, capsys):
        assert main(["counterexample", "--n", "9"]) == 2

    def test_eval_exports_gain(self, tmp_path, capsys):
        out = tmp_path / "gain.json"
        code = main([
            "eval", "--n", "12", "--members", "1-4-7-10",
            "--alpha", "0.6", "--beta", "0.9", "--s-star", "20",
            "--out", str(out),
        ])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["class"] == "Uniform"
        assert payload["J"] == pytest.approx(-0.7312, abs=1e-3)
        gain = np.asarray(payload["K"])
        assert gain.shape == (4, 23)
        assert payload["P_trace"] > 0

    def test_eval_matches_brute_force_entry(self, capsys, typical_coeffs, default_weights):
        from avformation import brute_force

        result = brute_force(12, 4, typical_coeffs, default_weights)
        ranked = {f.members: v for f, v in result.ranking}
        assert main([
            "eval", "--n", "12", "--members", "1-4-7-10",
            "--alpha", "0.6", "--beta", "0.9", "--s-star", "20",
        ]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["J"] == pytest.approx(ranked[(1, 4, 7, 10)], rel=1e-10)

    def test_eval_rotated_formation_same_j(self, capsys):
        values = []
        for members in ("1-4-7-10", "2-5-8-11"):
            assert main([
                "eval", "--n", "12", "--members", members,
                "--alpha", "0.6", "--beta", "0.9", "--s-star", "20",
            ]) == 0
            values.append(json.loads(capsys.readouterr().out)["J"])
        assert abs(values[0] - values[1]) / abs(values[0]) <= 1e-8

    def test_eval_direct_coefficients(self, capsys):
        assert main([
            "eval", "--n", "10", "--members", "4-9-10",
            "--alpha1", "0.5", "--alpha2", "2.5", "--alpha3", "0.5",
        ]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["J"] == pytest.approx(-0.4645, abs=1e-3)

    def test_eval_degenerate_equilibrium_is_config_error(self, capsys):
        assert main([
            "eval", "--n", "6", "--members", "1-4",
            "--alpha", "0.6", "--beta", "0.9", "--s-star", "5",
        ]) == 2

    def test_sweep_command(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "n": 6, "k": 2,
            "alpha_grid": [0.6], "beta_grid": [0.9], "s_star_grid": [20.0],
        }))
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--config", str(cfg_path), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == SWEEP_HEADER
        assert len(lines) == 2

    def test_sweep_bad_config_exits_2(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"n": 6, "bogus": 1}))
        assert main(["sweep", "--config", str(cfg_path)]) == 2

    def test_scale_command(self, tmp_path, capsys):
        out = tmp_path / "scale.csv"
        assert main(["scale", "--n-list", "8,12", "--k", "4", "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 3

    def test_table1_command(self, tmp_path, capsys):
        out = tmp_path / "table1.csv"
        assert main(["table1", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "Platoon" in text and "Uniform" in text and "Abnormal" in text
        assert len(out.read_text().splitlines()) == 4

    def test_simulate_command(self, tmp_path, capsys):
        out = tmp_path / "traj.csv"
        code = main([
            "simulate", "--n", "6", "--members", "1-4", "--horizon", "5",
            "--magnitude", "0.5", "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "time,vehicle,spacing,velocity,control"
        assert len(lines) == 1 + 501 * 6

    def test_simulate_collision_exits_3(self, tmp_path, capsys):
        code = main([
            "simulate", "--n", "4", "--members", "",
            "--alpha", "0.2", "--beta", "0.2",
            "--disturbance", "brake-pulse", "--target", "1",
            "--magnitude", "10", "--duration", "5", "--horizon", "30",
            "--out", str(tmp_path / "t.csv"),
        ])
        assert code == 3

    def test_console_script_installed(self):
        proc = subprocess.run(
            [sys.executable, "-m", "avformation.cli", "counterexample", "--n", "12"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "holds: False" in proc.stdout
