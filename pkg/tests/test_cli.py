import csv
import json
import math
import time

import numpy as np
import pytest
from scipy.special import lambertw

from wdbo.cli import main, normalize_minmax

FAST = ["--duration", "4", "--c0", "1", "--c3", "0", "--grid", "16"]


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestRun:
    def test_writes_files(self, tmp_path):
        code = main(["run", "--bench", "rastrigin", "--algo", "wdbo", "--alpha", "0.25",
                     "--seed", "7", "--out", str(tmp_path), *FAST])
        assert code == 0
        assert (tmp_path / "rastrigin_wdbo_a0.25_seed7.csv").exists()
        summary = json.loads((tmp_path / "rastrigin_wdbo_a0.25_seed7.json").read_text())
        assert summary["seed"] == 7 and summary["n_steps"] == 4

    def test_unknown_benchmark(self, tmp_path, capsys):
        assert main(["run", "--bench", "sphere", "--out", str(tmp_path)]) == 2
        assert "unknown benchmark" in capsys.readouterr().err

    def test_unknown_algorithm(self, tmp_path, capsys):
        assert main(["run", "--bench", "eggholder", "--algo", "abo", "--out", str(tmp_path)]) == 2
        assert "unknown algorithm" in capsys.readouterr().err

    def test_seed_count_aggregate(self, tmp_path):
        assert main(["run", "--bench", "eggholder", "--algo", "gp-ucb", "--seeds", "3",
                     "--out", str(tmp_path), *FAST]) == 0
        regrets = []
        for s in range(3):
            regrets.append(json.loads((tmp_path / f"eggholder_gp-ucb_seed{s}.json").read_text())
                           ["final_avg_regret"])
        agg = json.loads((tmp_path / "eggholder_gp-ucb_aggregate.json").read_text())
        assert agg["seeds"] == [0, 1, 2]
        assert agg["mean_avg_regret"] == pytest.approx(np.mean(regrets), rel=1e-12)
        assert agg["se_avg_regret"] == pytest.approx(np.std(regrets, ddof=1) / math.sqrt(3), rel=1e-12)

    def test_seed_list(self, tmp_path):
        assert main(["run", "--bench", "eggholder", "--algo", "gp-ucb", "--seeds", "4,9",
                     "--out", str(tmp_path), *FAST]) == 0
        assert (tmp_path / "eggholder_gp-ucb_seed9.csv").exists()

    def test_byte_identical_reruns(self, tmp_path):
        for sub in ("a", "b"):
            assert main(["run", "--bench", "eggholder", "--algo", "wdbo", "--seed", "2",
                         "--out", str(tmp_path / sub), *FAST]) == 0
        for ext in ("csv", "json"):
            name = f"eggholder_wdbo_a0.25_seed2.{ext}"
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_config_file_precedence(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("# experiment\nbench = eggholder\nalgo = gp-ucb\nduration = 2\n"
                       "c0 = 1\nc3 = 0\ngrid = 16\nseed = 5\n")
        assert main(["run", "--config", str(cfg), "--seed", "6", "--out", str(tmp_path)]) == 0
        summary = json.loads((tmp_path / "eggholder_gp-ucb_seed6.json").read_text())
        assert summary["n_steps"] == 2
        assert not (tmp_path / "eggholder_gp-ucb_seed5.json").exists()

    def test_config_file_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("speed = 3\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert "unknown key" in capsys.readouterr().err

    def test_list(self, capsys):
        assert main(["list"]) == 0
        out = capsys.readouterr().out
        assert "hartmann6" in out and "tv-gp-ucb" in out


class TestSensitivity:
    def test_normalization(self):
        assert normalize_minmax([2.0, 4.0, 3.0]) == [0.0, 1.0, 0.5]

    def test_zero_range_guard(self):
        assert normalize_minmax([1.5, 1.5]) == [0.0, 0.0]

    def test_needs_two_alphas(self, tmp_path, capsys):
        assert main(["sensitivity", "--alpha", "0.25", "--out", str(tmp_path)]) == 2

    def test_table(self, tmp_path):
        assert main(["sensitivity", "--bench", "eggholder", "--alpha", "0.1,0.25,0.5",
                     "--seeds", "2", "--out", str(tmp_path), *FAST]) == 0
        rows = read_rows(tmp_path / "sensitivity.csv")
        assert [float(r["alpha"]) for r in rows] == [0.1, 0.25, 0.5]
        norm = [float(r["normalized_regret"]) for r in rows]
        assert min(norm) == 0.0 and max(norm) in (0.0, 1.0)
        means = [float(r["mean_avg_regret"]) for r in rows]
        assert float(rows[0]["best_alpha"]) == [0.1, 0.25, 0.5][int(np.argmin(means))]


class TestDiagConv:
    def test_se_d1_quadrature(self, tmp_path):
        assert main(["diag-conv", "--family", "se", "--d", "1", "--samples", "2000",
                     "--n-grid", "8", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "diag_conv_se_d1.csv")
        assert len(rows) == 8
        assert all(float(r["rel_error"]) < 1e-6 for r in rows)
        # default points are 0.3 and 0.6
        w = float(np.real(lambertw(math.pi * 0.09 / 2)))
        expected = math.exp(0.5 * w) / math.sqrt(math.pi)
        assert float(rows[0]["critical_lengthscale"]) == pytest.approx(expected, rel=1e-12)

    def test_coincident_points(self, tmp_path):
        assert main(["diag-conv", "--family", "matern32", "--d", "2", "--x-i", "0.4,0.4",
                     "--x-j", "0.4,0.4", "--samples", "2000", "--n-grid", "3",
                     "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "diag_conv_matern32_d2.csv")
        assert float(rows[0]["critical_lengthscale"]) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-15)

    def test_unsupported_family(self, tmp_path, capsys):
        assert main(["diag-conv", "--family", "rq", "--out", str(tmp_path)]) == 2
        assert "unsupported kernel family" in capsys.readouterr().err

    def test_coordinate_count(self, tmp_path):
        assert main(["diag-conv", "--d", "2", "--x-i", "0.1", "--out", str(tmp_path)]) == 2

    @pytest.mark.slow
    def test_d3_budget(self, tmp_path):
        start = time.perf_counter()
        assert main(["diag-conv", "--family", "se", "--d", "3", "--samples", "100000",
                     "--out", str(tmp_path)]) == 0
        assert time.perf_counter() - start < 60
