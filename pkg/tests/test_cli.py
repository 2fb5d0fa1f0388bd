import json
import subprocess
import sys

import numpy as np
import pytest

from kpzkit.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, main, read_config_file, resolve
from kpzkit.io import read_csv, write_csv
from kpzkit.rng import stream

FAST_TW = ["--s-min", "-4", "--s-max", "2", "--ds", "0.5", "--n", "20"]


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def outputs(tmp_path, pattern):
    return sorted(tmp_path.glob(pattern))


class TestConfig:
    def test_defaults_file_flags(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("# tw table\nds = 0.5\nn = 30\ns-min = -3\n")
        c = resolve(["tw-table", "--config", str(cfg), "--n", "25"])
        assert c["ds"] == 0.5 and c["n"] == 25 and c["s_min"] == -3.0 and c["which"] == "gue"

    def test_read_config(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("a-b = 1  # comment\n\n")
        assert read_config_file(p) == {"a_b": "1"}

    @pytest.mark.parametrize("argv", [
        ["tw-table", "--which", "goe2"],
        ["tw-table", "--ds", "-1"],
        ["simulate-asep", "--seed", "-3"],
        ["simulate-asep", "--p", "0.7"],
        ["tau-moment", "--N", "2", "--sites", "1"],
        ["simulate-she", "--check", "crossover", "--t", "2"],
        ["simulate-she", "--check", "moments", "--t", "0.1001"],
        ["simulate-polymer", "--dist", "exponential", "--beta", "1.0"],
        ["compare", "--samples", "missing.csv", "--table", "missing.csv"],
        ["tw-table", "--bogus", "1"],
        [],
    ])
    def test_config_errors_exit_2(self, tmp_path, argv):
        assert main(argv + (["--out", str(tmp_path)] if argv else [])) == EXIT_CONFIG

    def test_unknown_file_key(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("replicas = 10\n")
        assert run(tmp_path, "tw-table", "--config", str(p)) == EXIT_CONFIG


class TestOutputs:
    def test_tw_table_reproducible_and_cached(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(a, "tw-table", *FAST_TW) == EXIT_PASS
        assert run(b, "tw-table", *FAST_TW) == EXIT_PASS
        fa, fb = outputs(a, "tw-gue-*.csv"), outputs(b, "tw-gue-*.csv")
        assert len(fa) == 1 and fa[0].name == fb[0].name
        assert fa[0].read_bytes() == fb[0].read_bytes()
        assert len(outputs(a, "cache/*.csv")) == 1
        # a second run in the same directory reads the cache and writes the same bytes
        before = fa[0].read_bytes()
        assert run(a, "tw-table", *FAST_TW) == EXIT_PASS
        assert fa[0].read_bytes() == before

    def test_table_refinement(self, tmp_path):
        s = ["--s-min", "-4", "--s-max", "2", "--ds", "1"]
        run(tmp_path / "lo", "tw-table", *s, "--n", "40", "--L", "10")
        run(tmp_path / "hi", "tw-table", *s, "--n", "80", "--L", "20")
        lo, _ = read_csv(outputs(tmp_path / "lo", "tw-*.csv")[0])
        hi, _ = read_csv(outputs(tmp_path / "hi", "tw-*.csv")[0])
        assert np.max(np.abs(lo["F"] - hi["F"])) < 1e-8

    def test_config_hash_in_outputs(self, tmp_path):
        run(tmp_path, "tw-table", *FAST_TW)
        f = outputs(tmp_path, "tw-gue-*.csv")[0]
        _, com = read_csv(f)
        assert f.name == f"tw-gue-{com['config_hash']}.csv"

    def test_asep_summary(self, tmp_path):
        args = ["simulate-asep", "--t", "5", "--replicas", "20", "--seed", "3", "--sites=-1,0,2"]
        assert run(tmp_path, *args) == EXIT_PASS
        cols, com = read_csv(outputs(tmp_path, "asep-*.csv")[0])
        assert set(cols) == {"replica", "h[site -1]", "h[site 0]", "h[site 2]"}
        rep = json.loads(outputs(tmp_path, "asep-*.json")[0].read_text())
        assert rep["seed"] == 3 and rep["n_samples"] == 20 and rep["config_hash"] == com["config_hash"]

    def test_tau_moment_pass(self, tmp_path):
        args = ["tau-moment", "--N", "1", "--sites", "1", "--t", "0.5", "--replicas", "3000", "--seed", "2"]
        assert run(tmp_path, *args) == EXIT_PASS
        rep = json.loads(outputs(tmp_path, "tau-moment-*.json")[0].read_text())
        assert rep["pass"] is True and abs(rep["estimate"] - rep["details"]["contour"]) <= 3 * rep["se"]

    def test_polymer_beta_zero(self, tmp_path):
        args = ["simulate-polymer", "--beta", "0", "--N-ladder", "8,16,32", "--replicas", "10"]
        assert run(tmp_path, *args) == EXIT_PASS

    def test_compare_fail_exit_1(self, tmp_path):
        run(tmp_path, "tw-table", *["--s-min", "-8", "--s-max", "4", "--ds", "0.1", "--n", "30"])
        table = next(p for p in outputs(tmp_path, "cache/*.csv"))
        samples = tmp_path / "x.csv"
        write_csv(samples, {"x": stream(0, "cli").standard_normal(2000)})
        assert run(tmp_path, "compare", "--samples", str(samples), "--table", str(table)) == EXIT_FAIL
        rep = json.loads(outputs(tmp_path, "compare-*.json")[0].read_text())
        # a standard normal is far from F_GUE (means -1.77 vs 0)
        assert rep["pass"] is False and rep["estimate"] > 0.3

    def test_compare_pass(self, tmp_path):
        run(tmp_path, "tw-table", *["--s-min", "-8", "--s-max", "4", "--ds", "0.05", "--n", "30"])
        from kpzkit.distributions import DistributionTable
        table = outputs(tmp_path, "cache/*.csv")[0]
        x = DistributionTable.from_csv(table).sample(2000, stream(1, "cli"))
        samples = tmp_path / "x.csv"
        write_csv(samples, {"x": x})
        assert run(tmp_path, "compare", "--samples", str(samples), "--table", str(table)) == EXIT_PASS

    def test_she_brownian_report(self, tmp_path):
        args = ["simulate-she", "--check", "brownian", "--t", "0.02", "--dx", "0.05",
                "--replicas", "200", "--seed", "4"]
        code = run(tmp_path, *args)
        rep = json.loads(outputs(tmp_path, "she-brownian-*.json")[0].read_text())
        assert code == (EXIT_PASS if rep["pass"] else EXIT_FAIL)
        assert len(rep["details"]["variance"]) == 4


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "kpzkit", "tw-table", *FAST_TW, "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "tw-gue-" in r.stdout


@pytest.mark.parametrize("command", ["tw-table", "crossover", "two-point", "simulate-asep", "tau-moment",
                                     "simulate-polymer", "simulate-she", "compare"])
def test_help_renders(command, capsys):
    assert main([command, "--help"]) == EXIT_PASS
    assert "--out" in capsys.readouterr().out
