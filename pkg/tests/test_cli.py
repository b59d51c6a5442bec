import json
import math
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from iqcgd import cli, rates
from iqcgd import io as iqio

SC = ["--m", "1", "--L", "10", "--alpha", "0.15", "--delta", "0.1", "--class", "strongly-convex"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def validated(out, name):
    doc = json.loads(out)
    jsonschema.validate(doc, iqio.load_schema(name))
    return doc


class TestCertify:
    def test_strongly_convex(self, capsys):
        code, out, _ = run(capsys, "certify", *SC)
        doc = validated(out, "certify")
        assert code == 0 and doc["certified"] and doc["mode"] == "optimize"
        c = doc["certificate"]
        assert c["rho"] == pytest.approx(0.865, abs=1e-15)
        assert c["lambda"] == pytest.approx(35)
        assert c["gamma"] == pytest.approx(0.556071, abs=1e-6)

    def test_sector(self, capsys):
        code, out, _ = run(capsys, "certify", "--m", "1", "--L", "10", "--alpha", "0.15", "--delta", "0.1",
                           "--class", "sector")
        doc = validated(out, "certify")
        assert code == 0
        assert doc["certificate"]["rho"] == pytest.approx(0.872673, abs=1e-6)
        assert doc["regime"] == rates.RegimeKind.PROP2_INTERIOR.value

    def test_divergent(self, capsys):
        code, out, _ = run(capsys, "certify", "--m", "1", "--L", "10", "--alpha", "0.3", "--delta", "0.5",
                           "--class", "sector")
        doc = validated(out, "certify")
        assert code == 0 and doc["divergent"]
        assert doc["certificate"]["rho"] == pytest.approx(3.5, abs=1e-12)

    def test_decision_mode(self, capsys):
        code, out, _ = run(capsys, "certify", *SC, "--rho", "0.86")
        doc = validated(out, "certify")
        assert code == 2 and not doc["certified"] and doc["certificate"] is None
        code, out, _ = run(capsys, "certify", *SC, "--rho", "0.9")
        doc = validated(out, "certify")
        assert code == 0 and doc["rho_query"] == 0.9

    def test_alpha_frac(self, capsys):
        code, out, _ = run(capsys, "certify", "--m", "1", "--L", "10", "--alpha-frac", "1", "--class", "sector")
        doc = validated(out, "certify")
        assert code == 0
        assert doc["certificate"]["rho"] == pytest.approx(9 / 11, abs=1e-9)

    @pytest.mark.parametrize("argv", [
        ["certify", "--m", "10", "--L", "1", "--alpha", "0.1", "--class", "sector"],
        ["certify", "--m", "1", "--L", "10", "--class", "sector"],
        ["certify", "--m", "1", "--L", "10", "--alpha", "0.1", "--alpha-frac", "1", "--class", "sector"],
        ["certify", "--m", "1", "--L", "10", "--alpha", "0.1", "--delta", "1.5", "--class", "sector"],
        ["certify", "--m", "1", "--L", "10", "--alpha", "0.1", "--class", "convex"],
        ["certify", "--m", "1", "--L", "10", "--alpha", "0.1", "--class", "sector", "--rho", "-1"],
        ["frobnicate"],
        [],
    ])
    def test_usage_errors(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == 1 and err

    def test_byte_stable(self, capsys):
        outs = {run(capsys, "certify", *SC)[1] for _ in range(3)}
        assert len(outs) == 1

    def test_seventeen_digits(self, capsys):
        _, out, _ = run(capsys, "certify", *SC)
        doc = json.loads(out)
        g = doc["certificate"]["gamma"]
        assert f'"gamma": {iqio.fmt17(g)}' in out
        assert float(iqio.fmt17(g)) == g


class TestSweep:
    def test_noiseless_column(self, capsys):
        code, out, _ = run(capsys, "sweep", "--m", "1", "--L", "10", "--alpha", "0.05, 0.1, 0.15, 0.19",
                           "--delta", "0", "--class", "sector")
        assert code == 0
        rows = [r.split(",") for r in out.strip().splitlines()]
        assert rows[0] == list(cli.SWEEP_HEADER)
        for r in rows[1:]:
            a = float(r[2])
            assert float(r[6]) == pytest.approx(max(1 - a, 10 * a - 1), abs=1e-9)

    def test_strongly_convex_window_tight(self, capsys):
        d = 0.1
        hi = rates.alpha_sharp(1, 10, d)
        code, out, _ = run(capsys, "sweep", "--m", "1", "--L", "10", "--alpha", f"linspace(0.1, {hi!r}, 7)",
                           "--delta", str(d), "--class", "strongly-convex")
        rows = [r.split(",") for r in out.strip().splitlines()[1:]]
        assert code == 0 and len(rows) == 7
        assert all(abs(float(r[10])) <= 1e-9 for r in rows)

    def test_sector_interior_gap_positive(self, capsys):
        spec_lo = rates.alpha_minus(1, 10, 0.1)
        spec_hi = rates.alpha_plus(1, 10, 0.1)
        code, out, _ = run(capsys, "sweep", "--m", "1", "--L", "10",
                           "--alpha", f"linspace({spec_lo + 1e-3!r}, {spec_hi - 1e-3!r}, 5)",
                           "--delta", "0.1", "--class", "sector")
        rows = [r.split(",") for r in out.strip().splitlines()[1:]]
        assert code == 0
        assert all(r[5] == rates.RegimeKind.PROP2_INTERIOR.value and float(r[10]) > 0 for r in rows)

    def test_config_file_and_order(self, capsys, tmp_path):
        cfg = tmp_path / "grid.cfg"
        out_path = tmp_path / "out.csv"
        cfg.write_text("# grid\nm = 1\nL = 10, 100\nalpha_frac = linspace(0.5, 1, 3)  # fractions\n"
                       f"delta = 0 0.1\nclass = sector, strongly-convex\noutput = {out_path}\nworkers = 3\n")
        code, out, _ = run(capsys, "sweep", str(cfg))
        assert code == 0 and out == ""
        rows = [r.split(",") for r in out_path.read_text().strip().splitlines()[1:]]
        assert len(rows) == 2 * 3 * 2 * 2
        keys = [(float(r[1]), float(r[2]), float(r[3]), r[4]) for r in rows]
        assert [k[0] for k in keys] == sorted(k[0] for k in keys)
        assert keys[0][3] == "sector" and keys[1][3] == "strongly-convex"
        code, _, _ = run(capsys, "sweep", str(cfg), "--workers", "1", "--output", str(tmp_path / "b.csv"))
        assert (tmp_path / "b.csv").read_bytes() == out_path.read_bytes()

    def test_flag_overrides_config(self, capsys, tmp_path):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text("alpha = 0.1\ndelta = 0.1\n")
        _, out, _ = run(capsys, "sweep", str(cfg), "--delta", "0.2")
        assert out.strip().splitlines()[1].split(",")[3] == "0.20000000000000001"

    @pytest.mark.parametrize("text", ["alpha = 0.1\nbogus = 3\n", "alpha = \n", "alpha 0.1\n",
                                      "alpha = linspace(0, 1, 0)\n", "alpha = 0.1\nworkers = 0\n",
                                      "alpha = -0.1\n", "alpha = 0.1\nalpha_frac = 1\n", "delta = 0.1\n"])
    def test_bad_config(self, capsys, tmp_path, text):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(text)
        code, _, err = run(capsys, "sweep", str(cfg))
        assert code == 1 and err

    def test_unwritable_output(self, capsys, tmp_path):
        code, _, err = run(capsys, "sweep", "--alpha", "0.1", "--output", str(tmp_path / "missing" / "x.csv"))
        assert code == 1 and "cannot write" in err

    def test_missing_config(self, capsys, tmp_path):
        assert run(capsys, "sweep", str(tmp_path / "nope.cfg"))[0] == 1

    def test_parse_values(self):
        assert cli.parse_values("linspace(0, 1, 3)") == [0.0, 0.5, 1.0]
        assert cli.parse_values("[1, 2 3]") == [1.0, 2.0, 3.0]
        with pytest.raises(cli.UsageError):
            cli.parse_values("a, b")


class TestSimulate:
    def test_witness_closed_form(self, capsys, tmp_path):
        csv_path = tmp_path / "t.csv"
        code, out, _ = run(capsys, "simulate", "--m", "1", "--L", "10", "--alpha", "0.18", "--delta", "0.1",
                           "--function", "quadratic", "--policy", "plus", "--out", str(csv_path))
        doc = validated(out, "simulate")
        assert code == 0
        assert doc["empirical_rate"] == pytest.approx(0.98, abs=1e-12)
        lines = csv_path.read_text().splitlines()
        assert lines[0].startswith("k,x_0,dist") and len(lines) == 502

    def test_zigzag_greedy_sound(self, capsys, tmp_path):
        code, out, _ = run(capsys, "simulate", *SC, "--function", "zigzag", "--policy", "greedy",
                           "--out", str(tmp_path / "z.csv"))
        doc = validated(out, "simulate")
        assert code == 0 and doc["sound"] and doc["noise_bound_ok"]
        assert doc["certified_rate"] == pytest.approx(0.865)

    def test_sphere_seed(self, capsys, tmp_path):
        seen = set()
        for seed in range(4):
            path = tmp_path / f"s{seed}.csv"
            _, out, _ = run(capsys, "simulate", *SC, "--function", "diagonal", "--spectrum", "1,3,10",
                            "--policy", "sphere", "--seed", str(seed), "--out", str(path))
            doc = validated(out, "simulate")
            assert doc["sound"] and doc["seed"] == seed
            seen.add(path.read_text())
        assert len(seen) == 4

    def test_divergent_is_sound(self, capsys, tmp_path):
        code, out, _ = run(capsys, "simulate", "--m", "1", "--L", "10", "--alpha", "0.3", "--delta", "0.5",
                           "--policy", "plus", "--out", str(tmp_path / "d.csv"))
        doc = validated(out, "simulate")
        assert code == 0 and doc["diverged"] and doc["sound"]

    def test_oscillator_defaults_to_sector(self, capsys, tmp_path):
        _, out, _ = run(capsys, "simulate", "--m", "1", "--L", "10", "--alpha", "0.1", "--delta", "0.1",
                        "--function", "oscillator", "--out", str(tmp_path / "o.csv"))
        assert validated(out, "simulate")["spec"]["class"] == "sector"

    def test_oscillator_rejected_for_strongly_convex(self, capsys, tmp_path):
        code, _, err = run(capsys, "simulate", *SC, "--function", "oscillator", "--out", str(tmp_path / "o.csv"))
        assert code == 1 and "strongly convex" in err

    def test_byte_stable(self, capsys, tmp_path):
        outs = set()
        for i in range(2):
            path = tmp_path / f"b{i}.csv"
            _, out, _ = run(capsys, "simulate", *SC, "--policy", "sphere", "--seed", "7", "--out", str(path))
            outs.add((out, path.read_bytes()))
        assert len(outs) == 1

    def test_unwritable(self, capsys, tmp_path):
        code, _, _ = run(capsys, "simulate", *SC, "--out", str(tmp_path / "no" / "x.csv"))
        assert code == 1


class TestVerify:
    @pytest.mark.parametrize("argv", [
        SC,
        ["--m", "1", "--L", "10", "--alpha", "0.05", "--delta", "0.1", "--class", "sector"],
        ["--m", "1", "--L", "10", "--alpha", "0.15", "--delta", "0.1", "--class", "sector"],
        ["--m", "1", "--L", "10", "--alpha-frac", "1", "--class", "sector"],
    ])
    def test_passes(self, capsys, argv):
        code, out, err = run(capsys, "verify", *argv)
        doc = validated(out, "verify")
        assert code == 0, err
        assert doc["passed"]
        assert [s["name"] for s in doc["stages"]] == ["closed_form", "endpoints", "minimal_stability",
                                                      "dissipation", "lyapunov", "witness"]

    def test_fault_injection(self, capsys):
        code, out, err = run(capsys, "verify", *SC, "--inject-fault", "lyapunov")
        doc = validated(out, "verify")
        assert code == 3 and not doc["passed"]
        assert doc["stages"][-1]["name"] == "lyapunov"
        assert "stage: lyapunov" in err


def test_dumps17_round_trip():
    vals = [0.1, 1 / 3, 2 / 11, 1e-300, 5e-324, 1.7976931348623157e308, -0.0, 3.5]
    text = iqio.dumps17({"v": vals, "n": math.nan, "i": np.float64(math.inf), "k": np.int64(3)})
    doc = json.loads(text)
    assert doc["v"] == vals and doc["n"] is None and doc["i"] is None and doc["k"] == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "iqcgd", "certify", *SC], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["certificate"]["lambda"] == pytest.approx(35)
