import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import solve
from fraclhf.cli import (
    EXIT_CONFIG,
    EXIT_CONVERGENCE,
    EXIT_FAIL,
    EXIT_OK,
    EXIT_UNBOUND,
    PROFILE_HEADER,
    beta_table,
    dumps_json,
    fmt,
    main,
    parse_config,
)
from fraclhf.errors import ConfigurationError
from fraclhf.occupations import beta_from_alpha

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BE = """Z = 4
shells_up = 1s,2s
shells_down = 1s,2s
N_total = 2.9
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestParseConfig:
    def test_minimal(self):
        cfg = parse_config("Z = 2\nshells_up = 1s\nN_total = 0.5\n")
        assert cfg.Z == 2 and cfg.scheme_mode
        assert cfg.grid_n == 600 and cfg.grid_rmax == 40.0
        assert cfg.spec().N_total == pytest.approx(0.5)

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# header\n\nZ = 4  # beryllium\nshells_up = 1s\nshells_down = 1s\nN_total = 2\n")
        assert cfg.Z == 4

    @pytest.mark.parametrize(
        "text,line",
        [
            ("Z = 2\nfoo = 1\n", 2),
            ("Z = 2\nZ = 3\n", 2),
            ("Z = two\n", 1),
            ("Z = 2\nN_total = nan\n", 2),
            ("Z = 2\njust words\n", 2),
            ("Z = 2\n\nside = sideways\n", 3),
            ("Z = 2\nscan.N = 1, x\n", 2),
            ("Z = 2\noutput.profiles = maybe\n", 2),
        ],
    )
    def test_errors_carry_line(self, text, line):
        with pytest.raises(ConfigurationError, match=rf"cfg:{line}:"):
            parse_config(text, "cfg")

    @pytest.mark.parametrize(
        "text",
        [
            "shells_up = 1s\n",
            "Z = 2\nshells_up = 1x\n",
            "Z = 2\nhomo = 1s,up\nalpha = 0.5\nN_total = 1.5\n",
            "Z = 2\nalpha = 0.5\n",
            "Z = 2\nscf.mixing = 2\n",
            "Z = 2\ngrid.n = 3\n",
        ],
    )
    def test_semantic_errors(self, text):
        with pytest.raises(ConfigurationError):
            parse_config(text, "cfg")

    @pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.cfg")))
    def test_shipped_configs_parse(self, name):
        cfg = parse_config((CONFIGS / name).read_text(), name)
        assert cfg.Z >= 1

    def test_scan_points(self):
        cfg = parse_config("Z = 2\nshells_up = 1s\nshells_down = 1s\nscan.start = 0\nscan.stop = 2\nscan.step = 0.1\n")
        pts = cfg.scan_points()
        assert len(pts) == 21 and pts[0] == 0.0 and pts[-1] == 2.0
        assert pts[3] == 0.3


def test_fmt_and_json():
    assert fmt(0.1 + 0.2) == "0.3"
    assert fmt(3) == "3"
    assert fmt(True) == "true"
    rec = json.loads(dumps_json({"a": 1 / 3, "b": [2.0, "x"]}))
    assert rec["a"] == 0.333333333333


class TestSingle:
    def test_record_matches_library(self, tmp_path):
        out = tmp_path / "be.json"
        assert main(["single", "--config", write(tmp_path, BE), "--out", str(out)]) == EXIT_OK
        rec = json.loads(out.read_text())
        ref = solve(4, "1s,2s", "1s,2s", 2.9)
        assert rec["status"] == "ok"
        assert rec["E_direct"] == pytest.approx(ref.E_direct, rel=1e-11)
        assert (rec["N_up"], rec["N_down"]) == pytest.approx((1.9, 1.0))
        assert abs(rec["G_alpha"]) < 1e-6

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write(tmp_path, BE)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        main(["single", "--config", cfg, "--out", str(a)])
        main(["single", "--config", cfg, "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_profiles(self, tmp_path):
        out = tmp_path / "he.json"
        assert main(["single", "--config", str(CONFIGS / "he_explicit.cfg"), "--out", str(out)]) == EXIT_OK
        rows = read_csv(tmp_path / "he_profiles.csv")
        assert list(rows[0]) == PROFILE_HEADER
        assert len(rows) == 600
        rec = json.loads(out.read_text())
        assert rec["E_direct"] == pytest.approx(solve(2, "1s", "1s", 1.5).E_direct, abs=1e-9)

    def test_stdout(self, tmp_path, capsys):
        assert main(["single", "--config", write(tmp_path, BE)]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["status"] == "ok"


class TestExitCodes:
    def test_bad_config_writes_nothing(self, tmp_path):
        out = tmp_path / "out.json"
        cfg = write(tmp_path, BE + "bogus = 1\n")
        assert main(["single", "--config", cfg, "--out", str(out)]) == EXIT_CONFIG
        assert not out.exists()

    def test_missing_file(self, tmp_path):
        assert main(["single", "--config", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG

    def test_unbound(self, tmp_path):
        cfg = write(tmp_path, "Z = 1\nshells_up = 1s,2s\nshells_down = 1s,2s\nN_total = 3\n")
        out = tmp_path / "out.json"
        assert main(["single", "--config", cfg, "--out", str(out)]) == EXIT_UNBOUND
        assert not out.exists()

    def test_nonconverged(self, tmp_path):
        cfg = write(tmp_path, BE + "scf.max_iter = 2\n")
        assert main(["single", "--config", cfg]) == EXIT_CONVERGENCE

    def test_domain_error(self, tmp_path):
        cfg = write(tmp_path, "Z = 2\nshells_up = 1s\nshells_down = 1s\nN_total = 2.5\n")
        assert main(["single", "--config", cfg]) == EXIT_CONFIG

    def test_bad_delta(self, tmp_path):
        cfg = write(tmp_path, BE + "jump.N = 3\n")
        assert main(["jump", "--config", cfg, "--delta", "0.7"]) == EXIT_CONFIG

    def test_wick_bad_trials(self):
        assert main(["wick-verify", "--trials", "0"]) == EXIT_CONFIG


class TestScan:
    def test_rows_match_single(self, tmp_path):
        out = tmp_path / "scan.csv"
        cfg = write(tmp_path, BE + "scan.N = 2.9, 3.1\n")
        assert main(["scan", "--config", cfg, "--out", str(out)]) == EXIT_OK
        rows = read_csv(out)
        assert [r["status"] for r in rows] == ["ok", "ok"]
        assert float(rows[0]["E_direct"]) == pytest.approx(solve(4, "1s,2s", "1s,2s", 2.9).E_direct, rel=1e-11)
        assert float(rows[1]["E_direct"]) == pytest.approx(solve(4, "1s,2s", "1s,2s", 3.1).E_direct, rel=1e-11)
        header = list(rows[0])
        assert header[:9] == ["N", "N_up", "N_down", "alpha", "beta", "E_direct", "E_dft", "E_x",
                              "identity_residual"]
        assert header[-6:] == ["c_up", "c_down", "G_alpha", "G_beta", "iterations", "status"]
        assert "eps_2s_down" in header

    def test_failures_are_rows(self, tmp_path):
        out = tmp_path / "scan.csv"
        cfg = write(tmp_path, "Z = 1\nshells_up = 1s,2s\nshells_down = 1s\nscan.N = 0.5, 2.5, 5\n")
        assert main(["scan", "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert [r["status"] for r in read_csv(out)] == ["ok", "unbound", "config"]

    def test_empty_scan(self, tmp_path):
        out = tmp_path / "scan.csv"
        cfg = write(tmp_path, BE + "scan.N =\n")
        assert main(["scan", "--config", cfg, "--out", str(out)]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("N,N_up")

    def test_parallel_identical(self, tmp_path):
        cfg = write(tmp_path, BE + "scan.N = 2.8, 2.9\n")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["scan", "--config", cfg, "--out", str(a)])
        main(["scan", "--config", cfg, "--out", str(b), "--jobs", "2"])
        assert a.read_bytes() == b.read_bytes()


class TestJump:
    def test_zero_delta(self, tmp_path):
        out = tmp_path / "jump.csv"
        cfg = write(tmp_path, BE + "jump.N = 3\n")
        assert main(["jump", "--config", cfg, "--delta", "0", "--out", str(out)]) == EXIT_OK
        rows = read_csv(out)
        assert all(float(r["dv_up"]) == 0 and float(r["dv_down"]) == 0 for r in rows)
        summary = json.loads((tmp_path / "jump.json").read_text())
        assert summary["residual"] == 0 and summary["N_up"] == 2 and summary["N_down"] == 1

    def test_summary_to_stderr(self, tmp_path, capsys):
        cfg = write(tmp_path, BE + "jump.N = 3\n")
        assert main(["jump", "--config", cfg, "--delta", "0.1"]) == EXIT_OK
        cap = capsys.readouterr()
        summary = json.loads(cap.err[cap.err.index("{"):])
        assert summary["delta"] == 0.1
        assert summary["mean_dv_up"] < 0 < summary["mean_dv_down"]
        assert list(csv.DictReader(io.StringIO(cap.out)))[0].keys() >= {"r", "dv_up", "dv_down"}

    def test_needs_integer(self, tmp_path):
        assert main(["jump", "--config", write(tmp_path, BE)]) == EXIT_CONFIG


def test_beta_table(tmp_path):
    out = tmp_path / "beta.csv"
    assert main(["beta-table", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert len(rows) == 4 * 101
    vals = np.array([[float(r["N"]), float(r["alpha"]), float(r["beta"])] for r in rows])
    assert_allclose(vals[:, 2], [beta_from_alpha(int(N), a) for N, a, _ in vals], atol=1e-12)
    assert {tuple(r) for r in vals[vals[:, 1] == 0.0][:, 2:]} == {(0.0,)}
    assert {tuple(r) for r in vals[vals[:, 1] == 1.0][:, 2:]} == {(1.0,)}
    assert beta_table()[0] == (1, 0.0, 0.0)


def test_wick_verify(tmp_path):
    out = tmp_path / "wick.json"
    assert main(["wick-verify", "--trials", "20", "--seed", "7", "--out", str(out)]) == EXIT_OK
    rec = json.loads(out.read_text())
    assert rec["passed"] is True and rec["seed"] == 7
    assert rec["wick"] < 1e-12


def test_exit_fail_constant():
    assert EXIT_FAIL == 1
