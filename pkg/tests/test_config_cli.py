import csv
import math
from pathlib import Path

import pytest

from l2morse.cli import fmt, main
from l2morse.config import ConfigError, load_config, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = "[complex]\nbase = circle(3)\n"


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.run["cheb_eps"] == 1e-8 and cfg.run["ker_tol"] == 1e-8
    assert cfg.run["t_list"] == [1.0] and cfg.run["seed"] == 0
    assert cfg.group["kind"] == "lattice" and cfg.morse["pattern"] == "none"
    assert list(cfg.folner_range) == [10]


def test_duplicate_key_reports_second_line():
    text = MINIMAL + "[run]\ns = 1.0\n# comment\ns = 2.0\n"
    with pytest.raises(ConfigError, match=r"line 6: duplicate key run\.s \(first set on line 4\)"):
        parse_config(text)


@pytest.mark.parametrize(
    "extra, needle",
    [
        ("[group]\nkind = cyclic\norder = 4\nrank = 2\n", r"line 6: group\.rank is not allowed"),
        ("[group]\nkind = cyclic\n", r"group\.order >= 1 is required"),
        ("[group]\nkind = free\n", r"line 4: group\.kind"),
        ("[run]\nfoo = 1\n", r"line 4: unknown key run\.foo"),
        ("[run]\nseed = x\n", r"line 4: run\.seed: invalid value"),
        ("[run]\ncheb_eps = -1\n", r"line 4: run\.cheb_eps must be > 0"),
        ("[run]\nt_list = 1, nan\n", r"run\.t_list"),
        ("[extra]\n", r"line 3: unknown section"),
        ("[morse]\npattern = file\n", r"morse\.path is required"),
        ("[run]\njust words\n", r"line 4: expected 'key = value'"),
    ],
)
def test_config_errors(extra, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(MINIMAL + extra)


def test_missing_base_and_stray_key():
    with pytest.raises(ConfigError, match="complex.base is required"):
        parse_config("[run]\ns = 1\n")
    with pytest.raises(ConfigError, match="line 1: key outside"):
        parse_config("s = 1\n")


def test_relative_paths_resolve_against_config_dir(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(MINIMAL + "[run]\noutput = results\n")
    cfg = load_config(path)
    assert cfg.resolve(cfg.run["output"]) == tmp_path / "results"


def test_unreadable_config():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/cfg.ini")


def test_fmt_uses_17_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(True) == "pass" and fmt(3) == "3"


def read_csv(path):
    with open(path, newline="") as fp:
        return list(csv.reader(fp))


def test_morse_verify_zigzag_exit_0(tmp_path):
    code = main(["morse-verify", "--config", str(CONFIGS / "zigzag_circle.ini"), "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "ledger.csv")
    assert rows[0] == ["k", "lhs_avg", "rhs", "verdict", "folner_k", "defect"]
    assert all(r[3] == "pass" for r in rows[1:])
    assert (tmp_path / "heat_ledger.csv").exists()


def test_morse_verify_quasiperiodic_tol_zero_exit_2(tmp_path):
    text = (CONFIGS / "quasiperiodic_circle.ini").read_text().replace("tol = 5e-2", "tol = 0")
    assert "tol = 0\n" in text
    cfg = tmp_path / "q.ini"
    cfg.write_text(text)
    assert main(["morse-verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_malformed_config_exit_1(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(MINIMAL + "[run]\ns = 1\ns = 2\n")
    assert main(["oracle-betti", "--config", str(cfg)]) == 1
    assert "line 5" in capsys.readouterr().err


def test_runtime_error_exit_1(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[complex]\nbase = sphere(2)\n")
    assert main(["oracle-betti", "--config", str(cfg)]) == 1
    assert "error" in capsys.readouterr().err


def test_morse_verify_without_pattern_is_an_error(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL)
    assert main(["morse-verify", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_oracle_betti_csv(tmp_path):
    assert main(["oracle-betti", "--config", str(CONFIGS / "cyclic4_circle.ini"), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "betti.csv")
    assert rows[0] == ["degree", "value", "method", "tolerance", "samples"]
    assert [r[1] for r in rows[1:]] == ["0.25"] * 4
    assert {r[2] for r in rows[1:]} == {"finite_cover", "floquet_rational"}


def test_heat_trace_csv(tmp_path):
    assert main(["heat-trace", "--config", str(CONFIGS / "zigzag_circle.ini"), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "traces.csv")
    assert rows[0] == ["g", "degree", "s", "t", "trace"]
    # 21 tiles, two degrees, two deformation values
    assert len(rows) == 1 + 21 * 2 * 2
    assert all(0 < float(r[4]) < 3 for r in rows[1:])


def test_decay_fit_csv(tmp_path):
    assert main(["decay-fit", "--config", str(CONFIGS / "zigzag_circle.ini"), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "decay.csv")
    assert rows[0][-1] == "gaussian_class"
    assert all(r[-1] == "pass" and float(r[5]) > 0 for r in rows[1:])


def test_trace_props_csv(tmp_path):
    code = main(["trace-props", "--config", str(CONFIGS / "quasiperiodic_circle.ini"), "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "defects.csv")
    assert rows[0] == ["pair", "k", "average", "bound", "normalized", "verdict"]
    pairs = [r for r in rows[1:] if r[0] != "mean"]
    assert len(pairs) == 100 * 31 and all(r[5] == "pass" for r in pairs)
    assert all(math.isfinite(float(r[2])) for r in pairs)


def test_trace_props_small_k_fails_final_threshold(tmp_path):
    code = main(["trace-props", "--config", str(CONFIGS / "zigzag_circle.ini"), "--out", str(tmp_path)])
    assert code == 2


@pytest.mark.parametrize("command", ["oracle-betti", "heat-trace", "morse-verify", "trace-props", "decay-fit"])
def test_repeated_runs_are_byte_identical(tmp_path, command):
    outs = []
    for i in range(2):
        out = tmp_path / str(i)
        main([command, "--config", str(CONFIGS / "cyclic4_circle.ini"), "--out", str(out)])
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1] and outs[0]
