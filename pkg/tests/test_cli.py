import json
import subprocess
import sys

import pytest

from conetess import cli
from conetess import experiments as E
from conetess.combinatorics import theta


def rows(text):
    return {line.split("\t")[0]: line.split("\t")[1:] for line in text.strip().splitlines()}


def test_exact_table(capsys):
    assert cli.main(["exact", "--d", "3", "--n", "6"]) == 0
    table = rows(capsys.readouterr().out)
    assert table["E_V_3_schlafli"][0] == "1/32"
    assert table["E_f_1_schlafli"][:2] == ["15/4", "3.7500000000000000"]
    assert table["E_Lambda_2_cover_efron"][0] == "15/16"
    assert table["theta_6_3"][0].startswith("0.07914279043510")


def test_exact_single_cell(capsys):
    assert cli.main(["exact", "--d", "2", "--n", "0"]) == 0
    assert rows(capsys.readouterr().out)["E_f_2_schlafli"][0] == "1"


def test_exact_covariance_table(capsys, tmp_path):
    out = tmp_path / "cov.tsv"
    assert cli.main(["exact", "--d", "3", "--n", "6", "--table", "covariance", "--out", str(out)]) == 0
    lines = [l.split("\t") for l in out.read_text().splitlines()]
    assert lines[0] == ["r\\s", "1", "2", "3"]
    M = [[float(x) for x in l[1:]] for l in lines[1:]]
    assert M[0][2] == M[2][0]
    assert M[2][2] == pytest.approx(float(theta(6, 3)) / 32 - 1 / 32**2, rel=1e-15)


@pytest.mark.parametrize("argv", [
    ["exact", "--d", "0", "--n", "3"],
    ["exact", "--d", "3"],
    ["exact", "--d", "3", "--n", "4", "--verbose"],
    ["verify", "--d", "1", "--n", "3"],
    ["simulate", "--d", "3", "--n", "6", "--model", "nope"],
    ["simulate", "--n", "6"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as info:
        sys.exit(cli.main(argv))
    assert info.value.code == 2


@pytest.mark.parametrize("sub", ["exact", "simulate", "verify", "covariance", "identities"])
def test_help_lists_flags(sub, capsys):
    with pytest.raises(SystemExit):
        cli.main([sub, "--help"])
    text = capsys.readouterr().out
    assert "--d" in text or "--config" in text


def test_simulate_with_config_and_override(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"d": 2, "n": 1, "functionals": ["Lambda_1*Lambda_1"], "replicates": 500}))
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(conf), "--replicates", "150", "--out", str(out)]) == 0
    rep = E.read_report(out / "report.json")
    assert rep.config["replicates"] == 150
    assert (out / "report.csv").read_text().count("\n") == 2


def test_simulate_gate_failure_exits_1(capsys):
    code = cli.main(["simulate", "--d", "3", "--n", "6", "--functionals", "Lambda_2",
                     "--replicates", "400", "--sigma-gate", "1e-9"])
    assert code == 1


def test_simulate_hard_assertion_exits_3(monkeypatch, tmp_path, capsys):
    def boom(*a, **k):
        raise E.HardAssertionFailure("cell count mismatch", {"d": 3, "normals": []}, 0)

    monkeypatch.setattr(cli, "run", boom)
    out = tmp_path / "o"
    assert cli.main(["simulate", "--d", "3", "--n", "6", "--out", str(out)]) == 3
    assert json.loads((out / "triage.json").read_text())["arrangement"]["d"] == 3


def test_identities_and_covariance_commands(capsys, tmp_path):
    assert cli.main(["identities", "--d", "2", "--n", "4", "--arrangements", "2"]) == 0
    assert cli.main(["covariance", "--d", "2", "--n", "4", "--replicates", "500", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "covariance.json").exists()


def test_verify_small_bundle(capsys):
    assert cli.main(["verify", "--d", "2", "--n", "4", "--budget", "600", "--arrangements", "2"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "e_cone_vs_schlafli" in out


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "conetess.cli", "exact", "--d", "2", "--n", "3"],
                         capture_output=True, text=True, check=True)
    assert "E_V_2_schlafli\t1/6" in res.stdout
