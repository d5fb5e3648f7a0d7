import json
import subprocess
import sys

import pytest

from percolab.cli import (EXIT_CONFIG, EXIT_FAILED, EXIT_OK, ConfigError, main, resolve)


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out.read_bytes() if out.exists() else b""


SURVIVE = ("survive", "--graph", "z2-oriented", "--p", "0.65", "--N", "20", "40",
           "--trials", "300", "--seed", "4")


def test_survive_rerun_byte_identical(tmp_path):
    c1, a = run(tmp_path, *SURVIVE, name="a")
    c2, b = run(tmp_path, *SURVIVE, name="b")
    assert c1 == c2 == EXIT_OK and a == b
    lines = a.decode().split("\r\n")
    assert lines[0] == "graph,p,N,trials,survivors,p_hat,ci_lo,ci_hi,truncated"
    assert lines[1].startswith("z2-oriented,0.65000000000000002,20,300,")  # 17 digits


@pytest.mark.parametrize("cmd", [
    SURVIVE,
    ("pc", "--graph", "z2-oriented", "--N", "30", "--trials", "300"),
    ("bounds", "--check", "crossing", "--n", "2", "3", "--trials", "500", "--chi", "2"),
    ("coupling", "--graph", "star3", "--mode", "site", "--p", "0.5", "--trials", "2000"),
])
def test_threads_do_not_change_output(tmp_path, cmd):
    _, a = run(tmp_path, *cmd, "--threads", "1", name="a")
    _, b = run(tmp_path, *cmd, "--threads", "3", name="b")
    assert a == b and a


def test_missing_required_option(capsys):
    assert main(["survive", "--graph", "z2-oriented"]) == EXIT_CONFIG
    assert "missing required option --N" in capsys.readouterr().err


def test_domain_error_exit_code():
    assert main(["chi", "--p-h", "0.7"]) == EXIT_CONFIG
    assert main(["survive", "--graph", "nonsense", "--N", "3"]) == EXIT_CONFIG


def test_bad_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("[1, 2]")
    assert main(["chi", "--config", str(p)]) == EXIT_CONFIG
    assert main(["chi", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_config_precedence(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"graph": "hex", "trials": 50, "env": {"p_h": 0.4, "delta": 0.2}}))
    c = resolve("survive", {"config": str(p), "trials": 7, "N": [3]})
    assert c["trials"] == 7 and c["graph"] == "hex" and c["p_h"] == 0.4
    assert c["delta"] == 0.2 and c["max_sites"] == 10**6
    with pytest.raises(ConfigError):
        resolve("sweep", {})


def test_config_file_run_matches_flags(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"graph": "z2-oriented", "p": 0.65, "N": [20, 40], "trials": 300,
                             "seed": 4}))
    _, a = run(tmp_path, "survive", "--config", str(p), name="a")
    _, b = run(tmp_path, *SURVIVE, name="b")
    assert a == b


def test_sweep_rows(tmp_path):
    code, out = run(tmp_path, "sweep", "--graph", "z2-oriented", "--trials", "50")
    lines = [x for x in out.decode().split("\r\n") if x]
    assert code == EXIT_OK and len(lines) == 19


def test_records_file(tmp_path):
    rec = tmp_path / "rec.csv"
    run(tmp_path, *SURVIVE, "--records", str(rec))
    assert len(rec.read_text().splitlines()) == 301


def test_pc_json_and_curve(tmp_path):
    curve = tmp_path / "curve.csv"
    code, out = run(tmp_path, "pc", "--graph", "z2-oriented", "--N", "30", "--trials", "300",
                    "--curve", str(curve))
    d = json.loads(out)
    assert code == EXIT_OK and 0.5 < d["p_hat"] < 0.7
    assert curve.read_text().startswith("graph,mode,p,N")


def test_chi_json(tmp_path):
    code, out = run(tmp_path, "chi", "--p-h", "0.0", "--trials", "10")
    assert code == EXIT_OK and json.loads(out)["chi_hat"] == 1.0


def test_coupling_self_test(tmp_path):
    code, out = run(tmp_path, "coupling", "--self-test", "--trials", "20000")
    assert code == EXIT_OK and b"pass" in out


def test_coupling_self_test_failure(tmp_path):
    code, _ = run(tmp_path, "coupling", "--self-test", "--trials", "20000",
                  "--tolerance", "1e-9")
    assert code == EXIT_FAILED


def test_coupling_trace(tmp_path):
    tr = tmp_path / "trace.json"
    run(tmp_path, "coupling", "--p", "0.5", "--trials", "100", "--trace", str(tr))
    assert "steps" in json.loads(tr.read_text())


def test_bounds_inconclusive_exit_zero(tmp_path):
    code, out = run(tmp_path, "bounds", "--check", "crossing", "--p-b", "0.01", "--n", "2",
                    "3", "--trials", "200", "--chi", "2")
    assert code == EXIT_OK and json.loads(out)["verdict"] == "inconclusive"


@pytest.mark.parametrize("check,extra", [
    ("subcritical", ["--chi", "2"]),
    ("blocks", ["--seeds", "10", "--n-max", "4"]),
    ("growth", ["--seeds", "2", "--N", "40"]),
    ("critical", ["--N", "10", "20", "--trials", "200"]),
])
def test_bounds_checks(tmp_path, check, extra):
    series = tmp_path / "s.csv"
    code, out = run(tmp_path, "bounds", "--check", check, *extra, "--series", str(series))
    assert code == EXIT_OK and json.loads(out)
    if check != "subcritical":
        assert series.read_text()


def test_radii(tmp_path):
    code, out = run(tmp_path, "radii", "--N", "20", "--p-h", "0.0")
    assert code == EXIT_OK and out


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "percolab.cli", "chi", "--p-h", "0.0",
                          "--trials", "5"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["chi_hat"] == 1.0
