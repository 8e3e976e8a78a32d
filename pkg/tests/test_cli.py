import json
import subprocess
import sys

import jsonschema
import pytest

from hardyc.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, load_schema, main

SCHEMA = load_schema()


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def record(capsys, *argv, expect=EXIT_OK):
    code, out, err = run(capsys, *argv)
    assert code == expect, err
    doc = json.loads(out)
    jsonschema.validate(doc, SCHEMA)
    assert doc["schema"] == "hardyc/1"
    assert doc["manifest"]["command"] == argv[0]
    return doc["result"]


def test_potential_reduced_point(capsys):
    res = record(capsys, "potential", "--d", "3", "--reduced", "0.5,0")
    assert res["value_closed"] == pytest.approx(29.608813203271076, rel=1e-10)
    assert res["agree"] is True


def test_potential_cartesian_point(capsys):
    res = record(capsys, "potential", "--d", "3", "--point", "1,0,0", "--R", "0.5")
    assert res["agree"] is True
    assert res["error_bound"] <= 1e-10


@pytest.mark.parametrize("method,missing", [("closed", "value_series"), ("series", "value_closed")])
def test_potential_single_method(capsys, method, missing):
    res = record(capsys, "potential", "--reduced", "0.3,0.2", "--method", method)
    assert res[missing] is None and res["agree"] is None


def test_bounds_values(capsys):
    res = record(capsys, "bounds", "--d", "4", "--R", "0.5")
    assert res["upper"] == 1.0
    assert res["alpha_opt"] == pytest.approx(-0.158561625594958, rel=1e-12)
    assert res["lower"] == pytest.approx(res["C1"] ** -1 * 4 / (4 * 3.141592653589793), rel=1e-12)


def test_verify_passing_suite(capsys):
    res = record(capsys, "verify", "--suite", "local", "--samples", "50")
    assert res["passed"] is True


def test_mu_record(capsys):
    res = record(capsys, "mu", "--d", "4", "--R", "1.0", "--grid", "64x32")
    assert res["lower"] <= res["mu_hat"] <= res["upper"]


def test_mu_sandwich_failure_exits_one(capsys):
    # upper side misses at this radius, the record is still written
    res = record(capsys, "mu", "--d", "3", "--R", "0.5", "--grid", "64x32", expect=EXIT_FAIL)
    assert res["mu_hat"] > res["upper"]


def test_sweep_json_and_csv_agree(capsys):
    res = record(capsys, "sweep", "--R-list", "1.0,0.5", "--grid", "32x16", "--out", "json")
    code, out, _ = run(capsys, "sweep", "--R-list", "1.0,0.5", "--grid", "32x16")
    assert code == EXIT_OK
    assert "\r" not in out and out.endswith("\n")
    lines = out.splitlines()
    assert lines[0] == "R,lower,mu_hat,upper,gap,grid,delta"
    assert len(lines) == 3 and all(len(l.split(",")) == 7 for l in lines)
    assert [float(l.split(",")[2]) for l in lines[1:]] == [r["mu_hat"] for r in res["rows"]]


def test_single_radius_sweep_matches_mu(capsys):
    rows = record(capsys, "sweep", "--R-list", "0.5", "--grid", "32x16", "--out", "json")["rows"]
    mu = record(capsys, "mu", "--R", "0.5", "--grid", "32x16", expect=EXIT_FAIL)
    assert rows[0]["mu_hat"] == mu["mu_hat"]


def test_output_is_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for f in (a, b):
        assert main(["verify", "--suite", "identities", "--samples", "20", "--seed", "7", "-o", str(f)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["manifest"]["wall_time_s"] is None


def test_timing_flag_records_wall_time(capsys):
    code, out, _ = run(capsys, "bounds", "--timing")
    assert code == EXIT_OK
    assert json.loads(out)["manifest"]["wall_time_s"] >= 0


@pytest.mark.parametrize("argv", [
    ["potential", "--reduced", "0,0"],
    ["potential", "--reduced", "1.0,0"],
    ["potential", "--point", "1,2"],
    ["potential", "--point", "a,b,c"],
    ["potential", "--reduced", "0.5"],
    ["potential", "--reduced", "0.5,-1"],
    ["bounds", "--d", "2"],
    ["bounds", "--R", "-1"],
    ["verify", "--suite", "nonsense"],
    ["verify", "--suite", "identities", "--samples", "0"],
    ["mu", "--grid", "64by32"],
    ["mu", "--grid", "3x3"],
    ["mu", "--ladder", "64x32,32x16"],
    ["sweep", "--R-list", "0.5,1.0"],
    ["sweep", "--R-list", "0.5,0.5"],
    ["frobnicate"],
    ["potential"],
])
def test_usage_errors_exit_two(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == EXIT_USAGE
    assert out == ""
    assert err


def test_bad_thread_setting_exits_two(capsys, monkeypatch):
    monkeypatch.setenv("HARDYC_THREADS", "-3")
    code, _, err = run(capsys, "bounds")
    assert code == EXIT_USAGE and "HARDYC_THREADS" in err


def test_module_entry_point():
    p = subprocess.run([sys.executable, "-m", "hardyc", "bounds", "--d", "5"],
                       capture_output=True, text=True, check=False)
    assert p.returncode == 0
    assert json.loads(p.stdout)["result"]["upper"] == 2.25
