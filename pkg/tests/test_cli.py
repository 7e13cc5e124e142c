import csv
import subprocess
import sys

import pytest

from pbbsim import cli


def run_cli(*args):
    return cli.main(list(args))


def test_parse_seeds():
    assert cli.parse_seeds("1..5") == [1, 2, 3, 4, 5]
    assert cli.parse_seeds("3,7") == [3, 7]
    with pytest.raises(ValueError):
        cli.parse_seeds("5..1")


def test_scenarios_lists_bundled(capsys):
    assert run_cli("scenarios") == 0
    out = capsys.readouterr().out
    assert "Scenario.name = scenario1" in out and "Scenario.name = scenario2" in out
    assert run_cli("scenarios", "nope") == 1


def test_run_writes_reports(tmp_path, capsys):
    out = tmp_path / "r"
    assert run_cli("run", "--config", "scenario2", "--duration", "300", "--out", str(out),
                   "--trace") == 0
    rows = list(csv.reader(open(out / "report.csv", encoding="utf-8")))
    assert len(rows) == 11
    assert (out / "report.txt").exists() and (out / "trace.csv").exists()
    assert capsys.readouterr().out.startswith("scenario,seed,kind")


def test_run_with_config_file_and_seed(tmp_path):
    ini = tmp_path / "s.ini"
    ini.write_text((cli.config_mod.bundled_path("scenario1")).read_text()
                   .replace("World.duration = 43200", "World.duration = 200"))
    assert run_cli("run", "--config", str(ini), "--seed", "9", "--out", str(tmp_path / "o")) == 0
    rows = list(csv.DictReader(open(tmp_path / "o" / "report.csv", encoding="utf-8")))
    assert {r["seed"] for r in rows} == {"9"}


def test_config_error_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("World.width = -1\n")
    assert run_cli("run", "--config", str(bad), "--out", str(tmp_path / "o")) == 1
    assert "World.width" in capsys.readouterr().err
    assert run_cli("run", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path)) == 1


def test_runtime_error_exit_2(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert run_cli("run", "--config", "scenario2", "--duration", "10",
                   "--out", str(blocker / "x")) == 2


def test_seed_batch_sequential_equals_concurrent(tmp_path):
    args = ["run", "--config", "scenario2", "--duration", "600", "--seeds", "1..3"]
    assert run_cli(*args, "--out", str(tmp_path / "seq")) == 0
    assert run_cli(*args, "--out", str(tmp_path / "par"), "--jobs", "3") == 0
    for s in (1, 2, 3):
        a = (tmp_path / "seq" / f"seed_{s}" / "report.csv").read_bytes()
        b = (tmp_path / "par" / f"seed_{s}" / "report.csv").read_bytes()
        assert a == b
    agg = list(csv.DictReader(open(tmp_path / "seq" / "aggregate.csv", encoding="utf-8")))
    assert len(agg) == 10 and {r["seed"] for r in agg} == {"mean"}
    assert (tmp_path / "seq" / "aggregate.csv").read_bytes() == \
        (tmp_path / "par" / "aggregate.csv").read_bytes()


def test_compare_self_and_mismatch(tmp_path, capsys):
    out = tmp_path / "a"
    assert run_cli("run", "--config", "scenario2", "--duration", "300", "--out", str(out)) == 0
    capsys.readouterr()
    assert run_cli("compare", str(out), str(out), "--out", str(tmp_path / "cmp.csv")) == 0
    rows = list(csv.DictReader(open(tmp_path / "cmp.csv", encoding="utf-8")))
    assert set(rows[0]) == {"kind", "stratum", "metric", "a", "b", "delta", "ratio"}
    assert all(r["delta"] in ("", "0.000000") for r in rows)
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "report.csv").write_text("x,y\n1,2\n")
    assert run_cli("compare", str(out), str(bad)) == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pbbsim", "scenarios", "scenario1"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "Nodes.count = 41" in res.stdout
