import csv
import json
import subprocess
import sys

import pytest

from wirelessmr.cli import main


def _table(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest: ")
    manifest = json.loads(lines[0][len("# manifest: "):])
    body = [line for line in lines[1:] if not line.startswith("#")]
    return manifest, list(csv.DictReader(body))


def test_analyze_table(tmp_path):
    out = tmp_path / "fig3.csv"
    assert main(["analyze", "--out", str(out)]) == 0
    manifest, rows = _table(out)
    assert manifest["subcommand"] == "analyze" and manifest["config"]["K"] == "4"
    assert len(rows) == 101
    assert rows[0]["delta_zf"] == "inf" and rows[0]["delta_sp"] == rows[0]["delta_cm"] == "0.25"
    assert rows[-1]["delta_sp"] == rows[-1]["delta_zf"] == "0.125"
    assert list(rows[0]) == ["alpha", "delta_cm", "delta_zf", "delta_sp", "delta_ts", "delta_emp", "stderr", "trials"]


def test_analyze_coarse_step(capsys):
    assert main(["analyze", "--alpha-step", "1/4"]) == 0
    text = capsys.readouterr().out
    assert len(text.strip().splitlines()) == 1 + 1 + 5


@pytest.mark.parametrize(
    "argv",
    [
        ["analyze", "--set", "mu=1/3"],
        ["analyze", "--set", "Q=5"],
        ["analyze", "--alpha", "2"],
        ["analyze", "--set", "colour=blue"],
        ["analyze", "--set", "nonsense"],
        ["verify", "--power", "0.5"],
    ],
)
def test_config_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "invalid configuration" in capsys.readouterr().err


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "sys.cfg"
    cfg.write_text("# small system\nK = 3\nmu = 1/3\nQ = 3\nF = 60\n")
    assert main(["verify", "--config", str(cfg), "--scheme", "zf"]) == 0
    assert "verdict: PASS" in capsys.readouterr().out


@pytest.mark.parametrize("scheme", ["cm", "zf", "sp"])
def test_verify_worked_example(scheme, tmp_path, capsys):
    out = tmp_path / "plan.jsonl"
    assert main(["verify", "--scheme", scheme, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "blocks: 12" in text and "reduce outputs matching oracle: 4/4" in text
    assert out.read_text().count("\n") == 13


def test_verify_full_storage(capsys):
    assert main(["verify", "--set", "mu=1", "--scheme", "sp"]) == 0
    assert "blocks: 0" in capsys.readouterr().out


def test_simulate_summary(tmp_path):
    out = tmp_path / "sim.json"
    assert main(["simulate", "--scheme", "cm", "--trials", "4", "--power", "1e8", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["trials"] == 4 and doc["successes"] == 4
    assert doc["delta_closed"] == "0.25"
    assert len(doc["first_trial_blocks"]) == 12


def test_simulate_oracle(capsys):
    assert main(["simulate", "--oracle", "--trials", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert float(doc["delta_emp"]) == pytest.approx(0.15, rel=1e-12)


def test_sweep_is_byte_identical(tmp_path):
    args = ["sweep", "--scheme", "sp", "--trials", "6", "--powers", "1e3,1e5,1e7", "--seed", "3"]
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(first)]) == 0
    assert main(args + ["--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert (tmp_path / "a.csv.timing").exists()
    _, rows = _table(first)
    assert [r["P"] for r in rows] == ["1000.0", "100000.0", "10000000.0"]
    assert first.read_text().rstrip().splitlines()[-1].startswith("# status: ")


def test_seed_changes_sweep(tmp_path):
    base = ["sweep", "--scheme", "cm", "--trials", "4", "--powers", "1e3,1e5,1e7"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(base + ["--seed", "1", "--out", str(a)])
    main(base + ["--seed", "2", "--out", str(b)])
    assert _table(a)[1] != _table(b)[1]


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "wirelessmr", "analyze", "--alpha-step", "1/2"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0 and proc.stdout.count("\n") == 5


def test_lost_parts_exit_2(monkeypatch, capsys):
    import wirelessmr.cli as cli

    monkeypatch.setattr(cli, "reassemble", lambda parts, layout: {})
    assert main(["verify", "--scheme", "cm"]) == 2
    out = capsys.readouterr().out
    assert "verdict: FAIL" in out and "mismatch f1" in out


def test_internal_assertion_exit_3(monkeypatch, capsys):
    import wirelessmr.cli as cli
    from wirelessmr.shuffle import PlanError

    def broken(*args, **kwargs):
        raise PlanError("coverage broken")

    monkeypatch.setattr(cli, "prepare_system", broken)
    assert main(["verify"]) == 3
    assert "internal assertion" in capsys.readouterr().err
