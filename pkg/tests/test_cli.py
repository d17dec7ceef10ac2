import json
from pathlib import Path

import pytest

from semoff.cli import main
from semoff.config import SystemConfig, save_config


def test_enumerate_count_only(capsys):
    assert main(["enumerate", "--users", "8", "--chi-e", "4", "--chi-c", "2",
                 "--count-only"]) == 0
    assert capsys.readouterr().out.strip() == "1960"


def test_enumerate_streams_policies(capsys):
    assert main(["enumerate", "--users", "3", "--chi-e", "2", "--chi-c", "1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 9  # C(3,2) * C(3,1)
    assert lines[0] == "110 100"


def test_enumerate_invalid_chi_cloud(capsys):
    assert main(["enumerate", "--users", "4", "--chi-e", "2", "--chi-c", "9",
                 "--count-only"]) == 2
    assert "chi_cloud" in capsys.readouterr().err


def test_simulate_missing_config_names_path(capsys):
    rc = main(["simulate", "--config", "/no/such/config.json"])
    assert rc == 2
    assert "/no/such/config.json" in capsys.readouterr().err


def test_simulate_rejects_bad_policy_spec(capsys):
    rc = main(["simulate", "--policy", "greedy", "--slots", "10"])
    assert rc == 2


def test_simulate_writes_run_directory(tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["simulate", "--scenario", "1", "--policy", "drlh:8",
               "--seed", "3", "--slots", "50", "--out", str(out)])
    assert rc == 0
    for name in ("config.json", "metrics.csv", "summary.json", "loss.csv"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 3
    assert summary["total_slots"] == 50
    assert summary["bound_violations"] == 0


def test_simulate_rerun_is_bit_identical(tmp_path):
    args = ["simulate", "--scenario", "1", "--policy", "drlh:8",
            "--seed", "11", "--slots", "40"]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()
    assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()


def test_simulate_rerun_from_config_echo_is_bit_identical(tmp_path):
    out1 = tmp_path / "a"
    assert main(["simulate", "--scenario", "2", "--policy", "random",
                 "--seed", "7", "--slots", "30", "--out", str(out1)]) == 0
    out2 = tmp_path / "b"
    assert main(["simulate", "--config", str(out1 / "config.json"),
                 "--out", str(out2)]) == 0
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()


def test_simulate_invalid_scenario_combo(tmp_path, capsys):
    # scenario 1 caps the local queue at 5 tasks; 750 tasks/s violates the
    # mean-arrivals invariant
    cfg_path = tmp_path / "c.json"
    save_config(SystemConfig(), cfg_path)
    data = json.loads(cfg_path.read_text())
    data["system"]["arrival_rate_per_sec"] = 750.0
    data["system"]["q_max_local"] = 5.0
    cfg_path.write_text(json.dumps(data))
    rc = main(["simulate", "--config", str(cfg_path), "--slots", "10"])
    assert rc == 2
    assert "q_max_local" in capsys.readouterr().err


def test_config_with_unknown_key_rejected(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"system": {"warp_drive": 1}}))
    rc = main(["simulate", "--config", str(path)])
    assert rc == 2
    assert "warp_drive" in capsys.readouterr().err


def test_sweep_command(tmp_path, capsys):
    out = tmp_path / "sw"
    rc = main(["sweep", "--param", "users", "--values", "4,6", "--policy",
               "random", "--slots", "20", "--seed", "1", "--out", str(out)])
    assert rc == 0
    text = (out / "sweep_users.csv").read_text()
    assert "search_space_size" in text.splitlines()[0]
    assert len(text.strip().splitlines()) == 3


def test_verify_quick_passes(tmp_path, capsys):
    out = tmp_path / "audit"
    rc = main(["verify", "--quick", "--seed", "0", "--out", str(out)])
    assert rc == 0
    assert (out / "solver_audit.csv").exists()
    assert "all checks passed" in capsys.readouterr().out
