import csv
import hashlib
import json
from pathlib import Path

import pytest

from fairrm.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "demos" / "configs"
TINY = str(CONFIGS / "tiny.json")


def test_run_single_fcfs_trace(tmp_path):
    assert main(["run", "--instance", TINY, "--policy", "fcfs", "--replications", "1", "--out", str(tmp_path)]) == 0
    traces = sorted((tmp_path / "traces").iterdir())
    assert len(traces) == 1
    rows = list(csv.DictReader(traces[0].open()))
    assert len(rows) == 50  # one row per round


def test_manifest_lists_streams_and_hashes(tmp_path):
    main(["run", "--instance", TINY, "--policy", "gp_fcfs", "--replications", "100", "--out", str(tmp_path)])
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["stream_ids"] == list(range(100))
    assert man["seed"] == 0 and man["version"].startswith("0.1.0")
    assert len(man["files"]) == 101
    for rel, digest in man["files"].items():
        assert hashlib.sha256((tmp_path / rel).read_bytes()).hexdigest() == digest


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"instance": TINY, "policy": "dlp_pa", "replications": 2, "seed": 5}))
    main(["run", "--config", str(cfg), "--policy", "rdlp_pa", "--out", str(tmp_path / "o")])
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["policy"] == "rdlp_pa" and man["seed"] == 5


def test_audit_exit_codes(tmp_path):
    args = ["audit", "--instance", TINY, "--out", str(tmp_path)]
    assert main(args + ["--policy", "fcfs", "--replications", "2000"]) == 2
    assert main(args + ["--policy", "reject_all", "--replications", "100"]) == 3
    assert (tmp_path / "audit.csv").exists() and (tmp_path / "audit.json").exists()


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["run", "--instance", TINY, "--policy", "nope", "--out", str(tmp_path)]) == 1
    assert main(["run", "--instance", str(tmp_path / "missing.json"), "--policy", "fcfs"]) == 1
    assert main(["run", "--instance", TINY, "--policy", "fcfs", "--alpha", "0.1", "--out", str(tmp_path),
                 "--replications", "0"]) == 1
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"instance": TINY, "policies": ["fcfs"], "horizons": [50, 100]}))
    assert main(["regret-sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "at least three" in capsys.readouterr().err


def test_unknown_parameter_rejected(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"instance": TINY, "policy": "fcfs", "params": {"gamma": 3}}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_regret_sweep_reports_slopes(tmp_path):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"instance": TINY, "policies": ["reject_all", "fcfs"],
                               "horizons": [50, 100, 200], "replications": 40}))
    assert main(["regret-sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    slopes = {r["policy"]: r["loglog_slope"] for r in csv.DictReader((tmp_path / "o" / "slopes.csv").open())}
    assert float(slopes["reject_all"]) == pytest.approx(1.0, abs=0.05)


def test_cr_sweep_needs_three_scales(tmp_path):
    cfg = tmp_path / "cr.json"
    cfg.write_text(json.dumps({"instance": str(CONFIGS / "cr_template.json"), "policies": ["bl", "gp_bl"],
                               "m_scales": [20, 40, 80], "b_scale": [0.5, 0.5], "replications": 5,
                               "families": ["low_first", "alternating"]}))
    assert main(["cr-sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.DictReader((tmp_path / "o" / "cr_summary.csv").open()))
    assert {r["policy"] for r in rows} == {"bl", "gp_bl"}
    assert all(r["gap_m_over_log_m"] != "n/a" for r in rows if r["policy"] == "gp_bl")
    bad = tmp_path / "cr2.json"
    bad.write_text(json.dumps({"instance": str(CONFIGS / "cr_template.json"), "policies": ["bl"],
                               "m_scales": [20, 40]}))
    assert main(["cr-sweep", "--config", str(bad), "--out", str(tmp_path / "p")]) == 1


def test_oracle_and_validate(tmp_path, capsys):
    main(["run", "--instance", TINY, "--policy", "fcfs", "--replications", "1", "--out", str(tmp_path / "r")])
    trace = next((tmp_path / "r" / "traces").iterdir())
    assert main(["oracle", "--instance", TINY, "--trace", str(trace), "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "oracle.json").read_text())
    assert doc["hindsight_value"] > 0
    assert main(["validate", "--instance", TINY]) == 0
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"n": 1, "L": 1, "A": [1], "r": [-1], "m": [3], "T": 5, "lambda": [0.2, 0.9]}))
    assert main(["validate", "--instance", str(broken)]) == 1
    assert "violation" in capsys.readouterr().out


def test_pricing_run_and_audit(tmp_path):
    inst = str(CONFIGS / "pricing.json")
    assert main(["run", "--instance", inst, "--policy", "static_pricing", "--replications", "2",
                 "--out", str(tmp_path / "r")]) == 0
    assert main(["audit", "--instance", inst, "--policy", "gp_pricing", "--replications", "1000",
                 "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--instance", TINY, "--policy", "gp_pricing", "--out", str(tmp_path / "x")]) == 1


def test_threads_flag_does_not_change_output(tmp_path, monkeypatch):
    base = ["run", "--instance", TINY, "--policy", "gp_dlp", "--replications", "30", "--seed", "2"]
    main(base + ["--out", str(tmp_path / "a")])
    monkeypatch.setenv("FAIRRM_THREADS", "3")
    main(base + ["--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "summary.csv").read_bytes()
    assert a == (tmp_path / "b" / "summary.csv").read_bytes()
