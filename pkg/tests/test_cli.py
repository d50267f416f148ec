import json
import socket
import subprocess
import sys
from pathlib import Path

import pytest

from vslcav import cli
from vslcav.simulation import SimulationDiverged

FIXTURE = Path(__file__).parent / "fixtures" / "table1_published.json"


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_list(capsys):
    assert run("list") == 0
    assert "fig7_three_cases" in capsys.readouterr().out.split()


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        run("bogus")
    assert exc.value.code == cli.EXIT_USAGE


def test_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: bad\nduration: 10\ncorridor:\n  mm_start: 60\n  mm_end: 57\nego: {start_mm: 59, speed: 10}\n")
    assert run("validate", "--scenario", bad) == cli.EXIT_VALIDATION
    err = capsys.readouterr().err
    assert "corridor.gantries" in err and "line 3" in err
    assert run("run", "--scenario", "fig7_three_cases", "--set", "dt=-1", "--out", tmp_path) == cli.EXIT_VALIDATION


def test_io_exit_code(tmp_path):
    assert run("run", "--scenario", tmp_path / "missing.yaml") == cli.EXIT_IO
    assert run("report", tmp_path / "missing.csv", "--out", tmp_path / "r") == cli.EXIT_IO


def test_runtime_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise SimulationDiverged("ego state diverged at t=1.0")
    monkeypatch.setattr(cli, "run_scenario", boom)
    assert run("run", "--scenario", "fig7_three_cases", "--out", tmp_path) == cli.EXIT_RUNTIME


def test_run_outputs_and_determinism(tmp_path):
    assert run("run", "--scenario", "fig8_set_and_hold", "--out", tmp_path / "a") == 0
    assert run("run", "--scenario", "fig8_set_and_hold", "--out", tmp_path / "b") == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    summary = json.loads((a / "summary.json").read_text())
    assert summary["scenario"] == "fig8_set_and_hold" and summary["rise_fall"]
    assert json.loads((a / "events.json").read_text())


def test_seed_override_changes_noisy_run(tmp_path):
    run("run", "--scenario", "feed_fault", "--out", tmp_path / "a")
    run("run", "--scenario", "feed_fault", "--seed", "99", "--out", tmp_path / "b")
    assert (tmp_path / "a" / "trace.csv").read_bytes() != (tmp_path / "b" / "trace.csv").read_bytes()


def test_socket_transport_matches_in_process(tmp_path):
    run("run", "--scenario", "fig7_three_cases", "--out", tmp_path / "a")
    assert run("run", "--scenario", "fig7_three_cases", "--transport", "socket", "--out", tmp_path / "b") == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_report_published_fixture(tmp_path, capsys):
    assert run("report", FIXTURE, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "(6.361/7.938)" in out and "(5.041/7.955)" in out
    assert "20.8%" in out and "6.6%" in out
    doc = json.loads((tmp_path / "report.json").read_text())
    assert len(doc["segments"]) == 3


def test_report_single_and_double_trace(tmp_path, capsys):
    run("run", "--scenario", "fig7_three_cases", "--out", tmp_path / "run")
    trace = tmp_path / "run" / "trace.csv"
    capsys.readouterr()
    assert run("report", trace, "--out", tmp_path / "r1") == 0
    assert "absent" in capsys.readouterr().out
    for name in ("speed_vs_mm.csv", "controller_state.csv", "plot_figures.py", "report.txt"):
        assert (tmp_path / "r1" / name).exists()
    assert run("report", trace, trace, "--out", tmp_path / "r2") == 0
    doc = json.loads((tmp_path / "r2" / "report.json").read_text())
    assert all(r["std_reduction_pct"] == 0.0 for r in doc["variance_reduction"])


def test_report_mismatched_segments(tmp_path):
    other = tmp_path / "other.json"
    doc = json.loads(FIXTURE.read_text())
    doc["segments"] = doc["segments"][:2]
    other.write_text(json.dumps(doc))
    assert run("report", FIXTURE, other, "--out", tmp_path / "r") == cli.EXIT_IO


def test_serve_port_busy():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        s.listen()
        port = s.getsockname()[1]
        code = run("serve", "--scenario", "fig7_three_cases", "--port", port, "--duration", "0.1")
    assert code == cli.EXIT_IO


def test_serve_end_to_end():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    proc = subprocess.Popen(
        [sys.executable, "-m", "vslcav.cli", "serve", "--scenario", "fig7_three_cases",
         "--port", str(port), "--cadence", "1", "--duration", "6"],
        stdout=subprocess.PIPE, text=True,
    )
    try:
        assert "serving" in proc.stdout.readline()
        from vslcav.feed.http import HttpTransport, post_update
        from vslcav.feed.snapshot import parse
        import time

        url = f"http://127.0.0.1:{port}/vsl"
        code, _ = post_update(url, {"gantry_id": "G57.6", "posted_speed": 40, "effective_at": time.time()})
        assert code == 200
        deadline = time.time() + 4
        posted = None
        while time.time() < deadline:
            try:
                posted = parse(HttpTransport(url).get()).row("G57.6").posted_speed
            except Exception:
                posted = None
            if posted == 40:
                break
            time.sleep(0.2)
        assert posted == 40
        assert post_update(url, {"gantry_id": "G57.6", "posted_speed": 45, "effective_at": 1.0})[0] == 409
    finally:
        proc.wait(timeout=15)
    assert proc.returncode == 0
