import json
from pathlib import Path

import httpx
import pytest

from replay import Replay
from repostab.cli import run

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def logs(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    stable, bursty = d / "stable.jsonl", d / "bursty.jsonl"
    assert run(["simulate", "--scenario", "stable", "--days", "365", "--seed", "42", "--out", str(stable)]) == 0
    assert run(["simulate", "--scenario", "bursty", "--days", "120", "--seed", "1", "--out", str(bursty)]) == 0
    return {"stable": stable, "bursty": bursty}


def test_stable_pipeline_exits_zero(logs, capsys):
    assert run(["analyze", "--input", str(logs["stable"])]) == 0
    assert "OVERALL: STABLE" in capsys.readouterr().out


def test_bursty_pipeline_exits_two(logs, capsys):
    assert run(["analyze", "--input", str(logs["bursty"]), "--out", "csv"]) == 2
    out = capsys.readouterr().out
    assert out.startswith("window_start,window_end,c,cv_c")


@pytest.mark.parametrize(
    "argv",
    [
        ["analyze", "--input", "x.jsonl", "--window-days", "0"],
        ["analyze", "--input", "x.jsonl", "--stride-days", "-1"],
        ["analyze", "--input", "x.jsonl", "--out", "xml"],
        ["analyze"],
        ["simulate", "--scenario", "calm"],
        ["simulate", "--scenario", "stable", "--days", "0"],
        ["simulate", "--scenario", "departure", "--days", "50"],
        ["frobnicate"],
        [],
    ],
)
def test_usage_errors_exit_64(argv, capsys):
    assert run(argv) == 64
    assert "usage:" in capsys.readouterr().err


def test_missing_input_exits_66(tmp_path):
    assert run(["analyze", "--input", str(tmp_path / "nope.jsonl")]) == 66
    assert run(["validate", "--input", str(tmp_path / "nope.jsonl")]) == 66
    assert run(["analyze", "--input", str(tmp_path), "--format", "forge"]) == 66


def test_fetch_auth_failure_exits_77(tmp_path, monkeypatch):
    monkeypatch.setenv("FORGE_TOKEN", "bad")
    deny = httpx.MockTransport(lambda req: httpx.Response(401, json={"message": "Bad credentials"}))
    argv = ["fetch", "--owner", "acme", "--repo", "widgets", "--token-env", "FORGE_TOKEN", "--out", str(tmp_path)]
    assert run(argv, transport=deny) == 77


def test_fetch_missing_token_variable_is_usage_error(tmp_path, monkeypatch):
    monkeypatch.delenv("NO_SUCH_TOKEN", raising=False)
    argv = ["fetch", "--owner", "a", "--repo", "b", "--token-env", "NO_SUCH_TOKEN", "--out", str(tmp_path)]
    assert run(argv) == 64


def test_fetch_then_analyze_forge_export(tmp_path, capsys):
    out = tmp_path / "export"
    argv = ["fetch", "--owner", "acme", "--repo", "widgets", "--out", str(out)]
    assert run(argv, transport=Replay("acme-widgets").transport(), sleep=lambda s: None) == 0
    assert "223 issues" in capsys.readouterr().err
    code = run(["analyze", "--input", str(out), "--format", "forge", "--window-days", "7", "--out", "json"])
    assert code in (0, 2)
    doc = json.loads(capsys.readouterr().out)
    assert doc["provenance"]["format"] == "forge"


def test_fetch_rate_limited_exits_one(tmp_path):
    limited = httpx.MockTransport(
        lambda req: httpx.Response(403, headers={"x-ratelimit-remaining": "0", "x-ratelimit-reset": "1704070800"})
    )
    assert run(["fetch", "--owner", "a", "--repo", "b", "--out", str(tmp_path)], transport=limited) == 1


def test_config_file_overrides_and_flags_win(logs, tmp_path, capsys):
    cfg = tmp_path / "stab.conf"
    cfg.write_text("# looser commit threshold\nalpha_c = 0.9\nwindow_days = 21\ndampening_mode = raw_days\n")
    out = tmp_path / "r.json"
    argv = ["analyze", "--input", str(logs["bursty"]), "--config", str(cfg), "--window-days", "28",
            "--out", "json", "--out-file", str(out)]
    run(argv)
    config = json.loads(out.read_text())["config"]
    assert config["alpha_c"] == 0.9 and config["window_days"] == 28.0
    assert config["dampening_mode"] == "raw_days" and config["beta_i"] == 0.3


@pytest.mark.parametrize("body", ["alpha = 0.9\n", "alpha_c 0.9\n", "alpha_c = high\n", "w_c = 0.5\n"])
def test_bad_config_file_is_usage_error(tmp_path, body):
    cfg = tmp_path / "bad.conf"
    cfg.write_text(body)
    assert run(["analyze", "--input", str(FIXTURES / "events_30.jsonl"), "--config", str(cfg)]) == 64


def test_validate_exit_codes(capsys):
    assert run(["validate", "--input", str(FIXTURES / "events_30.jsonl")]) == 0
    assert "30 events valid" in capsys.readouterr().out
    assert run(["validate", "--input", str(FIXTURES / "malformed.jsonl")]) == 1


def test_invalid_log_and_short_span_exit_one(tmp_path):
    bad = tmp_path / "dangling.jsonl"
    bad.write_text('{"type":"issue_closed","ref":"i9","ts":"2024-01-01T00:00:00Z","actor":"a"}\n')
    assert run(["analyze", "--input", str(bad)]) == 1
    assert run(["analyze", "--input", str(FIXTURES / "gitlog_10.txt"), "--format", "gitlog"]) == 1


def test_gitlog_input_with_short_window(capsys):
    argv = ["analyze", "--input", str(FIXTURES / "gitlog_10.txt"), "--format", "gitlog", "--window-days", "2"]
    assert run(argv) in (0, 2)
    assert "issue_management: PASS" in capsys.readouterr().out


def test_simulate_and_analyze_are_deterministic(tmp_path):
    paths = [tmp_path / f"s{k}.jsonl" for k in range(2)]
    for p in paths:
        run(["simulate", "--scenario", "bug-influx", "--days", "90", "--seed", "5", "--out", str(p)])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    reports = [tmp_path / f"r{k}.json" for k in range(2)]
    for r in reports:
        run(["analyze", "--input", str(paths[0]), "--out", "json", "--out-file", str(r)])
    assert reports[0].read_bytes() == reports[1].read_bytes()


def test_exclude_bots_flag(tmp_path, capsys):
    argv = ["analyze", "--input", str(FIXTURES / "forge"), "--format", "forge", "--window-days", "2", "--out", "json"]
    run(argv)
    plain = json.loads(capsys.readouterr().out)
    run(argv + ["--exclude-bots"])
    filtered = json.loads(capsys.readouterr().out)
    assert filtered["provenance"]["exclude_bots"] is True
    assert plain["windows"] != filtered["windows"]
