import hashlib
import os
from pathlib import Path

import pytest

import concord

ROOT = Path(os.environ.get("CONCORD_SOURCE_DIR", Path(__file__).resolve().parents[2]))


def pack(name):
    return ROOT / "workflows" / name


def run(tmp_path, name, scenario, **kwargs):
    return concord.run_scenario(
        pack(name) / "definition.yaml",
        pack(name) / "fixtures" / f"{scenario}.yaml",
        tmp_path,
        run_id=f"{name}-{scenario}",
        **kwargs,
    )


def test_hash_content_is_sha256():
    assert concord.hash_content(b"abc") == hashlib.sha256(b"abc").hexdigest()


def test_validate_workflow_returns_id():
    assert concord.validate_workflow(pack("rf") / "definition.yaml", pack("rf") / "fixtures" / "split.yaml")


def test_run_matches_golden_and_replays(tmp_path):
    result = run(tmp_path, "dental", "split")
    golden = (pack("dental") / "golden" / "split.decision").read_text(encoding="utf-8")
    assert result["decision"] == golden
    assert Path(result["decision_file"]).read_text(encoding="utf-8") == golden
    assert concord.replay(result["trail_file"]) == golden
    report = (pack("dental") / "golden" / "split.report.txt").read_text(encoding="utf-8")
    assert concord.explain(result["trail_file"]) == report


def test_verify_detects_tamper(tmp_path):
    result = run(tmp_path, "podcast", "unanimous")
    status = concord.verify(result["trail_file"])
    assert status["ok"] and status["complete"]
    trail = Path(result["trail_file"])
    lines = trail.read_bytes().split(b"\n")
    lines[2] = lines[2].replace(b'"seq":2', b'"seq":9')
    trail.write_bytes(b"\n".join(lines))
    status = concord.verify(trail)
    assert not status["ok"] and status["broken_seq"] == 2


def test_deterministic_only_decision(tmp_path):
    result = run(tmp_path, "rf", "unanimous", deterministic_only=True)
    decision = concord.load_decision(result["decision"])
    assert decision["consolidation_mode"] == "deterministic"


def test_errors_are_typed(tmp_path):
    with pytest.raises(concord.ConfigError):
        concord.validate_workflow(tmp_path / "missing.yaml")
    run(tmp_path, "rf", "split")
    with pytest.raises(concord.ConcordError):
        run(tmp_path, "rf", "split")
