import json
import subprocess
import sys
from pathlib import Path

import pytest

from fibered_forms.cli import main, run_file
from fibered_forms.scenario import CHECKS

PKG = Path(__file__).resolve().parents[1] / "src" / "fibered_forms" / "scenarios"
DATA = Path(__file__).resolve().parent / "data"
MONOPOLE = PKG / "monopole.json"
TORUS = PKG / "torus-obstruction.json"


def write(tmp_path, payload, name="s.json"):
    p = tmp_path / name
    p.write_text(payload if isinstance(payload, str) else json.dumps(payload))
    return p


def test_checks_listing(capsys):
    assert main(["checks"]) == 0
    assert capsys.readouterr().out.split() == list(CHECKS)
    assert main(["checks", "--json"]) == 0
    assert json.loads(capsys.readouterr().out) == list(CHECKS)
    assert len(CHECKS) == 20


def test_monopole_passes(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["run", str(MONOPOLE), "--json", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["pass"] and report["seed"] == 0
    assert len(report["checks"]) == 8
    assert "overall: PASS" in capsys.readouterr().out


def test_torus_obstruction_fails_with_certificate(tmp_path):
    out = tmp_path / "r.json"
    assert main(["run", str(TORUS), "--json", str(out)]) == 1
    report = json.loads(out.read_text())
    solve = [c for c in report["checks"] if c["check"] == "invariant-solve"][0]
    assert not solve["pass"] and solve["feasible"] is False
    assert solve["pairing"] in ("1", "-1") and solve["certificate"]


@pytest.mark.parametrize("path", sorted(DATA.glob("*.json")), ids=lambda p: p.stem)
def test_data_scenarios_pass(path):
    code, report = run_file(str(path))
    assert code == 0, report


def test_bundled_scenarios_use_known_checks():
    for path in list(PKG.glob("*.json")) + list(DATA.glob("*.json")):
        for c in json.loads(path.read_text())["checks"]:
            assert c["check"] in CHECKS


def test_empty_check_list_passes(tmp_path):
    p = write(tmp_path, {"chart": {"base": ["x1"], "fiber": ["y1"]}, "checks": []})
    code, report = run_file(str(p))
    assert code == 0 and report["checks"] == []


@pytest.mark.parametrize("payload,pointer", [
    ("{not json", ""),
    ({"checks": []}, ""),
    ({"chart": {"base": ["x1"], "fiber": ["y1"]}, "checks": [{"check": "no-such-check"}]}, "/checks/0"),
    ({"chart": {"base": ["x1"], "fiber": ["y1"]},
      "forms": {"w": [{"coeff": "y1 +", "dy": [1]}]}, "checks": []}, "/forms/w"),
    ({"chart": {"base": ["x1"], "fiber": ["y1"]},
      "checks": [{"check": "commutation", "bogus": 1}]}, "/checks/0"),
])
def test_invalid_scenarios_exit_2_with_pointer(tmp_path, capsys, payload, pointer):
    p = write(tmp_path, payload)
    assert main(["run", str(p)]) == 2
    code, report = run_file(str(p))
    assert code == 2
    assert report["error"]["pointer"].startswith(pointer)
    assert "invalid at" in capsys.readouterr().out


def test_missing_file_and_bad_arguments():
    assert main(["run", "/nonexistent/x.json"]) == 2
    assert main(["frobnicate"]) == 2
    assert main([]) == 2


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["run", str(MONOPOLE), "--json", str(a), "--seed", "3"])
    main(["run", str(MONOPOLE), "--json", str(b), "--seed", "3"])
    assert a.read_bytes() == b.read_bytes()


def test_parallel_jobs_match_serial(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    files = [str(MONOPOLE), str(TORUS)]
    assert main(["run", *files, "--json", str(a)]) == 1
    assert main(["run", *files, "--json", str(b), "--jobs", "2"]) == 1
    assert a.read_bytes() == b.read_bytes()
    assert [r["scenario"] for r in json.loads(a.read_text())] == files


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fibered_forms.cli", "checks", "--json"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and json.loads(proc.stdout) == list(CHECKS)
