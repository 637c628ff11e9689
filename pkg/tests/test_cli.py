import hashlib
import json
import shutil
import subprocess

import jsonschema
import pytest
from filelock import FileLock

from rendezvous.cli import dispatch
from rendezvous.gp_posterior import read_weights
from rendezvous.hjb import read_value_function
from rendezvous.sim_harness import Scenario, shipped_scenario

FAST = ["--grid", "41x41x32", "--time-slices", "16"]

COMPARE_SCHEMA = {
    "type": "object",
    "required": ["seed", "contact_radius", "planner", "baseline"],
    "properties": {
        "planner": {
            "type": "object",
            "required": ["hits", "any_hit"],
            "properties": {"hits": {"type": "array", "items": {"type": "boolean"}},
                           "any_hit": {"type": "boolean"}},
        },
        "baseline": {
            "type": "object",
            "required": ["miss_distance", "missed"],
            "properties": {"miss_distance": {"type": "number", "minimum": 0},
                           "missed": {"type": "boolean"}},
        },
    },
}


@pytest.fixture(scope="module")
def scenario_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("scn") / "s.json"
    path.write_text(json.dumps(shipped_scenario().to_dict()))
    return path


@pytest.fixture
def run(scenario_file, vf_cache):
    def go(command, out, *extra, scenario=None):
        argv = [command, "--scenario", str(scenario or scenario_file), "--out", str(out),
                "--cache", str(vf_cache.root), *FAST, *extra]
        return dispatch(argv)
    return go


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def _check_manifest(out):
    man = _manifest(out)
    for name, entry in man["artifacts"].items():
        assert (out / name).is_file()
        if entry["sha256"] is not None:
            assert entry["sha256"] == hashlib.sha256((out / name).read_bytes()).hexdigest()
    listed = set(man["artifacts"])
    present = {p.name for p in out.iterdir() if p.is_file()} - {"manifest.json", ".lock"}
    assert listed == present
    return man


def test_hjb_writes_dumps(run, tmp_path):
    out = tmp_path / "hjb"
    assert run("hjb", out) == 0
    for stem in ("value_truth", "value_station0"):
        assert (out / f"{stem}.bin").is_file() and (out / f"{stem}.bin.json").is_file()
    vf = read_value_function(out / "value_truth.bin")
    assert vf.grid.shape == (41, 41, 32)
    assert read_value_function(out / "value_station0.bin").direction == "forward"
    man = _check_manifest(out)
    assert man["command"] == "hjb"


def test_estimate_artifacts(run, tmp_path):
    out = tmp_path / "est"
    assert run("estimate", out) == 0
    post = json.loads((out / "posterior.json").read_text())
    assert sum(post["destination_mass"]) == pytest.approx(1.0)
    assert sum(post["rho_mass"]) == pytest.approx(1.0)
    samples, w = read_weights(out / "weights.csv")
    assert len(samples) == 21 and w.sum() == pytest.approx(1.0)
    _check_manifest(out)


def test_baseline_artifacts(run, tmp_path):
    out = tmp_path / "base"
    assert run("baseline", out) == 0
    doc = json.loads((out / "baseline.json").read_text())
    assert doc["miss_distance"] >= 0
    header = (out / "baseline.csv").read_text().splitlines()[0]
    assert header.startswith("t,pursuer_x1")


def test_simulate_is_byte_identical(run, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("simulate", a, "--seed", "7") == 0
    assert run("simulate", b, "--seed", "7") == 0
    files = sorted(p.name for p in a.iterdir() if p.is_file() and p.name not in ("timings.json", ".lock"))
    assert {"plan.csv", "report.json", "truth.csv", "baseline.csv", "reachable_station0.json"} <= set(files)
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    man = _check_manifest(a)
    assert man["artifacts"]["timings.json"]["sha256"] is None


def test_compare_report(run, tmp_path):
    out = tmp_path / "cmp"
    assert run("compare", out) == 0
    doc = json.loads((out / "compare.json").read_text())
    jsonschema.validate(doc, COMPARE_SCHEMA)
    assert doc["planner"]["any_hit"] == any(doc["planner"]["hits"])
    assert doc["baseline"]["missed"] == (doc["baseline"]["miss_distance"] > doc["contact_radius"])


def test_overrides_recorded_in_manifest(run, tmp_path):
    out = tmp_path / "ovr"
    assert run("plan", out, "--seed", "3", "--attempts", "2", "--sigma-r", "0.01",
               "--nugget", "1e-9") == 0
    man = _check_manifest(out)
    cfg = man["effective_config"]
    assert man["seed"] == 3 and cfg["seed"] == 3
    assert cfg["planner"]["attempts"] == 2 and cfg["planner"]["sigma_r"] == 0.01
    assert cfg["kernels"]["nugget"] == 1e-9 and cfg["hjb"]["grid"] == [41, 41, 32]
    assert cfg["planner"]["time_slices"] == 16
    assert Scenario.from_dict(cfg).config == cfg
    assert len((out / "plan.csv").read_text().splitlines()) == 3


def test_floats_have_17_digits(run, tmp_path):
    out = tmp_path / "digits"
    assert run("plan", out, "--attempts", "1") == 0
    row = (out / "plan.csv").read_text().splitlines()[1].split(",")
    t = row[1]
    assert repr(float(t)) == repr(float(f"{float(t):.17g}"))
    assert len(t.replace(".", "").replace("-", "").lstrip("0")) >= 15


@pytest.mark.parametrize("argv", [
    ["simulate", "--out", "x"],
    ["teleport", "--scenario", "s.json", "--out", "x"],
    ["hjb", "--scenario", "s.json", "--out", "x", "--colour", "red"],
    ["hjb", "--scenario", "s.json", "--out", "x", "--grid", "10x10"],
    ["hjb", "--scenario", "s.json", "--out", "x", "--seed", "-1"],
])
def test_bad_arguments_exit_2(argv, capsys):
    assert dispatch(argv) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error:")


def test_missing_and_invalid_scenario_exit_2(tmp_path, capsys):
    assert dispatch(["hjb", "--scenario", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2
    bad = tmp_path / "bad.json"
    doc = shipped_scenario().to_dict()
    doc["schema_version"] = 9
    bad.write_text(json.dumps(doc))
    assert dispatch(["hjb", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "schema_version" in capsys.readouterr().err


def test_empty_reachable_set_exit_1(run, tmp_path, capsys):
    doc = shipped_scenario().to_dict()
    doc["planner"]["horizon"] = 0.3
    path = tmp_path / "short.json"
    path.write_text(json.dumps(doc))
    out = tmp_path / "short"
    assert run("plan", out, scenario=path) == 1
    report = json.loads((out / "report.json").read_text())
    assert report["errors"][0]["stage"] == "plan"
    assert not (out / "plan.csv").exists()


def test_locked_output_directory(run, tmp_path):
    out = tmp_path / "locked"
    out.mkdir()
    with FileLock(str(out / ".lock")):
        assert run("hjb", out) == 2


@pytest.mark.skipif(shutil.which("rendezvous") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["rendezvous", "hjb", "--scenario", str(tmp_path / "none.json"),
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 2
    assert "does not exist" in res.stderr
