import json

import pytest

from src.models.models import ALL_DETECTORS, SensorReading
from src.ui.cli import build_parser, main, scenario_from_args
from src.utils import storage
from src.utils.errors import ConfigError


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out.strip()
    return code, out


def test_generate_world(tmp_path, capsys):
    target = tmp_path / "world.json"
    code, out = run(["generate", "world", "--nx", "3", "--ny", "3", "--seed", "2", "-o", str(target)], capsys)
    assert code == 0
    assert out == str(target)
    doc = storage.load_map(str(target))
    assert (doc.nx, doc.ny) == (3, 3)


def test_generate_scenario_and_simulate(tmp_path, capsys):
    scenario_path = tmp_path / "scenario.json"
    code, _ = run([
        "generate", "scenario", "--nx", "3", "--ny", "3", "--seed", "4", "--tasks", "2", "-k", "4",
        "--embed-world", "-o", str(scenario_path),
    ], capsys)
    assert code == 0
    scenario = storage.load_scenario(str(scenario_path))
    assert len(scenario.tasks) == 2
    assert scenario.world is not None

    first, second = tmp_path / "a.json", tmp_path / "b.json"
    for target in (first, second):
        code, _ = run(["simulate", "--scenario", str(scenario_path), "-o", str(target)], capsys)
        assert code == 0
    assert first.read_bytes() == second.read_bytes()
    log = storage.load_episode_log(str(first))
    assert log.metrics.tasks_drawn == 2


def test_simulate_overrides(tmp_path, capsys):
    target = tmp_path / "episode.json"
    code, _ = run([
        "simulate", "--nx", "2", "--ny", "2", "--seed", "1", "-k", "3", "--false-negative", "0",
        "--false-positive", "0", "-o", str(target),
    ], capsys)
    assert code == 0
    # no tasks in a bare grid scenario
    assert storage.load_episode_log(str(target)).records == []


def test_benchmark_writes_csv(tmp_path, capsys):
    target = tmp_path / "bench.csv"
    code, _ = run([
        "benchmark", "--nx", "3", "--ny", "3", "--sizes", "2,3", "--lengths", "2,9", "--runs", "1",
        "-o", str(target),
    ], capsys)
    assert code == 0
    lines = target.read_text().splitlines()
    assert lines[0] == "hypothesis_size,exploration_length,update_time_ms,largest_clique_cost"
    assert len(lines) == 5
    rows = storage.load_benchmark_csv(str(target))
    assert rows[-1].largest_clique_cost == 4.0


def test_infer_writes_a_posterior(tmp_path, capsys):
    evidence = tmp_path / "evidence.json"
    storage.save_evidence(
        [SensorReading(location=(0, 0), detector=d, result=i % 3 == 0) for i, d in enumerate(ALL_DETECTORS[:6])],
        str(evidence),
    )
    target = tmp_path / "posterior.json"
    code, _ = run([
        "infer", "--nx", "2", "--ny", "2", "-k", "3", "--evidence", str(evidence), "-o", str(target),
    ], capsys)
    assert code == 0
    doc = json.loads(target.read_text())
    names = [name for name, _ in doc["entries"]]
    assert names == ["M0", "M1", "M2", "NOTA"]
    assert sum(p for _, p in doc["entries"]) == pytest.approx(1.0, abs=1e-9)
    assert sorted(doc["maps"]) == ["M0", "M1", "M2"]


def test_infer_rejects_evidence_outside_the_grid(tmp_path, capsys):
    evidence = tmp_path / "evidence.json"
    storage.save_evidence([SensorReading(location=(4, 4), detector=ALL_DETECTORS[0], result=True)], str(evidence))
    code, _ = run(["infer", "--nx", "2", "--ny", "2", "--evidence", str(evidence)], capsys)
    assert code == 2


def test_missing_grid_is_a_config_error(capsys):
    code, out = run(["simulate"], capsys)
    assert code == 2
    assert out == ""


def test_unknown_method_is_a_config_error(tmp_path, capsys):
    code, _ = run(["compare", "--nx", "2", "--ny", "2", "--methods", "teleport", "-o", str(tmp_path / "c.csv")], capsys)
    assert code == 2


def test_missing_scenario_file(tmp_path, capsys):
    code, _ = run(["simulate", "--scenario", str(tmp_path / "nope.json")], capsys)
    assert code == 2


def test_scenario_overrides_are_validated():
    args = build_parser().parse_args(["simulate", "--nx", "2", "--ny", "2", "-k", "0"])
    with pytest.raises(ConfigError):
        scenario_from_args(args)
    args = build_parser().parse_args(["simulate", "--nx", "3", "--ny", "2", "--hierarchy", "--threshold", "8"])
    scenario = scenario_from_args(args)
    assert scenario.hierarchy.enabled
    assert scenario.hierarchy.threshold == 8.0
