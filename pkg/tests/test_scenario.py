from __future__ import annotations

import json
import math
from dataclasses import replace

import numpy as np
import pytest

from risk_sieve.scenario import (
    GenerationError,
    GeneratorConfig,
    IntersectionLayout,
    Scenario,
    ScenarioError,
    generate,
    generate_one,
    load,
    save,
    scenario_seeds,
    validate,
)

from .conftest import agent, scene


def _doc(scenarios):
    return json.loads(save(scenarios))


def test_generate_default_count_and_agent_range(dataset):
    scenarios = dataset.scenarios
    assert len(scenarios) == 500
    counts = [len(s.others) for s in scenarios]
    assert min(counts) >= 30 and max(counts) <= 100
    speeds = np.array([a.speed for s in scenarios for a in (s.ego, *s.others)])
    assert speeds.min() >= 0.0 and speeds.max() <= 25.0


def test_generated_scenarios_validate(dataset):
    assert all(validate(s) == [] for s in dataset.scenarios)


def test_generation_deterministic():
    cfg = GeneratorConfig(n_scenarios=5)
    assert save(generate(cfg, 3)) == save(generate(cfg, 3))
    assert save(generate(cfg, 3)) != save(generate(cfg, 4))


def test_scenario_replays_from_recorded_seed(small_dataset):
    cfg = GeneratorConfig(n_scenarios=20)
    for s in small_dataset[:3]:
        assert generate_one(cfg, s.seed) == s
    assert [s.seed for s in small_dataset] == scenario_seeds(7, 20)


def test_same_lane_gaps_within_spacing_range(small_dataset):
    # checked exhaustively: consecutive agents on every placement lane
    lay = IntersectionLayout()
    lo, hi = GeneratorConfig().spacing_range
    checked = 0
    for s in small_dataset:
        pos = np.array([a.position for a in (s.ego, *s.others)])
        for kind, arm, lane in lay.lanes():
            origin, u = lay.inbound_lane(arm, lane) if kind == "in" else lay.outbound_lane(arm, lane)
            rel = pos - origin
            along = rel @ u
            lateral = np.abs(rel @ np.array([-u[1], u[0]]))
            on_lane = np.sort(along[(lateral < 1e-6) & (along >= -1e-9)])
            gaps = np.diff(on_lane)
            assert np.all(gaps >= lo - 1e-6) and np.all(gaps <= hi + 1e-6)
            assert on_lane.size == 0 or on_lane[0] <= hi + 1e-6
            checked += gaps.size
    assert checked > 100


def test_layout_paths_start_at_agent_and_are_long():
    lay = IntersectionLayout()
    for arm in range(lay.arms):
        for lane in range(lay.lanes_per_arm):
            for target in lay.maneuvers(arm, lane):
                p = lay.route_path(arm, lane, target, 30.0)
                assert p.length > 300
    assert len({t for lane in range(2) for t in lay.maneuvers(0, lane)}) == 3


def test_infeasible_config_names_constraint():
    with pytest.raises(GenerationError, match="n_agents_range"):
        GeneratorConfig(n_agents_range=(30, 1000), spacing_range=(50, 100))


@pytest.mark.parametrize(
    "kw",
    [{"n_agents_range": (10, 5)}, {"spacing_range": (0, 5)}, {"speed_range": (5, 1)}, {"n_scenarios": 0}],
)
def test_bad_config_rejected(kw):
    with pytest.raises(GenerationError):
        GeneratorConfig(**kw)


def test_config_dict_round_trip_and_unknown_field():
    cfg = GeneratorConfig(n_scenarios=3, speed_range=(1.0, 2.0))
    assert GeneratorConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(GenerationError, match="n_agent"):
        GeneratorConfig.from_dict({"n_agent": 3})


def test_round_trip(small_dataset):
    assert load(save(small_dataset)) == small_dataset
    assert save(load(save(small_dataset))) == save(small_dataset)


def test_schema_fields(small_dataset):
    doc = _doc(small_dataset[:1])
    assert doc["version"] == 1
    sc = doc["scenarios"][0]
    assert set(sc) == {"seed", "time", "ego", "others"}
    assert set(sc["ego"]) == {"id", "x", "y", "speed", "path"}


def test_load_rejects_nan_position(small_dataset):
    text = save(small_dataset[:1]).decode()
    doc = json.loads(text)
    doc["scenarios"][0]["others"][0]["x"] = "NaN-marker"
    bad = json.dumps(doc).replace('"NaN-marker"', "NaN")
    with pytest.raises(ScenarioError, match="non-finite coordinate"):
        load(bad)


def test_load_rejects_duplicate_ids(small_dataset):
    doc = _doc(small_dataset[:1])
    others = doc["scenarios"][0]["others"]
    others[0]["id"] = others[1]["id"] = "a7"
    with pytest.raises(ScenarioError, match="duplicate id: a7"):
        load(json.dumps(doc))


def test_load_rejects_unknown_version(small_dataset):
    doc = _doc(small_dataset[:1])
    doc["version"] = 2
    with pytest.raises(ScenarioError, match="version"):
        load(json.dumps(doc))


def test_load_reports_syntax_error_line():
    with pytest.raises(json.JSONDecodeError) as exc:
        load('{"version": 1,\n "scenarios": [}')
    assert exc.value.lineno == 2


def test_validate_examples():
    ego = agent("ego", [(0, 0), (10, 0)], 5)
    good = scene(ego, agent("a3", [(0, 5), (10, 5)], 1))
    assert validate(good) == []
    neg = scene(ego, replace(agent("a3", [(0, 5), (10, 5)]), speed=-1.0))
    assert validate(neg) == ["negative speed: a3"]
    moved = scene(ego, replace(agent("a9", [(0, 5), (10, 5)]), position=(1.0, 5.0)))
    assert validate(moved) == ["path origin mismatch: a9"]
    dup = scene(ego, agent("a1", [(0, 5), (10, 5)]), agent("a1", [(0, 8), (10, 8)]))
    assert validate(dup) == ["duplicate id: a1"]
    nan = scene(ego, replace(agent("a2", [(0, 5), (10, 5)]), speed=math.nan))
    assert validate(nan) == ["non-finite speed: a2"]


def test_scenario_agent_lookup():
    s = scene(agent("ego", [(0, 0), (1, 0)]), agent("a1", [(0, 5), (1, 5)]))
    assert s.agent("a1").id == "a1"
    with pytest.raises(KeyError):
        s.agent("zz")
    assert isinstance(s, Scenario)
