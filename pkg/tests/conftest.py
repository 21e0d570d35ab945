from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from risk_sieve.evaluation import ALL_MODELS, BASELINE_THRESHOLD, scenario_scores
from risk_sieve.geometry import PolylinePath
from risk_sieve.risk_models import RiskConfig
from risk_sieve.scenario import AgentState, GeneratorConfig, Scenario, generate


def agent(agent_id, vertices, speed=0.0) -> AgentState:
    path = PolylinePath(vertices)
    return AgentState(agent_id, path.start, float(speed), path)


def scene(ego, *others) -> Scenario:
    return Scenario(ego, tuple(others))


def random_polyline(rng, n_min=2, n_max=5, scale=20.0, offset=(0.0, 0.0)):
    n = int(rng.integers(n_min, n_max + 1))
    while True:
        v = rng.uniform(-scale, scale, size=(n, 2)) + np.asarray(offset)
        if np.all(np.hypot(*np.diff(v, axis=0).T) > 1e-3):
            return PolylinePath(v)


@dataclass
class Dataset:
    scenarios: list
    cfg: RiskConfig
    scores: dict  # model -> list of per-scenario arrays (agents ordered by id)

    @property
    def labels(self):
        return [s >= BASELINE_THRESHOLD for s in self.scores["survival"]]


@pytest.fixture(scope="session")
def small_dataset() -> list[Scenario]:
    return generate(GeneratorConfig(n_scenarios=20), 7)


@pytest.fixture(scope="session")
def dataset() -> Dataset:
    """The default 500-scenario set (seed 42) scored with every model once per session."""
    cfg = RiskConfig()
    scenarios = generate(GeneratorConfig(), 42)
    scores = {m: [scenario_scores(s, m, cfg) for s in scenarios] for m in ALL_MODELS}
    return Dataset(scenarios, cfg, scores)
