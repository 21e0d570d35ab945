"""Threshold filters, their calibration, and the stacked filter pipeline with importance tiers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .risk_models import MODELS, RiskConfig, get_model
from .scenario import Scenario


@dataclass(frozen=True)
class FilterStage:
    model: str
    threshold: float

    def __post_init__(self):
        get_model(self.model)
        if not self.threshold >= 0:
            raise ValueError(f"stage threshold must be >= 0, got {self.threshold!r}")


DEFAULT_STAGE_MODELS = ("path_distance", "trajectory_distance", "gaussian")
DEFAULT_TIER_THRESHOLDS = (1e-5, 1e-15, 1e-25)


@dataclass(frozen=True)
class Pipeline:
    """Stages run in order; each one scores only the survivors of the previous stage.

    Final survivors are sorted into tiers by ``tier_model``: tier 0 holds scores
    ``>= tier_thresholds[0]``, tier ``j`` holds ``[tier_thresholds[j], tier_thresholds[j-1])``,
    and a trailing residual tier holds whatever falls below the last threshold.
    """

    stages: tuple[FilterStage, ...]
    tier_model: str = "survival"
    tier_thresholds: tuple[float, ...] = DEFAULT_TIER_THRESHOLDS

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "tier_thresholds", tuple(float(t) for t in self.tier_thresholds))
        if not self.stages:
            raise ValueError("pipeline needs at least one stage")
        get_model(self.tier_model)
        thr = self.tier_thresholds
        if any(not math.isfinite(t) for t in thr):
            raise ValueError("tier_thresholds must be finite")
        if any(a <= b for a, b in zip(thr, thr[1:])):
            raise ValueError("tier_thresholds must be strictly decreasing")

    @classmethod
    def default(cls, thresholds=(0.0, 0.0, 0.0)) -> Pipeline:
        return cls(tuple(FilterStage(m, t) for m, t in zip(DEFAULT_STAGE_MODELS, thresholds)))

    def to_dict(self) -> dict:
        return {
            "stages": [{"model": s.model, "threshold": s.threshold} for s in self.stages],
            "tier_model": self.tier_model,
            "tier_thresholds": list(self.tier_thresholds),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Pipeline:
        if not isinstance(d, dict):
            raise ValueError("pipeline must be a JSON object")
        unknown = set(d) - {"stages", "tier_model", "tier_thresholds"}
        if unknown:
            raise ValueError(f"unknown pipeline field(s): {', '.join(sorted(unknown))}")
        if "stages" not in d:
            raise ValueError("missing field: stages")
        stages = []
        for i, s in enumerate(d["stages"]):
            if not isinstance(s, dict) or set(s) != {"model", "threshold"}:
                raise ValueError(f"stages[{i}] needs exactly the fields model, threshold")
            stages.append(FilterStage(str(s["model"]), float(s["threshold"])))
        kw = {}
        if "tier_model" in d:
            kw["tier_model"] = str(d["tier_model"])
        if "tier_thresholds" in d:
            kw["tier_thresholds"] = tuple(float(t) for t in d["tier_thresholds"])
        return cls(tuple(stages), **kw)


def save_pipeline(pipeline: Pipeline, path) -> None:
    with open(path, "w") as f:
        json.dump(pipeline.to_dict(), f, indent=2)
        f.write("\n")


def load_pipeline(path) -> Pipeline:
    with open(path) as f:
        return Pipeline.from_dict(json.load(f))


@dataclass(frozen=True)
class StageResult:
    model: str
    threshold: float
    scores: dict[str, float]  # every agent this stage looked at
    kept: tuple[str, ...]
    calls: int


@dataclass(frozen=True)
class FilterTrace:
    input_ids: tuple[str, ...]
    stages: tuple[StageResult, ...]
    tiers: tuple[tuple[str, ...], ...]
    tier_scores: dict[str, float] = field(default_factory=dict)

    @property
    def survivors(self) -> tuple[str, ...]:
        return self.stages[-1].kept if self.stages else self.input_ids

    def counts(self) -> list[int]:
        """Agent count before the first stage followed by the survivor count of every stage."""
        return [len(self.input_ids), *(len(s.kept) for s in self.stages)]

    @property
    def calls(self) -> int:
        return sum(s.calls for s in self.stages)

    def to_dict(self) -> dict:
        return {
            "counts": self.counts(),
            "stages": [
                {"model": s.model, "threshold": s.threshold, "kept": list(s.kept), "calls": s.calls,
                 "scores": s.scores}
                for s in self.stages
            ],
            "tiers": [list(t) for t in self.tiers],
            "tier_sizes": [len(t) for t in self.tiers],
        }


def apply_threshold(scores: dict[str, float], threshold: float) -> tuple[list[str], list[str]]:
    """Split ids into kept (score >= threshold) and dropped, both in input order."""
    kept, dropped = [], []
    for agent_id, value in scores.items():
        (kept if value >= threshold else dropped).append(agent_id)
    return kept, dropped


def threshold_for_misses(scores, important, max_misses: int) -> float:
    """Largest safe threshold that drops at most ``max_misses`` important entries.

    The cut sits halfway between the lowest important score that must survive and
    the next lower score overall, so every score keeps a margin to the threshold.
    Returns 0 when nothing can be dropped and ``inf`` when nothing is important.
    """
    scores = np.asarray(scores, dtype=float)
    important = np.asarray(important, dtype=bool)
    if scores.size == 0:
        raise ValueError("cannot calibrate on an empty set")
    pos = np.sort(scores[important])
    if pos.size <= max_misses:
        return math.inf
    floor = pos[max_misses]
    below = scores[scores < floor]
    if below.size == 0:
        return 0.0
    return 0.5 * (floor + below.max())


def calibrate(model: str, cfg: RiskConfig, scenarios, labels, max_fn_rate: float = 0.0) -> float:
    """Threshold for ``model`` whose aggregate FN rate over the scenarios stays within ``max_fn_rate``.

    ``labels`` holds one boolean array per scenario, ordered by agent id.
    """
    if not 0.0 <= max_fn_rate <= 1.0:
        raise ValueError("max_fn_rate must be in [0, 1]")
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("cannot calibrate on an empty scenario set")
    fn = get_model(model)
    scores, imp = [], []
    for sc, lab in zip(scenarios, labels):
        others = sorted(sc.others, key=lambda a: a.id)
        scores.extend(fn(sc.ego, a, cfg).value for a in others)
        imp.extend(np.asarray(lab, dtype=bool))
    n_pos = int(np.sum(imp))
    return threshold_for_misses(scores, imp, _allowed_misses(max_fn_rate, n_pos))


def _allowed_misses(rate: float, n_pos: int) -> int:
    return int(math.floor(rate * n_pos + 1e-9))


def run_pipeline(scenario: Scenario, pipeline: Pipeline, cfg: RiskConfig, agents=None) -> FilterTrace:
    pool = sorted(scenario.others if agents is None else agents, key=lambda a: a.id)
    input_ids = tuple(a.id for a in pool)
    stages = []
    for stage in pipeline.stages:
        fn = MODELS[stage.model]
        scores = {a.id: fn(scenario.ego, a, cfg).value for a in pool}
        kept, _ = apply_threshold(scores, stage.threshold)
        keep = set(kept)
        pool = [a for a in pool if a.id in keep]
        stages.append(StageResult(stage.model, stage.threshold, scores, tuple(kept), len(scores)))
    tier_fn = MODELS[pipeline.tier_model]
    tier_scores = {a.id: tier_fn(scenario.ego, a, cfg).value for a in pool}
    return FilterTrace(input_ids, tuple(stages), assign_tiers(tier_scores, pipeline.tier_thresholds), tier_scores)


def assign_tiers(scores: dict[str, float], thresholds) -> tuple[tuple[str, ...], ...]:
    """Partition ids by descending thresholds; the last tier collects the rest."""
    tiers = [[] for _ in range(len(thresholds) + 1)]
    for agent_id, value in scores.items():
        j = 0
        while j < len(thresholds) and value < thresholds[j]:
            j += 1
        tiers[j].append(agent_id)
    return tuple(tuple(t) for t in tiers)


def calibrate_pipeline(
    scenarios, labels, cfg: RiskConfig, max_fn_rate: float = 0.0,
    models=DEFAULT_STAGE_MODELS, tier_model: str = "survival",
    tier_thresholds=DEFAULT_TIER_THRESHOLDS,
) -> Pipeline:
    """Calibrate stage thresholds in order, each on the agents left by the stages before it.

    The miss budget ``max_fn_rate * positives`` is shared: later stages may only
    spend what earlier ones left over.
    """
    if not 0.0 <= max_fn_rate <= 1.0:
        raise ValueError("max_fn_rate must be in [0, 1]")
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("cannot calibrate on an empty scenario set")
    pools = []
    for sc, lab in zip(scenarios, labels):
        others = sorted(sc.others, key=lambda a: a.id)
        pools.append((sc, [(a, bool(i)) for a, i in zip(others, lab)]))
    n_pos = sum(i for _, pool in pools for _, i in pool)
    budget = _allowed_misses(max_fn_rate, n_pos)
    stages = []
    for model in models:
        fn = get_model(model)
        scored = [[(a, i, fn(sc.ego, a, cfg).value) for a, i in pool] for sc, pool in pools]
        flat = [(v, i) for rows in scored for _, i, v in rows]
        thr = threshold_for_misses([v for v, _ in flat], [i for _, i in flat], budget) if flat else 0.0
        if math.isinf(thr):
            # the budget would allow dropping everything; keep the stage a no-op instead
            thr = 0.0
        budget -= sum(1 for v, i in flat if i and v < thr)
        pools = [(sc, [(a, i) for a, i, v in rows if v >= thr]) for (sc, _), rows in zip(pools, scored)]
        stages.append(FilterStage(model, float(thr)))
    return Pipeline(tuple(stages), tier_model, tuple(tier_thresholds))


def calibrate_tiers(
    tier_scores, targets=(1.5, 5.5), floor: float = 1e-25, candidates=None
) -> tuple[float, ...]:
    """Pick tier thresholds above ``floor`` so mean tier sizes land near ``targets``.

    ``tier_scores`` holds one array of tier-model scores per scenario (final survivors).
    ``targets`` are the desired mean sizes of the tiers from the top down; thresholds
    are chosen greedily from ``candidates`` (every decade above ``floor`` by default).
    """
    arrays = [np.asarray(s, dtype=float) for s in tier_scores]
    if not arrays:
        raise ValueError("no scenarios to calibrate tiers on")
    if candidates is None:
        candidates = 10.0 ** np.arange(math.ceil(math.log10(floor)) + 1, 1)
    candidates = np.sort(np.asarray(candidates, dtype=float))[::-1]
    chosen: list[float] = []
    upper = math.inf
    for target in targets:
        best, best_err = None, math.inf
        for c in candidates:
            if not (floor < c < upper):
                continue
            size = np.mean([np.sum((a >= c) & (a < upper)) for a in arrays])
            err = abs(size - target)
            if err < best_err:
                best, best_err = float(c), err
        if best is None:
            break
        chosen.append(best)
        upper = best
    return (*chosen, floor)
