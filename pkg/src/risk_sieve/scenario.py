"""Scenario data model, JSON persistence and the synthetic intersection generator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import TOL, Point2, PolylinePath

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Raised for malformed scenario documents."""


class GenerationError(ValueError):
    """Raised when a generator configuration cannot be realized."""


@dataclass(frozen=True)
class AgentState:
    id: str
    position: Point2
    speed: float
    path: PolylinePath


@dataclass(frozen=True)
class Scenario:
    ego: AgentState
    others: tuple[AgentState, ...]
    time: float = 0.0
    seed: int = 0

    def agent(self, agent_id: str) -> AgentState:
        for a in self.others:
            if a.id == agent_id:
                return a
        raise KeyError(agent_id)


def validate(scenario: Scenario) -> list[str]:
    """Return the list of invariant violations; empty for a well-formed scenario."""
    problems = []
    seen = set()
    for a in (scenario.ego, *scenario.others):
        if a.id in seen:
            problems.append(f"duplicate id: {a.id}")
        seen.add(a.id)
        if not (math.isfinite(a.position[0]) and math.isfinite(a.position[1])):
            problems.append(f"non-finite coordinate: {a.id}")
            continue
        if not math.isfinite(a.speed):
            problems.append(f"non-finite speed: {a.id}")
        elif a.speed < 0:
            problems.append(f"negative speed: {a.id}")
        if len(a.path) < 2:
            problems.append(f"degenerate path: {a.id}")
        v0 = a.path.vertices[0]
        if math.hypot(v0[0] - a.position[0], v0[1] - a.position[1]) > TOL:
            problems.append(f"path origin mismatch: {a.id}")
    if not math.isfinite(scenario.time):
        problems.append("non-finite time")
    return problems


# ---------------------------------------------------------------------------
# JSON persistence
# ---------------------------------------------------------------------------


def _agent_to_dict(a: AgentState) -> dict:
    return {"id": a.id, "x": a.position[0], "y": a.position[1], "speed": a.speed, "path": a.path.tolist()}


def save(scenarios) -> bytes:
    doc = {
        "version": SCHEMA_VERSION,
        "scenarios": [
            {
                "seed": s.seed,
                "time": s.time,
                "ego": _agent_to_dict(s.ego),
                "others": [_agent_to_dict(a) for a in s.others],
            }
            for s in scenarios
        ],
    }
    return json.dumps(doc, allow_nan=False, separators=(",", ":")).encode("utf-8")


def _finite(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"expected a number for {what}, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioError(f"non-finite coordinate in {what}")
    return value


def _agent_from_dict(d: dict) -> AgentState:
    try:
        agent_id = str(d["id"])
        x = _finite(d["x"], f"agent {agent_id} x")
        y = _finite(d["y"], f"agent {agent_id} y")
        speed = _finite(d["speed"], f"agent {agent_id} speed")
        raw_path = d["path"]
    except KeyError as exc:
        raise ScenarioError(f"agent is missing field {exc.args[0]!r}") from None
    pts = [(_finite(p[0], f"agent {agent_id} path"), _finite(p[1], f"agent {agent_id} path")) for p in raw_path]
    try:
        path = PolylinePath(pts)
    except ValueError as exc:
        raise ScenarioError(f"agent {agent_id}: {exc}") from None
    return AgentState(agent_id, Point2(x, y), speed, path)


def _reject_constant(name):
    raise ScenarioError(f"non-finite coordinate ({name})")


def load(data: bytes | str) -> list[Scenario]:
    """Parse a scenario document; raises :class:`ScenarioError` on schema or invariant violations.

    JSON syntax errors propagate as :class:`json.JSONDecodeError` (with line numbers).
    """
    doc = json.loads(data, parse_constant=_reject_constant)
    if not isinstance(doc, dict) or doc.get("version") != SCHEMA_VERSION:
        version = doc.get("version") if isinstance(doc, dict) else None
        raise ScenarioError(f"unsupported schema version: {version!r}")
    out = []
    for i, raw in enumerate(doc.get("scenarios", [])):
        try:
            ego = _agent_from_dict(raw["ego"])
            others = tuple(_agent_from_dict(a) for a in raw["others"])
            sc = Scenario(ego, others, _finite(raw["time"], "time"), int(raw["seed"]))
        except KeyError as exc:
            raise ScenarioError(f"scenario {i} is missing field {exc.args[0]!r}") from None
        problems = validate(sc)
        if problems:
            raise ScenarioError(f"scenario {i}: " + "; ".join(problems))
        out.append(sc)
    return out


# ---------------------------------------------------------------------------
# synthetic intersection generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntersectionLayout:
    """Symmetric intersection: ``arms`` evenly spaced roads, ``lanes_per_arm`` lanes each way.

    ``arm_length`` bounds where agents are placed; exit paths continue for a
    further ``exit_extension`` metres so predictions do not stall at the map edge.
    """

    arms: int = 4
    lanes_per_arm: int = 2
    lane_width: float = 3.5
    arm_length: float = 500.0
    exit_extension: float = 300.0

    @property
    def box_half(self) -> float:
        return self.lanes_per_arm * self.lane_width + 3.0

    def _axes(self, arm: int):
        theta = 2.0 * math.pi * arm / self.arms
        u = np.array([math.cos(theta), math.sin(theta)])
        n = np.array([-u[1], u[0]])
        return u, n

    def inbound_lane(self, arm: int, lane: int) -> tuple[np.ndarray, np.ndarray]:
        """(stop-line point, unit vector pointing away from the junction) of an approach lane."""
        u, n = self._axes(arm)
        return u * self.box_half + n * (lane + 0.5) * self.lane_width, u

    def outbound_lane(self, arm: int, lane: int) -> tuple[np.ndarray, np.ndarray]:
        u, n = self._axes(arm)
        return u * self.box_half - n * (lane + 0.5) * self.lane_width, u

    def maneuvers(self, arm: int, lane: int) -> list[int]:
        """Target arms reachable from an approach lane.

        Left turns leave from the innermost lane, right turns from the outermost,
        and every lane may go straight.
        """
        targets = []
        u_in, _ = self._axes(arm)
        heading_in = math.atan2(-u_in[1], -u_in[0])
        for b in range(self.arms):
            if b == arm:
                continue
            u_out, _ = self._axes(b)
            turn = math.atan2(u_out[1], u_out[0]) - heading_in
            turn = (turn + math.pi) % (2.0 * math.pi) - math.pi
            if abs(turn) < math.radians(30):
                targets.append(b)
            elif turn > 0 and lane == 0:
                targets.append(b)
            elif turn < 0 and lane == self.lanes_per_arm - 1:
                targets.append(b)
        return targets

    def connector(self, arm: int, lane: int, target: int) -> np.ndarray:
        """Vertices from stop line to exit start; turns use three chords of a quadratic Bezier."""
        p0, u0 = self.inbound_lane(arm, lane)
        p1, u1 = self.outbound_lane(target, lane)
        h0 = -u0
        cross = h0[0] * u1[1] - h0[1] * u1[0]
        if abs(cross) < 1e-9:
            return np.array([p0, p1])
        w = p1 - p0
        t = (w[0] * u1[1] - w[1] * u1[0]) / cross
        ctrl = p0 + t * h0
        ts = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])[:, None]
        return (1 - ts) ** 2 * p0 + 2 * (1 - ts) * ts * ctrl + ts**2 * p1

    def route_path(self, arm: int, lane: int, target: int, offset: float) -> PolylinePath:
        """Path of an agent ``offset`` metres before the stop line of an approach lane."""
        stop, u = self.inbound_lane(arm, lane)
        conn = self.connector(arm, lane, target)
        exit_start, u_out = self.outbound_lane(target, lane)
        end = exit_start + u_out * (self.arm_length + self.exit_extension)
        pts = [stop + u * offset] if offset > 1e-6 else []
        pts.extend(conn)
        pts.append(end)
        return PolylinePath(np.array(pts))

    def exit_path(self, arm: int, lane: int, offset: float) -> PolylinePath:
        start, u = self.outbound_lane(arm, lane)
        end = start + u * (self.arm_length + self.exit_extension)
        return PolylinePath(np.array([start + u * offset, end]))

    def lanes(self) -> list[tuple[str, int, int]]:
        """Placement lanes as ``(kind, arm, lane)``, kind in {"in", "out"}."""
        return [
            (kind, a, i)
            for kind in ("in", "out")
            for a in range(self.arms)
            for i in range(self.lanes_per_arm)
        ]


@dataclass(frozen=True)
class GeneratorConfig:
    n_agents_range: tuple[int, int] = (30, 100)
    spacing_range: tuple[float, float] = (5.0, 100.0)
    speed_range: tuple[float, float] = (0.0, 25.0)
    n_scenarios: int = 500
    layout: IntersectionLayout = field(default_factory=IntersectionLayout)

    def __post_init__(self):
        lo, hi = self.n_agents_range
        if not (1 <= lo <= hi):
            raise GenerationError("n_agents_range must satisfy 1 <= min <= max")
        slo, shi = self.spacing_range
        if not (0 < slo <= shi):
            raise GenerationError("spacing_range must satisfy 0 < min <= max")
        vlo, vhi = self.speed_range
        if not (0 <= vlo <= vhi) or not math.isfinite(vhi):
            raise GenerationError("speed_range must satisfy 0 <= min <= max < inf")
        if self.n_scenarios < 1:
            raise GenerationError("n_scenarios must be positive")
        lay = self.layout
        if lay.arms < 3 or lay.lanes_per_arm < 1 or lay.lane_width <= 0 or lay.arm_length <= 0:
            raise GenerationError("layout needs >= 3 arms, >= 1 lane, positive lane width and arm length")
        per_lane = int(lay.arm_length // slo) + 1
        capacity = per_lane * len(lay.lanes())
        if hi + 1 > capacity:
            raise GenerationError(
                f"n_agents_range: {hi} agents plus ego cannot fit on {len(lay.lanes())} lanes "
                f"of {lay.arm_length} m with spacing >= {slo} m"
            )

    @classmethod
    def from_dict(cls, d: dict) -> GeneratorConfig:
        d = dict(d)
        known = {"n_agents_range", "spacing_range", "speed_range", "n_scenarios", "layout"}
        unknown = set(d) - known
        if unknown:
            raise GenerationError(f"unknown config field: {sorted(unknown)[0]}")
        if "layout" in d:
            try:
                d["layout"] = IntersectionLayout(**d["layout"])
            except TypeError as exc:
                raise GenerationError(f"layout: {exc}") from None
        for key in ("n_agents_range", "spacing_range", "speed_range"):
            if key in d:
                if len(d[key]) != 2:
                    raise GenerationError(f"{key} must have two entries")
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        lay = self.layout
        return {
            "n_agents_range": list(self.n_agents_range),
            "spacing_range": list(self.spacing_range),
            "speed_range": list(self.speed_range),
            "n_scenarios": self.n_scenarios,
            "layout": {
                "arms": lay.arms,
                "lanes_per_arm": lay.lanes_per_arm,
                "lane_width": lay.lane_width,
                "arm_length": lay.arm_length,
                "exit_extension": lay.exit_extension,
            },
        }


def generate_one(config: GeneratorConfig, seed: int) -> Scenario:
    """Build a single scenario from its own seed.

    Agents queue up lane by lane, starting at the junction and moving outward,
    with a gap drawn from ``spacing_range`` between neighbours on the same lane.
    The ego is then picked among the agents on the approach lanes.
    """
    rng = np.random.default_rng(seed)
    lay = config.layout
    lo, hi = config.n_agents_range
    slo, shi = config.spacing_range
    n_total = int(rng.integers(lo, hi + 1)) + 1

    lanes = lay.lanes()
    cursor: list[float | None] = [None] * len(lanes)
    open_lanes = list(range(len(lanes)))
    slots: list[tuple[int, float]] = []
    while len(slots) < n_total:
        if not open_lanes:
            raise GenerationError(
                f"n_agents_range: could not place {n_total} agents with spacing in [{slo}, {shi}] m"
            )
        k = open_lanes[int(rng.integers(len(open_lanes)))]
        if cursor[k] is None:
            q = float(rng.uniform(0.0, shi))
        else:
            q = cursor[k] + float(rng.uniform(slo, shi))
        if q > lay.arm_length:
            open_lanes.remove(k)
            continue
        cursor[k] = q
        slots.append((k, q))

    inbound = [i for i, (k, _) in enumerate(slots) if lanes[k][0] == "in"]
    if not inbound:
        raise GenerationError("no agent landed on an approach lane for the ego")
    ego_slot = inbound[int(rng.integers(len(inbound)))]

    agents = []
    vlo, vhi = config.speed_range
    for i, (k, q) in enumerate(slots):
        kind, arm, lane = lanes[k]
        speed = float(rng.uniform(vlo, vhi))
        if kind == "in":
            targets = lay.maneuvers(arm, lane)
            path = lay.route_path(arm, lane, targets[int(rng.integers(len(targets)))], q)
        else:
            path = lay.exit_path(arm, lane, q)
        agents.append((path, speed, i == ego_slot))

    ego = None
    others = []
    for path, speed, is_ego in agents:
        if is_ego:
            ego = AgentState("ego", path.start, speed, path)
        else:
            others.append(AgentState(f"a{len(others)}", path.start, speed, path))
    return Scenario(ego, tuple(others), 0.0, int(seed))


def scenario_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32)]


def generate(config: GeneratorConfig, seed: int) -> list[Scenario]:
    """``config.n_scenarios`` scenarios, each reproducible alone from its recorded seed."""
    return [generate_one(config, s) for s in scenario_seeds(seed, config.n_scenarios)]
