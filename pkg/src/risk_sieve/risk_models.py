"""The nine pairwise risk models behind one scoring interface.

Every model maps ``(ego, other, cfg)`` to a :class:`RiskScore`. Distance-style
models return ``eps / (eps + d)`` in ``(0, 1]``; the Gaussian model returns a
raw overlap density in 1/m^2; survival returns an event probability in ``[0, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np
from numba import njit

from .geometry import _clipped_min_dist, _project_point, _sample_path, find_crossing
from .prediction import GaussianState, PredictionConfig, UncertaintyConfig, _predict
from .scenario import AgentState, Scenario


@dataclass(frozen=True)
class SurvivalConfig:
    """Escape rate (1/s) of the competing non-collision event, and the rate-conversion step ``dt``.

    ``dt=None`` uses the prediction step.
    """

    escape_rate: float = 0.2
    dt: float | None = None

    def __post_init__(self):
        if self.escape_rate < 0:
            raise ValueError("escape_rate must be non-negative")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class RiskConfig:
    epsilon: float = 1.0
    prediction: PredictionConfig = field(default_factory=PredictionConfig)
    uncertainty: UncertaintyConfig = field(default_factory=UncertaintyConfig)
    survival: SurvivalConfig = field(default_factory=SurvivalConfig)
    # lateral distance under which another agent counts as being on the ego path
    same_path_tol: float = 0.5

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.same_path_tol < 0:
            raise ValueError("same_path_tol must be non-negative")

    @property
    def dt(self) -> float:
        return self.survival.dt if self.survival.dt is not None else self.prediction.step

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RiskConfig:
        """Build from nested plain dicts; unknown or malformed fields raise ``ValueError`` naming them."""
        sections = {"prediction": PredictionConfig, "uncertainty": UncertaintyConfig, "survival": SurvivalConfig}
        kw = {}
        for key, value in d.items():
            if key in sections:
                sub = sections[key]
                if not isinstance(value, dict):
                    raise ValueError(f"{key} must be an object")
                names = {f.name for f in fields(sub)}
                for k in value:
                    if k not in names:
                        raise ValueError(f"unknown config field: {key}.{k}")
                try:
                    kw[key] = sub(**value)
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"{key}: {exc}") from None
            elif key in ("epsilon", "same_path_tol"):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ValueError(f"{key} must be a number")
                kw[key] = float(value)
            else:
                raise ValueError(f"unknown config field: {key}")
        return cls(**kw)


@dataclass(frozen=True)
class RiskScore:
    value: float
    model: str
    pair: tuple[str, str]


def inverse_distance(d: float, eps: float) -> float:
    return eps / (eps + d)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _pair_distances(v1, c1, sp1, v2, c2, sp2, step, n):
    p1 = _predict(v1, c1, sp1, step, n)
    p2 = _predict(v2, c2, sp2, step, n)
    d = np.empty(n)
    for k in range(n):
        dx = p2[k, 0] - p1[k, 0]
        dy = p2[k, 1] - p1[k, 1]
        d[k] = math.sqrt(dx * dx + dy * dy)
    return d


@njit(cache=True)
def _closest_encounter(v1, c1, sp1, v2, c2, sp2, step, n):
    d = _pair_distances(v1, c1, sp1, v2, c2, sp2, step, n)
    k = np.argmin(d)  # first occurrence, i.e. earliest time on ties
    return d[k], k


@njit(cache=True)
def _overlap_series(v1, c1, sp1, v2, c2, sp2, step, n, sigma0, growth):
    """Product-Gaussian overlap ``P_o`` at every grid step for isotropic, equal covariances."""
    d = _pair_distances(v1, c1, sp1, v2, c2, sp2, step, n)
    po = np.empty(n)
    for k in range(n):
        sd = sigma0 + growth * (k * step)
        var = 2.0 * sd * sd  # sigma_1^2 + sigma_2^2
        po[k] = math.exp(-0.5 * d[k] * d[k] / var) / (2.0 * math.pi * var)
    return po


@njit(cache=True)
def _circle_gap(v1, c1, sp1, v2, c2, sp2, step, n, sigma0, growth, k_circles):
    p1 = _predict(v1, c1, sp1, step, n)
    half = (k_circles - 1) / 2.0
    arclens = np.empty(n)
    centers = np.empty((n, 2))
    best = np.inf
    total = c2[c2.shape[0] - 1]
    for j in range(k_circles):
        for k in range(n):
            s = k * step
            arclens[k] = min(sp2 * s, total) + (j - half) * (sigma0 + growth * s)
        _sample_path(v2, c2, arclens, centers, True)
        for k in range(n):
            dx = centers[k, 0] - p1[k, 0]
            dy = centers[k, 1] - p1[k, 1]
            gap = math.sqrt(dx * dx + dy * dy) - 2.0 * (sigma0 + growth * (k * step))
            if gap < best:
                best = gap
    return max(best, 0.0)


@njit(cache=True)
def _survival_integral(po, step, dt, escape_rate):
    """Collision probability from overlap series via a nested survival quadrature.

    Per interval the event and total rates are the trapezoid means of their end
    values; the survival probability at each interval start is re-integrated from
    ``s = 0``, which makes the cost quadratic in the number of steps.
    """
    n = po.shape[0]
    risk = 0.0
    for i in range(n - 1):
        r_bar = 0.5 * (po[i] + po[i + 1]) / dt
        rho_bar = r_bar + escape_rate
        hazard = 0.0
        for j in range(i):
            hazard += (0.5 * (po[j] + po[j + 1]) / dt + escape_rate) * step
        if rho_bar > 0.0:
            risk += math.exp(-hazard) * (r_bar / rho_bar) * -math.expm1(-rho_bar * step)
    return min(max(risk, 0.0), 1.0)


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


def _score(value, name, ego, other) -> RiskScore:
    return RiskScore(float(value), name, (ego.id, other.id))


def risk_current_distance(ego: AgentState, other: AgentState, cfg: RiskConfig) -> RiskScore:
    dx = other.position[0] - ego.position[0]
    dy = other.position[1] - ego.position[1]
    # same rounding as the compiled kernels, so d_path <= d_current holds exactly
    d = math.sqrt(dx * dx + dy * dy)
    return _score(cfg.epsilon / (cfg.epsilon + d), "current_distance", ego, other)


def risk_path_distance(ego: AgentState, other: AgentState, cfg: RiskConfig) -> RiskScore:
    p1, p2 = ego.path, other.path
    d = _clipped_min_dist(p1.vertices, p1.cumlen, np.inf, p2.vertices, p2.cumlen, np.inf)
    return _score(cfg.epsilon / (cfg.epsilon + d), "path_distance", ego, other)


def trajectory_distance(ego: AgentState, other: AgentState, cfg: RiskConfig) -> float:
    """Minimum distance between the path prefixes each agent covers within the horizon."""
    T = cfg.prediction.horizon
    p1, p2 = ego.path, other.path
    return _clipped_min_dist(
        p1.vertices, p1.cumlen, ego.speed * T, p2.vertices, p2.cumlen, other.speed * T
    )


def risk_trajectory_distance(ego: AgentState, other: AgentState, cfg: RiskConfig) -> RiskScore:
    d = trajectory_distance(ego, other, cfg)
    return _score(cfg.epsilon / (cfg.epsilon + d), "trajectory_distance", ego, other)


def closest_encounter(ego: AgentState, other: AgentState, cfg: RiskConfig) -> tuple[float, float]:
    """Distance ``d_E`` and time ``s_E`` of closest approach on the prediction grid.

    Ties resolve to the earliest time.
    """
    pc = cfg.prediction
    p1, p2 = ego.path, other.path
    d, k = _closest_encounter(
        p1.vertices, p1.cumlen, ego.speed, p2.vertices, p2.cumlen, other.speed, pc.step, pc.n_steps
    )
    return float(d), k * pc.step


def risk_closest_encounter(ego: AgentState, other: AgentState, cfg: RiskConfig) -> RiskScore:
    d_e, s_e = closest_encounter(ego, other, cfg)
    value = cfg.epsilon / (cfg.epsilon + d_e) if s_e < cfg.prediction.s_max else 0.0
    return _score(value, "closest_encounter", ego, other)


def headway_gap(ego: AgentState, other: AgentState, cfg: RiskConfig) -> float | None:
    """Longitudinal gap to an agent sitting on the ego path, ``None`` if it is elsewhere."""
    p = ego.path
    m, lateral = _project_point(p.vertices, p.cumlen, other.position[0], other.position[1])
    if lateral > cfg.same_path_tol:
        return None
    return m


def _headway_value(gap: float | None, ego_speed: float) -> float:
    if gap is None or gap <= 0.0 or ego_speed <= 0.0:
        return 0.0
    # 1 / (1 + TH) with TH = gap / v
    return ego_speed / (ego_speed + gap)


def risk_headway(ego: AgentState, other: AgentState, cfg: RiskConfig | None = None) -> RiskScore:
    """Normalized inverse time headway ``1 / (1 + dl / v_ego)`` for an agent ahead on the ego path."""
    cfg = cfg or RiskConfig()
    return _score(_headway_value(headway_gap(ego, other, cfg), ego.speed), "headway", ego, other)


def headway_2d_gap(ego: AgentState, other: AgentState, cfg: RiskConfig) -> float | None:
    """Gap to the other agent after moving it onto the ego path.

    Agents on the ego path keep their longitudinal gap. Agents on a crossing path
    are placed on the ego path at the same remaining distance to the first
    crossing point. ``None`` if neither applies.
    """
    gap = headway_gap(ego, other, cfg)
    if gap is not None:
        return gap
    c = find_crossing(ego.path, other.path)
    if c is None:
        return None
    return c.arclen_ego - c.arclen_other


def risk_headway_2d(ego: AgentState, other: AgentState, cfg: RiskConfig) -> RiskScore:
    return _score(_headway_value(headway_2d_gap(ego, other, cfg), ego.speed), "headway_2d", ego, other)


def risk_encounter_plus_headway(
    ego: AgentState, other: AgentState, cfg: RiskConfig, two_d: bool = False
) -> RiskScore:
    """Larger of the closest-encounter risk and the (2D) headway risk."""
    enc = risk_closest_encounter(ego, other, cfg).value
    if two_d:
        hw = risk_headway_2d(ego, other, cfg).value
        name = "encounter_headway_2d"
    else:
        hw = risk_headway(ego, other, cfg).value
        name = "encounter_headway"
    return _score(max(enc, hw), name, ego, other)


def circle_distance(ego: AgentState, other: AgentState, cfg: RiskConfig) -> float:
    pc, uc = cfg.prediction, cfg.uncertainty
    p1, p2 = ego.path, other.path
    return _circle_gap(
        p1.vertices, p1.cumlen, ego.speed, p2.vertices, p2.cumlen, other.speed,
        pc.step, pc.n_steps, uc.sigma0, uc.growth, uc.k_circles,
    )


def risk_circle(ego: AgentState, other: AgentState, cfg: RiskConfig) -> RiskScore:
    d = circle_distance(ego, other, cfg)
    return _score(cfg.epsilon / (cfg.epsilon + d), "circle", ego, other)


def gaussian_overlap(g1: GaussianState, g2: GaussianState) -> float:
    """Density of the product of two 2D Gaussians, i.e. ``N(mu_2; mu_1, S_1 + S_2)``."""
    cov = g1.covariance + g2.covariance
    det = np.linalg.det(2.0 * math.pi * cov)
    if not det > 0.0:
        raise ValueError("summed covariance is singular")
    diff = np.subtract(g2.mean, g1.mean)
    maha = float(diff @ np.linalg.solve(cov, diff))
    return math.exp(-0.5 * maha) / math.sqrt(det)


def overlap_series(ego: AgentState, other: AgentState, cfg: RiskConfig) -> np.ndarray:
    """``P_o`` on the prediction grid."""
    pc, uc = cfg.prediction, cfg.uncertainty
    p1, p2 = ego.path, other.path
    return _overlap_series(
        p1.vertices, p1.cumlen, ego.speed, p2.vertices, p2.cumlen, other.speed,
        pc.step, pc.n_steps, uc.sigma0, uc.growth,
    )


def risk_gaussian(ego: AgentState, other: AgentState, cfg: RiskConfig) -> RiskScore:
    return _score(overlap_series(ego, other, cfg).max(), "gaussian", ego, other)


def survival_from_overlaps(po, cfg: RiskConfig) -> float:
    po = np.ascontiguousarray(po, dtype=np.float64)
    return _survival_integral(po, cfg.prediction.step, cfg.dt, cfg.survival.escape_rate)


def risk_survival(ego: AgentState, other: AgentState, cfg: RiskConfig) -> RiskScore:
    return _score(survival_from_overlaps(overlap_series(ego, other, cfg), cfg), "survival", ego, other)


MODELS: dict[str, Callable[[AgentState, AgentState, RiskConfig], RiskScore]] = {
    "current_distance": risk_current_distance,
    "path_distance": risk_path_distance,
    "trajectory_distance": risk_trajectory_distance,
    "closest_encounter": risk_closest_encounter,
    "encounter_headway": lambda e, o, c: risk_encounter_plus_headway(e, o, c, two_d=False),
    "encounter_headway_2d": lambda e, o, c: risk_encounter_plus_headway(e, o, c, two_d=True),
    "circle": risk_circle,
    "gaussian": risk_gaussian,
    "survival": risk_survival,
}

# models scored on the eps / (eps + d) scale; the rest live on probability scales
DISTANCE_SCALE = frozenset(MODELS) - {"gaussian", "survival"}


def get_model(name: str):
    try:
        return MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; valid: {', '.join(MODELS)}") from None


def score_scenario(scenario: Scenario, model: str, cfg: RiskConfig, agents=None) -> list[RiskScore]:
    """Score every other agent (or the given subset), ordered by agent id."""
    fn = get_model(model)
    pool = scenario.others if agents is None else agents
    return [fn(scenario.ego, a, cfg) for a in sorted(pool, key=lambda a: a.id)]
