"""Constant-velocity prediction along paths and the uncertainty envelopes around it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import Point2, PolylinePath, _sample_path, point_at


@dataclass(frozen=True)
class PredictionConfig:
    """Prediction grid. ``step`` and ``horizon`` in seconds; ``s_max`` gates closest encounter."""

    step: float = 0.1
    horizon: float = 12.0
    s_max: float = 10.0

    def __post_init__(self):
        if not (0 < self.step <= self.horizon):
            raise ValueError("need 0 < step <= horizon")
        if self.s_max > self.horizon:
            raise ValueError("s_max must not exceed the horizon")

    @property
    def n_steps(self) -> int:
        """Number of grid samples, including ``s = 0``."""
        return int(round(self.horizon / self.step)) + 1

    def grid(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.step


@dataclass(frozen=True)
class UncertaintyConfig:
    """Isotropic position uncertainty ``sigma(s) = sigma0 + growth * s``."""

    sigma0: float = 0.5
    growth: float = 0.3
    k_circles: int = 3

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.growth < 0:
            raise ValueError("growth must be non-negative")
        if self.k_circles < 1:
            raise ValueError("k_circles must be at least 1")

    def sigma(self, s):
        return self.sigma0 + self.growth * s


@dataclass(frozen=True)
class Trajectory:
    s: np.ndarray
    positions: np.ndarray
    speed: float
    path: PolylinePath

    def position(self, s: float) -> Point2:
        return point_at(self.path, self.speed * s)


@dataclass(frozen=True)
class GaussianState:
    mean: Point2
    covariance: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=np.float64)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
            raise ValueError("covariance must be a symmetric 2x2 matrix")
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class CircleSet:
    centers: tuple[Point2, ...]
    radius: float

    @property
    def k(self) -> int:
        return len(self.centers)


@njit(cache=True)
def _predict(v, cum, speed, step, n):
    arclens = np.empty(n)
    for k in range(n):
        arclens[k] = speed * (k * step)
    out = np.empty((n, 2))
    _sample_path(v, cum, arclens, out)
    return out


@njit(cache=True)
def _circle_centers(v, cum, m, spread, k, out):
    half = (k - 1) / 2.0
    arclens = np.empty(k)
    for j in range(k):
        arclens[j] = min(m, cum[-1]) + (j - half) * spread
    _sample_path(v, cum, arclens, out, True)


def predict(agent, cfg: PredictionConfig) -> Trajectory:
    """Sample the agent's constant-velocity motion along its path on the grid ``0, step, ..., horizon``."""
    path = agent.path
    out = _predict(path.vertices, path.cumlen, float(agent.speed), cfg.step, cfg.n_steps)
    return Trajectory(cfg.grid(), out, float(agent.speed), path)


def gaussian_at(traj: Trajectory, s: float, ucfg: UncertaintyConfig) -> GaussianState:
    sd = ucfg.sigma(s)
    return GaussianState(traj.position(s), np.eye(2) * sd * sd)


def circles_at(traj: Trajectory, s: float, ucfg: UncertaintyConfig) -> CircleSet:
    """``k`` circles of radius ``sigma(s)`` spaced ``sigma(s)`` apart along the path.

    Centers are placed symmetrically around the predicted position; near the
    path ends they continue straight along the first or last segment so the
    spacing stays exact.
    """
    sd = ucfg.sigma(s)
    k = ucfg.k_circles
    out = np.empty((k, 2))
    path = traj.path
    _circle_centers(path.vertices, path.cumlen, traj.speed * s, sd, k, out)
    return CircleSet(tuple(Point2(float(x), float(y)) for x, y in out), float(sd))
