"""
Synthetic scenarios: inclusion layouts, ground-truth coefficients and the
total / reference traces they produce on Gamma
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from ..geometry.domain import GEOMETRY_TOL, SurveyGeometry
from ..geometry.grid import TimeAxis, UniformGrid
from ..geometry.quadtree import QuadtreeCoeffMesh
from ..solvers.source import SourceSpec
from ..solvers.traces import TimeTraces
from ..solvers.wave import WaveSolver
from ..utils.definitions import Definitions
from ..utils.errors import GeometryError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Inclusion:
    """
    One target: a ball (disc in 2-D) or an axis-aligned box.

    `epsilon` is the absolute dielectric constant; `depth`, when given,
    places the top of the target that far below Gamma and overrides the
    depth coordinate of `center`.
    """
    shape: str
    center: Tuple[float, ...]
    epsilon: float
    radius: Optional[float] = None
    half_extents: Optional[Tuple[float, ...]] = None
    depth: Optional[float] = None
    label: str = ""
    measured_n: Optional[float] = None

    def __post_init__(self):
        if self.shape not in Definitions.get_shapes():
            raise GeometryError(f"Unknown inclusion shape: {self.shape}")
        if self.shape == Definitions.SHAPE_BALL and (self.radius is None or self.radius <= 0):
            raise GeometryError("A ball inclusion needs a positive radius")
        if self.shape == Definitions.SHAPE_BOX:
            if self.half_extents is None or len(self.half_extents) != len(self.center):
                raise GeometryError("A box inclusion needs one half extent per axis")
            if min(self.half_extents) <= 0:
                raise GeometryError("Box half extents must be positive")
        if self.epsilon < 1:
            raise GeometryError(f"Inclusion epsilon must be >= 1, got {self.epsilon}")

    @classmethod
    def from_dict(cls, entry: dict) -> "Inclusion":
        half = entry.get("half_extents")
        return cls(shape=entry["shape"], center=tuple(float(c) for c in entry["center"]),
                   epsilon=float(entry["epsilon"]), radius=entry.get("radius"),
                   half_extents=tuple(float(h) for h in half) if half is not None else None,
                   depth=entry.get("depth"), label=entry.get("label", ""), measured_n=entry.get("measured_n"))

    @property
    def vertical_half_extent(self) -> float:
        return self.radius if self.shape == Definitions.SHAPE_BALL else self.half_extents[-1]

    def placed(self, geometry: SurveyGeometry) -> "Inclusion":
        """Copy with the depth coordinate derived from the burial depth"""
        if len(self.center) != geometry.dim:
            raise GeometryError(f"Inclusion centre {self.center} does not have {geometry.dim} coordinates")
        if self.depth is None:
            return self
        z = geometry.c_prime - self.depth - self.vertical_half_extent
        return replace(self, center=tuple(self.center[:-1]) + (z,))

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, dtype=float)
        half = np.full(len(c), self.radius) if self.shape == Definitions.SHAPE_BALL else np.asarray(self.half_extents)
        return c - half, c + half

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        c = np.asarray(self.center, dtype=float)
        if self.shape == Definitions.SHAPE_BALL:
            return np.linalg.norm(pts - c, axis=1) <= self.radius + GEOMETRY_TOL
        return np.all(np.abs(pts - c) <= np.asarray(self.half_extents) + GEOMETRY_TOL, axis=1)


@dataclass(frozen=True)
class Scenario:
    """Background medium, targets and synthetic noise of one experiment"""
    name: str
    background: float = 1.0
    inclusions: Tuple[Inclusion, ...] = field(default_factory=tuple)
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.background < 1:
            raise ValueError(f"Background must be >= 1, got {self.background}")
        if self.noise < 0:
            raise ValueError(f"Noise level must be nonnegative, got {self.noise}")

    @classmethod
    def from_config(cls, config, seed: Optional[int] = None) -> "Scenario":
        return cls(name=config.get("scenario.name"),
                   background=float(config.get("scenario.background")),
                   inclusions=tuple(Inclusion.from_dict(e) for e in config.get("scenario.inclusions", [])),
                   noise=float(config.get("scenario.noise")),
                   seed=int(config.get("scenario.seed") if seed is None else seed))

    def relative_epsilon(self, inclusion: Inclusion) -> float:
        """Target value in units of the background, never below 1"""
        return max(inclusion.epsilon / self.background, 1.0)

    def placed_inclusions(self, geometry: SurveyGeometry) -> List[Inclusion]:
        """Inclusions at their final positions; each must lie inside Omega"""
        placed = []
        omega = geometry.omega
        for i, inclusion in enumerate(self.inclusions):
            inc = inclusion.placed(geometry)
            lo, hi = inc.bounds()
            if np.any(lo < np.asarray(omega.lo) - GEOMETRY_TOL) or np.any(hi > np.asarray(omega.hi) + GEOMETRY_TOL):
                raise GeometryError(f"Inclusion {i} ({inc.label or inc.shape}) escapes Omega",
                                    lo=lo.tolist(), hi=hi.tolist())
            placed.append(inc)
        return placed


def scale_by_background(value: float, background: float, kind: str = "eps") -> float:
    """Turn a relative value into an absolute one: eps times background, n times its root"""
    if background < 1:
        raise ValueError(f"Background must be >= 1, got {background}")
    if kind == "eps":
        return float(value) * background
    if kind == "n":
        return float(value) * math.sqrt(background)
    raise ValueError(f"Unknown value kind: {kind}")


def paint(points, scenario: Scenario, geometry: SurveyGeometry, eps_max: Optional[float] = None) -> np.ndarray:
    """Relative coefficient at points: 1 in the background, the target value inside each inclusion"""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.ones(len(pts))
    for inc in scenario.placed_inclusions(geometry):
        values = np.where(inc.contains(pts), scenario.relative_epsilon(inc), values)
    if eps_max is not None and np.any(values > eps_max):
        logger.warning(f"Scenario {scenario.name}: target values above {eps_max} clamped")
        values = np.minimum(values, eps_max)
    return values


def build_truth(scenario: Scenario, geometry: SurveyGeometry, mesh: QuadtreeCoeffMesh,
                eps_max: Optional[float] = None) -> QuadtreeCoeffMesh:
    """Cell coefficient: a cell takes a target's value when its centre lies inside it"""
    return mesh.with_values(paint(mesh.centers, scenario, geometry, eps_max), scenario=scenario.name)


def truth_on_grid(scenario: Scenario, geometry: SurveyGeometry, grid: UniformGrid,
                  eps_max: Optional[float] = None) -> np.ndarray:
    """Nodal coefficient on a field grid, 1 outside Omega"""
    return paint(grid.coordinates(), scenario, geometry, eps_max).reshape(grid.shape)


@dataclass
class SynthesisResult:
    """Gamma traces with and without the targets, and the nodal truth used"""
    total: TimeTraces
    reference: TimeTraces
    truth: np.ndarray
    grid: UniformGrid


def synthesize_measurements(scenario: Scenario, geometry: SurveyGeometry, grid: UniformGrid, axis: TimeAxis,
                            src: SourceSpec, wave: Optional[WaveSolver] = None,
                            eps_max: Optional[float] = None, snapshot=None) -> SynthesisResult:
    """
    Two forward runs on `grid` (chosen finer than any inversion grid):
    the scenario and the target-free medium. Gaussian noise with standard
    deviation noise * RMS(total) is added to the total traces only.
    `snapshot` is passed to the run with the targets.
    """
    wave = wave or WaveSolver()
    gamma = geometry.region(Definitions.GAMMA)
    truth = truth_on_grid(scenario, geometry, grid, eps_max)
    logger.info(f"Synthesizing {scenario.name}: {len(scenario.inclusions)} inclusions on grid {grid.shape}")

    total = wave.simulate_forward(truth, grid, axis, src, record=[gamma],
                                  snapshot=snapshot).traces[Definitions.GAMMA]
    reference = wave.simulate_forward(np.ones(grid.shape), grid, axis, src,
                                      record=[gamma]).traces[Definitions.GAMMA]
    if scenario.noise > 0:
        rng = np.random.default_rng(scenario.seed)
        sigma = scenario.noise * total.rms()
        total = total.with_samples(total.samples + rng.normal(0.0, sigma, total.samples.shape))
    return SynthesisResult(total=total, reference=reference, truth=truth, grid=grid)
