"""
Structured node grids and the time axis shared by the field solvers
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..utils.errors import GeometryError, StabilityError
from .domain import GEOMETRY_TOL, Face, RectDomain


@dataclass(frozen=True)
class UniformGrid:
    """
    Node-centred tensor grid over a RectDomain.

    Attributes:
        domain: Covered box
        spacing: Per-axis node spacing
        counts: Per-axis node counts (>= 3)
    """
    domain: RectDomain
    spacing: Tuple[float, ...]
    counts: Tuple[int, ...]

    def __post_init__(self):
        if len(self.spacing) != self.domain.dim or len(self.counts) != self.domain.dim:
            raise GeometryError("spacing/counts do not match the domain dimension")
        for a, (h, n) in enumerate(zip(self.spacing, self.counts)):
            if n < 3:
                raise GeometryError(f"Axis {a} needs at least 3 nodes, got {n}")
            span = h * (n - 1)
            if abs(span - self.domain.extents[a]) > 1e-12 * max(1.0, self.domain.extents[a]) + 1e-12:
                raise GeometryError(f"Axis {a}: spacing*(count-1)={span} does not span {self.domain.extents[a]}")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def h_min(self) -> float:
        return float(min(self.spacing))

    def axes(self):
        """1-D node coordinates along every axis"""
        return [self.domain.lo[a] + self.spacing[a] * np.arange(self.counts[a]) for a in range(self.dim)]

    def coordinates(self) -> np.ndarray:
        """(size, dim) array of node coordinates in C order"""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def axis_weights(self, axis: int) -> np.ndarray:
        """Trapezoid weights along one axis (1/2 at the ends)"""
        w = np.ones(self.counts[axis])
        w[0] = w[-1] = 0.5
        return w

    def nodal_volume(self) -> np.ndarray:
        """Lumped nodal volumes M_i (half weights on boundary faces)"""
        vol = np.ones(self.shape)
        for a in range(self.dim):
            shape = [1] * self.dim
            shape[a] = self.counts[a]
            vol = vol * (self.spacing[a] * self.axis_weights(a)).reshape(shape)
        return vol

    def index_of(self, coord: float, axis: int) -> int:
        """Nearest node index along an axis"""
        i = int(round((coord - self.domain.lo[axis]) / self.spacing[axis]))
        return min(max(i, 0), self.counts[axis] - 1)

    def aligned_index(self, coord: float, axis: int) -> int:
        """Node index of a coordinate that must sit on a grid plane"""
        t = (coord - self.domain.lo[axis]) / self.spacing[axis]
        i = int(round(t))
        if abs(t - i) > 1e-6 or not 0 <= i < self.counts[axis]:
            raise GeometryError(f"Coordinate {coord} on axis {axis} is not a grid plane")
        return i

    def subgrid(self, domain: RectDomain) -> Tuple["UniformGrid", Tuple[slice, ...]]:
        """Grid of a grid-aligned sub-box and the slices selecting it"""
        slices = []
        counts = []
        for a in range(self.dim):
            i0 = self.aligned_index(domain.lo[a], a)
            i1 = self.aligned_index(domain.hi[a], a)
            slices.append(slice(i0, i1 + 1))
            counts.append(i1 - i0 + 1)
        return UniformGrid(domain, tuple(self.spacing), tuple(counts)), tuple(slices)

    def face_indices(self, face: Face) -> Tuple[np.ndarray, np.ndarray]:
        """
        Flat indices of the nodes on a face and their lumped face measures.

        Returns:
            (indices, measures) in C order of the face nodes
        """
        k = self.aligned_index(face.value, face.axis)
        ranges = []
        weights = []
        for a in range(self.dim):
            if a == face.axis:
                ranges.append(np.array([k]))
                weights.append(np.ones(1))
                continue
            i0 = self.aligned_index(face.lo[a], a)
            i1 = self.aligned_index(face.hi[a], a)
            idx = np.arange(i0, i1 + 1)
            w = np.full(len(idx), self.spacing[a])
            w[0] *= 0.5
            w[-1] *= 0.5
            ranges.append(idx)
            weights.append(w)
        mesh = np.meshgrid(*ranges, indexing="ij")
        flat = np.ravel_multi_index(tuple(m.ravel() for m in mesh), self.shape)
        wmesh = np.meshgrid(*weights, indexing="ij")
        measure = np.prod(np.stack([w.ravel() for w in wmesh], axis=0), axis=0)
        return flat, measure

    def refined(self, factor: int) -> "UniformGrid":
        """Same domain with spacing divided by an integer factor"""
        counts = tuple((n - 1) * factor + 1 for n in self.counts)
        spacing = tuple(h / factor for h in self.spacing)
        return UniformGrid(self.domain, spacing, counts)


def build_grid(domain: RectDomain, target_spacing: float) -> UniformGrid:
    """
    Build the coarsest uniform grid with spacing <= target_spacing.

    The spacing on every axis is snapped to extent / ceil(extent / target).
    """
    if target_spacing <= 0:
        raise GeometryError(f"Grid spacing must be positive, got {target_spacing}")
    if target_spacing > float(np.min(domain.extents)) / 2 + GEOMETRY_TOL:
        raise GeometryError(
            f"Grid spacing {target_spacing} exceeds half the smallest extent {np.min(domain.extents)}")
    counts = []
    spacing = []
    for extent in domain.extents:
        cells = int(math.ceil(extent / target_spacing - 1e-9))
        counts.append(cells + 1)
        spacing.append(float(extent) / cells)
    return UniformGrid(domain, tuple(spacing), tuple(counts))


@dataclass(frozen=True)
class TimeAxis:
    """Uniform time sampling t_k = k*tau, k = 0..steps with tau*steps = T"""
    T: float
    tau: float
    steps: int

    def __post_init__(self):
        if self.steps < 1 or self.tau <= 0:
            raise GeometryError(f"Invalid time axis: tau={self.tau}, steps={self.steps}")
        if abs(self.tau * self.steps - self.T) > 1e-9 * self.T:
            raise GeometryError(f"tau*steps={self.tau * self.steps} != T={self.T}")

    @classmethod
    def for_grid(cls, T: float, grid: UniformGrid, cfl_safety: float = 0.5, max_step: float = None) -> "TimeAxis":
        """Largest uniform step not above max_step that satisfies the CFL rule"""
        limit = cfl_bound(grid, cfl_safety)
        tau = limit if max_step is None else min(max_step, limit)
        steps = int(math.ceil(T / tau - 1e-9))
        return cls(T=float(T), tau=float(T) / steps, steps=steps)

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.steps + 1)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.ones(self.steps + 1)
        w[0] = w[-1] = 0.5
        return w


def cfl_bound(grid: UniformGrid, cfl_safety: float = 0.5) -> float:
    """tau <= safety * h_min / sqrt(dim) (background speed 1, eps >= 1)"""
    return cfl_safety * grid.h_min / math.sqrt(grid.dim)


def check_cfl(grid: UniformGrid, axis: TimeAxis, cfl_safety: float = 0.5):
    """Raise StabilityError when the time step violates the CFL rule"""
    bound = cfl_bound(grid, cfl_safety)
    if axis.tau > bound * (1 + 1e-12):
        raise StabilityError(f"Time step {axis.tau:.6g} exceeds CFL bound {bound:.6g}",
                             tau=axis.tau, bound=bound)
