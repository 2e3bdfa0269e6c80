"""
Boundary time-trace records g(x, t)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from ..geometry.domain import GEOMETRY_TOL
from ..geometry.grid import TimeAxis
from ..utils.errors import DimensionMismatchError, GeometryError


@dataclass(frozen=True, eq=False)
class TimeTraces:
    """
    Time series recorded at a set of boundary nodes.

    Attributes:
        tag: Boundary region the nodes belong to
        coords: (n, dim) node coordinates
        samples: (steps + 1, n) values, row k at t_k
        axis: Time sampling
        measures: Optional (n,) boundary measure of each node
        indices: Optional (n,) flat node indices in the grid that produced the record
    """
    tag: str
    coords: np.ndarray
    samples: np.ndarray
    axis: TimeAxis
    measures: Optional[np.ndarray] = None
    indices: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "samples", samples)
        if samples.shape != (self.axis.steps + 1, len(coords)):
            raise DimensionMismatchError(
                f"Trace samples {samples.shape} do not match {self.axis.steps + 1} steps x {len(coords)} nodes")

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    def with_samples(self, samples, tag: Optional[str] = None) -> "TimeTraces":
        return TimeTraces(tag or self.tag, self.coords, samples, self.axis, self.measures, self.indices)

    def check_same_sampling(self, other: "TimeTraces"):
        """Raise DimensionMismatchError unless both records share nodes and times"""
        if self.samples.shape != other.samples.shape:
            raise DimensionMismatchError(
                f"Trace shapes differ: {self.samples.shape} vs {other.samples.shape}")
        if abs(self.axis.tau - other.axis.tau) > 1e-12 * self.axis.tau:
            raise DimensionMismatchError(f"Time steps differ: {self.axis.tau} vs {other.axis.tau}")
        if not np.allclose(self.coords, other.coords, atol=GEOMETRY_TOL):
            raise DimensionMismatchError("Trace node coordinates differ")

    def subset(self, mask) -> "TimeTraces":
        mask = np.asarray(mask)
        return TimeTraces(self.tag, self.coords[mask], self.samples[:, mask], self.axis,
                          None if self.measures is None else self.measures[mask],
                          None if self.indices is None else self.indices[mask])

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples ** 2)))

    def resample(self, coords, axis: TimeAxis, tag: Optional[str] = None) -> "TimeTraces":
        """
        Interpolate onto other nodes of the same plane and another time axis.

        Time is interpolated with cubic splines, the lateral coordinates
        linearly.
        """
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        if axis.T > self.axis.T * (1 + 1e-9):
            raise DimensionMismatchError(f"Cannot resample to T={axis.T} beyond recorded T={self.axis.T}")
        top = self.coords.shape[1] - 1
        plane = self.coords[0, top]
        if not (np.allclose(self.coords[:, top], plane, atol=GEOMETRY_TOL)
                and np.allclose(coords[:, top], plane, atol=GEOMETRY_TOL)):
            raise GeometryError("Trace resampling requires source and target nodes on one depth plane")

        if self.axis.steps == axis.steps and abs(self.axis.tau - axis.tau) <= 1e-12 * axis.tau:
            timed = self.samples
        else:
            times = np.minimum(axis.times, self.axis.T)
            timed = CubicSpline(self.axis.times, self.samples, axis=0)(times)

        lateral = [np.unique(np.round(self.coords[:, a], 12)) for a in range(top)]
        positions = [np.searchsorted(lateral[a], np.round(self.coords[:, a], 12)) for a in range(top)]
        cube = np.zeros(tuple(len(v) for v in lateral) + (timed.shape[0],))
        cube[tuple(positions)] = timed.T
        interp = RegularGridInterpolator(lateral, cube, method="linear", bounds_error=False, fill_value=None)
        target = np.clip(coords[:, :top], [v[0] for v in lateral], [v[-1] for v in lateral])
        values = interp(target).T
        return TimeTraces(tag or self.tag, coords, values, axis)
