"""
Incident plane-wave source: the sine burst f(t) and its plane load on the grid
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..geometry.grid import UniformGrid


@dataclass(frozen=True)
class SourceSpec:
    """Plane source delta(z - z0) f(t) with f(t) = sin(omega t) on [0, 2 pi / omega]"""
    z0: float
    omega: float = 30.0

    @property
    def burst_end(self) -> float:
        return 2.0 * math.pi / self.omega

    @property
    def wavelength(self) -> float:
        """Background wavelength (unit wave speed)"""
        return 2.0 * math.pi / self.omega


def waveform_f(t, src: SourceSpec):
    """sin(omega t) for 0 <= t <= t', zero afterwards"""
    t = np.asarray(t, dtype=float)
    value = np.where((t >= 0) & (t <= src.burst_end), np.sin(src.omega * t), 0.0)
    return float(value) if value.ndim == 0 else value


def plane_source_load(grid: UniformGrid, src: SourceSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes of the grid plane nearest z0 and their lateral dual-cell measures.

    The load at step k is f(t_k) * measure on those nodes, i.e. f/dz per
    unit volume on an interior plane.
    """
    top = grid.dim - 1
    k = grid.index_of(src.z0, top)
    lateral = [np.arange(grid.counts[a]) if a != top else np.array([k]) for a in range(grid.dim)]
    mesh = np.meshgrid(*lateral, indexing="ij")
    flat = np.ravel_multi_index(tuple(m.ravel() for m in mesh), grid.shape)
    measure = np.ones(len(flat))
    weights = [grid.spacing[a] * grid.axis_weights(a) if a != top else np.ones(1) for a in range(grid.dim)]
    wmesh = np.meshgrid(*weights, indexing="ij")
    for w in wmesh:
        measure = measure * w.ravel()
    return flat, measure
