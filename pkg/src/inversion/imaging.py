"""
Thresholded images of a reconstruction and the reported target figures
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..geometry.domain import SurveyGeometry
from ..geometry.quadtree import QuadtreeCoeffMesh
from ..scenarios.scenario import scale_by_background
from ..utils.definitions import Definitions


@dataclass(frozen=True)
class ReconstructionMetrics:
    """
    Figures of one reconstructed coefficient.

    Depths are measured downward from Gamma; both are NaN when the
    thresholded image holds no target.
    """
    eps_comp: float
    n_comp: float
    centroid_depth: float
    burial_depth: float
    background: float
    eps_scaled: float
    n_scaled: float
    components: int

    def as_row(self) -> dict:
        return {"eps_comp": self.eps_comp, "n_comp": self.n_comp, "centroid_depth": self.centroid_depth,
                "burial_depth": self.burial_depth, "background": self.background,
                "eps_scaled": self.eps_scaled, "n_scaled": self.n_scaled, "components": self.components}


def target_mask(mesh: QuadtreeCoeffMesh, kind: str = Definitions.IMAGE_DIELECTRIC) -> np.ndarray:
    """Cells with eps >= fraction * max eps; empty for a coefficient that never exceeds 1"""
    fraction = Definitions.get_threshold_for_kind(kind)
    peak = float(np.max(mesh.values))
    if peak <= 1.0:
        return np.zeros(mesh.n_cells, dtype=bool)
    return mesh.values >= fraction * peak


def threshold_image(mesh: QuadtreeCoeffMesh, kind: str = Definitions.IMAGE_DIELECTRIC) -> QuadtreeCoeffMesh:
    """eps where eps >= fraction * max eps, 1 elsewhere"""
    fraction = Definitions.get_threshold_for_kind(kind)
    keep = mesh.values >= fraction * float(np.max(mesh.values))
    return mesh.with_values(np.where(keep, mesh.values, 1.0), kind=kind)


def rasterize(mesh: QuadtreeCoeffMesh):
    """
    Sample the cells on a uniform raster of the finest cell size.

    Returns:
        (image, pixel sizes); image[i, j(, k)] is the value at the pixel centre
    """
    pixel = np.min(mesh.sizes, axis=0)
    counts = [max(int(round(e / p)), 1) for e, p in zip(mesh.domain.extents, pixel)]
    centres = [mesh.domain.lo[a] + (np.arange(n) + 0.5) * mesh.domain.extents[a] / n for a, n in enumerate(counts)]
    grid = np.meshgrid(*centres, indexing="ij")
    points = np.stack([g.ravel() for g in grid], axis=1)
    owner = mesh.locate(points)
    return mesh.values[owner].reshape(counts), pixel


def count_components(mesh: QuadtreeCoeffMesh, kind: str = Definitions.IMAGE_DIELECTRIC) -> int:
    """Face-connected components of the thresholded target region"""
    mask_mesh = mesh.with_values(target_mask(mesh, kind).astype(float))
    image, _ = rasterize(mask_mesh)
    _, n = ndimage.label(image > 0.5)
    return int(n)


def report_metrics(mesh: QuadtreeCoeffMesh, geometry: SurveyGeometry, background: float = 1.0,
                   kind: str = Definitions.IMAGE_DIELECTRIC) -> ReconstructionMetrics:
    """
    eps_comp = max eps, n_comp = sqrt(eps_comp), the depth of the thresholded
    region's centroid and top below Gamma, and the background-scaled values.
    """
    if background < 1:
        raise ValueError(f"Background must be >= 1, got {background}")
    eps_comp = float(np.max(mesh.values))
    n_comp = math.sqrt(eps_comp)
    mask = target_mask(mesh, kind)
    if np.any(mask):
        volumes = mesh.volumes[mask]
        centroid_z = float(np.sum(volumes * mesh.centers[mask, -1]) / np.sum(volumes))
        centroid_depth = float(geometry.depth_below_gamma(centroid_z))
        burial_depth = float(geometry.depth_below_gamma(np.max(mesh.hi[mask, -1])))
    else:
        centroid_depth = burial_depth = float("nan")
    return ReconstructionMetrics(eps_comp=eps_comp, n_comp=n_comp, centroid_depth=centroid_depth,
                                 burial_depth=burial_depth, background=float(background),
                                 eps_scaled=scale_by_background(eps_comp, background, "eps"),
                                 n_scaled=scale_by_background(n_comp, background, "n"),
                                 components=count_components(mesh, kind))
