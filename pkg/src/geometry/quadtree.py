"""
Piecewise-constant coefficient cells on a quadtree (2-D) or octree (3-D) over Omega
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy import sparse

from ..utils.errors import GeometryError
from .domain import GEOMETRY_TOL, RectDomain
from .grid import UniformGrid

logger = logging.getLogger(__name__)

# Points located per block in brute-force searches
LOCATE_BLOCK = 512

# Orthant sample distance from a node, in grid spacings
ORTHANT_OFFSET = 0.25


@dataclass(frozen=True, eq=False)
class QuadtreeCoeffMesh:
    """
    Leaf cells partitioning Omega, one coefficient value per cell.

    Attributes:
        domain: Omega
        lo, hi: (n, dim) cell bounds
        level: (n,) refinement level of each cell (0 = root)
        values: (n,) coefficient per cell
        max_level: Deepest level allowed
        metadata: Flags produced by the operation that built this mesh
    """
    domain: RectDomain
    lo: np.ndarray
    hi: np.ndarray
    level: np.ndarray
    values: np.ndarray
    max_level: int = 3
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("lo", "hi", "level", "values"):
            arr = np.array(getattr(self, name), dtype=int if name == "level" else float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.lo.shape != self.hi.shape or self.lo.shape[0] != len(self.values):
            raise GeometryError("Cell arrays have inconsistent shapes")
        if np.any(self.level > self.max_level):
            raise GeometryError(f"Cell level exceeds max_level={self.max_level}")

    @classmethod
    def uniform(cls, domain: RectDomain, root_counts: Sequence[int], value: float = 1.0,
                max_level: int = 3) -> "QuadtreeCoeffMesh":
        """Root cells of an even split of the domain, all carrying one value"""
        if len(root_counts) != domain.dim or min(root_counts) < 1:
            raise GeometryError(f"Invalid root cell counts {root_counts} for dim={domain.dim}")
        edges = [np.linspace(domain.lo[a], domain.hi[a], n + 1) for a, n in enumerate(root_counts)]
        lo, hi = [], []
        for idx in itertools.product(*[range(n) for n in root_counts]):
            lo.append([edges[a][i] for a, i in enumerate(idx)])
            hi.append([edges[a][i + 1] for a, i in enumerate(idx)])
        n = len(lo)
        return cls(domain=domain, lo=np.array(lo), hi=np.array(hi), level=np.zeros(n, dtype=int),
                   values=np.full(n, float(value)), max_level=max_level)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_cells(self) -> int:
        return len(self.values)

    @property
    def sizes(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volumes(self) -> np.ndarray:
        return np.prod(self.sizes, axis=1)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def diameters(self) -> np.ndarray:
        """Largest side of each cell (the local mesh size h)"""
        return np.max(self.sizes, axis=1)

    @property
    def min_cell_size(self) -> float:
        return float(np.min(self.sizes))

    def with_values(self, values, **metadata) -> "QuadtreeCoeffMesh":
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_cells,):
            raise GeometryError(f"Expected {self.n_cells} cell values, got shape {values.shape}")
        return QuadtreeCoeffMesh(self.domain, self.lo, self.hi, self.level, values, self.max_level, metadata)

    def locate(self, points) -> np.ndarray:
        """
        Index of the cell containing each point (-1 outside Omega).

        Cells are half-open [lo, hi) except on the upper faces of Omega.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        top = np.asarray(self.domain.hi)
        on_top = np.isclose(self.hi, top[None, :], atol=GEOMETRY_TOL)
        result = np.full(len(pts), -1, dtype=int)
        for start in range(0, len(pts), LOCATE_BLOCK):
            block = pts[start:start + LOCATE_BLOCK][:, None, :]
            above = block >= self.lo[None, :, :] - GEOMETRY_TOL * 1e-3
            below = (block < self.hi[None, :, :] - GEOMETRY_TOL * 1e-3) | (
                on_top[None, :, :] & (block <= self.hi[None, :, :] + GEOMETRY_TOL))
            inside = np.all(above & below, axis=2)
            hit = inside.any(axis=1)
            result[start:start + LOCATE_BLOCK] = np.where(hit, inside.argmax(axis=1), -1)
        return result

    def interpolate_to(self, target: "QuadtreeCoeffMesh") -> "QuadtreeCoeffMesh":
        """Carry this mesh's values onto another mesh of the same domain by cell centres"""
        owner = self.locate(target.centers)
        if np.any(owner < 0):
            raise GeometryError("Target mesh has cells outside the source mesh")
        return target.with_values(self.values[owner])

    def face_adjacency(self) -> List[Tuple[int, int, float]]:
        """
        Pairs of cells sharing a face of positive measure.

        Returns:
            List of (i, j, face_measure) with i < j
        """
        pairs = []
        for axis in range(self.dim):
            others = [a for a in range(self.dim) if a != axis]
            # Cells whose upper face on `axis` touches another cell's lower face
            touch = np.isclose(self.hi[:, axis][:, None], self.lo[:, axis][None, :], atol=GEOMETRY_TOL)
            for i, j in zip(*np.nonzero(touch)):
                overlap = 1.0
                for a in others:
                    ext = min(self.hi[i, a], self.hi[j, a]) - max(self.lo[i, a], self.lo[j, a])
                    if ext <= GEOMETRY_TOL:
                        overlap = 0.0
                        break
                    overlap *= ext
                if overlap > 0.0:
                    pairs.append((int(min(i, j)), int(max(i, j)), float(overlap)))
        pairs.sort()
        return pairs

    def projection_matrix(self, grid: UniformGrid) -> sparse.csr_matrix:
        """
        Sparse (nodes x cells) matrix P with nodal = P @ values.

        Each node averages the cells filling its 2**dim orthants, sampled a
        quarter spacing away from the node. A large cell meeting two small
        ones on a face fills two orthants of the face nodes and weighs as
        much as both small cells together. Orthants outside Omega are skipped.
        """
        nodes = grid.coordinates()
        owners = []
        for signs in itertools.product((-1.0, 1.0), repeat=grid.dim):
            samples = nodes + ORTHANT_OFFSET * np.asarray(signs) * grid.spacing
            owners.append(self.locate(samples))
        owners = np.stack(owners, axis=1)
        inside = owners >= 0
        counts = inside.sum(axis=1)
        if np.any(counts == 0):
            point = nodes[np.flatnonzero(counts == 0)[0]].tolist()
            raise GeometryError(f"Grid node {point} lies outside all coefficient cells", location=point)
        rows = np.broadcast_to(np.arange(grid.size)[:, None], owners.shape)[inside]
        weights = np.broadcast_to((1.0 / counts)[:, None], owners.shape)[inside]
        # Repeated (node, cell) entries are summed on conversion
        return sparse.coo_matrix((weights, (rows, owners[inside])),
                                 shape=(grid.size, self.n_cells)).tocsr()

    def restriction_matrix(self, grid: UniformGrid) -> Tuple[sparse.csr_matrix, List[int]]:
        """
        Sparse (cells x nodes) matrix averaging the nodes strictly inside each cell.

        Cells without an interior node take the node nearest their centre
        and are listed in the second return value.
        """
        rows, cols, vals = [], [], []
        nearest = []
        for c in range(self.n_cells):
            ranges = []
            for a in range(grid.dim):
                t_lo = (self.lo[c, a] - grid.domain.lo[a]) / grid.spacing[a]
                t_hi = (self.hi[c, a] - grid.domain.lo[a]) / grid.spacing[a]
                r0 = int(np.floor(t_lo + 1e-6)) + 1
                r1 = int(np.ceil(t_hi - 1e-6)) - 1
                ranges.append((r0, min(r1, grid.counts[a] - 1)))
            if any(r1 < r0 for r0, r1 in ranges):
                centre = self.centers[c]
                flat = np.array([np.ravel_multi_index(
                    tuple(grid.index_of(centre[a], a) for a in range(grid.dim)), grid.shape)])
                nearest.append(c)
            else:
                idx = np.meshgrid(*[np.arange(r0, r1 + 1) for r0, r1 in ranges], indexing="ij")
                flat = np.ravel_multi_index(tuple(i.ravel() for i in idx), grid.shape)
            rows.append(np.full(len(flat), c))
            cols.append(flat)
            vals.append(np.full(len(flat), 1.0 / len(flat)))
        matrix = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                   shape=(self.n_cells, grid.size))
        return matrix, nearest


def refine_cells(mesh: QuadtreeCoeffMesh, marked: Iterable[int]) -> QuadtreeCoeffMesh:
    """
    Split every marked cell into 2**dim children carrying the parent value.

    Cells already at max_level are left alone and reported in
    metadata["skipped"].
    """
    marked = set(int(c) for c in marked)
    unknown = [c for c in marked if not 0 <= c < mesh.n_cells]
    if unknown:
        raise GeometryError(f"Marked cells not in mesh: {sorted(unknown)}")
    skipped = sorted(c for c in marked if mesh.level[c] >= mesh.max_level)
    if skipped:
        logger.warning(f"{len(skipped)} marked cells already at max level {mesh.max_level}")
    offsets = list(itertools.product((0, 1), repeat=mesh.dim))

    lo, hi, level, values = [], [], [], []
    for c in range(mesh.n_cells):
        if c in marked and c not in skipped:
            half = 0.5 * (mesh.hi[c] - mesh.lo[c])
            for off in offsets:
                child_lo = mesh.lo[c] + half * np.asarray(off)
                lo.append(child_lo)
                hi.append(np.where(np.asarray(off) == 1, mesh.hi[c], child_lo + half))
                level.append(mesh.level[c] + 1)
                values.append(mesh.values[c])
        else:
            lo.append(mesh.lo[c])
            hi.append(mesh.hi[c])
            level.append(mesh.level[c])
            values.append(mesh.values[c])
    metadata = {"skipped": skipped, "refined": sorted(marked.difference(skipped))}
    return QuadtreeCoeffMesh(mesh.domain, np.array(lo), np.array(hi), np.array(level, dtype=int),
                             np.array(values), mesh.max_level, metadata)


def coeff_to_grid(mesh: QuadtreeCoeffMesh, grid: UniformGrid) -> np.ndarray:
    """Nodal coefficient array on `grid` (face nodes average the cells filling their orthants)"""
    return (mesh.projection_matrix(grid) @ mesh.values).reshape(grid.shape)


def grid_to_coeff(values, mesh: QuadtreeCoeffMesh, grid: UniformGrid) -> QuadtreeCoeffMesh:
    """Cell means of the nodal values strictly inside each cell"""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise GeometryError(f"Nodal array shape {values.shape} does not match grid {grid.shape}")
    matrix, nearest = mesh.restriction_matrix(grid)
    if nearest:
        logger.debug(f"{len(nearest)} cells have no interior node; nearest node used")
    return mesh.with_values(matrix @ values.ravel(), nearest=nearest)


def embed_coefficient(mesh: QuadtreeCoeffMesh, grid: UniformGrid, background: float = 1.0) -> np.ndarray:
    """Nodal coefficient on a grid containing Omega, `background` outside Omega"""
    sub, slices = grid.subgrid(mesh.domain)
    eps = np.full(grid.shape, float(background))
    eps[slices] = coeff_to_grid(mesh, sub)
    return eps
