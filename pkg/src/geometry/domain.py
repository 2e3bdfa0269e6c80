"""
Rectangular domains, boundary pieces and the survey layout (G, Omega, Gamma, G')

Axis order is (x, z) in 2-D and (x, y, z) in 3-D; the last axis is depth z,
increasing upward toward the source plane.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from ..utils.definitions import Definitions
from ..utils.errors import GeometryError

GEOMETRY_TOL = 1e-9


@dataclass(frozen=True)
class RectDomain:
    """Axis-aligned box; lo < hi componentwise"""
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi):
            raise GeometryError(f"lo/hi length mismatch: {len(lo)} vs {len(hi)}")
        if len(lo) not in (2, 3):
            raise GeometryError(f"Only 2-D and 3-D domains are supported, got dim={len(lo)}")
        if any(h <= l for l, h in zip(lo, hi)):
            raise GeometryError(f"Degenerate domain: lo={lo}, hi={hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def extents(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    def contains(self, points, tol: float = GEOMETRY_TOL) -> np.ndarray:
        """Closed-box membership test for an (n, dim) array of points"""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= np.asarray(self.lo) - tol) & (pts <= np.asarray(self.hi) + tol), axis=1)

    def contains_domain(self, other: "RectDomain", tol: float = GEOMETRY_TOL) -> bool:
        return bool(np.all(np.asarray(other.lo) >= np.asarray(self.lo) - tol)
                    and np.all(np.asarray(other.hi) <= np.asarray(self.hi) + tol))


@dataclass(frozen=True)
class Face:
    """Planar face {x_axis = value} restricted to the box [lo, hi] in the other axes"""
    axis: int
    value: float
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    outward: int = 1

    def measure(self) -> float:
        ext = [h - l for a, (l, h) in enumerate(zip(self.lo, self.hi)) if a != self.axis]
        return float(np.prod(ext))

    def contains(self, points, tol: float = GEOMETRY_TOL) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        on_plane = np.abs(pts[:, self.axis] - self.value) <= tol
        inside = np.ones(len(pts), dtype=bool)
        for a in range(pts.shape[1]):
            if a == self.axis:
                continue
            inside &= (pts[:, a] >= self.lo[a] - tol) & (pts[:, a] <= self.hi[a] + tol)
        return on_plane & inside


@dataclass(frozen=True)
class BoundaryRegion:
    """Tagged union of faces (FRONT, BACK, LATERAL, GAMMA or GAMMA_PRIME)"""
    tag: str
    faces: Tuple[Face, ...]

    def contains(self, points, tol: float = GEOMETRY_TOL) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        mask = np.zeros(len(pts), dtype=bool)
        for face in self.faces:
            mask |= face.contains(pts, tol)
        return mask

    def measure(self) -> float:
        return float(sum(face.measure() for face in self.faces))


def box_faces(domain: RectDomain) -> List[Face]:
    """The 2*dim faces of a box with outward normal signs"""
    faces = []
    for axis in range(domain.dim):
        for side, value in ((-1, domain.lo[axis]), (1, domain.hi[axis])):
            lo = list(domain.lo)
            hi = list(domain.hi)
            lo[axis] = hi[axis] = value
            faces.append(Face(axis=axis, value=value, lo=tuple(lo), hi=tuple(hi), outward=side))
    return faces


@dataclass(frozen=True)
class StateFace:
    """A face of G' together with how its Neumann data is obtained from a run on G"""
    face: Face
    kind: str  # "interior", "neumann" or "absorbing"


@dataclass(frozen=True)
class SurveyGeometry:
    """
    Field domain G, coefficient domain Omega, source plane z0 and the
    measurement planes Gamma (top of Omega) and Gamma' (Gamma extended to
    the lateral half widths X, Y).
    """
    G: RectDomain
    omega: RectDomain
    z0: float
    gamma_prime_half_width: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.G.dim != self.omega.dim:
            raise GeometryError("G and Omega must share the same dimension")
        if not self.G.contains_domain(self.omega):
            raise GeometryError(f"Omega {self.omega} is not inside G {self.G}")
        if not self.omega.hi[-1] < self.z0 < self.G.hi[-1]:
            raise GeometryError(
                f"Source plane z0={self.z0} must lie above Omega (z > {self.omega.hi[-1]}) and inside G")
        half = tuple(float(v) for v in self.gamma_prime_half_width)
        if not half:
            # Largest symmetric lateral extent that fits in G
            half = tuple(min(-self.G.lo[a], self.G.hi[a]) for a in range(self.dim - 1))
        if len(half) != self.dim - 1:
            raise GeometryError(f"Gamma' needs {self.dim - 1} lateral half widths, got {len(half)}")
        object.__setattr__(self, "gamma_prime_half_width", half)
        for a, h in enumerate(half):
            if -h < self.G.lo[a] - GEOMETRY_TOL or h > self.G.hi[a] + GEOMETRY_TOL:
                raise GeometryError(f"Gamma' half width {h} on axis {a} exceeds G")
            if -h > self.omega.lo[a] + GEOMETRY_TOL or h < self.omega.hi[a] - GEOMETRY_TOL:
                raise GeometryError(f"Gamma' half width {h} on axis {a} does not cover Gamma")

    @classmethod
    def from_config(cls, config) -> "SurveyGeometry":
        """Build the layout from the `domain` block of a Config"""
        dim = config.get("domain.dimension", 2)
        G = RectDomain(config.get("domain.G.lo"), config.get("domain.G.hi"))
        omega = RectDomain(config.get("domain.omega.lo"), config.get("domain.omega.hi"))
        if G.dim != dim:
            raise GeometryError(f"domain.dimension={dim} but G has dim={G.dim}")
        half = config.get("domain.gamma_prime_half_width") or ()
        return cls(G=G, omega=omega, z0=float(config.get("domain.z0")), gamma_prime_half_width=tuple(half))

    @property
    def dim(self) -> int:
        return self.G.dim

    @property
    def c_prime(self) -> float:
        """Depth coordinate of Gamma (top face of Omega)"""
        return self.omega.hi[-1]

    @property
    def G_prime(self) -> RectDomain:
        lo = tuple(-h for h in self.gamma_prime_half_width) + (self.G.lo[-1],)
        hi = tuple(self.gamma_prime_half_width) + (self.c_prime,)
        return RectDomain(lo, hi)

    def regions(self) -> Dict[str, BoundaryRegion]:
        """Tagged boundary pieces of G plus the measurement planes"""
        top = self.dim - 1
        faces = box_faces(self.G)
        front = tuple(f for f in faces if f.axis == top and f.outward == 1)
        back = tuple(f for f in faces if f.axis == top and f.outward == -1)
        lateral = tuple(f for f in faces if f.axis != top)

        gamma_lo = tuple(self.omega.lo[:-1]) + (self.c_prime,)
        gamma_hi = tuple(self.omega.hi[:-1]) + (self.c_prime,)
        gp = self.G_prime
        gp_lo = tuple(gp.lo[:-1]) + (self.c_prime,)
        gp_hi = tuple(gp.hi[:-1]) + (self.c_prime,)
        return {
            Definitions.FRONT: BoundaryRegion(Definitions.FRONT, front),
            Definitions.BACK: BoundaryRegion(Definitions.BACK, back),
            Definitions.LATERAL: BoundaryRegion(Definitions.LATERAL, lateral),
            Definitions.GAMMA: BoundaryRegion(
                Definitions.GAMMA, (Face(top, self.c_prime, gamma_lo, gamma_hi, 1),)),
            Definitions.GAMMA_PRIME: BoundaryRegion(
                Definitions.GAMMA_PRIME, (Face(top, self.c_prime, gp_lo, gp_hi, 1),)),
        }

    def region(self, tag: str) -> BoundaryRegion:
        regions = self.regions()
        if tag not in regions:
            raise GeometryError(f"Unknown boundary tag: {tag}")
        return regions[tag]

    def state_faces(self) -> List[StateFace]:
        """
        Faces of G' classified by where they sit inside G: on a lateral
        (Neumann) face of G, on an absorbing face of G, or strictly inside G.
        """
        result = []
        for face in box_faces(self.G_prime):
            if face.axis == self.dim - 1:
                on_g = np.isclose(face.value, self.G.lo[-1] if face.outward < 0 else self.G.hi[-1],
                                  atol=GEOMETRY_TOL)
                kind = "absorbing" if on_g else "interior"
            else:
                g_value = self.G.lo[face.axis] if face.outward < 0 else self.G.hi[face.axis]
                kind = "neumann" if np.isclose(face.value, g_value, atol=GEOMETRY_TOL) else "interior"
            result.append(StateFace(face=face, kind=kind))
        return result

    def depth_below_gamma(self, z) -> np.ndarray:
        """Distance below Gamma (positive inside Omega)"""
        return self.c_prime - np.asarray(z, dtype=float)
