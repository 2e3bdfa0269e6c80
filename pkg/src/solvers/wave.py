"""
Wave solvers built on the leapfrog stepper: the data generator on G, the
state problem on G' with Neumann data and its time-reversed adjoint
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..geometry.domain import BoundaryRegion, RectDomain, StateFace, SurveyGeometry
from ..geometry.grid import TimeAxis, UniformGrid
from ..utils.definitions import Definitions
from ..utils.errors import CompatibilityError, GeometryError
from ..utils.logger import SolverComponent
from .source import SourceSpec, plane_source_load, waveform_f
from .stepper import LeapfrogStepper
from .traces import TimeTraces

# Largest final-time residual accepted by the adjoint solve
COMPATIBILITY_TOL = 1e-12


@dataclass
class WaveResult:
    """
    Output of one simulation.

    Attributes:
        grid: Grid the run used
        axis: Time sampling
        traces: Boundary records keyed by region tag
        laplace: (n_s, *sub_shape) trapezoid transforms on `laplace_grid`
        laplace_s: Pseudo frequencies of `laplace`
        laplace_grid: Sub-grid of the transformed nodes
        history: (steps + 1, *shape) stored field (full grid or a sub-block)
        energy: Discrete energy after every step
    """
    grid: UniformGrid
    axis: TimeAxis
    traces: Dict[str, TimeTraces] = field(default_factory=dict)
    laplace: Optional[np.ndarray] = None
    laplace_s: Optional[np.ndarray] = None
    laplace_grid: Optional[UniformGrid] = None
    history: Optional[np.ndarray] = None
    energy: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class StateBoundary:
    """
    Nodes of dG' on the field grid.

    Attributes:
        grid: Grid of G'
        slices: Position of G' inside the field grid
        indices: Sorted flat indices (in `grid`) of the boundary nodes
        coords: (n, dim) coordinates of those nodes
        measures: Total lumped boundary measure of each node
        parts: Per face: (StateFace, positions into `indices`, face measures)
    """
    grid: UniformGrid
    field_grid: UniformGrid
    slices: Tuple[slice, ...]
    indices: np.ndarray
    coords: np.ndarray
    measures: np.ndarray
    parts: Tuple[Tuple[StateFace, np.ndarray, np.ndarray], ...]

    @property
    def n_nodes(self) -> int:
        return len(self.indices)

    def gamma_mask(self, geometry: SurveyGeometry) -> np.ndarray:
        """Boundary nodes lying on Gamma"""
        return geometry.region(Definitions.GAMMA).contains(self.coords)


def region_nodes(grid: UniformGrid, region: BoundaryRegion) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted flat indices of the nodes on a region and their summed face measures"""
    flats, measures = [], []
    for face in region.faces:
        flat, measure = grid.face_indices(face)
        flats.append(flat)
        measures.append(measure)
    flat = np.concatenate(flats)
    uniq, inverse = np.unique(flat, return_inverse=True)
    return uniq, np.bincount(inverse, weights=np.concatenate(measures))


def build_state_boundary(geometry: SurveyGeometry, field_grid: UniformGrid) -> StateBoundary:
    """Locate dG' on the field grid and classify its faces"""
    grid, slices = field_grid.subgrid(geometry.G_prime)
    faces = geometry.state_faces()
    flats, measures = [], []
    for sf in faces:
        flat, measure = grid.face_indices(sf.face)
        flats.append(flat)
        measures.append(measure)
    uniq, inverse = np.unique(np.concatenate(flats), return_inverse=True)
    total = np.bincount(inverse, weights=np.concatenate(measures))
    parts = []
    for sf, flat, measure in zip(faces, flats, measures):
        parts.append((sf, np.searchsorted(uniq, flat), measure))
    coords = grid.coordinates()[uniq]
    return StateBoundary(grid=grid, field_grid=field_grid, slices=slices, indices=uniq, coords=coords,
                         measures=total, parts=tuple(parts))


class WaveSolver(SolverComponent):
    """
    Runs the scalar wave model eps u_tt = Lap u + load on the field grid
    """

    def __init__(self, cfl_safety: float = 0.5, logger=None):
        super().__init__(logger)
        self.cfl_safety = cfl_safety

    def simulate_forward(self, epsilon, grid: UniformGrid, axis: TimeAxis, src: SourceSpec,
                         record: Sequence[BoundaryRegion] = (),
                         laplace_s: Optional[Sequence[float]] = None,
                         laplace_domain: Optional[RectDomain] = None,
                         keep_history: bool = False,
                         snapshot=None,
                         track_energy: bool = False) -> WaveResult:
        """
        Incident plane wave on G with absorbing depth faces and Neumann sides.

        Args:
            epsilon: Nodal coefficient on `grid` (1 outside Omega)
            grid: Field grid over G
            axis: Time sampling
            src: Plane source
            record: Regions whose node traces are returned
            laplace_s: Pseudo frequencies transformed on the fly
            laplace_domain: Grid-aligned box of the transformed nodes (all of G if None)
            keep_history: Store the full field at every step
            snapshot: (every, callback) field dump hook
            track_energy: Record the discrete energy
        """
        stepper = LeapfrogStepper(grid, epsilon, axis, absorbing=True, cfl_safety=self.cfl_safety,
                                  logger=self.logger)
        plane, plane_measure = plane_source_load(grid, src)
        amplitudes = waveform_f(axis.times, src)
        load_buffer = np.zeros(grid.size)

        def load(k):
            if amplitudes[k] == 0.0:
                return None
            load_buffer[:] = 0.0
            load_buffer[plane] = amplitudes[k] * plane_measure
            return load_buffer.reshape(grid.shape)

        record_idx = {}
        measures = {}
        for region in record:
            idx, measure = region_nodes(grid, region)
            record_idx[region.tag] = idx
            measures[region.tag] = measure

        laplace_grid = None
        laplace_nodes = None
        if laplace_s is not None:
            laplace_grid, lap_slices = grid.subgrid(laplace_domain or grid.domain)
            laplace_nodes = np.arange(grid.size).reshape(grid.shape)[lap_slices].ravel()

        history = tuple(slice(None) for _ in range(grid.dim)) if keep_history else None
        raw = stepper.run(load=load, record=record_idx, laplace_s=laplace_s, laplace_nodes=laplace_nodes,
                          history=history, snapshot=snapshot, track_energy=track_energy)

        result = WaveResult(grid=grid, axis=axis, history=raw.history, energy=raw.energy)
        coords = grid.coordinates() if record_idx else None
        for tag, idx in record_idx.items():
            result.traces[tag] = TimeTraces(tag, coords[idx], raw.traces[tag], axis,
                                            measures=measures[tag], indices=idx)
        if laplace_s is not None:
            result.laplace = raw.laplace.reshape((len(laplace_s),) + laplace_grid.shape)
            result.laplace_s = np.asarray(laplace_s, dtype=float)
            result.laplace_grid = laplace_grid
        return result

    def extract_neumann(self, boundary: StateBoundary, forward: WaveResult, epsilon) -> TimeTraces:
        """
        Outward normal derivative of a G run on dG'.

        Faces inside G use central differences, faces on the lateral sides
        of G carry zero flux and faces on an absorbing side of G take
        -sqrt(eps) u_t. Corner nodes combine their faces weighted by face
        measure.
        """
        if forward.history is None or forward.grid != boundary.field_grid:
            raise GeometryError("Neumann extraction needs the full field history on the field grid")
        hist = forward.history.reshape(forward.axis.steps + 1, -1)
        field_shape = boundary.field_grid.shape
        eps_flat = np.asarray(epsilon, dtype=float).ravel()
        tau = forward.axis.tau
        offsets = np.array([s.start for s in boundary.slices])

        weighted = np.zeros((forward.axis.steps + 1, boundary.n_nodes))
        for sf, positions, face_measure in boundary.parts:
            if sf.kind == "neumann":
                continue
            local = np.array(np.unravel_index(boundary.indices[positions], boundary.grid.shape))
            multi = local + offsets[:, None]
            flat = np.ravel_multi_index(tuple(multi), field_shape)
            if sf.kind == "interior":
                a = sf.face.axis
                plus = multi.copy()
                minus = multi.copy()
                plus[a] += 1
                minus[a] -= 1
                du = hist[:, np.ravel_multi_index(tuple(plus), field_shape)] - \
                    hist[:, np.ravel_multi_index(tuple(minus), field_shape)]
                p = sf.face.outward * du / (2.0 * boundary.field_grid.spacing[a])
            else:
                u = hist[:, flat]
                padded = np.vstack([np.zeros((1, u.shape[1])), u])
                u_t = np.empty_like(u)
                u_t[:-1] = (padded[2:] - padded[:-2]) / (2.0 * tau)
                u_t[-1] = (u[-1] - u[-2]) / tau
                p = -np.sqrt(eps_flat[flat]) * u_t
            weighted[:, positions] += face_measure * p

        return TimeTraces(Definitions.STATE_BOUNDARY, boundary.coords, weighted / boundary.measures,
                          forward.axis, measures=boundary.measures, indices=boundary.indices)

    def simulate_state(self, epsilon, boundary: StateBoundary, axis: TimeAxis, neumann: TimeTraces,
                       history_domain: Optional[RectDomain] = None, track_energy: bool = False) -> WaveResult:
        """
        eps E_tt = Lap E in G' with zero initial data and dE/dn = p on dG'.

        Args:
            epsilon: Nodal coefficient on the G' grid
            boundary: dG' layout
            axis: Time sampling shared with `neumann`
            neumann: Normal derivative p on the boundary nodes
            history_domain: Grid-aligned box whose field history is kept (e.g. Omega)
        """
        if neumann.samples.shape != (axis.steps + 1, boundary.n_nodes):
            raise GeometryError("Neumann data do not match the state boundary sampling")
        loads = neumann.samples * boundary.measures
        return self._run_boundary_driven(epsilon, boundary, axis, lambda k: loads[k], history_domain,
                                         track_energy)

    def simulate_adjoint(self, epsilon, boundary: StateBoundary, axis: TimeAxis, residual: TimeTraces,
                         history_domain: Optional[RectDomain] = None) -> WaveResult:
        """
        Backward adjoint driven on dG' by the weighted residual r (already
        multiplied by the compatibility weight), run as a forward solve of
        the time-reversed load. History and traces are returned in forward
        time order, lambda(T) = 0.
        """
        if residual.samples.shape != (axis.steps + 1, boundary.n_nodes):
            raise GeometryError("Residual does not match the state boundary sampling")
        final = float(np.max(np.abs(residual.samples[-1]))) if boundary.n_nodes else 0.0
        if final > COMPATIBILITY_TOL:
            raise CompatibilityError(f"Adjoint residual at t=T is {final:.3e}, expected 0", residual=final)
        K = axis.steps
        loads = axis.tau * axis.trapezoid_weights()[:, None] * boundary.measures[None, :] * residual.samples
        result = self._run_boundary_driven(epsilon, boundary, axis, lambda m: loads[K - m], history_domain)
        if result.history is not None:
            result.history = result.history[::-1].copy()
        trace = result.traces[Definitions.STATE_BOUNDARY]
        result.traces[Definitions.STATE_BOUNDARY] = trace.with_samples(trace.samples[::-1].copy())
        return result

    def _run_boundary_driven(self, epsilon, boundary: StateBoundary, axis: TimeAxis, boundary_load,
                             history_domain, track_energy: bool = False) -> WaveResult:
        grid = boundary.grid
        stepper = LeapfrogStepper(grid, epsilon, axis, absorbing=False, cfl_safety=self.cfl_safety,
                                  logger=self.logger)
        buffer = np.zeros(grid.size)

        def load(k):
            buffer[:] = 0.0
            buffer[boundary.indices] = boundary_load(k)
            return buffer.reshape(grid.shape)

        history = None
        if history_domain is not None:
            _, history = grid.subgrid(history_domain)
        raw = stepper.run(load=load, record={Definitions.STATE_BOUNDARY: boundary.indices},
                          history=history, track_energy=track_energy)
        result = WaveResult(grid=grid, axis=axis, history=raw.history, energy=raw.energy)
        result.traces[Definitions.STATE_BOUNDARY] = TimeTraces(
            Definitions.STATE_BOUNDARY, boundary.coords, raw.traces[Definitions.STATE_BOUNDARY], axis,
            measures=boundary.measures, indices=boundary.indices)
        return result
