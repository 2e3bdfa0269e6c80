"""
Tikhonov functional on the coefficient cells and its adjoint-state gradient
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..geometry.domain import SurveyGeometry
from ..geometry.grid import TimeAxis, UniformGrid
from ..geometry.quadtree import QuadtreeCoeffMesh
from ..solvers.traces import TimeTraces
from ..solvers.wave import StateBoundary, WaveResult, WaveSolver, build_state_boundary
from ..utils.definitions import Definitions
from ..utils.errors import DimensionMismatchError, GeometryError
from ..utils.logger import SolverComponent


@dataclass(frozen=True)
class TikhonovConfig:
    """Regularization, stopping, refinement and line-search parameters of stage 2"""
    gamma: float = 0.01
    theta: float = 1e-6
    beta1: float = 0.7
    max_refinements: int = 4
    max_cg_iterations: int = 8
    delta_fraction: float = 0.1
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30
    max_update: float = 1.0
    stabilization_tol: float = 1e-3
    interpolation_constant: float = 1.0
    lipschitz_constant: float = 1.0
    restart: str = Definitions.RESTART_GLOB
    eps_max: float = 25.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"Regularization parameter must be positive, got {self.gamma}")
        if not 0 < self.beta1 < 1:
            raise ValueError(f"Refinement fraction must lie in (0, 1), got {self.beta1}")
        if not 0 < self.delta_fraction < 1:
            raise ValueError(f"Ramp width fraction must lie in (0, 1), got {self.delta_fraction}")
        if self.restart not in Definitions.get_restart_modes():
            raise ValueError(f"Unknown restart mode {self.restart}")

    @classmethod
    def from_config(cls, config) -> "TikhonovConfig":
        block = dict(config.get("stage2"))
        block["eps_max"] = config.get("stage1.eps_max")
        return cls(**block)


def z_delta(t, T: float, delta: float):
    """1 on [0, T - delta], then a cosine half-ramp to 0 at T (C^1 at both ends)"""
    if not 0 < delta < T:
        raise ValueError(f"Ramp width must lie in (0, T), got {delta}")
    t = np.asarray(t, dtype=float)
    start = T - delta
    ramp = 0.5 * (1.0 + np.cos(math.pi * np.clip(t - start, 0.0, delta) / delta))
    value = np.where(t <= start, 1.0, ramp)
    return float(value) if value.ndim == 0 else value


def time_weights(axis: TimeAxis, delta: Optional[float]) -> np.ndarray:
    """tau * trapezoid weight * z_delta at every t_k (z_delta = 1 when delta is None)"""
    w = axis.tau * axis.trapezoid_weights()
    if delta is not None:
        w = w * z_delta(axis.times, axis.T, delta)
    return w


def tikhonov_value(E: TimeTraces, g_tilde: TimeTraces, eps, eps_glob, volumes, gamma: float,
                   delta: Optional[float]) -> float:
    """
    1/2 int_{S_T} (E - g~)^2 z_delta + 1/2 gamma int_Omega (eps - eps_glob)^2

    by trapezoid in time, lumped boundary measures in space and cell sums.
    """
    E.check_same_sampling(g_tilde)
    if E.measures is None:
        raise DimensionMismatchError("Boundary traces carry no node measures")
    eps, eps_glob, volumes = (np.asarray(a, dtype=float) for a in (eps, eps_glob, volumes))
    if not eps.shape == eps_glob.shape == volumes.shape:
        raise DimensionMismatchError("Coefficient arrays differ in length")
    w = time_weights(E.axis, delta)
    misfit = 0.5 * np.sum(w[:, None] * E.measures[None, :] * (E.samples - g_tilde.samples) ** 2)
    regular = 0.5 * gamma * np.sum(volumes * (eps - eps_glob) ** 2)
    return float(misfit + regular)


@dataclass
class GradientField:
    """
    Cell densities of the Frechet derivative, L' = misfit + gamma (eps - eps_glob).

    Attributes:
        misfit: -int lambda_t E_t dt projected to the cells (per unit volume)
        regularization: gamma (eps - eps_glob)
        nodal: Nodal misfit derivative on the Omega grid (before projection)
        value: Functional value at the same coefficient
        state: State run (history on Omega)
        adjoint: Adjoint run (history on Omega)
    """
    misfit: np.ndarray
    regularization: np.ndarray
    nodal: np.ndarray
    value: float
    state: Optional[WaveResult] = None
    adjoint: Optional[WaveResult] = None

    @property
    def total(self) -> np.ndarray:
        return self.misfit + self.regularization


class TikhonovProblem(SolverComponent):
    """
    Functional and gradient of one coefficient mesh on one field grid.

    Args:
        geometry: Survey layout
        field_grid: Grid over G that contains the G' grid
        axis: Time sampling of the state problem
        mesh: Coefficient cells (values unused)
        eps_glob: Stage-1 coefficient on the same cells
        g_tilde: Immersed data on dG'
        neumann: Normal derivative data on dG'
        cfg: Stage-2 parameters
    """

    def __init__(self, geometry: SurveyGeometry, field_grid: UniformGrid, axis: TimeAxis,
                 mesh: QuadtreeCoeffMesh, eps_glob, g_tilde: TimeTraces, neumann: TimeTraces,
                 cfg: TikhonovConfig, wave: Optional[WaveSolver] = None, boundary: Optional[StateBoundary] = None,
                 logger=None):
        super().__init__(logger)
        self.geometry = geometry
        self.axis = axis
        self.mesh = mesh
        self.eps_glob = np.asarray(eps_glob, dtype=float)
        if self.eps_glob.shape != (mesh.n_cells,):
            raise DimensionMismatchError("eps_glob does not live on the mesh cells")
        self.cfg = cfg
        self.delta = cfg.delta_fraction * axis.T
        self.wave = wave or WaveSolver(logger=self.logger)
        self.boundary = boundary or build_state_boundary(geometry, field_grid)
        if g_tilde.samples.shape != (axis.steps + 1, self.boundary.n_nodes):
            raise DimensionMismatchError("Immersed data do not match the state boundary sampling")
        self.g_tilde = g_tilde
        self.neumann = neumann

        self.omega_grid, self.omega_slices = self.boundary.grid.subgrid(geometry.omega)
        self.projection = mesh.projection_matrix(self.omega_grid)
        self.omega_volume = self.boundary.grid.nodal_volume()[self.omega_slices]

    @property
    def volumes(self) -> np.ndarray:
        return self.mesh.volumes

    def nodal_epsilon(self, eps) -> np.ndarray:
        """Coefficient on the G' grid, 1 outside Omega"""
        eps = np.asarray(eps, dtype=float)
        if eps.shape != (self.mesh.n_cells,):
            raise GeometryError(f"Expected {self.mesh.n_cells} cell values")
        nodal = np.ones(self.boundary.grid.shape)
        nodal[self.omega_slices] = (self.projection @ eps).reshape(self.omega_grid.shape)
        return nodal

    def solve_state(self, eps) -> WaveResult:
        return self.wave.simulate_state(self.nodal_epsilon(eps), self.boundary, self.axis, self.neumann,
                                        history_domain=self.geometry.omega)

    def value(self, eps, state: Optional[WaveResult] = None) -> float:
        state = state or self.solve_state(eps)
        E = state.traces[Definitions.STATE_BOUNDARY]
        return tikhonov_value(E, self.g_tilde, eps, self.eps_glob, self.volumes, self.cfg.gamma, self.delta)

    def residual(self, state: WaveResult) -> TimeTraces:
        """z_delta (g~ - E) on dG'"""
        E = state.traces[Definitions.STATE_BOUNDARY]
        weight = z_delta(self.axis.times, self.axis.T, self.delta)
        return E.with_samples(weight[:, None] * (self.g_tilde.samples - E.samples))

    def gradient(self, eps) -> GradientField:
        """
        One state and one adjoint solve; the nodal derivative
        -M_i sum_e (dlambda/tau)(dE/tau) (lambda carries the time quadrature
        weight of its forcing) is pulled back to the cells by
        the transpose of the cell-to-node projection.
        """
        eps = np.asarray(eps, dtype=float)
        nodal_eps = self.nodal_epsilon(eps)
        state = self.wave.simulate_state(nodal_eps, self.boundary, self.axis, self.neumann,
                                         history_domain=self.geometry.omega)
        adjoint = self.wave.simulate_adjoint(nodal_eps, self.boundary, self.axis, self.residual(state),
                                             history_domain=self.geometry.omega)
        dE = np.diff(state.history, axis=0)
        dlam = np.diff(adjoint.history, axis=0)
        nodal = -self.omega_volume * np.sum(dlam * dE, axis=0) / self.axis.tau ** 2
        misfit = (self.projection.T @ nodal.ravel()) / self.volumes
        regular = self.cfg.gamma * (eps - self.eps_glob)
        return GradientField(misfit=misfit, regularization=regular, nodal=nodal,
                             value=self.value(eps, state), state=state, adjoint=adjoint)


def gradient_norm(values, volumes) -> float:
    """Volume-weighted L2 norm of a cell density"""
    return float(np.sqrt(np.sum(np.asarray(volumes) * np.asarray(values) ** 2)))
