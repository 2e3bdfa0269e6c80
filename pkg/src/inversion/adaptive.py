"""
Stage 2: conjugate-gradient minimization of the Tikhonov functional on a
sequence of locally refined coefficient meshes
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..geometry.domain import SurveyGeometry
from ..geometry.grid import TimeAxis, UniformGrid
from ..geometry.quadtree import QuadtreeCoeffMesh, embed_coefficient, refine_cells
from ..preprocessing.pipeline import immerse_data
from ..solvers.source import SourceSpec
from ..solvers.traces import TimeTraces
from ..solvers.wave import StateBoundary, WaveSolver, build_state_boundary
from ..utils.definitions import Definitions
from ..utils.errors import InversionError, LineSearchStall
from ..utils.logger import SolverComponent
from .estimates import ErrorIndicators, aposteriori_estimates
from .globally_convergent import cell_norm
from .layers import clamp_epsilon
from .optimizer import CGState, armijo_backtracking, cg_step, check_stop, select_refinement
from .tikhonov import GradientField, TikhonovConfig, TikhonovProblem, gradient_norm


@dataclass
class FieldSetting:
    """Field grid, time axis and boundary data that one or more meshes share"""
    grid: UniformGrid
    axis: TimeAxis
    boundary: StateBoundary
    neumann: TimeTraces
    g_tilde: TimeTraces


@dataclass
class MeshRecord:
    """Outcome of the CG run on one mesh"""
    index: int
    mesh: QuadtreeCoeffMesh
    cg_iterations: int
    value: float
    grad_norm: float
    eps_norm: float
    stop_reason: str
    gradient: GradientField
    estimates: Optional[ErrorIndicators] = None
    marked: int = 0

    def as_row(self) -> dict:
        eps_comp = float(np.max(self.mesh.values))
        row = {"mesh": self.index, "cells": self.mesh.n_cells, "cg_iterations": self.cg_iterations,
               "value": self.value, "grad_norm": self.grad_norm, "eps_comp": eps_comp,
               "n_comp": float(np.sqrt(eps_comp)), "marked": self.marked, "stop": self.stop_reason}
        if self.estimates is not None:
            row.update(self.estimates.as_row())
        return row


@dataclass
class Stage2Result:
    epsilon: QuadtreeCoeffMesh
    records: List[MeshRecord] = field(default_factory=list)
    iterations: List[dict] = field(default_factory=list)
    selected: int = 0


class AdaptiveSolver(SolverComponent):
    """
    Refinement loop around the Tikhonov minimization.

    Args:
        geometry: Survey layout
        field_grid: Coarsest field grid over G
        T: Final time
        src: Plane source
        cfg: Stage-2 parameters
        cfl_safety: CFL safety factor used when the field grid is refined
        max_step: Upper bound on tau
    """

    def __init__(self, geometry: SurveyGeometry, field_grid: UniformGrid, T: float, src: SourceSpec,
                 cfg: TikhonovConfig, cfl_safety: float = 0.5, max_step: Optional[float] = None,
                 wave: Optional[WaveSolver] = None, logger=None):
        super().__init__(logger)
        self.geometry = geometry
        self.field_grid = field_grid
        self.T = T
        self.src = src
        self.cfg = cfg
        self.cfl_safety = cfl_safety
        self.max_step = max_step
        self.wave = wave or WaveSolver(cfl_safety=cfl_safety, logger=self.logger)
        self._setting: Optional[FieldSetting] = None

    def grid_for(self, mesh: QuadtreeCoeffMesh) -> UniformGrid:
        """Field grid halved until every coefficient cell spans at least two spacings"""
        grid = self.field_grid
        while mesh.min_cell_size < 2.0 * max(grid.spacing) * (1 - 1e-9):
            grid = grid.refined(2)
        return grid

    def field_setting(self, mesh: QuadtreeCoeffMesh, eps_glob: QuadtreeCoeffMesh,
                      measured: TimeTraces) -> FieldSetting:
        """
        Neumann data and immersed data for the field grid of `mesh`: a G
        run with eps_glob supplies p on dG' and the simulated traces, and
        the measured Gamma traces are resampled onto the grid's Gamma nodes.
        """
        grid = self.grid_for(mesh)
        if self._setting is not None and self._setting.grid == grid:
            return self._setting
        axis = TimeAxis.for_grid(self.T, grid, self.cfl_safety, self.max_step)
        self.log_info(f"Field grid {grid.shape}, tau={axis.tau:.4g} ({axis.steps} steps)")

        nodal = embed_coefficient(eps_glob, grid)
        run = self.wave.simulate_forward(nodal, grid, axis, self.src, keep_history=True)
        boundary = build_state_boundary(self.geometry, grid)
        neumann = self.wave.extract_neumann(boundary, run, nodal)

        offsets = np.array([s.start for s in boundary.slices])
        local = np.array(np.unravel_index(boundary.indices, boundary.grid.shape))
        flat = np.ravel_multi_index(tuple(local + offsets[:, None]), grid.shape)
        simulated = TimeTraces(Definitions.STATE_BOUNDARY, boundary.coords,
                               run.history.reshape(axis.steps + 1, -1)[:, flat], axis,
                               measures=boundary.measures, indices=boundary.indices)
        gamma_coords = boundary.coords[boundary.gamma_mask(self.geometry)]
        on_grid = measured.resample(gamma_coords, axis, tag=Definitions.GAMMA)
        g_tilde = immerse_data(on_grid, simulated, self.geometry, grid.spacing)
        self._setting = FieldSetting(grid=grid, axis=axis, boundary=boundary, neumann=neumann, g_tilde=g_tilde)
        return self._setting

    def minimize(self, problem: TikhonovProblem, start, index: int, iterations: List[dict]):
        """CG iterations from `start` until check_stop, a stalled line search or the iteration cap"""
        cfg = self.cfg
        volumes = problem.volumes
        line_search = armijo_backtracking(problem.value, volumes, c=cfg.armijo_c, shrink=cfg.shrink,
                                          max_trials=cfg.max_backtracks, max_update=cfg.max_update,
                                          project=lambda x: clamp_epsilon(x, cfg.eps_max))
        eps = clamp_epsilon(start, cfg.eps_max)
        grad = problem.gradient(eps)
        value = grad.value
        state = CGState()
        eps_norms = [cell_norm(problem.mesh, eps)]
        reason = "max_iterations"
        m = 0
        while True:
            g_norm = gradient_norm(grad.total, volumes)
            iterations.append({"mesh": index, "m": m, "value": value, "grad_norm": g_norm,
                               "eps_norm": eps_norms[-1], "eps_max": float(np.max(eps)), "alpha": state.alpha})
            self.log_info(f"Mesh {index} iteration {m}: F={value:.6e}, |L'|={g_norm:.3e}")
            decision = check_stop(g_norm, eps_norms, cfg.theta, cfg.stabilization_tol)
            if decision.stop:
                reason = decision.reason
                break
            if m >= cfg.max_cg_iterations:
                break
            try:
                eps_new, state, value_new, vanished = cg_step(state, grad.total, eps, value, volumes, line_search)
            except LineSearchStall as e:
                self.log_warning(f"Mesh {index} iteration {m}: {e}")
                reason = "line_search"
                break
            if vanished:
                reason = "gradient"
                break
            eps, value = eps_new, value_new
            eps_norms.append(cell_norm(problem.mesh, eps))
            grad = problem.gradient(eps)
            m += 1
        return eps, grad, m, reason, eps_norms[-1]

    def run_stage2(self, eps_glob: QuadtreeCoeffMesh, measured: TimeTraces) -> Stage2Result:
        """
        Minimize on the stage-1 mesh, then refine where |L'| >= beta1 max |L'|
        and minimize again, until the gradient norm grows or the coefficient
        norm settles compared with the previous mesh.

        Args:
            eps_glob: Stage-1 coefficient (its mesh is the first mesh)
            measured: Preprocessed traces on Gamma
        """
        cfg = self.cfg
        mesh = eps_glob
        records: List[MeshRecord] = []
        iterations: List[dict] = []
        selected = 0
        previous_final: Optional[QuadtreeCoeffMesh] = None

        for k in range(cfg.max_refinements + 1):
            glob_k = eps_glob.interpolate_to(mesh)
            if cfg.restart == Definitions.RESTART_CURRENT and previous_final is not None:
                start = previous_final.interpolate_to(mesh).values
            else:
                start = glob_k.values
            try:
                setting = self.field_setting(mesh, eps_glob, measured)
                problem = TikhonovProblem(self.geometry, setting.grid, setting.axis, mesh, glob_k.values,
                                          setting.g_tilde, setting.neumann, cfg, wave=self.wave,
                                          boundary=setting.boundary, logger=self.logger)
                eps, grad, n_iter, reason, eps_norm = self.minimize(problem, start, k, iterations)
            except InversionError as e:
                raise e.with_context(f"mesh {k}")

            final = mesh.with_values(eps, mesh_index=k, xi_term="zero for the scalar model")
            estimates = aposteriori_estimates(grad.state.history, grad.adjoint.history, problem.omega_grid,
                                              setting.axis, final, grad.total, cfg.gamma,
                                              cfg.interpolation_constant, cfg.lipschitz_constant)
            record = MeshRecord(index=k, mesh=final, cg_iterations=n_iter, value=grad.value,
                                grad_norm=gradient_norm(grad.total, final.volumes), eps_norm=eps_norm,
                                stop_reason=reason, gradient=grad, estimates=estimates)
            records.append(record)
            selected = k
            previous_final = final

            if len(records) > 1:
                before = records[-2]
                if record.grad_norm > before.grad_norm:
                    self.log_info(f"Gradient norm grew on mesh {k}; keeping mesh {k - 1}")
                    selected = k - 1
                    break
                if abs(record.eps_norm - before.eps_norm) <= cfg.stabilization_tol * before.eps_norm:
                    self.log_info(f"Coefficient norm stabilized on mesh {k}")
                    break
            if k == cfg.max_refinements:
                break

            marked = select_refinement(grad.total, cfg.beta1)
            refined = refine_cells(final, marked)
            record.marked = len(refined.metadata["refined"])
            if not record.marked:
                self.log_info(f"No refinable cells on mesh {k}")
                break
            self.log_info(f"Mesh {k}: refined {record.marked} of {final.n_cells} cells")
            mesh = refined

        return Stage2Result(epsilon=records[selected].mesh, records=records, iterations=iterations,
                            selected=selected)
