"""
Layer-stripping reconstruction over the pseudo-frequency interval with
tail updates from forward solves
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..geometry.domain import SurveyGeometry
from ..geometry.grid import TimeAxis, UniformGrid
from ..geometry.quadtree import QuadtreeCoeffMesh, embed_coefficient, grid_to_coeff
from ..solvers.source import SourceSpec
from ..solvers.traces import TimeTraces
from ..solvers.wave import WaveSolver
from ..transforms.laplace import (PseudoFreqAxis, compute_psi, compute_tail, compute_w, f_tilde,
                                  homogeneous_psi, homogeneous_v)
from ..utils.definitions import Definitions
from ..utils.errors import InversionError
from ..utils.logger import SolverComponent
from .carleman import carleman_coefficients
from .layers import clamp_epsilon, epsilon_from_v, recover_epsilon, recover_v, solve_layer


@dataclass(frozen=True)
class GcaConfig:
    """Parameters of the layer-stripping loop"""
    paxis: PseudoFreqAxis
    Lambda: float = 20.0
    inner_iterations: int = 5
    inner_tol: float = 1e-3
    outer_tol: float = 1e-3
    eps_max: float = 25.0
    s_eval: str = Definitions.S_EVAL_LAYER
    psi_oversampling: int = 4
    linear_tol: float = 1e-9
    linear_maxiter: int = 2000

    def __post_init__(self):
        if self.Lambda < 1:
            raise ValueError(f"Carleman parameter must be >= 1, got {self.Lambda}")
        if self.eps_max <= 1:
            raise ValueError(f"Upper clamp must exceed 1, got {self.eps_max}")
        if self.inner_tol <= 0 or self.outer_tol <= 0:
            raise ValueError("Tolerances must be positive")
        if self.s_eval not in Definitions.get_s_eval_modes():
            raise ValueError(f"Unknown s_eval mode {self.s_eval}")

    @classmethod
    def from_config(cls, config) -> "GcaConfig":
        paxis = PseudoFreqAxis(config.get("laplace.s_min"), config.get("laplace.s_max"),
                               config.get("laplace.layers"))
        return cls(paxis=paxis,
                   Lambda=config.get("stage1.carleman_lambda"),
                   inner_iterations=config.get("stage1.inner_iterations"),
                   inner_tol=config.get("stage1.inner_tol"),
                   outer_tol=config.get("stage1.outer_tol"),
                   eps_max=config.get("stage1.eps_max"),
                   s_eval=config.get("stage1.s_eval"),
                   psi_oversampling=config.get("laplace.psi_oversampling"),
                   linear_tol=config.get("stage1.linear_tol"),
                   linear_maxiter=config.get("stage1.linear_maxiter"))


@dataclass
class LayerState:
    """q_j of the finished layers, qbar = h * sum q_j, the current tail and coefficient"""
    n: int
    q: List[np.ndarray]
    qbar: np.ndarray
    V: np.ndarray
    epsilon: QuadtreeCoeffMesh


@dataclass
class Stage1Result:
    epsilon: QuadtreeCoeffMesh
    history: List[dict] = field(default_factory=list)
    state: Optional[LayerState] = None


def cell_norm(mesh: QuadtreeCoeffMesh, values=None) -> float:
    """Volume-weighted L2 norm over the cells"""
    values = mesh.values if values is None else np.asarray(values)
    return float(np.sqrt(np.sum(mesh.volumes * values ** 2)))


def relative_change(new: QuadtreeCoeffMesh, old: QuadtreeCoeffMesh) -> float:
    return cell_norm(new, new.values - old.values) / max(cell_norm(old), 1e-300)


class GloballyConvergentSolver(SolverComponent):
    """
    Stage 1: reconstruct eps_glob from the Gamma traces.

    Args:
        geometry: Survey layout
        field_grid: Grid over G used for tail updates
        axis: Time sampling of the forward solves
        src: Plane source
        mesh: Coefficient cells over Omega (values ignored)
        cfg: Loop parameters
    """

    def __init__(self, geometry: SurveyGeometry, field_grid: UniformGrid, axis: TimeAxis, src: SourceSpec,
                 mesh: QuadtreeCoeffMesh, cfg: GcaConfig, wave: Optional[WaveSolver] = None, logger=None):
        super().__init__(logger)
        self.geometry = geometry
        self.field_grid = field_grid
        self.axis = axis
        self.src = src
        self.mesh = mesh.with_values(np.ones(mesh.n_cells))
        self.cfg = cfg
        self.wave = wave or WaveSolver(logger=self.logger)
        self.omega_grid, _ = field_grid.subgrid(geometry.omega)
        self.omega_coords = self.omega_grid.coordinates()
        self.z = self.omega_coords[:, -1].reshape(self.omega_grid.shape)

    def initial_tail(self) -> np.ndarray:
        """V_0 = ln w0(x, s_bar) / s_bar^2 (homogeneous medium)"""
        return homogeneous_v(self.z, self.cfg.paxis.s_max, self.src.z0)

    def update_tail(self, epsilon: QuadtreeCoeffMesh) -> np.ndarray:
        """Forward solve with eps, transform at s_bar and V = ln w / s_bar^2"""
        s_bar = self.cfg.paxis.s_max
        nodal = embed_coefficient(epsilon, self.field_grid)
        run = self.wave.simulate_forward(nodal, self.field_grid, self.axis, self.src,
                                         laplace_s=[s_bar], laplace_domain=self.geometry.omega)
        w = compute_w(run.laplace[0], f_tilde(s_bar, self.src), self.omega_coords)
        return compute_tail(w, s_bar, self.omega_coords)

    def boundary_psi(self, g: TimeTraces) -> np.ndarray:
        """
        (N + 1, *omega_shape) layer averages psi_n on the Omega boundary:
        from the data on Gamma, from the homogeneous medium elsewhere.
        """
        paxis = self.cfg.paxis
        top = self.omega_grid.dim - 1
        gamma_sel = [slice(None)] * self.omega_grid.dim
        gamma_sel[top] = self.omega_grid.counts[top] - 1
        gamma_sel = tuple(gamma_sel)
        gamma_coords = np.stack([c[gamma_sel].ravel() for c in np.meshgrid(*self.omega_grid.axes(),
                                                                             indexing="ij")], axis=1)
        if g.coords.shape != gamma_coords.shape or not np.allclose(g.coords, gamma_coords, atol=1e-9):
            g = g.resample(gamma_coords, g.axis)

        psi = np.zeros((paxis.N + 1,) + self.omega_grid.shape)
        s = paxis.samples
        for n in range(1, paxis.N + 1):
            psi[n] = 0.5 * (homogeneous_psi(self.z, s[n], self.src.z0)
                            + homogeneous_psi(self.z, s[n - 1], self.src.z0))
        data = compute_psi(g, self.src, paxis, self.cfg.psi_oversampling)
        for n in range(1, paxis.N + 1):
            layer = psi[n]
            layer[gamma_sel] = data.psi_n[n].reshape(layer[gamma_sel].shape)
        return psi

    def coefficient_from_layer(self, q_n, qbar, V, n: int) -> QuadtreeCoeffMesh:
        """Clamped cell coefficient read off v at the configured pseudo frequency"""
        paxis = self.cfg.paxis
        s_n, s_prev = paxis.layer(n)
        mode = self.cfg.s_eval
        if mode == Definitions.S_EVAL_LAYER:
            v_n = recover_v(q_n, qbar, V, paxis.h)
            cells, _ = recover_epsilon(v_n, s_n, self.omega_grid, self.mesh, self.cfg.eps_max)
            return cells
        if mode == Definitions.S_EVAL_UPPER:
            cells, _ = recover_epsilon(V, paxis.s_max, self.omega_grid, self.mesh, self.cfg.eps_max)
            return cells
        # layer_mean: average of the values at both ends of the layer
        v_n = recover_v(q_n, qbar, V, paxis.h)
        v_prev = recover_v(np.zeros_like(q_n), qbar, V, paxis.h)
        nodal = 0.5 * (epsilon_from_v(v_n, s_n, self.omega_grid) + epsilon_from_v(v_prev, s_prev, self.omega_grid))
        cells = grid_to_coeff(nodal, self.mesh, self.omega_grid)
        return cells.with_values(clamp_epsilon(cells.values, self.cfg.eps_max))

    def run_stage1(self, g: TimeTraces) -> Stage1Result:
        """
        Nested layer (n = 1..N) and tail (i = 1..m) iteration.

        Args:
            g: Preprocessed traces on Gamma

        Returns:
            Stage1Result with eps_glob and one history row per (n, i)
        """
        cfg = self.cfg
        paxis = cfg.paxis
        h = paxis.h
        psi = self.boundary_psi(g)

        zeros = np.zeros(self.omega_grid.shape)
        state = LayerState(n=0, q=[zeros], qbar=zeros.copy(), V=self.initial_tail(), epsilon=self.mesh)
        history = []
        small_changes = 0
        self.log_info(f"Stage 1: {paxis.N} layers on [{paxis.s_min}, {paxis.s_max}], Lambda={cfg.Lambda}")

        for n in range(1, paxis.N + 1):
            coeffs = carleman_coefficients(n, paxis, cfg.Lambda)
            q_n = state.q[-1]
            V = state.V
            eps_prev_layer = state.epsilon
            eps_layer = state.epsilon
            for i in range(1, cfg.inner_iterations + 1):
                try:
                    q_n = solve_layer(state.qbar, V, psi[n], coeffs, self.omega_grid, cfg.linear_tol,
                                      cfg.linear_maxiter, x0=q_n)
                    eps_new = self.coefficient_from_layer(q_n, state.qbar, V, n)
                    V = self.update_tail(eps_new)
                except InversionError as e:
                    raise e.with_context(f"layer {n}, iteration {i}")

                change = relative_change(eps_new, eps_layer)
                eps_layer = eps_new
                history.append({"n": n, "i": i, "eps_norm": cell_norm(eps_layer),
                                "eps_max": float(np.max(eps_layer.values)), "residual": change})
                self.log_info(f"Layer {n} iteration {i}: max eps {np.max(eps_layer.values):.4f}, "
                              f"change {change:.3e}")
                if change < cfg.inner_tol:
                    break

            qbar = state.qbar + h * q_n
            state = LayerState(n=n, q=state.q + [q_n], qbar=qbar, V=V, epsilon=eps_layer)

            outer_change = relative_change(eps_layer, eps_prev_layer)
            small_changes = small_changes + 1 if outer_change < cfg.outer_tol else 0
            if small_changes >= 2:
                self.log_info(f"Stage 1 stopped at layer {n}: coefficient stabilized")
                break

        return Stage1Result(epsilon=state.epsilon, history=history, state=state)

