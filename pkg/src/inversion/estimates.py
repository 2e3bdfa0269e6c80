"""
A posteriori error indicators: coefficient jumps across cell faces, jumps of
the normal derivative of the discrete fields and their time jumps, combined
into the Lagrangian, Tikhonov and regularized-solution estimates
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.grid import TimeAxis, UniformGrid
from ..geometry.quadtree import QuadtreeCoeffMesh
from ..utils.errors import DimensionMismatchError


@dataclass(frozen=True, eq=False)
class ErrorIndicators:
    """
    Attributes:
        face_pairs: (n_faces, 2) neighbouring cells
        face_measures: Shared face measure of each pair
        face_jumps: |eps_i - eps_j| on each face
        cell_jumps: Largest face jump around each cell
        space_jumps: Nodal [u]_s integrated in time (state plus adjoint)
        time_jumps: Per-step L2 norm over the nodes of [u]_t (state plus adjoint)
        coefficient_jump_norm: ||[eps_h]||
        space_jump_norm: ||[E]_s|| + ||[lambda]_s||
        time_jump_norm: ||[E]_t|| + ||[lambda]_t||
        gradient_norm: ||L'||
        lagrangian: C_I ||L'|| (h ||[u]_s|| + tau ||[u]_t||)
        tikhonov: C_I ||L'|| ||[eps_h]||
        bound: (D / gamma) C_I ||h eps_h||
    """
    face_pairs: np.ndarray
    face_measures: np.ndarray
    face_jumps: np.ndarray
    cell_jumps: np.ndarray
    space_jumps: np.ndarray
    time_jumps: np.ndarray
    coefficient_jump_norm: float
    space_jump_norm: float
    time_jump_norm: float
    gradient_norm: float
    lagrangian: float
    tikhonov: float
    bound: float

    def as_row(self) -> dict:
        return {"jump_eps": self.coefficient_jump_norm, "jump_space": self.space_jump_norm,
                "jump_time": self.time_jump_norm, "est_lagrangian": self.lagrangian,
                "est_tikhonov": self.tikhonov, "est_bound": self.bound}


def coefficient_jumps(mesh: QuadtreeCoeffMesh):
    """(pairs, measures, |eps_i - eps_j|) over all shared faces"""
    adjacency = mesh.face_adjacency()
    if not adjacency:
        return np.zeros((0, 2), dtype=int), np.zeros(0), np.zeros(0)
    pairs = np.array([(i, j) for i, j, _ in adjacency], dtype=int)
    measures = np.array([m for _, _, m in adjacency], dtype=float)
    jumps = np.abs(mesh.values[pairs[:, 0]] - mesh.values[pairs[:, 1]])
    return pairs, measures, jumps


def cell_jump_field(n_cells: int, pairs, jumps) -> np.ndarray:
    """Largest jump over the faces of each cell"""
    out = np.zeros(n_cells)
    if len(pairs):
        np.maximum.at(out, pairs[:, 0], jumps)
        np.maximum.at(out, pairs[:, 1], jumps)
    return out


def space_jumps(history, grid: UniformGrid) -> np.ndarray:
    """
    max_a |u_{i+1} - 2u_i + u_{i-1}| / h_a along every axis, the jump of the
    normal derivative across the dual faces; nodes on the ends of an axis
    contribute nothing along it.
    """
    history = np.asarray(history, dtype=float)
    if history.shape[1:] != grid.shape:
        raise DimensionMismatchError(f"Field history {history.shape[1:]} does not match grid {grid.shape}")
    out = np.zeros_like(history)
    for a, h in enumerate(grid.spacing):
        axis = a + 1
        n = history.shape[axis]
        second = np.abs(np.take(history, range(2, n), axis=axis) - 2.0 * np.take(history, range(1, n - 1), axis=axis)
                        + np.take(history, range(0, n - 2), axis=axis)) / h
        core = [slice(None)] * history.ndim
        core[axis] = slice(1, n - 1)
        out[tuple(core)] = np.maximum(out[tuple(core)], second)
    return out


def time_jumps(history, tau: float) -> np.ndarray:
    """|u^{k+1} - 2u^k + u^{k-1}| / tau at interior steps, 0 at t = 0 and t = T"""
    history = np.asarray(history, dtype=float)
    out = np.zeros_like(history)
    out[1:-1] = np.abs(history[2:] - 2.0 * history[1:-1] + history[:-2]) / tau
    return out


def space_time_norm(values, grid: UniformGrid, axis: TimeAxis) -> float:
    """sqrt(sum_k tau w_k sum_i M_i values^2)"""
    w = axis.tau * axis.trapezoid_weights()
    M = grid.nodal_volume()
    integrand = np.sum((np.asarray(values) ** 2) * M[None, ...], axis=tuple(range(1, np.ndim(values))))
    return float(np.sqrt(np.sum(w * integrand)))


def aposteriori_estimates(state_history, adjoint_history, grid: UniformGrid, axis: TimeAxis,
                          mesh: QuadtreeCoeffMesh, gradient, gamma: float,
                          interpolation_constant: float = 1.0, lipschitz_constant: float = 1.0) -> ErrorIndicators:
    """
    Error indicators of one stage-2 iterate.

    Args:
        state_history: (steps + 1, *grid.shape) E on the Omega grid
        adjoint_history: Same for lambda
        grid: Omega grid of the histories
        axis: Time sampling
        mesh: Coefficient cells carrying eps_h
        gradient: Cell density L'
        gamma: Regularization parameter
        interpolation_constant: C_I
        lipschitz_constant: D
    """
    gradient = np.asarray(gradient, dtype=float)
    if gradient.shape != (mesh.n_cells,):
        raise DimensionMismatchError("Gradient does not live on the mesh cells")
    if gamma <= 0:
        raise ValueError(f"Regularization parameter must be positive, got {gamma}")
    C = float(interpolation_constant)

    pairs, measures, jumps = coefficient_jumps(mesh)
    eps_jump_norm = float(np.sqrt(np.sum(measures * jumps ** 2)))
    grad_norm = float(np.sqrt(np.sum(mesh.volumes * gradient ** 2)))

    s_norm = 0.0
    t_norm = 0.0
    nodal_space = np.zeros(grid.shape)
    per_step = np.zeros(axis.steps + 1)
    w = axis.tau * axis.trapezoid_weights()
    M = grid.nodal_volume()
    for history in (state_history, adjoint_history):
        js = space_jumps(history, grid)
        jt = time_jumps(history, axis.tau)
        s_norm += space_time_norm(js, grid, axis)
        t_norm += space_time_norm(jt, grid, axis)
        nodal_space += np.tensordot(w, js, axes=(0, 0))
        per_step += np.sqrt(np.sum(M[None, ...] * jt ** 2, axis=tuple(range(1, jt.ndim))))

    h = max(grid.spacing)
    lagrangian = C * grad_norm * (h * s_norm + axis.tau * t_norm)
    tikhonov = C * grad_norm * eps_jump_norm
    h_eps = mesh.diameters * mesh.values
    bound = lipschitz_constant / gamma * C * float(np.sqrt(np.sum(mesh.volumes * h_eps ** 2)))

    return ErrorIndicators(face_pairs=pairs, face_measures=measures, face_jumps=jumps,
                           cell_jumps=cell_jump_field(mesh.n_cells, pairs, jumps),
                           space_jumps=nodal_space, time_jumps=per_step,
                           coefficient_jump_norm=eps_jump_norm, space_jump_norm=s_norm, time_jump_norm=t_norm,
                           gradient_norm=grad_norm, lagrangian=lagrangian, tikhonov=tikhonov, bound=bound)
