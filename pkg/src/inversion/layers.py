"""
Per-layer operations of the globally convergent method: the linear layer
equation for q_n, v_n and the explicit coefficient formula
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, bicgstab, spilu

from ..geometry.grid import UniformGrid
from ..geometry.quadtree import QuadtreeCoeffMesh, grid_to_coeff
from ..utils.errors import SolverError
from .carleman import CarlemanCoeffs

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LayerSystem:
    """
    Sparse system for the interior unknowns of one layer.

    The |grad q_n|^2 term weighted by A2 is dropped, so the system is
    linear; `quadratic_weight` records that nothing of it was assembled.
    """
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    interior: np.ndarray
    quadratic_weight: float = 0.0


def interior_mask(shape) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    mask[tuple(slice(1, -1) for _ in shape)] = True
    return mask


def central_gradient(field, grid: UniformGrid):
    """Per-axis central differences (one-sided on the boundary)"""
    return [np.gradient(field, grid.spacing[a], axis=a, edge_order=2) for a in range(grid.dim)]


def assemble_layer_system(qbar, V, psi_n, coeffs: CarlemanCoeffs, grid: UniformGrid) -> LayerSystem:
    """
    Central-difference discretization of

        Lap q + A1 D . grad q = A3 |D|^2,   D = grad V - grad qbar,

    on the interior nodes with Dirichlet data psi_n on the boundary nodes.
    """
    D = [gv - gq for gv, gq in zip(central_gradient(V, grid), central_gradient(qbar, grid))]
    D2 = sum(d ** 2 for d in D)

    inner = interior_mask(grid.shape)
    interior = np.flatnonzero(inner)
    unknown = np.full(grid.size, -1, dtype=int)
    unknown[interior] = np.arange(len(interior))
    boundary_values = np.asarray(psi_n, dtype=float).ravel()

    multi = np.array(np.unravel_index(interior, grid.shape))
    rhs = coeffs.A3 * D2.ravel()[interior]
    rows = [np.arange(len(interior))]
    cols = [np.arange(len(interior))]
    vals = [np.full(len(interior), -sum(2.0 / h ** 2 for h in grid.spacing))]

    for a in range(grid.dim):
        h = grid.spacing[a]
        drift = coeffs.A1 * D[a].ravel()[interior] / (2.0 * h)
        for sign in (1, -1):
            nb = multi.copy()
            nb[a] += sign
            flat = np.ravel_multi_index(tuple(nb), grid.shape)
            weight = 1.0 / h ** 2 + sign * drift
            target = unknown[flat]
            known = target < 0
            rhs = rhs - np.where(known, weight * boundary_values[flat], 0.0)
            rows.append(np.flatnonzero(~known))
            cols.append(target[~known])
            vals.append(weight[~known])

    matrix = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(len(interior), len(interior)))
    return LayerSystem(matrix=matrix, rhs=rhs, interior=interior)


def solve_layer(qbar, V, psi_n, coeffs: CarlemanCoeffs, grid: UniformGrid, tol: float = 1e-9,
                maxiter: int = 2000, x0=None) -> np.ndarray:
    """
    Solve the layer equation for q_n on the Omega grid.

    Args:
        qbar: h * sum of previous q_j (nodal)
        V: Current tail (nodal)
        psi_n: Nodal array whose boundary entries carry the Dirichlet data
        coeffs: Carleman coefficients of the layer
        grid: Omega grid
        tol: Relative residual target
        maxiter: Krylov iteration cap
        x0: Initial guess (nodal), e.g. q_{n-1}

    Returns:
        q_n on all nodes (boundary = psi_n)
    """
    system = assemble_layer_system(qbar, V, psi_n, coeffs, grid)
    assert system.quadratic_weight == 0.0
    A, b = system.matrix, system.rhs
    guess = None if x0 is None else np.asarray(x0, dtype=float).ravel()[system.interior]

    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        x = np.zeros(len(b))
    else:
        ilu = spilu(A.tocsc(), drop_tol=1e-6, fill_factor=20)
        precond = LinearOperator(A.shape, ilu.solve)
        x, info = bicgstab(A, b, x0=guess, rtol=tol, atol=0.0, maxiter=maxiter, M=precond)
        residual = float(np.linalg.norm(b - A @ x) / b_norm)
        if info != 0 or not np.isfinite(residual) or residual > 10.0 * tol:
            raise SolverError(f"Layer solve did not converge (info={info}, residual={residual:.3e})",
                              residual=residual)
        logger.debug(f"Layer {coeffs.n}: relative residual {residual:.3e}")

    q = np.asarray(psi_n, dtype=float).copy().ravel()
    q[system.interior] = x
    return q.reshape(grid.shape)


def recover_v(q_n, qbar_prev, V, h: float):
    """v_n = -h q_n - qbar_{n-1} + V_n"""
    return -h * np.asarray(q_n) - np.asarray(qbar_prev) + np.asarray(V)


def epsilon_from_v(v, s: float, grid: UniformGrid) -> np.ndarray:
    """
    Lap v + s^2 |grad v|^2 at interior nodes by central differences;
    boundary nodes copy the nearest interior value.
    """
    v = np.asarray(v, dtype=float)
    core = tuple(slice(1, -1) for _ in range(grid.dim))
    lap = np.zeros(v[core].shape)
    grad2 = np.zeros(v[core].shape)
    for a, h in enumerate(grid.spacing):
        up = [slice(1, -1)] * grid.dim
        dn = [slice(1, -1)] * grid.dim
        up[a] = slice(2, None)
        dn[a] = slice(None, -2)
        lap += (v[tuple(up)] - 2.0 * v[core] + v[tuple(dn)]) / h ** 2
        grad2 += ((v[tuple(up)] - v[tuple(dn)]) / (2.0 * h)) ** 2
    return np.pad(lap + s ** 2 * grad2, 1, mode="edge")


def clamp_epsilon(values, b: float):
    """Pointwise min(max(eps, 1), b)"""
    if b <= 1:
        raise ValueError(f"Upper clamp must exceed 1, got {b}")
    return np.clip(np.asarray(values, dtype=float), 1.0, b)


def recover_epsilon(v, s_eval: float, grid: UniformGrid, mesh: QuadtreeCoeffMesh, b: float):
    """
    Coefficient from v at s_eval, projected to the cells and clamped.

    Returns:
        (clamped cell mesh, unclamped nodal field)
    """
    nodal = epsilon_from_v(v, s_eval, grid)
    cells = grid_to_coeff(nodal, mesh, grid)
    return cells.with_values(clamp_epsilon(cells.values, b)), nodal
