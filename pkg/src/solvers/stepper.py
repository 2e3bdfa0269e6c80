"""
Explicit leapfrog stepper for eps * u_tt = Laplace(u) + load on a uniform grid

The spatial operator is the lumped weak-form Laplacian (reflect padding on
every face, i.e. natural Neumann boundaries), so the scheme is symmetric
and its time-reversed run is the exact discrete adjoint. Faces of the last
axis can additionally carry the first-order absorbing condition
du/dn = -sqrt(eps) du/dt.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from ..geometry.grid import TimeAxis, UniformGrid, check_cfl
from ..utils.errors import DivergenceError, GeometryError
from ..utils.logger import SolverComponent

# Steps between non-finite checks
NAN_CHECK_INTERVAL = 100


@dataclass
class StepperResult:
    """What a run recorded; absent entries are None or empty"""
    traces: Dict[str, np.ndarray] = field(default_factory=dict)
    laplace: Optional[np.ndarray] = None
    history: Optional[np.ndarray] = None
    energy: Optional[np.ndarray] = None
    final: Optional[np.ndarray] = None


class LeapfrogStepper(SolverComponent):
    """
    Second-order explicit update

        u^{k+1} = 2u^k - u^{k-1} + (tau^2/eps) (Lap u^k + F^k / M)

    with u^{-1} = u^0 = 0 and, on absorbing nodes,
    u^{k+1} = (u~^{k+1} + beta u^{k-1}) / (1 + beta), beta = a tau / (2 eps).
    """

    def __init__(self, grid: UniformGrid, epsilon, axis: TimeAxis, absorbing: bool = True,
                 cfl_safety: float = 0.5, logger=None):
        super().__init__(logger)
        epsilon = np.asarray(epsilon, dtype=float)
        if epsilon.shape != grid.shape:
            raise GeometryError(f"Coefficient shape {epsilon.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(epsilon)) or np.any(epsilon <= 0):
            raise GeometryError("Coefficient must be finite and positive")
        check_cfl(grid, axis, cfl_safety)

        self.grid = grid
        self.axis = axis
        self.epsilon = epsilon
        self.absorbing = absorbing
        self.volume = grid.nodal_volume()
        self.inv_h2 = [1.0 / h ** 2 for h in grid.spacing]
        self.scale = axis.tau ** 2 / epsilon
        self.damping = self._damping() if absorbing else None
        self.beta = None if self.damping is None else self.damping * axis.tau / (2.0 * epsilon)

    def _damping(self) -> np.ndarray:
        """a = C/M = 2 sqrt(eps) / h_z on the two faces of the depth axis"""
        a = np.zeros(self.grid.shape)
        top = self.grid.dim - 1
        hz = self.grid.spacing[top]
        for k in (0, self.grid.counts[top] - 1):
            sl = [slice(None)] * self.grid.dim
            sl[top] = k
            a[tuple(sl)] = 2.0 * np.sqrt(self.epsilon[tuple(sl)]) / hz
        return a

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        """Lumped weak-form Laplacian, -M^{-1} K u"""
        lap = np.zeros_like(u)
        for a in range(self.grid.dim):
            pad = [(0, 0)] * self.grid.dim
            pad[a] = (1, 1)
            p = np.pad(u, pad, mode="reflect")
            hi = [slice(None)] * self.grid.dim
            lo = [slice(None)] * self.grid.dim
            hi[a] = slice(2, None)
            lo[a] = slice(None, -2)
            lap += (p[tuple(hi)] - 2.0 * u + p[tuple(lo)]) * self.inv_h2[a]
        return lap

    def apply_absorbing_bc(self, u_trial: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
        """
        Blend the trial update with u^{k-1} on absorbing nodes.

        Lateral faces are Neumann through the reflect padding of the
        Laplacian and are left untouched here.
        """
        if self.beta is None:
            return u_trial
        return (u_trial + self.beta * u_prev) / (1.0 + self.beta)

    def energy(self, u_next: np.ndarray, u_now: np.ndarray) -> float:
        """Discrete energy 1/2 sum M eps (du/tau)^2 + 1/2 <K u^{k+1}, u^k>"""
        rate = (u_next - u_now) / self.axis.tau
        kinetic = 0.5 * np.sum(self.volume * self.epsilon * rate ** 2)
        potential = -0.5 * np.sum(self.volume * u_now * self.laplacian(u_next))
        return float(kinetic + potential)

    def run(self,
            load: Optional[Callable[[int], Optional[np.ndarray]]] = None,
            record: Optional[Dict[str, np.ndarray]] = None,
            laplace_s: Optional[Sequence[float]] = None,
            laplace_nodes: Optional[np.ndarray] = None,
            history: Optional[Tuple[slice, ...]] = None,
            snapshot: Optional[Tuple[int, Callable[[int, np.ndarray], None]]] = None,
            track_energy: bool = False) -> StepperResult:
        """
        Step from t=0 to T.

        Args:
            load: k -> nodal load F^k (grid shape) or None for no load at step k
            record: name -> flat node indices sampled at every t_k
            laplace_s: pseudo frequencies whose trapezoid transforms are accumulated
            laplace_nodes: flat node indices for the transforms (all nodes if None)
            history: slices selecting the sub-block stored at every t_k
            snapshot: (every, callback(step, u)) for field dumps
            track_energy: record the discrete energy after every step

        Returns:
            StepperResult
        """
        K = self.axis.steps
        tau = self.axis.tau
        record = record or {}
        weights = self.axis.trapezoid_weights()
        times = self.axis.times

        u_prev = np.zeros(self.grid.shape)
        u_now = np.zeros(self.grid.shape)

        result = StepperResult()
        for name, idx in record.items():
            result.traces[name] = np.zeros((K + 1, len(idx)))
        if laplace_s is not None:
            s_values = np.asarray(laplace_s, dtype=float)
            n_lap = self.grid.size if laplace_nodes is None else len(laplace_nodes)
            result.laplace = np.zeros((len(s_values), n_lap))
        if history is not None:
            block = u_now[history]
            result.history = np.zeros((K + 1,) + block.shape)
        if track_energy:
            result.energy = np.zeros(K)

        self.log_debug(f"Stepping {K} steps, tau={tau:.6g}, grid={self.grid.shape}")
        for k in range(K):
            rhs = self.laplacian(u_now)
            if load is not None:
                f = load(k)
                if f is not None:
                    rhs = rhs + f / self.volume
            u_next = 2.0 * u_now - u_prev + self.scale * rhs
            u_next = self.apply_absorbing_bc(u_next, u_prev)

            j = k + 1
            for name, idx in record.items():
                result.traces[name][j] = u_next.ravel()[idx]
            if result.laplace is not None:
                vals = u_next.ravel() if laplace_nodes is None else u_next.ravel()[laplace_nodes]
                result.laplace += np.outer(tau * weights[j] * np.exp(-s_values * times[j]), vals)
            if result.history is not None:
                result.history[j] = u_next[history]
            if track_energy:
                result.energy[k] = self.energy(u_next, u_now)
            if snapshot is not None and snapshot[0] > 0 and j % snapshot[0] == 0:
                snapshot[1](j, u_next)
            if j % NAN_CHECK_INTERVAL == 0 and not np.all(np.isfinite(u_next)):
                raise DivergenceError(f"Non-finite field at step {j}", step=j)

            u_prev, u_now = u_now, u_next

        if not np.all(np.isfinite(u_now)):
            raise DivergenceError(f"Non-finite field at step {K}", step=K)
        result.final = u_now
        return result
