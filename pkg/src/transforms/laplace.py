"""
Laplace-domain objects: u~(s), f~(s), w = u~/f~, v = ln(w)/s^2, q = dv/ds,
the tail V and the boundary data psi
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..geometry.grid import TimeAxis
from ..solvers.source import SourceSpec
from ..solvers.traces import TimeTraces
from ..utils.errors import DegenerateWaveformError, PositivityError

# |f~(s)| below this is treated as a vanishing transform
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class PseudoFreqAxis:
    """s_0 = s_max > s_1 > ... > s_N = s_min with uniform step h"""
    s_min: float
    s_max: float
    N: int

    def __post_init__(self):
        if self.s_min <= 0 or self.s_max <= self.s_min or self.N < 1:
            raise ValueError(f"Invalid pseudo frequency window [{self.s_min}, {self.s_max}] with N={self.N}")

    @property
    def h(self) -> float:
        return (self.s_max - self.s_min) / self.N

    @property
    def samples(self) -> np.ndarray:
        """Descending layer nodes s_n, n = 0..N"""
        return self.s_max - self.h * np.arange(self.N + 1)

    def oversampled(self, factor: int) -> np.ndarray:
        """Descending samples with step h / factor; every factor-th one is an s_n"""
        return self.s_max - (self.h / factor) * np.arange(self.N * factor + 1)

    def layer(self, n: int):
        """(s_n, s_{n-1}) of layer n = 1..N"""
        s = self.samples
        return s[n], s[n - 1]


@dataclass(frozen=True, eq=False)
class BoundaryPsi:
    """
    psi(x, s) on boundary nodes and its layer averages.

    Attributes:
        coords: (n, dim) node coordinates
        s: Descending oversampled pseudo frequencies
        psi: (len(s), n) values
        psi_n: (N + 1, n) layer averages; row 0 is unused (zeros)
    """
    coords: np.ndarray
    s: np.ndarray
    psi: np.ndarray
    psi_n: np.ndarray


@dataclass(frozen=True, eq=False)
class PseudoFreqFields:
    """w, v and q on grid nodes sampled over s (first axis), plus the tail V"""
    s: np.ndarray
    w: np.ndarray
    v: np.ndarray
    q: np.ndarray
    V: np.ndarray

    @classmethod
    def from_transform(cls, u_tilde, s, src: SourceSpec, coords=None) -> "PseudoFreqFields":
        s = np.asarray(s, dtype=float)
        ft = f_tilde(s, src)
        w = compute_w(u_tilde, ft.reshape((-1,) + (1,) * (np.ndim(u_tilde) - 1)), coords)
        v = compute_v(w, s, coords)
        q = compute_q(v, s)
        s_bar_index = int(np.argmax(s))
        return cls(s=s, w=w, v=v, q=q, V=compute_tail(w[s_bar_index], s[s_bar_index], coords))


def laplace_transform(trace, axis: TimeAxis, s):
    """
    Trapezoid rule for int_0^T u(t) e^{-st} dt (the tail beyond T is zero).

    Args:
        trace: (steps + 1,) or (steps + 1, n) samples
        axis: Time sampling
        s: Scalar or 1-D array of pseudo frequencies

    Returns:
        Transform with shape s.shape + trace.shape[1:]
    """
    trace = np.asarray(trace, dtype=float)
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    kernel = axis.tau * axis.trapezoid_weights()[None, :] * np.exp(-np.outer(s_arr, axis.times))
    out = np.tensordot(kernel, trace, axes=(1, 0))
    return out[0] if np.ndim(s) == 0 else out


def f_tilde(s, src: SourceSpec):
    """Closed form of the sine-burst transform, omega (1 - e^{-s t'}) / (s^2 + omega^2)"""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0):
        raise ValueError("Pseudo frequencies must be positive")
    value = src.omega * (-np.expm1(-s_arr * src.burst_end)) / (s_arr ** 2 + src.omega ** 2)
    if np.any(np.abs(value) < DEGENERATE_TOL):
        raise DegenerateWaveformError(f"|f~(s)| < {DEGENERATE_TOL} for s in {np.atleast_1d(s_arr)}")
    return float(value) if value.ndim == 0 else value


def require_positive(values, coords=None, what: str = "w"):
    """Raise a located PositivityError if any value is not strictly positive"""
    values = np.asarray(values)
    bad = ~(values > 0)
    if np.any(bad):
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        location = None
        if coords is not None and values.ndim:
            coords = np.atleast_2d(coords)
            # trailing axes of `values` enumerate the nodes of `coords`
            for k in range(1, values.ndim + 1):
                if int(np.prod(values.shape[-k:])) == len(coords):
                    node = np.ravel_multi_index(index[-k:], values.shape[-k:])
                    location = coords[node].tolist()
                    break
        raise PositivityError(f"{what} <= 0 at index {index}" + (f", x={location}" if location else ""),
                              index=index, location=location)


def compute_w(u_tilde, f_tilde_value, coords=None, check: bool = True):
    """w = u~ / f~ (positivity checked for downstream logarithms)"""
    w = np.asarray(u_tilde, dtype=float) / f_tilde_value
    if check:
        require_positive(w, coords, "w")
    return w


def w0_reference(z, s, z0: float):
    """Homogeneous-medium transform e^{-s|z - z0|} / (2s)"""
    z = np.asarray(z, dtype=float)
    return np.exp(-s * np.abs(z - z0)) / (2.0 * s)


def compute_v(w, s, coords=None):
    """v = ln(w) / s^2; s broadcasts over the first axis of w"""
    require_positive(w, coords, "w")
    s = np.asarray(s, dtype=float)
    s = s.reshape(s.shape + (1,) * (np.ndim(w) - s.ndim))
    return np.log(w) / s ** 2


def compute_q(v, s):
    """q = dv/ds by central differences over the s samples (one-sided at the ends)"""
    s = np.asarray(s, dtype=float)
    edge = 2 if len(s) >= 3 else 1
    return np.gradient(np.asarray(v, dtype=float), s, axis=0, edge_order=edge)


def compute_tail(w_bar, s_bar: float, coords=None):
    """Tail V = ln w(x, s_bar) / s_bar^2"""
    require_positive(w_bar, coords, "w(s_bar)")
    return np.log(w_bar) / s_bar ** 2


def homogeneous_v(z, s, z0: float):
    """v of the homogeneous medium, (-s|z - z0| - ln 2s) / s^2"""
    d = np.abs(np.asarray(z, dtype=float) - z0)
    return (-s * d - np.log(2.0 * s)) / s ** 2


def homogeneous_psi(z, s, z0: float):
    """d/ds [ln w0 / s^2] = |z - z0| / s^2 - (1 - 2 ln 2s) / s^3"""
    d = np.abs(np.asarray(z, dtype=float) - z0)
    return d / s ** 2 - (1.0 - 2.0 * np.log(2.0 * s)) / s ** 3


def compute_psi(traces: TimeTraces, src: SourceSpec, paxis: PseudoFreqAxis, oversampling: int = 4,
                phi: Optional[np.ndarray] = None) -> BoundaryPsi:
    """
    psi = d/ds [ln(phi) / s^2] with phi = g~ / f~, on an s grid refined
    `oversampling` times, and the two-point layer averages
    psi_n = (psi(s_n) + psi(s_{n-1})) / 2.
    """
    s = paxis.oversampled(oversampling)
    if phi is None:
        phi = compute_w(laplace_transform(traces.samples, traces.axis, s), f_tilde(s, src)[:, None],
                        traces.coords, check=False)
    require_positive(phi, traces.coords, "phi")
    psi = np.gradient(np.log(phi) / s[:, None] ** 2, s, axis=0, edge_order=2)
    at_nodes = psi[::oversampling]
    psi_n = np.zeros_like(at_nodes)
    psi_n[1:] = 0.5 * (at_nodes[1:] + at_nodes[:-1])
    return BoundaryPsi(coords=traces.coords, s=s, psi=psi, psi_n=psi_n)
