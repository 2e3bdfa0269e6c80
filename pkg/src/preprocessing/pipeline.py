"""
Measurement preprocessing: first arrivals, propagation to the Gamma plane,
target-signal extraction, calibration and immersion of the Gamma data into
simulated data on the whole state boundary
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from ..geometry.domain import GEOMETRY_TOL, SurveyGeometry
from ..geometry.grid import TimeAxis
from ..solvers.traces import TimeTraces
from ..utils.definitions import Definitions
from ..utils.errors import GeometryError, NoArrivalError, TruncationError

logger = logging.getLogger(__name__)

# Nodes of the cosine seam between measured and simulated data
BLEND_WIDTH = 3


@dataclass(frozen=True)
class PreprocessConfig:
    propagation_offset: float = 0.0
    calibration_factor: float = 1.0
    noise_window: int = 20
    arrival_factor: float = 5.0
    arrival_floor: float = 1e-2

    def __post_init__(self):
        if self.calibration_factor <= 0:
            raise ValueError(f"Calibration factor must be positive, got {self.calibration_factor}")
        if self.propagation_offset < 0:
            raise ValueError(f"Propagation offset must be nonnegative, got {self.propagation_offset}")
        if self.noise_window < 1:
            raise ValueError("Noise window needs at least one sample")

    @classmethod
    def from_config(cls, config) -> "PreprocessConfig":
        return cls(**config.get("preprocess"))


def estimate_first_arrival(trace, axis: TimeAxis, noise_window: int = 20, factor: float = 5.0,
                           floor: float = 1e-2) -> float:
    """
    First time at which |u| exceeds max(factor * RMS of the leading
    `noise_window` samples, floor * max |u|).
    """
    trace = np.asarray(trace, dtype=float)
    if trace.shape != (axis.steps + 1,):
        raise ValueError(f"Expected {axis.steps + 1} samples, got {trace.shape}")
    peak = float(np.max(np.abs(trace)))
    if peak == 0.0:
        raise NoArrivalError("Trace is identically zero")
    noise = float(np.sqrt(np.mean(trace[:noise_window] ** 2)))
    threshold = max(factor * noise, floor * peak)
    above = np.flatnonzero(np.abs(trace) > threshold)
    if len(above) == 0:
        raise NoArrivalError(f"Trace never exceeds threshold {threshold:.3e}", threshold=threshold)
    return float(axis.times[above[0]])


def propagate_traces(traces: TimeTraces, offset: float, speed: float = 1.0) -> TimeTraces:
    """
    Advance every trace by offset / speed (cubic interpolation in time);
    samples past the end of the record become zero.
    """
    if offset < 0:
        raise ValueError(f"Propagation offset must be nonnegative, got {offset}")
    if offset == 0:
        return traces
    shift = offset / speed
    if shift >= traces.axis.T:
        raise TruncationError(f"Shift {shift:.4g} leaves no usable record of length {traces.axis.T:.4g}",
                              shift=shift)
    times = traces.axis.times
    source = times + shift
    inside = source <= traces.axis.T * (1 + 1e-12)
    shifted = np.zeros_like(traces.samples)
    shifted[inside] = CubicSpline(times, traces.samples, axis=0)(np.minimum(source[inside], traces.axis.T))
    return traces.with_samples(shifted)


def extract_target_signal(total: TimeTraces, reference: TimeTraces) -> TimeTraces:
    """total - reference on identical sampling"""
    total.check_same_sampling(reference)
    return total.with_samples(total.samples - reference.samples)


def calibrate(traces: TimeTraces, factor: float) -> TimeTraces:
    if factor <= 0:
        raise ValueError(f"Calibration factor must be positive, got {factor}")
    return traces.with_samples(traces.samples * factor)


def calibration_factor(measured: TimeTraces, simulated: TimeTraces) -> float:
    """Peak ratio that brings the measured calibrating-object traces to simulation units"""
    peak = float(np.max(np.abs(measured.samples)))
    if peak == 0.0:
        raise NoArrivalError("Calibration traces are identically zero")
    return float(np.max(np.abs(simulated.samples))) / peak


def rim_distance(coords, geometry: SurveyGeometry, spacing) -> np.ndarray:
    """Lateral node distance of Gamma nodes to the edge of Gamma (0 on the edge)"""
    coords = np.atleast_2d(coords)
    omega = geometry.omega
    dist = np.full(len(coords), np.iinfo(np.int64).max, dtype=np.int64)
    for a in range(geometry.dim - 1):
        lo = np.rint((coords[:, a] - omega.lo[a]) / spacing[a]).astype(np.int64)
        hi = np.rint((omega.hi[a] - coords[:, a]) / spacing[a]).astype(np.int64)
        dist = np.minimum(dist, np.minimum(lo, hi))
    return dist


def immersion_weight(distance, width: int = BLEND_WIDTH) -> np.ndarray:
    """Weight of the measured data: a cosine ramp over the `width` outermost nodes, 1 inside"""
    d = np.asarray(distance)
    if width == 0:
        return np.ones(d.shape)
    ramp = 0.5 * (1.0 - np.cos(math.pi * (d + 1) / (width + 1)))
    return np.where(d >= width, 1.0, ramp)


def immerse_data(measured: TimeTraces, simulated: TimeTraces, geometry: SurveyGeometry, spacing,
                 width: int = BLEND_WIDTH) -> TimeTraces:
    """
    g~ on the state boundary: simulated data everywhere, measured data on
    Gamma, blended with a cosine seam over the outermost `width` Gamma nodes.

    Args:
        measured: Traces on the Gamma nodes of the state boundary
        simulated: Traces on all state-boundary nodes
        geometry: Survey layout
        spacing: Field grid spacing
        width: Seam width in nodes (0 replaces without blending)
    """
    if measured.axis.steps != simulated.axis.steps or abs(measured.axis.tau - simulated.axis.tau) > 1e-12:
        raise GeometryError("Measured and simulated traces use different time sampling")
    on_gamma = geometry.region(Definitions.GAMMA).contains(simulated.coords)
    gamma_positions = np.flatnonzero(on_gamma)

    tree = cKDTree(measured.coords)
    distance, owner = tree.query(simulated.coords[gamma_positions])
    if np.any(distance > 1e-6):
        missing = simulated.coords[gamma_positions[np.argmax(distance)]].tolist()
        raise GeometryError(f"No measured trace at Gamma node {missing}", location=missing)
    if len(np.unique(owner)) != measured.n_nodes:
        raise GeometryError("Measured traces contain nodes off the Gamma nodes of the state boundary")

    w = immersion_weight(rim_distance(simulated.coords[gamma_positions], geometry, spacing), width)
    samples = simulated.samples.copy()
    samples[:, gamma_positions] = w * measured.samples[:, owner] + (1.0 - w) * samples[:, gamma_positions]
    return simulated.with_samples(samples, tag=Definitions.STATE_BOUNDARY)


def preprocess_measurements(total: TimeTraces, reference: TimeTraces, incident: TimeTraces,
                            cfg: PreprocessConfig) -> TimeTraces:
    """
    Stage-1 input on the inversion Gamma nodes: the simulated incident
    wave plus the extracted, propagated and calibrated target signal.
    """
    target = extract_target_signal(total, reference)
    target = propagate_traces(target, cfg.propagation_offset)
    target = calibrate(target, cfg.calibration_factor)
    if target.samples.shape != incident.samples.shape or not np.allclose(target.coords, incident.coords,
                                                                         atol=GEOMETRY_TOL):
        target = target.resample(incident.coords, incident.axis)
    logger.info(f"Target signal RMS {target.rms():.3e} against incident RMS {incident.rms():.3e}")
    return incident.with_samples(incident.samples + target.samples, tag=Definitions.GAMMA)
