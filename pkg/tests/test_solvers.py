"""
Tests for the leapfrog stepper and the forward, state and adjoint wave solvers
"""
import math
import os
import sys
import unittest
from pathlib import Path

import numpy as np

sys.path.append(str(Path(os.path.dirname(os.path.abspath(__file__))).parent))

from src.geometry.domain import RectDomain, SurveyGeometry
from src.geometry.grid import TimeAxis, build_grid
from src.geometry.quadtree import QuadtreeCoeffMesh, embed_coefficient
from src.solvers.source import SourceSpec, plane_source_load, waveform_f
from src.solvers.stepper import LeapfrogStepper
from src.solvers.traces import TimeTraces
from src.solvers.wave import WaveSolver, build_state_boundary, region_nodes
from src.utils.definitions import Definitions
from src.utils.errors import CompatibilityError, GeometryError, StabilityError


def small_setup():
    """17 x 19 field grid whose G' grid is 17 x 17"""
    G = RectDomain((-0.08, -0.08), (0.08, 0.1))
    omega = RectDomain((-0.04, -0.04), (0.04, 0.08))
    geometry = SurveyGeometry(G, omega, 0.09)
    grid = build_grid(G, 0.01)
    axis = TimeAxis.for_grid(0.4, grid, 0.5, 0.0025)
    return geometry, grid, axis, SourceSpec(0.09, 30.0)


def column_setup(depth=-0.4, h=0.005, T=0.9):
    """Narrow deep column for travel-time and absorption checks"""
    G = RectDomain((-0.05, depth), (0.05, 0.1))
    omega = RectDomain((-0.03, depth + 0.05), (0.03, 0.0))
    geometry = SurveyGeometry(G, omega, 0.05)
    grid = build_grid(G, h)
    axis = TimeAxis.for_grid(T, grid, 0.5)
    return geometry, grid, axis, SourceSpec(0.05, 30.0)


def first_arrival(trace, times, fraction=1e-3):
    above = np.flatnonzero(np.abs(trace) > fraction * np.max(np.abs(trace)))
    return times[above[0]]


class TestSource(unittest.TestCase):
    def test_waveform(self):
        src = SourceSpec(0.09, 30.0)
        self.assertAlmostEqual(waveform_f(0.01, src), math.sin(0.3))
        self.assertEqual(waveform_f(src.burst_end + 0.01, src), 0.0)
        self.assertEqual(waveform_f(-0.01, src), 0.0)

    def test_plane_load_covers_lateral_extent(self):
        _, grid, _, src = small_setup()
        flat, measure = plane_source_load(grid, src)
        self.assertEqual(len(flat), 17)
        self.assertAlmostEqual(float(measure.sum()), 0.16)


class TestLeapfrogStepper(unittest.TestCase):
    def setUp(self):
        self.grid = build_grid(RectDomain((0.0, 0.0), (1.0, 1.0)), 0.05)
        self.axis = TimeAxis(T=1.0, tau=0.01, steps=100)
        x, z = np.meshgrid(*self.grid.axes(), indexing="ij")
        self.eps = 1.0 + np.exp(-((x - 0.5) ** 2 + (z - 0.4) ** 2) / 0.02)
        self.bump = np.exp(-((x - 0.3) ** 2 + (z - 0.6) ** 2) / 0.01)

    def test_zero_source_gives_zero_field(self):
        stepper = LeapfrogStepper(self.grid, self.eps, self.axis, absorbing=True)
        result = stepper.run()
        self.assertEqual(float(np.max(np.abs(result.final))), 0.0)

    def test_energy_is_conserved_without_load(self):
        """Leapfrog energy stays constant once the load has switched off"""
        stepper = LeapfrogStepper(self.grid, self.eps, self.axis, absorbing=False)
        result = stepper.run(load=lambda k: self.bump if k < 5 else None, track_energy=True)
        energy = result.energy
        self.assertGreater(energy[5], 0.0)
        np.testing.assert_allclose(energy[5:], energy[5], rtol=1e-9)

    def test_laplacian_of_constant_vanishes(self):
        stepper = LeapfrogStepper(self.grid, self.eps, self.axis)
        np.testing.assert_allclose(stepper.laplacian(np.full(self.grid.shape, 3.0)), 0.0, atol=1e-9)

    def test_cfl_is_enforced(self):
        with self.assertRaises(StabilityError):
            LeapfrogStepper(self.grid, self.eps, TimeAxis(T=1.0, tau=0.05, steps=20))

    def test_bad_coefficient(self):
        with self.assertRaises(GeometryError):
            LeapfrogStepper(self.grid, np.zeros(self.grid.shape), self.axis)


class TestForwardSolver(unittest.TestCase):
    def test_plane_wave_is_laterally_uniform(self):
        geometry, grid, axis, src = small_setup()
        run = WaveSolver().simulate_forward(np.ones(grid.shape), grid, axis, src,
                                            record=[geometry.region(Definitions.GAMMA)])
        samples = run.traces[Definitions.GAMMA].samples
        self.assertEqual(samples.shape, (axis.steps + 1, 9))
        np.testing.assert_allclose(samples, samples[:, :1] * np.ones((1, 9)), atol=1e-14)
        self.assertGreater(float(np.max(np.abs(samples))), 0.0)

    def test_travel_time(self):
        """Arrival times follow the wave speed 1/sqrt(eps)"""
        geometry, grid, axis, src = column_setup()
        gamma = geometry.region(Definitions.GAMMA)
        depth = src.z0 - geometry.c_prime
        wave = WaveSolver()
        slow = wave.simulate_forward(np.full(grid.shape, 2.0), grid, axis, src, record=[gamma])
        fast = wave.simulate_forward(np.ones(grid.shape), grid, axis, src, record=[gamma])
        t_fast = first_arrival(fast.traces[Definitions.GAMMA].samples[:, 0], axis.times)
        t_slow = first_arrival(slow.traces[Definitions.GAMMA].samples[:, 0], axis.times)
        self.assertLess(abs(t_fast - depth), 0.01)
        self.assertLess(abs(t_slow - math.sqrt(2.0) * t_fast), 2 * axis.tau)

    def test_absorbing_faces_release_the_wave(self):
        """Absorbing faces let the pulse leave the domain"""
        geometry, grid, axis, src = column_setup(depth=-0.2, h=0.01, T=0.9)
        run = WaveSolver().simulate_forward(np.ones(grid.shape), grid, axis, src, track_energy=True)
        self.assertLess(run.energy[-1], 0.02 * np.max(run.energy))

    def test_laplace_transform_matches_homogeneous_solution(self):
        """Transformed field in a homogeneous medium matches w0"""
        geometry, grid, axis, src = column_setup(depth=-0.4, h=0.005, T=1.2)
        s = np.array([6.0, 7.0, 8.0])
        run = WaveSolver().simulate_forward(np.ones(grid.shape), grid, axis, src, laplace_s=s,
                                            laplace_domain=geometry.omega)
        from src.transforms.laplace import f_tilde, w0_reference
        z = run.laplace_grid.coordinates()[:, -1].reshape(run.laplace_grid.shape)
        for k, sk in enumerate(s):
            w = run.laplace[k] / f_tilde(sk, src)
            np.testing.assert_allclose(w, w0_reference(z, sk, src.z0), rtol=0.05)


class TestStateAndAdjoint(unittest.TestCase):
    def setUp(self):
        self.geometry, self.grid, self.axis, self.src = small_setup()
        mesh = QuadtreeCoeffMesh.uniform(self.geometry.omega, [2, 3], 1.0, 2)
        self.nodal = embed_coefficient(mesh.with_values([1.0, 2.0, 1.0, 3.0, 1.5, 1.0]), self.grid)
        self.wave = WaveSolver()
        self.boundary = build_state_boundary(self.geometry, self.grid)

    def test_boundary_layout(self):
        self.assertEqual(self.boundary.grid.shape, (17, 17))
        self.assertEqual(self.boundary.n_nodes, 4 * 16)
        self.assertEqual(int(np.sum(self.boundary.gamma_mask(self.geometry))), 9)
        self.assertAlmostEqual(float(self.boundary.measures.sum()), 2 * 0.16 + 2 * 0.16)

    def test_state_reproduces_forward_run(self):
        """State problem on G' with recorded Neumann data reproduces the G run"""
        run = self.wave.simulate_forward(self.nodal, self.grid, self.axis, self.src, keep_history=True)
        neumann = self.wave.extract_neumann(self.boundary, run, self.nodal)
        state = self.wave.simulate_state(self.nodal[self.boundary.slices], self.boundary, self.axis, neumann,
                                         history_domain=self.geometry.omega)
        inner = run.history[(slice(None),) + self.boundary.slices].reshape(self.axis.steps + 1, -1)
        expected = inner[:, self.boundary.indices]
        scale = float(np.max(np.abs(expected)))
        self.assertGreater(scale, 0.0)
        np.testing.assert_allclose(state.traces[Definitions.STATE_BOUNDARY].samples, expected,
                                   atol=1e-9 * scale)
        _, omega_slices = self.grid.subgrid(self.geometry.omega)
        np.testing.assert_allclose(state.history, run.history[(slice(None),) + omega_slices], atol=1e-9 * scale)

    def test_neumann_extraction_needs_history(self):
        run = self.wave.simulate_forward(self.nodal, self.grid, self.axis, self.src)
        with self.assertRaises(GeometryError):
            self.wave.extract_neumann(self.boundary, run, self.nodal)

    def test_discrete_duality(self):
        """Test adjoint duality of the discrete state and adjoint operators"""
        rng = np.random.default_rng(3)
        shape = (self.axis.steps + 1, self.boundary.n_nodes)
        p = rng.standard_normal(shape)
        r = rng.standard_normal(shape)
        r[-1] = 0.0
        measures = self.boundary.measures
        eps = self.nodal[self.boundary.slices]
        neumann = TimeTraces(Definitions.STATE_BOUNDARY, self.boundary.coords, p, self.axis,
                             measures=measures, indices=self.boundary.indices)
        residual = neumann.with_samples(r)
        E = self.wave.simulate_state(eps, self.boundary, self.axis, neumann).traces[Definitions.STATE_BOUNDARY]
        lam = self.wave.simulate_adjoint(eps, self.boundary, self.axis, residual).traces[Definitions.STATE_BOUNDARY]
        w = self.axis.tau * self.axis.trapezoid_weights()
        lhs = float(np.sum(w[:, None] * measures[None, :] * r * E.samples))
        rhs = float(np.sum(measures[None, :] * p * lam.samples))
        self.assertAlmostEqual(lhs / rhs, 1.0, delta=1e-8)
        np.testing.assert_array_equal(lam.samples[-1], 0.0)

    def test_adjoint_requires_vanishing_final_residual(self):
        """Test adjoint compatibility check at t = T"""
        shape = (self.axis.steps + 1, self.boundary.n_nodes)
        residual = TimeTraces(Definitions.STATE_BOUNDARY, self.boundary.coords, np.ones(shape), self.axis,
                              measures=self.boundary.measures)
        with self.assertRaises(CompatibilityError):
            self.wave.simulate_adjoint(self.nodal[self.boundary.slices], self.boundary, self.axis, residual)

    def test_region_nodes(self):
        idx, measure = region_nodes(self.grid, self.geometry.region(Definitions.LATERAL))
        self.assertEqual(len(idx), 2 * 19)
        self.assertAlmostEqual(float(measure.sum()), 2 * 0.18)


if __name__ == "__main__":
    unittest.main()
