"""
Tests for domains, grids and the coefficient quadtree
"""
import os
import sys
import unittest
from pathlib import Path

import numpy as np

sys.path.append(str(Path(os.path.dirname(os.path.abspath(__file__))).parent))

from src.geometry.domain import RectDomain, SurveyGeometry
from src.geometry.grid import TimeAxis, build_grid, check_cfl
from src.geometry.quadtree import (QuadtreeCoeffMesh, coeff_to_grid, embed_coefficient, grid_to_coeff,
                                   refine_cells)
from src.utils.config import Config
from src.utils.definitions import Definitions
from src.utils.errors import GeometryError, StabilityError


def default_geometry():
    return SurveyGeometry.from_config(Config())


class TestSurveyGeometry(unittest.TestCase):
    def setUp(self):
        self.geometry = default_geometry()

    def test_degenerate_domain(self):
        with self.assertRaises(GeometryError):
            RectDomain((0.0, 0.0), (0.0, 1.0))

    def test_layout(self):
        """Test the default survey layout"""
        self.assertEqual(self.geometry.dim, 2)
        self.assertAlmostEqual(self.geometry.c_prime, 0.04)
        gp = self.geometry.G_prime
        self.assertEqual(gp.lo, (-0.3, -0.16))
        self.assertEqual(gp.hi, (0.3, 0.04))

    def test_source_must_lie_above_omega(self):
        with self.assertRaises(GeometryError):
            SurveyGeometry(self.geometry.G, self.geometry.omega, z0=0.0)

    def test_regions(self):
        gamma = self.geometry.region(Definitions.GAMMA)
        self.assertAlmostEqual(gamma.measure(), 0.4)
        self.assertTrue(gamma.contains([[0.0, 0.04]])[0])
        self.assertFalse(gamma.contains([[0.25, 0.04]])[0])
        self.assertTrue(self.geometry.region(Definitions.GAMMA_PRIME).contains([[0.25, 0.04]])[0])
        with self.assertRaises(GeometryError):
            self.geometry.region("SIDE")

    def test_state_face_kinds(self):
        kinds = sorted(sf.kind for sf in self.geometry.state_faces())
        self.assertEqual(kinds, ["absorbing", "interior", "neumann", "neumann"])

    def test_narrow_gamma_prime(self):
        geometry = SurveyGeometry(self.geometry.G, self.geometry.omega, 0.08, gamma_prime_half_width=(0.25,))
        kinds = sorted(sf.kind for sf in geometry.state_faces())
        self.assertEqual(kinds, ["absorbing", "interior", "interior", "interior"])
        with self.assertRaises(GeometryError):
            SurveyGeometry(self.geometry.G, self.geometry.omega, 0.08, gamma_prime_half_width=(0.1,))

    def test_depth_below_gamma(self):
        self.assertAlmostEqual(float(self.geometry.depth_below_gamma(-0.06)), 0.1)


class TestGrid(unittest.TestCase):
    def setUp(self):
        self.geometry = default_geometry()
        self.grid = build_grid(self.geometry.G, 0.01)

    def test_counts(self):
        self.assertEqual(self.grid.shape, (61, 27))
        sub, slices = self.grid.subgrid(self.geometry.omega)
        self.assertEqual(sub.shape, (41, 17))
        self.assertEqual(slices[0].start, 10)
        self.assertEqual(slices[1].start, 4)

    def test_spacing_is_snapped(self):
        grid = build_grid(RectDomain((0.0, 0.0), (1.0, 0.3)), 0.07)
        self.assertTrue(all(h <= 0.07 for h in grid.spacing))
        self.assertAlmostEqual(grid.spacing[0] * (grid.counts[0] - 1), 1.0)

    def test_nodal_volume_sums_to_domain(self):
        self.assertAlmostEqual(float(self.grid.nodal_volume().sum()), self.geometry.G.volume)

    def test_face_measures(self):
        face = self.geometry.region(Definitions.GAMMA).faces[0]
        flat, measure = self.grid.face_indices(face)
        self.assertEqual(len(flat), 41)
        self.assertAlmostEqual(float(measure.sum()), 0.4)

    def test_refined(self):
        fine = self.grid.refined(2)
        self.assertEqual(fine.shape, (121, 53))
        self.assertAlmostEqual(fine.spacing[0], 0.005)

    def test_time_axis(self):
        axis = TimeAxis.for_grid(1.2, self.grid, 0.5, 0.003)
        self.assertEqual(axis.steps, 400)
        self.assertAlmostEqual(axis.tau, 0.003)
        self.assertAlmostEqual(axis.times[-1], 1.2)
        free = TimeAxis.for_grid(1.2, self.grid, 0.5)
        self.assertLessEqual(free.tau, 0.5 * 0.01 / np.sqrt(2) + 1e-15)

    def test_cfl_violation(self):
        with self.assertRaises(StabilityError):
            check_cfl(self.grid, TimeAxis(T=1.2, tau=0.01, steps=120), 0.5)


class TestQuadtree(unittest.TestCase):
    def setUp(self):
        self.geometry = default_geometry()
        self.mesh = QuadtreeCoeffMesh.uniform(self.geometry.omega, [10, 4], 1.0, 2)

    def test_uniform(self):
        self.assertEqual(self.mesh.n_cells, 40)
        self.assertAlmostEqual(float(self.mesh.volumes.sum()), self.geometry.omega.volume)
        self.assertAlmostEqual(self.mesh.min_cell_size, 0.04)

    def test_refine_preserves_partition(self):
        """Test refined cells still tile the domain"""
        refined = refine_cells(self.mesh.with_values(np.arange(40.0)), [0, 5])
        self.assertEqual(refined.n_cells, 46)
        self.assertAlmostEqual(float(refined.volumes.sum()), self.geometry.omega.volume)
        self.assertEqual(refined.metadata["refined"], [0, 5])
        self.assertEqual(int(np.sum(refined.level == 1)), 8)
        self.assertEqual(sorted(set(refined.values[refined.level == 1])), [0.0, 5.0])

    def test_refine_stops_at_max_level(self):
        mesh = self.mesh
        for _ in range(2):
            mesh = refine_cells(mesh, [0])
        again = refine_cells(mesh, [0])
        self.assertEqual(again.metadata["skipped"], [0])
        self.assertEqual(again.n_cells, mesh.n_cells)
        with self.assertRaises(GeometryError):
            refine_cells(mesh, [mesh.n_cells])

    def test_locate(self):
        owner = self.mesh.locate([[-0.19, -0.11], [0.2, 0.04], [0.0, 0.05]])
        self.assertEqual(owner[0], 0)
        self.assertEqual(owner[1], self.mesh.n_cells - 1)
        self.assertEqual(owner[2], -1)

    def test_face_adjacency(self):
        mesh = QuadtreeCoeffMesh.uniform(RectDomain((0.0, 0.0), (1.0, 1.0)), [2, 2], 1.0, 2)
        self.assertEqual(mesh.face_adjacency(), [(0, 1, 0.5), (0, 2, 0.5), (1, 3, 0.5), (2, 3, 0.5)])
        refined = refine_cells(mesh, [0])
        measures = [m for i, j, m in refined.face_adjacency()]
        # four inner child faces plus four child faces against the old neighbours
        self.assertEqual(len(measures), 8 + 2)
        self.assertAlmostEqual(sum(measures), 4 * 0.25 + 4 * 0.25 + 2 * 0.5)

    def test_projection_and_restriction(self):
        """Test projection to nodes and restriction back to cells"""
        values = np.linspace(1.0, 3.0, self.mesh.n_cells)
        mesh = self.mesh.with_values(values)
        grid, _ = build_grid(self.geometry.G, 0.01).subgrid(self.geometry.omega)
        P = mesh.projection_matrix(grid)
        np.testing.assert_allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0)
        nodal = coeff_to_grid(mesh, grid)
        back = grid_to_coeff(nodal, mesh, grid)
        np.testing.assert_allclose(back.values, values)

    def test_hanging_face_nodes_weigh_each_side_once(self):
        """Test a large cell counts as much as the two small cells it meets"""
        domain = RectDomain((0.0, 0.0), (2.0, 1.0))
        mesh = refine_cells(QuadtreeCoeffMesh.uniform(domain, [2, 1], 1.0, 2), [1])
        mesh = mesh.with_values([1.0, 3.0, 5.0, 7.0, 9.0])
        nodal = coeff_to_grid(mesh, build_grid(domain, 0.25))
        self.assertAlmostEqual(nodal[4, 2], (1.0 + 1.0 + 3.0 + 5.0) / 4)
        self.assertAlmostEqual(nodal[4, 1], (1.0 + 3.0) / 2)
        self.assertAlmostEqual(nodal[6, 2], (3.0 + 5.0 + 7.0 + 9.0) / 4)
        self.assertAlmostEqual(nodal[0, 0], 1.0)
        self.assertAlmostEqual(nodal[8, 4], 9.0)

    def test_embed_coefficient(self):
        grid = build_grid(self.geometry.G, 0.01)
        eps = embed_coefficient(self.mesh.with_values(np.full(40, 2.0)), grid)
        self.assertEqual(eps[0, 0], 1.0)
        self.assertEqual(eps[30, 10], 2.0)

    def test_interpolate_to_refined(self):
        """Test values carry over to refined cells"""
        mesh = self.mesh.with_values(np.arange(40.0))
        refined = refine_cells(mesh, [3])
        carried = mesh.interpolate_to(refined)
        np.testing.assert_allclose(carried.values, refined.values)


if __name__ == "__main__":
    unittest.main()
