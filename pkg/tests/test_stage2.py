"""
Tests for the Tikhonov functional, its gradient, the CG machinery, the error
indicators and the adaptive refinement loop
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
from src.geometry.quadtree import QuadtreeCoeffMesh, embed_coefficient, refine_cells
from src.inversion.adaptive import AdaptiveSolver
from src.inversion.estimates import aposteriori_estimates, coefficient_jumps, space_jumps, time_jumps
from src.inversion.optimizer import (CGState, armijo_backtracking, cg_step, check_stop, select_refinement,
                                     weighted_inner)
from src.inversion.tikhonov import TikhonovConfig, TikhonovProblem, gradient_norm, tikhonov_value, z_delta
from src.solvers.source import SourceSpec
from src.solvers.traces import TimeTraces
from src.solvers.wave import WaveSolver
from src.utils.config import Config
from src.utils.definitions import Definitions
from src.utils.errors import DimensionMismatchError, LineSearchStall


class SmallSurvey:
    """17 x 19 field grid, 2 x 3 coefficient cells of 0.04 over Omega by default"""

    def __init__(self, cells=(2, 3)):
        G = RectDomain((-0.08, -0.08), (0.08, 0.1))
        omega = RectDomain((-0.04, -0.04), (0.04, 0.08))
        self.geometry = SurveyGeometry(G, omega, 0.09)
        self.grid = build_grid(G, 0.01)
        self.axis = TimeAxis.for_grid(0.4, self.grid, 0.5, 0.0025)
        self.src = SourceSpec(0.09, 30.0)
        self.mesh = QuadtreeCoeffMesh.uniform(omega, list(cells), 1.0, 2)
        self.wave = WaveSolver()

    def gamma_traces(self, values):
        nodal = embed_coefficient(self.mesh.with_values(values), self.grid)
        run = self.wave.simulate_forward(nodal, self.grid, self.axis, self.src,
                                         record=[self.geometry.region(Definitions.GAMMA)])
        return run.traces[Definitions.GAMMA]

    def solver(self, cfg):
        return AdaptiveSolver(self.geometry, self.grid, 0.4, self.src, cfg, cfl_safety=0.5, max_step=0.0025,
                              wave=self.wave)

    def problem(self, cfg, glob_value, true_values):
        glob = self.mesh.with_values(np.full(self.mesh.n_cells, glob_value))
        setting = self.solver(cfg).field_setting(self.mesh, glob, self.gamma_traces(true_values))
        return TikhonovProblem(self.geometry, setting.grid, setting.axis, self.mesh, glob.values, setting.g_tilde,
                               setting.neumann, cfg, wave=self.wave, boundary=setting.boundary)


class TestFunctional(unittest.TestCase):
    def test_z_delta(self):
        self.assertEqual(z_delta(0.0, 1.0, 0.1), 1.0)
        self.assertEqual(z_delta(0.9, 1.0, 0.1), 1.0)
        self.assertAlmostEqual(z_delta(0.95, 1.0, 0.1), 0.5)
        self.assertEqual(z_delta(1.0, 1.0, 0.1), 0.0)
        with self.assertRaises(ValueError):
            z_delta(0.5, 1.0, 1.0)

    def test_value_is_the_weighted_sum(self):
        rng = np.random.default_rng(1)
        axis = TimeAxis(T=1.0, tau=0.1, steps=10)
        coords = np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0]])
        measures = np.array([0.05, 0.1, 0.05])
        E = TimeTraces(Definitions.STATE_BOUNDARY, coords, rng.standard_normal((11, 3)), axis, measures=measures)
        g = E.with_samples(rng.standard_normal((11, 3)))
        eps, glob, vol = np.array([1.0, 2.0]), np.array([1.5, 1.0]), np.array([0.25, 0.75])

        expected = 0.0
        for k, t in enumerate(axis.times):
            weight = (0.5 if k in (0, 10) else 1.0) * 0.1 * z_delta(t, 1.0, 0.2)
            for i in range(3):
                expected += 0.5 * weight * measures[i] * (E.samples[k, i] - g.samples[k, i]) ** 2
        expected += 0.5 * 0.3 * (0.25 * 0.25 + 0.75 * 1.0)
        self.assertAlmostEqual(tikhonov_value(E, g, eps, glob, vol, 0.3, 0.2), expected, places=12)

        with self.assertRaises(DimensionMismatchError):
            tikhonov_value(E, g, eps, glob[:1], vol, 0.3, 0.2)

    def test_config(self):
        cfg = TikhonovConfig.from_config(Config())
        self.assertEqual(cfg.restart, Definitions.RESTART_GLOB)
        self.assertEqual(cfg.eps_max, Config().get("stage1.eps_max"))
        with self.assertRaises(ValueError):
            TikhonovConfig(gamma=0.0)
        with self.assertRaises(ValueError):
            TikhonovConfig(beta1=1.0)


class TestGradient(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.problem = SmallSurvey().problem(TikhonovConfig(gamma=0.01), 1.2, [1.0, 3.0, 1.0, 2.0, 1.0, 1.0])

    def test_state_grid(self):
        self.assertEqual(self.problem.boundary.grid.shape, (17, 17))

    def test_regularization_part(self):
        eps = np.full(6, 2.0)
        grad = self.problem.gradient(eps)
        np.testing.assert_allclose(grad.regularization, 0.01 * (eps - 1.2))
        np.testing.assert_allclose(grad.total, grad.misfit + grad.regularization)
        self.assertAlmostEqual(grad.value, self.problem.value(eps))
        self.assertEqual(grad.state.history.shape, (self.problem.axis.steps + 1, 9, 13))


class TestGradientAgainstFiniteDifferences(unittest.TestCase):
    """Central differences of the functional on 10 random cells of three random fields"""

    @classmethod
    def setUpClass(cls):
        cls.rng = np.random.default_rng(2024)
        survey = SmallSurvey(cells=(4, 6))
        truth = np.ones(survey.mesh.n_cells)
        truth[[9, 14]] = [3.0, 2.0]
        cls.problem = survey.problem(TikhonovConfig(gamma=0.01), 1.2, truth)

    def check_field(self, eps, cells, delta=1e-4):
        grad = self.problem.gradient(eps)
        analytic = (self.problem.volumes * grad.total)[cells]
        fd = np.zeros(len(cells))
        for k, c in enumerate(cells):
            step = np.zeros_like(eps)
            step[c] = delta
            fd[k] = (self.problem.value(eps + step) - self.problem.value(eps - step)) / (2 * delta)
        self.assertGreater(float(np.linalg.norm(fd)), 0.0)
        self.assertLessEqual(float(np.linalg.norm(analytic - fd)), 1e-2 * float(np.linalg.norm(fd)))

    def test_matches_finite_differences(self):
        """Test the discrete gradient against finite differences of the functional"""
        n = self.problem.mesh.n_cells
        for trial in range(3):
            eps = 1.0 + 2.0 * self.rng.random(n)
            cells = self.rng.choice(n, size=10, replace=False)
            with self.subTest(field=trial):
                self.check_field(eps, cells)


class TestOptimizer(unittest.TestCase):
    def setUp(self):
        self.A = np.array([[3.0, 1.0], [1.0, 2.0]])
        self.b = np.array([1.0, -1.0])

    def F(self, x):
        return float(0.5 * x @ self.A @ x - self.b @ x)

    def exact_search(self, x, f0, grad, d):
        alpha = -float(grad @ d) / float(d @ self.A @ d)
        x_new = x + alpha * d
        return alpha, x_new, self.F(x_new)

    def test_cg_solves_a_quadratic_in_two_steps(self):
        """Test conjugate gradients on a two-dimensional quadratic"""
        x = np.zeros(2)
        state = CGState()
        value = self.F(x)
        for _ in range(2):
            x, state, value, _ = cg_step(state, self.A @ x - self.b, x, value, np.ones(2), self.exact_search)
        np.testing.assert_allclose(x, np.linalg.solve(self.A, self.b), atol=1e-10)
        self.assertEqual(state.m, 2)

    def test_zero_gradient_stops(self):
        x = np.array([0.3, 0.4])
        _, state, _, stop = cg_step(CGState(), np.zeros(2), x, 1.0, np.ones(2), self.exact_search)
        self.assertTrue(stop)
        self.assertEqual(state.m, 0)

    def test_armijo_never_increases(self):
        """Test accepted steps satisfy the sufficient decrease rule"""
        search = armijo_backtracking(self.F, np.ones(2), max_update=10.0)
        x = np.array([2.0, 2.0])
        f0 = self.F(x)
        grad = self.A @ x - self.b
        alpha, x_new, f_new = search(x, f0, grad, -grad)
        self.assertGreater(alpha, 0.0)
        self.assertLessEqual(f_new, f0)

    def test_armijo_projection(self):
        search = armijo_backtracking(self.F, np.ones(2), max_update=5.0, project=lambda v: np.clip(v, 1.0, 3.0))
        x = np.array([2.0, 2.0])
        grad = self.A @ x - self.b
        _, x_new, _ = search(x, self.F(x), grad, -grad)
        self.assertTrue(np.all((x_new >= 1.0) & (x_new <= 3.0)))

    def test_armijo_stall(self):
        search = armijo_backtracking(lambda v: 1.0 + float(np.sum(v ** 2)), np.ones(2), max_trials=5)
        with self.assertRaises(LineSearchStall):
            search(np.zeros(2), 0.0, np.ones(2), -np.ones(2))

    def test_weighted_inner(self):
        self.assertAlmostEqual(weighted_inner([1.0, 2.0], [3.0, 4.0], [0.5, 0.25]), 3.5)

    def test_check_stop(self):
        self.assertEqual(check_stop(1e-7, [1.0], 1e-6).reason, "gradient")
        self.assertFalse(check_stop(1.0, [1.0, 2.0], 1e-6).stop)
        self.assertEqual(check_stop(1.0, [2.0, 2.0, 2.0], 1e-6).reason, "stabilized")
        self.assertFalse(check_stop(1.0, [1.0, 2.0, 2.0], 1e-6).stop)
        norms = [0.1, 0.05, 0.01, 5e-7, 1e-8]
        first = next(i for i, g in enumerate(norms) if check_stop(g, [1.0], 1e-6).stop)
        self.assertEqual(first, 3)

    def test_select_refinement(self):
        np.testing.assert_array_equal(select_refinement(np.ones(5), 0.7), np.arange(5))
        np.testing.assert_array_equal(select_refinement([0.1, -2.0, 0.3, 1.0], 0.5), [1, 3])
        rng = np.random.default_rng(5)
        values = rng.standard_normal(50)
        scan = [i for i, v in enumerate(values) if abs(v) >= 0.7 * np.max(np.abs(values))]
        np.testing.assert_array_equal(select_refinement(values, 0.7), scan)
        with self.assertRaises(ValueError):
            select_refinement(values, 1.5)


def brute_force_jump_norm(mesh):
    total = 0.0
    for i in range(mesh.n_cells):
        for j in range(i + 1, mesh.n_cells):
            for a in range(mesh.dim):
                touching = (abs(mesh.hi[i, a] - mesh.lo[j, a]) < 1e-12) or (abs(mesh.hi[j, a] - mesh.lo[i, a]) < 1e-12)
                if not touching:
                    continue
                overlap = 1.0
                for b in range(mesh.dim):
                    if b != a:
                        overlap *= min(mesh.hi[i, b], mesh.hi[j, b]) - max(mesh.lo[i, b], mesh.lo[j, b])
                if overlap > 1e-12:
                    total += overlap * (mesh.values[i] - mesh.values[j]) ** 2
    return math.sqrt(total)


class TestEstimates(unittest.TestCase):
    def setUp(self):
        self.domain = RectDomain((0.0, 0.0), (2.0, 1.0))
        self.grid = build_grid(self.domain, 0.25)
        self.axis = TimeAxis(T=1.0, tau=0.1, steps=10)
        self.zeros = np.zeros((11,) + self.grid.shape)

    def test_two_cell_jump(self):
        """Test jump and estimator values for two neighbouring cells"""
        mesh = QuadtreeCoeffMesh.uniform(self.domain, [2, 1], 1.0, 2).with_values([1.0, 9.0])
        pairs, measures, jumps = coefficient_jumps(mesh)
        np.testing.assert_array_equal(pairs, [[0, 1]])
        np.testing.assert_allclose(measures, [1.0])
        np.testing.assert_allclose(jumps, [8.0])
        est = aposteriori_estimates(self.zeros, self.zeros, self.grid, self.axis, mesh, np.ones(2), 0.5)
        self.assertAlmostEqual(est.coefficient_jump_norm, 8.0)
        self.assertAlmostEqual(est.tikhonov, math.sqrt(2.0) * 8.0)
        self.assertEqual(est.lagrangian, 0.0)
        expected_bound = math.sqrt(np.sum(mesh.volumes * (mesh.diameters * mesh.values) ** 2)) / 0.5
        self.assertAlmostEqual(est.bound, expected_bound)
        np.testing.assert_allclose(est.cell_jumps, [8.0, 8.0])

    def test_constant_field_has_no_jumps(self):
        mesh = QuadtreeCoeffMesh.uniform(self.domain, [4, 2], 3.0, 2)
        est = aposteriori_estimates(self.zeros, self.zeros, self.grid, self.axis, mesh, np.ones(8), 0.1)
        self.assertEqual(est.coefficient_jump_norm, 0.0)
        self.assertEqual(est.tikhonov, 0.0)

    def test_jump_norm_matches_brute_force(self):
        """Test face jumps against a loop over all face pairs"""
        rng = np.random.default_rng(7)
        mesh = QuadtreeCoeffMesh.uniform(self.domain, [4, 2], 1.0, 3)
        mesh = refine_cells(mesh, [0, 5])
        mesh = refine_cells(mesh, [1])
        mesh = mesh.with_values(rng.uniform(1.0, 5.0, mesh.n_cells))
        _, measures, jumps = coefficient_jumps(mesh)
        self.assertAlmostEqual(float(np.sqrt(np.sum(measures * jumps ** 2))), brute_force_jump_norm(mesh),
                               places=12)

    def test_space_jumps(self):
        x, _ = np.meshgrid(*self.grid.axes(), indexing="ij")
        linear = np.stack([2.0 * x, 3.0 * x])
        np.testing.assert_allclose(space_jumps(linear, self.grid), 0.0, atol=1e-12)
        quadratic = np.stack([x ** 2, x ** 2])
        jumps = space_jumps(quadratic, self.grid)
        np.testing.assert_allclose(jumps[:, 1:-1, :], 2 * 0.25, rtol=1e-12)
        np.testing.assert_array_equal(jumps[:, 0, :], 0.0)

    def test_time_jumps(self):
        t = self.axis.times
        history = (t ** 2)[:, None] * np.ones((1, 3))
        jumps = time_jumps(history, self.axis.tau)
        np.testing.assert_allclose(jumps[1:-1], 2 * self.axis.tau, rtol=1e-9)
        np.testing.assert_array_equal(jumps[[0, -1]], 0.0)

    def test_gradient_must_live_on_cells(self):
        mesh = QuadtreeCoeffMesh.uniform(self.domain, [2, 1], 1.0, 2)
        with self.assertRaises(DimensionMismatchError):
            aposteriori_estimates(self.zeros, self.zeros, self.grid, self.axis, mesh, np.ones(3), 0.5)


class TestAdaptiveLoop(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.survey = SmallSurvey()

    def test_exact_data_leave_the_start_unchanged(self):
        """Data generated from the start coefficient need no CG iterations"""
        glob = self.survey.mesh.with_values([1.0, 1.5, 1.0, 2.0, 1.2, 1.0])
        measured = self.survey.gamma_traces(glob.values)
        result = self.survey.solver(TikhonovConfig(max_refinements=0)).run_stage2(glob, measured)
        record = result.records[0]
        self.assertEqual(record.cg_iterations, 0)
        self.assertEqual(record.stop_reason, "gradient")
        np.testing.assert_allclose(result.epsilon.values, glob.values)
        self.assertLess(gradient_norm(record.gradient.total, glob.volumes), 1e-6)

    def test_descent_and_refinement(self):
        glob = self.survey.mesh.with_values(np.ones(6))
        measured = self.survey.gamma_traces([1.0, 3.0, 1.0, 2.0, 1.0, 1.0])
        cfg = TikhonovConfig(max_refinements=1, max_cg_iterations=2)
        result = self.survey.solver(cfg).run_stage2(glob, measured)
        values = [row["value"] for row in result.iterations if row["mesh"] == 0]
        self.assertTrue(all(b <= a for a, b in zip(values, values[1:])))
        self.assertGreaterEqual(len(result.records), 1)
        self.assertIn(result.selected, range(len(result.records)))
        self.assertTrue(np.all((result.epsilon.values >= 1.0) & (result.epsilon.values <= 25.0)))
        self.assertEqual(result.records[0].mesh.metadata["mesh_index"], 0)
        if len(result.records) > 1:
            self.assertGreater(result.records[1].mesh.n_cells, 6)
            self.assertEqual(result.records[0].marked, (result.records[1].mesh.n_cells - 6) // 3)

    def test_field_grid_follows_the_finest_cell(self):
        """Test the field grid is halved below the finest coefficient cell"""
        solver = self.survey.solver(TikhonovConfig())
        mesh = refine_cells(refine_cells(self.survey.mesh, [0]), [0])
        self.assertEqual(solver.grid_for(self.survey.mesh), self.survey.grid)
        np.testing.assert_allclose(solver.grid_for(mesh).spacing, [0.005, 0.005])


if __name__ == "__main__":
    unittest.main()
