"""
Tests for inclusion layouts, ground truth and synthetic measurements
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
from src.geometry.quadtree import QuadtreeCoeffMesh
from src.inversion.imaging import count_components
from src.scenarios.scenario import (Inclusion, Scenario, build_truth, paint, scale_by_background,
                                    synthesize_measurements, truth_on_grid)
from src.solvers.source import SourceSpec
from src.utils.config import Config
from src.utils.errors import GeometryError


def box_pair(gap):
    half = (0.03, 0.02)
    x = 0.03 + gap / 2
    return Scenario(name="pair", inclusions=(
        Inclusion(shape="box", center=(-x, -0.04), epsilon=4.0, half_extents=half),
        Inclusion(shape="box", center=(x, -0.04), epsilon=4.0, half_extents=half)))


class TestInclusions(unittest.TestCase):
    def setUp(self):
        self.geometry = SurveyGeometry.from_config(Config())

    def test_background_scaling(self):
        self.assertAlmostEqual(scale_by_background(6.125, 4.0), 24.5)
        self.assertAlmostEqual(scale_by_background(2.35, 4.0, "n"), 4.7)
        with self.assertRaises(ValueError):
            scale_by_background(2.0, 4.0, "mu")

    def test_relative_value(self):
        scenario = Scenario(name="wet", background=2.0,
                            inclusions=(Inclusion(shape="ball", center=(0.0, -0.03), epsilon=6.0, radius=0.02),))
        self.assertEqual(scenario.relative_epsilon(scenario.inclusions[0]), 3.0)
        dry = Inclusion(shape="ball", center=(0.0, -0.03), epsilon=1.5, radius=0.02)
        self.assertEqual(scenario.relative_epsilon(dry), 1.0)

    def test_depth_places_the_top(self):
        inc = Inclusion(shape="ball", center=(0.05, 0.0), epsilon=4.0, radius=0.03, depth=0.02)
        placed = inc.placed(self.geometry)
        self.assertAlmostEqual(placed.center[1], 0.04 - 0.02 - 0.03)
        self.assertEqual(placed.center[0], 0.05)

    def test_invalid_inclusions(self):
        with self.assertRaises(GeometryError):
            Inclusion(shape="cone", center=(0.0, 0.0), epsilon=4.0)
        with self.assertRaises(GeometryError):
            Inclusion(shape="ball", center=(0.0, 0.0), epsilon=4.0)
        with self.assertRaises(GeometryError):
            Inclusion(shape="box", center=(0.0, 0.0), epsilon=4.0, half_extents=(0.1,))
        with self.assertRaises(GeometryError):
            Inclusion(shape="ball", center=(0.0, 0.0), epsilon=0.5, radius=0.1)

    def test_escaping_inclusion(self):
        scenario = Scenario(name="edge",
                            inclusions=(Inclusion(shape="ball", center=(0.19, -0.03), epsilon=4.0, radius=0.03),))
        with self.assertRaises(GeometryError):
            scenario.placed_inclusions(self.geometry)

    def test_from_config(self):
        scenario = Scenario.from_config(Config(), seed=5)
        self.assertEqual(scenario.seed, 5)
        self.assertEqual(len(scenario.inclusions), 1)
        self.assertEqual(scenario.inclusions[0].label, "dielectric")


class TestTruth(unittest.TestCase):
    def setUp(self):
        self.geometry = SurveyGeometry.from_config(Config())
        self.fine = QuadtreeCoeffMesh.uniform(self.geometry.omega, [40, 16], 1.0, 2)

    def test_separated_boxes_stay_separate(self):
        """Boxes a quarter wavelength apart give two components"""
        gap = 2 * math.pi / 30 / 4.5
        truth = build_truth(box_pair(gap), self.geometry, self.fine)
        self.assertEqual(count_components(truth), 2)
        self.assertEqual(truth.metadata["scenario"], "pair")

    def test_touching_boxes_merge(self):
        truth = build_truth(box_pair(0.0), self.geometry, self.fine)
        self.assertEqual(count_components(truth), 1)

    def test_clamp_is_logged(self):
        scenario = Scenario(name="metal",
                            inclusions=(Inclusion(shape="ball", center=(0.0, -0.03), epsilon=30.0, radius=0.03),))
        with self.assertLogs("src.scenarios.scenario", level="WARNING"):
            values = paint([[0.0, -0.03], [0.15, 0.0]], scenario, self.geometry, eps_max=25.0)
        np.testing.assert_array_equal(values, [25.0, 1.0])

    def test_truth_on_grid(self):
        grid = build_grid(self.geometry.G, 0.01)
        truth = truth_on_grid(Scenario.from_config(Config()), self.geometry, grid)
        self.assertEqual(truth.shape, grid.shape)
        self.assertEqual(truth[30, 13], 4.0)
        self.assertEqual(truth[0, 0], 1.0)


class TestSynthesis(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        G = RectDomain((-0.08, -0.08), (0.08, 0.1))
        omega = RectDomain((-0.04, -0.04), (0.04, 0.08))
        cls.geometry = SurveyGeometry(G, omega, 0.09)
        cls.grid = build_grid(G, 0.01)
        cls.axis = TimeAxis.for_grid(0.4, cls.grid, 0.5, 0.0025)
        cls.src = SourceSpec(0.09, 30.0)
        cls.ball = Inclusion(shape="ball", center=(0.0, 0.02), epsilon=4.0, radius=0.02)

    def synthesize(self, scenario):
        return synthesize_measurements(scenario, self.geometry, self.grid, self.axis, self.src)

    def test_empty_scenario_has_no_target_signal(self):
        result = self.synthesize(Scenario(name="empty"))
        np.testing.assert_array_equal(result.total.samples, result.reference.samples)

    def test_target_changes_the_traces(self):
        result = self.synthesize(Scenario(name="ball", inclusions=(self.ball,)))
        self.assertGreater(float(np.max(np.abs(result.total.samples - result.reference.samples))), 0.0)
        self.assertEqual(float(np.max(result.truth)), 4.0)

    def test_noise_is_reproducible(self):
        """Test seeded noise is reproducible and has the requested level"""
        noisy = Scenario(name="noisy", inclusions=(self.ball,), noise=0.05, seed=3)
        a = self.synthesize(noisy)
        b = self.synthesize(noisy)
        np.testing.assert_array_equal(a.total.samples, b.total.samples)
        clean = self.synthesize(Scenario(name="clean", inclusions=(self.ball,)))
        added = np.sqrt(np.mean((a.total.samples - clean.total.samples) ** 2))
        self.assertAlmostEqual(added / clean.total.rms(), 0.05, delta=0.005)
        other = self.synthesize(Scenario(name="noisy", inclusions=(self.ball,), noise=0.05, seed=4))
        self.assertFalse(np.array_equal(a.total.samples, other.total.samples))


if __name__ == "__main__":
    unittest.main()
