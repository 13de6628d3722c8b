import math
import unittest

import numpy

from harnack.core.catalog import collapsed_torus, curvature_bump, flat_torus, hyperbolic
from harnack.core.geometry import (analytic_volume, apply_laplacian, ball, build_manifold,
                                   EmptyBallError, geodesic_distance, ManifoldError,
                                   ManifoldSpec, measure_anisotropy, p_mean)


class ManifoldSpecTests(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(ManifoldError):
            ManifoldSpec("sphere").validate()
        with self.assertRaises(ManifoldError):
            ManifoldSpec("flat_torus", resolution=(4, 64)).validate()
        with self.assertRaises(ManifoldError):
            ManifoldSpec("flat_torus", side_lengths=(0.0, 1.0)).validate()
        with self.assertRaises(ManifoldError):
            ManifoldSpec("warped_product", warp="r*q").validate()
        with self.assertRaises(ManifoldError):
            ManifoldSpec("warped_product", radial_range=(0.0, 1.0)).validate()
        with self.assertRaises(ManifoldError):
            ManifoldSpec("warped_product", radial_range=(0.1, 1.0), cap=True).validate()
        with self.assertRaises(ManifoldError):
            ManifoldSpec("warped_product", distance="exact").validate()

    def test_distance_mode(self):
        self.assertEqual(flat_torus().distance_mode, "exact")
        self.assertEqual(hyperbolic().distance_mode, "graph")
        self.assertEqual(flat_torus(distance="graph").distance_mode, "graph")

    def test_fingerprint(self):
        self.assertEqual(flat_torus().fingerprint(), flat_torus().fingerprint())
        self.assertNotEqual(flat_torus().fingerprint(),
                            flat_torus(resolution=(32, 32)).fingerprint())

    def test_nonpositive_warp(self):
        with self.assertRaises(ManifoldError):
            build_manifold(ManifoldSpec("warped_product", warp="sin(r)",
                                        radial_range=(0.1, 4.0), resolution=(16, 16)))


class FlatTorusTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.m = build_manifold(flat_torus(1.0, (16, 16)))

    def test_volume(self):
        self.assertEqual(self.m.size, 256)
        self.assertAlmostEqual(self.m.total_volume, 1.0, places=14)
        self.assertEqual(analytic_volume(self.m.spec), 1.0)

    def test_wraparound_distance(self):
        x = self.m.nearest_vertex((0.0, 0.0))
        y = self.m.nearest_vertex((0.75, 0.0))
        self.assertAlmostEqual(geodesic_distance(self.m, x, y), 0.25, places=14)
        self.assertEqual(geodesic_distance(self.m, x, x), 0)

    def test_distance_rows_are_cached_and_frozen(self):
        row = self.m.distances_from(3)
        self.assertIs(row, self.m.distances_from(3))
        with self.assertRaises(ValueError):
            row[0] = 1

    def test_laplacian(self):
        constant = apply_laplacian(self.m, numpy.full(self.m.size, 2.0))
        self.assertLess(numpy.abs(constant).max(), 1e-10)
        stiffness = self.m.stiffness
        self.assertLess(abs(stiffness - stiffness.T).max(), 1e-15)
        off_diagonal = stiffness - numpy.diag(stiffness.diagonal())
        self.assertLessEqual(off_diagonal.max(), 0)
        x = self.m.coordinates[:, 0]
        wave = numpy.sin(2 * math.pi * x)
        expected = -(2 * math.pi) ** 2 * wave
        symbol = (2 - 2 * math.cos(2 * math.pi / 16)) * 16 ** 2
        self.assertLess(numpy.abs(apply_laplacian(self.m, wave) + symbol * wave).max(), 1e-9)
        self.assertLess(numpy.abs(apply_laplacian(self.m, wave) - expected).max(), 1.0)
        with self.assertRaises(ValueError):
            apply_laplacian(self.m, numpy.zeros(3))

    def test_ball(self):
        center = self.m.nearest_vertex((0.5, 0.5))
        b = ball(self.m, center, 0.25)
        self.assertIn(center, b)
        self.assertTrue((b.distances <= 0.25 * (1 + 1e-9)).all())
        self.assertAlmostEqual(b.volume, b.size / 256)
        whole = ball(self.m, center, 10.0)
        self.assertEqual(whole.size, self.m.size)
        with self.assertRaises(ValueError):
            ball(self.m, center, 0)

    def test_p_mean(self):
        b = ball(self.m, 0, 0.3)
        self.assertAlmostEqual(p_mean(self.m, b, numpy.full(self.m.size, 3.0), 2), 3.0)
        field = numpy.zeros(self.m.size)
        field[b.members[0]] = 1
        self.assertAlmostEqual(p_mean(self.m, b, field, 2), (1 / b.size) ** 0.5)
        with self.assertRaises(ValueError):
            p_mean(self.m, b, -numpy.ones(self.m.size), 2)
        with self.assertRaises(ValueError):
            p_mean(self.m, b, field, 0.5)
        empty = b._replace(members=numpy.zeros(0, dtype=int))
        with self.assertRaises(EmptyBallError):
            p_mean(self.m, empty, field, 2)

    def test_gradient(self):
        x = self.m.coordinates[:, 0]
        values = numpy.sin(2 * math.pi * x)
        gradient = self.m.gradient_norm_sq(values)
        expected = (2 * math.pi * numpy.cos(2 * math.pi * x)) ** 2
        self.assertLess(numpy.abs(gradient - expected).max(), 0.06 * (2 * math.pi) ** 2)
        stacked = self.m.gradient_norm_sq(numpy.stack([values, 2 * values], axis=1))
        self.assertTrue(numpy.allclose(stacked[:, 1], 4 * gradient))

    def test_diagonal_distance(self):
        m = build_manifold(flat_torus(1.0, (20, 20)))
        target = m.nearest_vertex((0.3, 0.3))
        exact = math.sqrt(0.18)
        graph = m.graph_distances_from(0)[target]
        self.assertGreaterEqual(graph, exact * (1 - 1e-12))
        self.assertLessEqual(graph, 1.08 * exact)

    def test_rescaled(self):
        big = self.m.rescaled(2.0)
        self.assertAlmostEqual(big.total_volume, 4.0)
        self.assertAlmostEqual(big.distances_from(0)[self.m.nearest_vertex((0.25, 0))], 0.5)
        self.assertNotEqual(big.fingerprint, self.m.fingerprint)
        with self.assertRaises(ValueError):
            self.m.rescaled(0)

    def test_anisotropy(self):
        ratio = measure_anisotropy(self.m)
        self.assertGreaterEqual(ratio, 1 - 1e-12)
        self.assertLessEqual(ratio, 1.08)
        with self.assertRaises(ManifoldError):
            measure_anisotropy(build_manifold(hyperbolic(resolution=(8, 16))))


class CollapsedTorusTests(unittest.TestCase):
    def test_small_balls(self):
        m = build_manifold(collapsed_torus(0.05, (8, 128)))
        center = m.nearest_vertex((0.025, 0.5))
        b = ball(m, center, 0.25)
        self.assertAlmostEqual(b.volume, 0.025, delta=0.05 * 0.025)
        self.assertAlmostEqual(m.total_volume, 0.05, places=14)


class WarpedProductTests(unittest.TestCase):
    def test_flat_disk_volume(self):
        spec = ManifoldSpec("warped_product", warp="r", radial_range=(0.0, 1.0), cap=True,
                            resolution=(32, 64))
        m = build_manifold(spec)
        self.assertEqual(m.pole, 32 * 64)
        self.assertEqual(m.size, 32 * 64 + 1)
        self.assertAlmostEqual(m.total_volume, math.pi, delta=1e-3)
        self.assertAlmostEqual(analytic_volume(spec), math.pi, places=8)
        self.assertLess(numpy.abs(apply_laplacian(m, numpy.ones(m.size))).max(), 1e-8)
        self.assertEqual(m.nearest_vertex((0.0, 1.0)), m.pole)

    def test_cap_requires_unit_slope(self):
        spec = ManifoldSpec("warped_product", warp="2*r", radial_range=(0.0, 1.0), cap=True,
                            resolution=(16, 16))
        with self.assertRaises(ManifoldError):
            build_manifold(spec)

    def test_annulus(self):
        m = build_manifold(curvature_bump(0.02, 1.0, 0.2, resolution=(32, 32)))
        self.assertIsNone(m.pole)
        self.assertAlmostEqual(m.total_volume, analytic_volume(m.spec), places=6)
        stiffness = m.stiffness
        self.assertLess(abs(stiffness - stiffness.T).max(), 1e-12)
        self.assertEqual(len(m.boundary_vertices()), 64)

    def test_graph_distance_is_upper_estimate(self):
        spec = ManifoldSpec("warped_product", warp="r", radial_range=(0.0, 1.0), cap=True,
                            resolution=(32, 64))
        m = build_manifold(spec)
        target = m.nearest_vertex((0.5, 0.0))
        distance = geodesic_distance(m, m.pole, target)
        self.assertGreaterEqual(distance, m.coordinates[target, 0] - 1e-12)
        self.assertLess(distance, m.coordinates[target, 0] * 1.1)


if __name__ == "__main__":
    unittest.main()
