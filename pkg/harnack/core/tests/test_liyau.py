import math
import unittest

import numpy

from harnack.core.catalog import flat_torus
from harnack.core.curvature import HypothesisError
from harnack.core.geometry import build_manifold
from harnack.core.heat import ScalarTimeField, solve_heat
from harnack.core.liyau import (BoundReport, check_classical, check_li_yau, classical_rhs,
                                compute_Q, gronwall_envelope, j_lower_bound, li_yau_constants,
                                li_yau_rhs, LiYauParams, parabolic_rescale, select_times,
                                structural_margin, structural_residual)


class ConstantsTests(unittest.TestCase):
    def test_half_alpha_plane(self):
        delta, a = li_yau_constants(0.5, 2)
        self.assertAlmostEqual(delta, 2 / 9, places=15)
        self.assertAlmostEqual(a, 22.5, places=12)
        self.assertAlmostEqual(a * delta, 5, places=12)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            li_yau_constants(1.0, 2)
        with self.assertRaises(ValueError):
            li_yau_constants(0.0, 2)
        with self.assertRaises(ValueError):
            li_yau_constants(0.5, 1)

    def test_structural_identity(self):
        for alpha in (0.1, 0.5, 0.9):
            for n in (2, 3, 5):
                self.assertLess(abs(structural_residual(alpha, n)), 1e-14)

    def test_params_validation(self):
        with self.assertRaises(HypothesisError):
            LiYauParams(n=2, p=1, alpha=0.5).validate()
        with self.assertRaises(ValueError):
            LiYauParams(n=2, p=2, alpha=0.5, C=0).validate()
        with self.assertRaises(ValueError):
            LiYauParams(n=2, p=2, alpha=0.5, kappa=-1).validate()
        params = LiYauParams(n=2, p=2, alpha=0.5)
        self.assertIs(params.validate(), params)
        self.assertEqual(params.exponent, 1)

    def test_structural_margin_nonnegative(self):
        params = LiYauParams(n=2, p=2, alpha=0.5)
        margin = structural_margin(numpy.linspace(0.01, 1, 50), params)
        self.assertGreaterEqual(margin.min(), -1e-14)


class LowerBoundTests(unittest.TestCase):
    def setUp(self):
        self.params = LiYauParams(n=2, p=2, alpha=0.5, C=1, kappa=0)

    def test_value_at_zero(self):
        self.assertAlmostEqual(float(j_lower_bound(0, self.params)), 2 ** (-1 / 21.5),
                               places=15)
        self.assertAlmostEqual(float(j_lower_bound(0, self.params)), 0.96828, places=4)

    def test_flat_is_constant(self):
        values = j_lower_bound(numpy.linspace(0, 5, 11), self.params)
        self.assertTrue(numpy.allclose(values, values[0], rtol=0, atol=1e-15))

    def test_decays_with_kappa(self):
        values = j_lower_bound(numpy.linspace(0, 1, 11), self.params._replace(kappa=0.01))
        self.assertTrue((numpy.diff(values) < 0).all())
        self.assertGreater(values.min(), 0)

    def test_radius_above_one(self):
        with self.assertRaises(ValueError):
            j_lower_bound(0.5, self.params._replace(r=2.0))

    def test_envelope(self):
        self.assertAlmostEqual(float(gronwall_envelope(0, 0.01, self.params)), 2, places=15)
        self.assertAlmostEqual(float(gronwall_envelope(3.0, 0, self.params)), 2, places=15)
        value = float(gronwall_envelope(1.0, 0.01, self.params))
        self.assertAlmostEqual(value, 2 * math.exp(0.43 * 1.43), places=12)
        self.assertAlmostEqual(value, 3.699, places=3)


class RhsTests(unittest.TestCase):
    def setUp(self):
        self.params = LiYauParams(n=2, p=2, alpha=0.5, C=1, kappa=0)

    def test_flat_value(self):
        d = 0.5 * (16 / 9) * 2 ** (-1 / 21.5)
        expected = 2 / d + 1 / d * (1 / (d * 0.5) + 1)
        self.assertAlmostEqual(li_yau_rhs(1.0, self.params), expected, places=12)
        self.assertAlmostEqual(li_yau_rhs(1.0, self.params), 6.185, places=2)

    def test_blows_up(self):
        rhs = li_yau_rhs(numpy.array([1e-6, 1e-3, 1.0]), self.params)
        self.assertTrue((numpy.diff(rhs) < 0).all())
        self.assertGreater(rhs[0], 1e5)
        near_one = li_yau_rhs(1.0, self.params._replace(alpha=0.9999))
        self.assertGreater(near_one, 1e3)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            li_yau_rhs(0.0, self.params)
        with self.assertRaises(ValueError):
            li_yau_rhs(1.0, self.params, form="corollary")

    def test_remark_form_is_smaller(self):
        self.assertLess(li_yau_rhs(1.0, self.params, form="remark"),
                        li_yau_rhs(1.0, self.params))

    def test_classical(self):
        self.assertAlmostEqual(float(classical_rhs(1.0, 2, 1.0, 2.0)), 8.0, places=14)
        self.assertAlmostEqual(float(classical_rhs(0.5, 2, 1.0, 2.0)), 12.0, places=14)
        self.assertAlmostEqual(float(classical_rhs(0.25, 2, 0.0, 1.0)), 4.0, places=14)
        with self.assertRaises(ValueError):
            classical_rhs(1.0, 2, 1.0, 1.0)


class QuotientTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.m = build_manifold(flat_torus(1.0, (32, 32)))
        cls.origin = cls.m.nearest_vertex((0.5, 0.5))
        d2 = cls.m.distances_from(cls.origin) ** 2
        init = numpy.exp(-d2 / 0.2) + 0.05
        cls.u = solve_heat(cls.m, init, numpy.linspace(0, 0.2, 21))

    def test_constant_u(self):
        times = numpy.linspace(0, 1, 5)
        u = ScalarTimeField(times, numpy.full((5, self.m.size), 3.0), "heat")
        q = compute_Q(self.m, u, 1.0, 0.5)
        self.assertEqual(q.variant, "constant")
        self.assertLess(numpy.abs(q.values).max(), 1e-12)
        params = LiYauParams(n=2, p=2, alpha=0.5)
        report = check_li_yau(self.m, u, params, 0.0, self.origin, t_min=0.25)
        self.assertTrue(report.passed)
        self.assertLess(numpy.abs(report.lhs).max(), 1e-12)
        self.assertTrue((report.rhs > 0).all())

    def test_nonpositive_u(self):
        times = numpy.array([0.0, 1.0])
        u = ScalarTimeField(times, numpy.zeros((2, self.m.size)), "heat")
        with self.assertRaises(ValueError):
            compute_Q(self.m, u, 1.0, 0.5)

    def test_lower_bound_variant(self):
        lower = numpy.full(len(self.u.times), 0.9)
        q = compute_Q(self.m, self.u, lower, 0.5, [self.origin])
        self.assertEqual(q.variant, "lower_bound")
        self.assertEqual(q.values.shape, (len(self.u.times), 1))
        with self.assertRaises(ValueError):
            compute_Q(self.m, self.u, lower[:-1], 0.5)

    def test_flat_heat_flow_passes(self):
        params = LiYauParams(n=2, p=2, alpha=0.5)
        report = check_li_yau(self.m, self.u, params, 0.0, self.origin, t_min=0.02)
        self.assertEqual(report.name, "li_yau")
        self.assertTrue(report.passed, str(report))
        self.assertTrue(report.hypothesis_satisfied)
        self.assertEqual(len(report.times), 19)
        self.assertIn("remark_form_worst_margin", report.diagnostics)

    def test_hypothesis_flag(self):
        params = LiYauParams(n=2, p=2, alpha=0.5, kappa=0.001)
        report = check_li_yau(self.m, self.u, params, 0.01, self.origin, t_min=0.02)
        self.assertFalse(report.hypothesis_satisfied)

    def test_classical_flat(self):
        report = check_classical(self.m, self.u, 0.0, 1.0, self.origin, t_min=0.02)
        self.assertEqual(report.variant, "optimal")
        self.assertTrue(report.passed, str(report))

    def test_select_times(self):
        window = select_times(self.u, 0.05, 0.1)
        self.assertAlmostEqual(window.times[0], 0.05)
        self.assertAlmostEqual(window.times[-1], 0.1)
        with self.assertRaises(ValueError):
            select_times(self.u, 0.5, 0.6)

    def test_rescaling_invariance(self):
        V = numpy.zeros(self.m.size)
        vertices = numpy.arange(0, self.m.size, 37)
        for factor in (0.5, 2.0):
            result = parabolic_rescale(self.m, self.u, factor, V, 2, alpha=0.5,
                                       vertices=vertices, centers=[0, 10])
            self.assertLess(result.q_error, 1e-12)
            self.assertEqual(result.k_error, 0)
            self.assertAlmostEqual(result.manifold.total_volume,
                                   self.m.total_volume * factor ** 2)


class BoundReportTests(unittest.TestCase):
    def test_margins(self):
        report = BoundReport("test", [0, 1], [[0, 0], [1, 0]], [0.5, 1.0],
                             [[1.0, 2.0], [3.0, 2.5]], 2.0, tolerance=0.6)
        self.assertEqual(report.violation_count, 1)
        self.assertAlmostEqual(report.worst_margin, -1.0)
        self.assertFalse(report.passed)
        rows = list(report.rows())
        self.assertEqual(len(rows), 4)
        self.assertEqual(rows[2], (0.0, 0.0, 1.0, 3.0, 2.0, -1.0, True))
        summary = report.summary()
        self.assertEqual(summary["points"], 4)
        self.assertEqual(summary["violations"], 1)

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            BoundReport("test", [0], [[0, 0]], [1.0, 2.0], [[1.0]], 2.0)

    def test_nan_is_violation(self):
        report = BoundReport("test", [0], [[0, 0]], [1.0], [[float("nan")]], 2.0)
        self.assertEqual(report.violation_count, 1)


if __name__ == "__main__":
    unittest.main()
