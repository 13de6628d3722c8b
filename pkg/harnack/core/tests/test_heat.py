import math
import unittest

import numpy

from harnack.core.catalog import collapsed_torus, flat_torus
from harnack.core.geometry import ball, Ball, build_manifold
from harnack.core.heat import (configure_kernel_cache, dirichlet_heat_kernel, j_from_w,
                               KernelCache, kernel_stack, MaximumPrincipleError, plan_w_steps,
                               ScalarTimeField, solve_heat, solve_w_direct, solve_w_duhamel,
                               StepSizeError)


class HeatTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.m = build_manifold(flat_torus(1.0, (16, 16)))
        cls.center = cls.m.nearest_vertex((0.5, 0.5))

    def test_constant_stays_constant(self):
        field = solve_heat(self.m, numpy.full(self.m.size, 2.5), [0, 0.1, 0.2])
        self.assertEqual(field.equation, "heat")
        self.assertLess(numpy.abs(field.values - 2.5).max(), 1e-12)

    def test_mass_and_positivity(self):
        init = numpy.zeros(self.m.size)
        init[self.center] = 1 / self.m.weights[self.center]
        field = solve_heat(self.m, init, numpy.linspace(0, 0.05, 6), max_substep=0.001)
        mass = field.values @ self.m.weights
        self.assertTrue(numpy.allclose(mass, 1, rtol=0, atol=1e-10))
        self.assertGreater(field.values[1:].min(), 0)
        self.assertEqual(field.stats["substeps"], 50)

    def test_eigenfunction_decay(self):
        x = self.m.coordinates[:, 0]
        wave = numpy.sin(2 * math.pi * x)
        symbol = (2 - 2 * math.cos(2 * math.pi / 16)) * 16 ** 2
        dt = 0.01
        field = solve_heat(self.m, wave, [0, dt])
        self.assertLess(numpy.abs(field.values[1] - wave / (1 + dt * symbol)).max(), 1e-10)

    def test_invalid_input(self):
        with self.assertRaises(ValueError):
            solve_heat(self.m, numpy.ones(3), [0, 1])
        with self.assertRaises(ValueError):
            solve_heat(self.m, numpy.ones(self.m.size), [0.1, 1])
        with self.assertRaises(ValueError):
            solve_heat(self.m, numpy.ones(self.m.size), [0, 1, 0.5])
        init = numpy.ones(self.m.size)
        init[0] = numpy.nan
        with self.assertRaises(ValueError):
            solve_heat(self.m, init, [0, 1])

    def test_comparison(self):
        random = numpy.random.RandomState(11)
        lower = random.uniform(0.1, 1, self.m.size)
        upper = lower + random.uniform(0, 1, self.m.size)
        times = numpy.linspace(0, 0.05, 6)
        for region in (None, ball(self.m, self.center, 0.3)):
            low = solve_heat(self.m, lower, times, ball=region)
            high = solve_heat(self.m, upper, times, ball=region)
            self.assertTrue((high.values >= low.values - 1e-12).all())
            if region is None:
                self.assertGreater(low.values.min(), 0)

    def test_dirichlet_kernel(self):
        region = ball(self.m, self.center, 0.3)
        kernel = dirichlet_heat_kernel(self.m, region, self.center,
                                       numpy.linspace(0, 0.05, 11))
        mass = kernel.mass(self.m.weights)
        self.assertAlmostEqual(mass[0], 1.0)
        self.assertTrue((numpy.diff(mass) <= 1e-12).all())
        self.assertLess(mass[-1], 1)
        outside = numpy.setdiff1d(numpy.arange(self.m.size), region.members)
        self.assertEqual(numpy.abs(kernel.values[1:, outside]).max(), 0)
        self.assertGreaterEqual(kernel.values.min(), 0)
        with self.assertRaises(ValueError):
            dirichlet_heat_kernel(self.m, region, 0, [0, 0.01])


class WSolverTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.m = build_manifold(flat_torus(1.0, (16, 16)))
        cls.center = cls.m.nearest_vertex((0.5, 0.5))
        cls.region = ball(cls.m, cls.center, 0.25)
        d2 = cls.m.distances_from(cls.center) ** 2
        cls.V = 0.5 * numpy.exp(-d2 / 0.01)
        cls.a = 22.5
        cls.times = numpy.linspace(0, 0.1, 11)

    def test_zero_potential(self):
        w = solve_w_direct(self.m, self.region, numpy.zeros(self.m.size), self.a, self.times)
        self.assertEqual(w.equation, "w")
        self.assertTrue((w.values == 1).all())
        J = j_from_w(w, self.a)
        self.assertTrue((J.values == 1).all())

    def test_direct_maximum_principle(self):
        w = solve_w_direct(self.m, self.region, self.V, self.a, self.times)
        self.assertGreaterEqual(w.values.min(), 1)
        self.assertGreater(w.values[-1, self.center], 1)
        outside = numpy.setdiff1d(numpy.arange(self.m.size), self.region.members)
        self.assertTrue((w.values[:, outside] == 1).all())
        J = j_from_w(w, self.a)
        self.assertLessEqual(J.values.max(), 1)
        self.assertGreater(J.values.min(), 0)

    def test_comparison(self):
        lower = solve_w_direct(self.m, self.region, self.V, self.a, self.times)
        upper = solve_w_direct(self.m, self.region, 1.5 * self.V + 0.1, self.a, self.times)
        self.assertTrue((upper.values >= lower.values * (1 - 1e-12)).all())
        self.assertGreater(upper.values[-1, self.center], lower.values[-1, self.center])

    def test_duhamel_matches_direct(self):
        direct = solve_w_direct(self.m, self.region, self.V, self.a, self.times)
        for mode in ("dense", "recursive"):
            duhamel = solve_w_duhamel(self.m, self.region, self.V, self.a, self.times,
                                      mode=mode, cache=KernelCache())
            difference = numpy.abs(duhamel.values - direct.values) / direct.values
            self.assertLess(difference.max(), 1e-6, mode)
            self.assertEqual(duhamel.stats["mode"], mode)
            self.assertTrue(duhamel.stats["monotone"])
            self.assertEqual(duhamel.stats["dt"], direct.stats["dt"])
            split = duhamel.stats["lag_split"]
            self.assertEqual(len(split["far"]), len(self.times))
            self.assertGreaterEqual(min(split["near"]), 0)

    def test_invalid_mode(self):
        with self.assertRaises(ValueError):
            solve_w_duhamel(self.m, self.region, self.V, self.a, self.times, mode="fft")

    def test_nonuniform_grid(self):
        with self.assertRaises(ValueError):
            solve_w_direct(self.m, self.region, self.V, self.a, [0, 0.1, 0.3])

    def test_invalid_potential(self):
        with self.assertRaises(ValueError):
            solve_w_direct(self.m, self.region, -self.V, self.a, self.times)
        with self.assertRaises(ValueError):
            solve_w_direct(self.m, self.region, self.V, 1.0, self.times)

    def test_step_halving(self):
        strong = 200 * self.V
        plan = plan_w_steps(self.m, self.region, strong, self.a, self.times)
        self.assertGreater(plan.halvings, 0)
        self.assertEqual(plan.substeps, 2 ** plan.halvings)
        self.assertAlmostEqual(plan.dt * plan.substeps, 0.01)
        with self.assertRaises(StepSizeError):
            plan_w_steps(self.m, self.region, strong, self.a, self.times, dt_floor=1e-3)

    def test_j_from_w(self):
        w = ScalarTimeField(numpy.array([0.0]), numpy.array([[1.0, 4.0]]), "w")
        J = j_from_w(w, 2.0)
        self.assertEqual(J.equation, "J")
        self.assertEqual(J.values.tolist(), [[1.0, 0.25]])
        with self.assertRaises(MaximumPrincipleError):
            j_from_w(w.replace_values(numpy.array([[0.5, 1.0]]), "w"), 2.0)
        with self.assertRaises(ValueError):
            j_from_w(w, 1.0)


class PotentialFamilyTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.m = build_manifold(flat_torus(1.0, (64, 64)))
        cls.center = cls.m.nearest_vertex((0.5, 0.5))
        cls.region = ball(cls.m, cls.center, 0.25)
        cls.times = numpy.linspace(0, 0.04, 5)
        cls.a = 22.5
        cls.cache = KernelCache()

    def potentials(self):
        x, y = self.m.coordinates.T
        d2 = self.m.distances_from(self.center) ** 2
        shifted = self.m.distances_from(self.m.nearest_vertex((0.6, 0.45))) ** 2
        random = numpy.random.RandomState(7)
        return {
            "zero": numpy.zeros(self.m.size),
            "constant_small": numpy.full(self.m.size, 0.05),
            "constant": numpy.ones(self.m.size),
            "bump": 0.5 * numpy.exp(-d2 / 0.01),
            "shifted_bump": numpy.exp(-shifted / 0.005),
            "ring": numpy.exp(-(numpy.sqrt(d2) - 0.15) ** 2 / 0.002),
            "ramp": 0.5 * x,
            "waves": 0.25 * (1 + numpy.sin(8 * numpy.pi * x) * numpy.sin(8 * numpy.pi * y)),
            "random": random.uniform(0, 1, self.m.size),
            "step": (d2 < 0.01).astype(float),
        }

    def test_direct_and_duhamel_agree(self):
        potentials = self.potentials()
        self.assertEqual(len(potentials), 10)
        members = self.region.members
        for name, V in sorted(potentials.items()):
            direct = solve_w_direct(self.m, self.region, V, self.a, self.times,
                                    max_substep=0.002)
            duhamel = solve_w_duhamel(self.m, self.region, V, self.a, self.times,
                                      max_substep=0.002, cache=self.cache)
            reference = direct.values[:, members]
            difference = numpy.abs(duhamel.values[:, members] - reference) / reference
            self.assertLessEqual(difference.max(), 1e-3, name)
            self.assertTrue(duhamel.stats["monotone"], name)

    def test_zero_potential_converges_at_once(self):
        duhamel = solve_w_duhamel(self.m, self.region, numpy.zeros(self.m.size), self.a,
                                  self.times, max_substep=0.002, cache=self.cache)
        self.assertTrue((duhamel.values == 1).all())
        self.assertEqual(set(duhamel.stats["iterations"]), {1})


class IntervalSeriesTests(unittest.TestCase):
    """A full-width strip of a thin torus behaves as a Dirichlet interval."""

    @classmethod
    def setUpClass(cls):
        cls.m = build_manifold(collapsed_torus(0.05, (8, 64)))
        cls.n1, cls.n2 = cls.m.shape
        cls.h = cls.m.spacing[1]
        cls.rows = numpy.arange(1, 33)
        members = numpy.sort((numpy.arange(cls.n1)[:, None] * cls.n2 + cls.rows).ravel())
        cls.strip = Ball(3 * cls.n2 + 10, 0.0, members, numpy.zeros(len(members)),
                         float(cls.m.weights[members].sum()))
        size = len(cls.rows)
        k = numpy.arange(1, size + 1)
        cls.modes = numpy.sqrt(2 / (size + 1)) * numpy.sin(
            numpy.pi * numpy.outer(cls.rows, k) / (size + 1))
        cls.eigenvalues = (2 - 2 * numpy.cos(numpy.pi * k / (size + 1))) / cls.h ** 2
        cls.times = numpy.linspace(0, 0.05, 6)

    def grid(self, values: numpy.ndarray) -> numpy.ndarray:
        return values.reshape(len(self.times), self.n1, self.n2)

    def test_dirichlet_kernel(self):
        kernel = dirichlet_heat_kernel(self.m, self.strip, self.strip.center, self.times,
                                       max_substep=0.001)
        profile = self.grid(kernel.values).sum(axis=1) * self.m.spacing[0]
        source = self.modes[self.rows == 10][0]
        for step in range(1, len(self.times)):
            decay = (1 + 0.001 * self.eigenvalues) ** (-10 * step)
            expected = self.modes @ (decay * source) / self.h
            self.assertLess(numpy.abs(profile[step, self.rows] - expected).max(), 1e-4)
        self.assertEqual(numpy.abs(profile[1:, 0]).max(), 0)
        self.assertEqual(numpy.abs(profile[1:, 33:]).max(), 0)

    def test_w_constant_potential(self):
        a, v0 = 2.0, 1.0
        w = solve_w_direct(self.m, self.strip, numpy.full(self.m.size, v0), a, self.times,
                           max_substep=0.001)
        dt, substeps = w.stats["dt"], w.stats["substeps"]
        rate = 2 * (a - 1) * v0
        q = 1 / (1 - dt * rate + dt * self.eigenvalues)
        ones = self.modes.T @ numpy.ones(len(self.rows))
        grid = self.grid(w.values)
        for step in range(1, len(self.times)):
            count = substeps * step
            expected = 1 + self.modes @ (dt * rate * ones * q * (1 - q ** count) / (1 - q))
            actual = grid[step][:, self.rows]
            self.assertLess((numpy.abs(actual - expected) / expected).max(), 1e-3)
        self.assertTrue((grid[:, :, 0] == 1).all())
        self.assertGreater(grid[-1, 0, 16], 1)


class KernelCacheTests(unittest.TestCase):
    def test_stack_is_cached(self):
        m = build_manifold(flat_torus(1.0, (8, 8)))
        region = ball(m, 0, 0.3)
        cache = KernelCache()
        stack = kernel_stack(m, region, 0.01, 3, cache)
        self.assertEqual(stack.shape, (3, region.size, region.size))
        self.assertIs(kernel_stack(m, region, 0.01, 3, cache), stack)
        self.assertEqual(len(cache), 1)
        self.assertTrue(numpy.allclose(stack[2], stack[2].T, atol=1e-12))
        self.assertFalse(stack.flags.writeable)

    def test_too_small(self):
        m = build_manifold(flat_torus(1.0, (8, 8)))
        region = ball(m, 0, 0.3)
        cache = KernelCache(max_size=16)
        stack = kernel_stack(m, region, 0.01, 2, cache)
        self.assertEqual(len(cache), 0)
        self.assertEqual(stack.shape[0], 2)

    def test_configure(self):
        cache = configure_kernel_cache(1 << 20)
        self.assertEqual(len(cache), 0)
        self.assertIn("1048576", str(cache))
        configure_kernel_cache(256 << 20)


if __name__ == "__main__":
    unittest.main()
