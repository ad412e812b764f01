import math
import os
import sys
import unittest

import numpy

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from groupdro import error
from groupdro import geometry
from groupdro import problem


def random_point(rng, geom, interior=True):
    direction = rng.standard_normal(geom.dim)
    direction /= numpy.linalg.norm(direction)
    w = direction * geom.radius * rng.random() ** (1.0 / geom.dim)
    q = rng.dirichlet(numpy.ones(geom.m))
    if interior:
        q = numpy.clip(q, 1e-12, None)
        q /= q.sum()
    return geometry.Point(w=w, q=q)


def random_gradient(rng, geom, scale=1.0):
    return geometry.MergedGradient(
        gw=scale * rng.standard_normal(geom.dim),
        gq=-scale * rng.random(geom.m))


class TestProxStep(unittest.TestCase):
    def setUp(self):
        self.rng = problem.make_rng(11)
        self.geom = geometry.Geometry(dim=3, m=4, radius=2.0)

    def objective(self, g, eta, alpha, snapshot, current, z):
        value = eta * geometry.pairing(g, z)
        value += alpha * geometry.bregman(
            self.geom, z, geometry.make_anchor(self.geom, snapshot))
        value += (1 - alpha) * geometry.bregman(
            self.geom, z, geometry.make_anchor(self.geom, current))
        return value

    def test_prox_step_minimizes_the_composite_objective(self):
        for alpha in (0.0, 0.3, 1.0):
            for scale in (0.1, 10.0):
                snapshot = random_point(self.rng, self.geom)
                current = random_point(self.rng, self.geom)
                g = random_gradient(self.rng, self.geom, scale=scale)
                eta = 0.05
                z = geometry.prox_step(
                    self.geom, g, eta, alpha,
                    geometry.dual_map(self.geom, snapshot), current)
                best = self.objective(g, eta, alpha, snapshot, current, z)
                for _ in range(200):
                    other = random_point(self.rng, self.geom)
                    for t in (0.01, 1.0):
                        mixed = geometry.Point(
                            w=(1 - t) * z.w + t * other.w,
                            q=(1 - t) * z.q + t * other.q)
                        self.assertLessEqual(
                            best, self.objective(
                                g, eta, alpha, snapshot, current, mixed)
                            + 1e-10)

    def test_prox_step_stays_feasible(self):
        z = geometry.init_point(self.geom)
        anchor = geometry.dual_map(self.geom, z)
        for _ in range(50):
            g = random_gradient(self.rng, self.geom, scale=100.0)
            z = geometry.prox_step(self.geom, g, 1.0, 0.5, anchor, z)
            self.assertLessEqual(
                numpy.linalg.norm(z.w), self.geom.radius * (1 + 1e-12))
            self.assertAlmostEqual(float(z.q.sum()), 1.0, places=12)
            self.assertTrue((z.q > 0).all())

    def test_full_anchor_weight_ignores_current_point(self):
        snapshot = random_point(self.rng, self.geom)
        g = random_gradient(self.rng, self.geom)
        anchor = geometry.dual_map(self.geom, snapshot)
        a = geometry.prox_step(
            self.geom, g, 0.1, 1.0, anchor, random_point(self.rng, self.geom))
        boundary = geometry.Point(
            w=numpy.zeros(3), q=numpy.array([1.0, 0.0, 0.0, 0.0]))
        b = geometry.prox_step(self.geom, g, 0.1, 1.0, anchor, boundary)
        numpy.testing.assert_allclose(a.w, b.w)
        numpy.testing.assert_allclose(a.q, b.q)

    def test_zero_anchor_weight_needs_no_anchor(self):
        z = random_point(self.rng, self.geom)
        g = random_gradient(self.rng, self.geom)
        a = geometry.prox_step(self.geom, g, 0.1, 0.0, None, z)
        b = geometry.prox_step(
            self.geom, g, 0.1, 0.0, geometry.dual_map(self.geom, z), z)
        numpy.testing.assert_allclose(a.w, b.w)
        numpy.testing.assert_allclose(a.q, b.q)

    def test_singleton_simplex(self):
        geom = geometry.Geometry(dim=2, m=1, radius=1.0)
        z = geometry.init_point(geom)
        g = geometry.MergedGradient(
            gw=numpy.array([1.0, 0.0]), gq=numpy.array([-3.0]))
        z1 = geometry.prox_step(
            geom, g, 0.1, 0.5, geometry.dual_map(geom, z), z)
        self.assertEqual(z1.q.tolist(), [1.0])
        # w moves by R^2 * eta * g from the origin
        numpy.testing.assert_allclose(z1.w, [-0.1, 0.0])

    def test_bad_arguments(self):
        z = geometry.init_point(self.geom)
        g = random_gradient(self.rng, self.geom)
        anchor = geometry.dual_map(self.geom, z)
        with self.assertRaises(error.InvalidStepSize):
            geometry.prox_step(self.geom, g, -1.0, 0.5, anchor, z)
        with self.assertRaises(error.WeightError):
            geometry.prox_step(self.geom, g, 0.1, 1.5, anchor, z)
        bad = geometry.MergedGradient(gw=g.gw, gq=g.gq * numpy.nan)
        with self.assertRaises(error.GeometryError):
            geometry.prox_step(self.geom, bad, 0.1, 0.5, anchor, z)


class TestNormsAndDivergence(unittest.TestCase):
    def setUp(self):
        self.rng = problem.make_rng(5)
        self.geom = geometry.Geometry(dim=4, m=3, radius=5.0)

    def test_dual_norm_bounds_the_pairing(self):
        for _ in range(100):
            delta = random_point(self.rng, self.geom) - random_point(
                self.rng, self.geom)
            g = random_gradient(self.rng, self.geom, scale=3.0)
            self.assertLessEqual(
                abs(geometry.pairing(g, delta)),
                geometry.merged_dual_norm(self.geom, g)
                * geometry.merged_norm(self.geom, delta) + 1e-12)

    def test_feasible_points_are_within_the_diameter(self):
        for _ in range(100):
            delta = random_point(self.rng, self.geom, interior=False) - \
                random_point(self.rng, self.geom, interior=False)
            self.assertLessEqual(
                geometry.merged_norm(self.geom, delta), geometry.DIAMETER)

    def test_bregman_is_nonnegative_and_vanishes_at_its_anchor(self):
        for _ in range(50):
            anchor = geometry.make_anchor(
                self.geom, random_point(self.rng, self.geom))
            self.assertEqual(
                geometry.bregman(self.geom, anchor.point, anchor), 0.0)
            z = random_point(self.rng, self.geom, interior=False)
            self.assertGreaterEqual(geometry.bregman(self.geom, z, anchor), 0.0)

    def test_bregman_is_strongly_convex_in_the_merged_norm(self):
        for _ in range(50):
            anchor = geometry.make_anchor(
                self.geom, random_point(self.rng, self.geom))
            z = random_point(self.rng, self.geom)
            distance = geometry.merged_norm(self.geom, z - anchor.point)
            self.assertGreaterEqual(
                geometry.bregman(self.geom, z, anchor),
                0.5 * distance ** 2 - 1e-12)

    def test_dual_map_of_the_start(self):
        z0 = geometry.init_point(self.geom)
        dual = geometry.dual_map(self.geom, z0)
        self.assertEqual(dual.dw.tolist(), [0.0] * 4)
        expected = (1 - math.log(3)) / (2 * math.log(3))
        numpy.testing.assert_allclose(dual.sq, [expected] * 3)

    def test_dual_map_rejects_the_boundary(self):
        z = geometry.Point(w=numpy.zeros(4), q=numpy.array([0.5, 0.5, 0.0]))
        with self.assertRaises(error.BoundaryPoint) as cm:
            geometry.dual_map(self.geom, z)
        self.assertEqual(cm.exception.index, 2)
        self.assertIsInstance(cm.exception, ValueError)


class TestAverages(unittest.TestCase):
    def test_weighted_average(self):
        points = [geometry.Point(w=numpy.array([float(k)]),
                                 q=numpy.array([1.0, 0.0]) if k else
                                 numpy.array([0.0, 1.0]))
                  for k in range(3)]
        avg = geometry.weighted_average(points, [2, 1, 1])
        numpy.testing.assert_allclose(avg.w, [0.75])
        numpy.testing.assert_allclose(avg.q, [0.5, 0.5])

    def test_weighted_average_rejects_bad_weights(self):
        z = geometry.init_point(geometry.Geometry(dim=1, m=2))
        with self.assertRaises(error.WeightError):
            geometry.weighted_average([z, z], [1.0, 0.0])
        with self.assertRaises(error.WeightError):
            geometry.weighted_average([z, z], [1.0])
        with self.assertRaises(error.WeightError):
            geometry.weighted_average([], [])

    def test_weighted_dual_average_normalizer(self):
        dual = geometry.DualPoint(dw=numpy.array([2.0]), sq=numpy.array([4.0]))
        avg = geometry.weighted_dual_average([dual, dual], [0.5, 0.5])
        self.assertEqual(avg.dw.tolist(), [2.0])
        avg = geometry.weighted_dual_average(
            [dual, dual], [0.5, 0.5], normalizer=2.0)
        self.assertEqual(avg.sq.tolist(), [2.0])
        with self.assertRaises(error.WeightError):
            geometry.weighted_dual_average([dual], [1.0], normalizer=0)


if __name__ == '__main__':
    unittest.main()
