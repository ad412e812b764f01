import math
import os
import sys
import unittest

import numpy
from scipy import optimize

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from groupdro import datagen
from groupdro import geometry
from groupdro import metrics
from groupdro import problem


def noisy_problem(radius):
    "Label noise heavy enough that the risk minimizer is interior."
    ds = datagen.gen_gdro(datagen.SynthSpec(
        kind='gdro', m=2, dim=2, n_per_group=30, seed=3, flip_prob=0.3))
    prob = problem.Problem(ds, problem.make_loss_model(ds))
    return prob, prob.geometry(radius)


class TestRisks(unittest.TestCase):
    def test_max_group_risk_breaks_ties_to_the_first_group(self):
        ds = problem.GroupedDataset.from_groups(
            [([[0.0]], [1]), ([[1.0]], [1]), ([[0.0]], [-1])])
        prob = problem.Problem(ds, problem.make_loss_model(ds))
        value, i = metrics.max_group_risk(prob, numpy.zeros(1))
        self.assertEqual(i, 0)
        self.assertAlmostEqual(value, math.log(2))
        value, i = metrics.max_group_risk(prob, numpy.array([-1.0]))
        self.assertEqual(i, 1)

    def test_excess_risk_gap(self):
        prob, _ = noisy_problem(5.0)
        w = numpy.array([0.5, -0.25])
        risks = prob.group_risks(w)
        self.assertAlmostEqual(
            metrics.excess_risk_gap(prob, w, risks - [0.1, 0.3]), 0.3)

    def test_minimal_risks_are_lower_bounds(self):
        prob, geom = noisy_problem(5.0)
        r_stars = metrics.minimal_risks(
            prob, geom, cfg=metrics.OracleConfig(tol=1e-9))
        rng = problem.make_rng(1)
        for _ in range(20):
            w = geometry.project_ball(geom, rng.standard_normal(2))
            self.assertTrue(
                (prob.group_risks(w) >= r_stars - 1e-9).all())


class TestErmOracle(unittest.TestCase):
    def test_matches_scipy_in_the_interior(self):
        prob, geom = noisy_problem(100.0)
        q = numpy.array([0.3, 0.7])
        result = metrics.erm_oracle(
            prob, geom, q, cfg=metrics.OracleConfig(tol=1e-10))
        self.assertTrue(result.converged)
        reference = optimize.minimize(
            lambda w: prob.weighted_risk(w, q)[0], numpy.zeros(2),
            jac=lambda w: prob.weighted_risk(w, q)[1], method='BFGS',
            options={'gtol': 1e-10})
        self.assertLess(numpy.linalg.norm(reference.x), 100.0)
        self.assertAlmostEqual(result.value, reference.fun, places=8)

    def test_respects_the_ball(self):
        prob, geom = noisy_problem(0.1)
        result = metrics.erm_oracle(prob, geom, numpy.array([0.5, 0.5]))
        self.assertLessEqual(numpy.linalg.norm(result.w), 0.1 * (1 + 1e-12))

    def test_counts_on_the_metric_counter(self):
        prob, geom = noisy_problem(5.0)
        counter = problem.EvalCounter()
        result = metrics.erm_oracle(
            prob, geom, numpy.array([0.5, 0.5]), counter=counter)
        self.assertGreaterEqual(counter.grad_evals, 60 * result.iterations)

    def test_iteration_cap(self):
        prob, geom = noisy_problem(5.0)
        result = metrics.erm_oracle(
            prob, geom, numpy.array([0.5, 0.5]),
            cfg=metrics.OracleConfig(tol=1e-300, max_iter=3))
        self.assertFalse(result.converged)
        self.assertEqual(result.iterations, 3)


class TestDualityGap(unittest.TestCase):
    def test_weak_duality(self):
        prob, geom = noisy_problem(2.0)
        rng = problem.make_rng(4)
        for _ in range(5):
            z = geometry.Point(
                w=geometry.project_ball(geom, 3 * rng.standard_normal(2)),
                q=rng.dirichlet(numpy.ones(2)))
            report = metrics.duality_gap(prob, geom, z)
            self.assertGreaterEqual(report.gap, -1e-8)
            self.assertEqual(report.gap, report.max_term - report.min_term)

    def test_mirror_prox_rate(self):
        prob, geom = noisy_problem(1.0)
        steps = 1000
        zbar = metrics.mirror_prox_oracle(prob, geom, steps)
        lz = problem.lipschitz_lz(geom, prob.model)
        report = metrics.duality_gap(
            prob, geom, zbar, cfg=metrics.OracleConfig(tol=1e-9))
        # psi varies by at most one over the domain
        self.assertLessEqual(report.gap, lz / steps + 1e-7)
        start = metrics.duality_gap(prob, geom, geometry.init_point(geom))
        self.assertLess(report.gap, start.gap)

    def test_report_as_dict(self):
        prob, geom = noisy_problem(1.0)
        data = metrics.duality_gap(
            prob, geom, geometry.init_point(geom)).as_dict()
        self.assertEqual(
            sorted(data), ['converged', 'gap', 'max_term', 'min_term',
                           'oracle_iters', 'oracle_tol'])
        self.assertIsInstance(data['converged'], bool)


class TestExcessRiskDecomposition(unittest.TestCase):
    def test_excess_risk_within_gap_plus_estimation_error(self):
        prob, geom = noisy_problem(1.0)
        oracle = metrics.OracleConfig(tol=1e-10)
        r_stars = metrics.minimal_risks(prob, geom, cfg=oracle)
        # the best max excess risk is at most its value here
        saddle = metrics.mirror_prox_oracle(prob.shifted(r_stars), geom, 2000)
        best = metrics.excess_risk_gap(prob, saddle.w, r_stars)
        self.assertGreaterEqual(best, -1e-9)
        rng = problem.make_rng(5)
        for _ in range(10):
            r_hats = r_stars + 0.05 * rng.random(2)
            z = geometry.Point(
                w=geometry.project_ball(geom, rng.standard_normal(2)),
                q=rng.dirichlet(numpy.ones(2)))
            report = metrics.duality_gap(
                prob.shifted(r_hats), geom, z, cfg=oracle)
            error = float(numpy.abs(r_hats - r_stars).max())
            self.assertLessEqual(
                metrics.excess_risk_gap(prob, z.w, r_stars) - best,
                report.gap + error + 1e-8)


if __name__ == '__main__':
    unittest.main()
