import logging
import math
import unittest

import numpy as np
import numpy.testing as npt

from finsflow.errors import ConfigurationError, DomainError, SmoothnessError
from finsflow.finsler_core import (
    TensorEvaluator, calculus_for, chern_derivatives, chern_derivatives_batch, eval_connection, eval_curvature,
    eval_fundamental, eval_measure_geometry, evaluate_point, flag_curvature, integrate_geodesic, sphere_sample,
    spray_ricci, weighted_ricci,
)
from finsflow.metrics import MeasureSpec, MetricFamily, euclidean, randers, riemannian_conformal


class TestFinslerCore(unittest.TestCase):
    """
    Unit tests for the pointwise tensor calculus.

    Closed forms: the flat metric, the conformal metric e^{2a cos x¹}|y|² whose
    Gaussian curvature is a·cos x¹·e^{−2a cos x¹}, and structural identities of
    Randers families.
    """
    def setUp(self):
        logging.basicConfig(level=logging.DEBUG)
        self.randers = randers(wave=(0.2, 0.1), conformal_amplitude=0.1)
        rng = np.random.default_rng(11)
        self.x = rng.uniform(0.0, 2 * math.pi, size=(20, 2))
        theta = rng.uniform(0.0, 2 * math.pi, size=20)
        self.y = np.stack([np.cos(theta), np.sin(theta)], axis=-1) * rng.uniform(0.5, 2.0, size=(20, 1))
        self.t = np.zeros(20)

    def test_flat_tensors(self):
        """
        Test the tensors of the Euclidean metric.

        This test verifies:
        - g is the identity and the Cartan tensor vanishes.
        - The spray and the Chern connection vanish.
        - A zero direction raises DomainError.

        Test steps:
        1. Evaluate fundamental and connection data at a sample point.
        2. Call eval_fundamental with y = 0.
        """
        metric = euclidean()
        data = eval_fundamental(metric, [0.4, 1.1], [0.3, -0.7], 0.0)
        npt.assert_allclose(data.g, np.eye(2), atol=1e-14)
        npt.assert_allclose(data.g_inverse, np.eye(2), atol=1e-14)
        npt.assert_allclose(data.cartan, 0.0, atol=1e-13)
        connection = eval_connection(metric, [0.4, 1.1], [0.3, -0.7], 0.0)
        npt.assert_allclose(connection.spray, 0.0, atol=1e-14)
        npt.assert_allclose(connection.chern, 0.0, atol=1e-14)

        with self.assertRaises(DomainError):
            eval_fundamental(metric, [0.4, 1.1], [0.0, 0.0], 0.0)

    def test_conformal_curvature(self):
        """
        Test Ricci and flag curvature against the closed-form Gaussian curvature.

        This test verifies:
        - Ric(y) = K·F²(y) through the Chern curvature.
        - The spray-curvature trace gives the same Ricci scalar.
        - The flag curvature equals K.
        - A flag direction parallel to y raises DomainError.

        Test steps:
        1. Evaluate at x = (0.3, 1.0), y = (0.6, −0.8) with a = 0.2.
        2. Compare with a·cos x¹·e^{−2a cos x¹}·F².
        """
        a = 0.2
        metric = riemannian_conformal(a)
        x, y = np.array([0.3, 1.0]), np.array([0.6, -0.8])
        gauss = a * math.cos(x[0]) * math.exp(-2 * a * math.cos(x[0]))
        energy = math.exp(2 * a * math.cos(x[0])) * float(y @ y)

        curvature = eval_curvature(metric, x, y, 0.0)
        self.assertAlmostEqual(curvature.ricci, gauss * energy, places=9)
        self.assertAlmostEqual(spray_ricci(metric, x, y, 0.0), gauss * energy, places=9)
        self.assertAlmostEqual(flag_curvature(metric, x, y, [1.0, 0.0], 0.0), gauss, places=9)

        with self.assertRaises(DomainError):
            eval_curvature(metric, x, y, 0.0, flag_direction=2 * y)

    def test_structural_identities(self):
        """
        Test structural identities on a Randers family.

        This test verifies:
        - C(y, ·, ·) vanishes.
        - The spray is positively 2-homogeneous in y.
        - The metric is horizontally parallel: g_{ij|k} = 0.
        - The Chern and spray Ricci scalars agree.

        Test steps:
        1. Evaluate over 20 random samples with exact derivatives.
        """
        calc = calculus_for(self.randers)
        cartan = calc.evaluate("cartan", self.x, self.y, self.t)
        npt.assert_allclose(np.einsum("bi,bijk->bjk", self.y, cartan), 0.0, atol=1e-12)

        spray = calc.evaluate("spray", self.x, self.y, self.t)
        scaled = calc.evaluate("spray", self.x, 2.5 * self.y, self.t)
        npt.assert_allclose(scaled, 2.5 ** 2 * spray, rtol=1e-10, atol=1e-13)

        derivatives = chern_derivatives_batch(self.randers, calc.tensor("fundamental"), self.x, self.y, self.t)
        npt.assert_allclose(derivatives.horizontal, 0.0, atol=1e-10)

        ricci = calc.evaluate("ricci", self.x, self.y, self.t)
        npt.assert_allclose(calc.evaluate("spray_ricci", self.x, self.y, self.t), ricci, atol=1e-10)

    def test_empty_batch(self):
        """
        Test that an empty batch is rejected.

        This test verifies:
        - evaluate raises DomainError for zero samples.

        Test steps:
        1. Evaluate the norm on empty arrays.
        """
        calc = calculus_for(euclidean())
        with self.assertRaises(DomainError):
            calc.evaluate("norm", np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0))

    def test_smoothness_promise(self):
        """
        Test that derivatives beyond the smoothness promise are refused.

        This test verifies:
        - A tensor that already spent 4 derivatives cannot be differentiated under smoothness 4.

        Test steps:
        1. Wrap the fundamental tensor with order 4 and request its Chern derivatives.
        """
        metric = MetricFamily("euclidean", smoothness=4)
        calc = calculus_for(metric)
        deep = TensorEvaluator(calc.fundamental, "ll", 4, "deep")
        with self.assertRaises(SmoothnessError):
            chern_derivatives_batch(metric, deep, self.x, self.y, self.t)

    def test_weighted_ricci(self):
        """
        Test the weighted Ricci curvature and its limiting cases.

        This test verifies:
        - Ric^N = Ric + Ṡ − S²/(N − n) for finite N > n.
        - N = ∞ drops the S² term.
        - N ≤ n raises DomainError, N = n included.

        Test steps:
        1. Evaluate on small arrays with known values.
        """
        ricci, s, s_dot = np.array([1.0, 1.0]), np.array([0.0, 2.0]), np.array([0.5, 0.5])
        npt.assert_allclose(weighted_ricci(ricci, s, s_dot, 4.0), [1.5, -0.5])
        npt.assert_allclose(weighted_ricci(ricci, s, s_dot, math.inf), [1.5, 1.5])
        for N in (2.0, 1.5):
            with self.assertRaises(DomainError, msg=str(N)):
                weighted_ricci(ricci, s, s_dot, N)

    def test_s_curvature(self):
        """
        Test the S-curvature through both routes.

        This test verifies:
        - The conformal metric with its own volume measure has τ = S = 0.
        - On a Randers family, S and Ṡ along the integrated geodesic match the spray route.

        Test steps:
        1. Evaluate the measure geometry of the conformal pair.
        2. Evaluate a Randers point by both methods and compare.
        """
        conformal = eval_measure_geometry(
            riemannian_conformal(0.2), MeasureSpec("conformal-volume", 0.2), [0.7, 0.2], [0.3, 0.9], 0.0, 4.0,
            method="spray"
        )
        self.assertAlmostEqual(conformal.tau, 0.0, places=12)
        self.assertAlmostEqual(conformal.s, 0.0, places=12)

        measure = MeasureSpec()
        geodesic = eval_measure_geometry(self.randers, measure, [0.7, 0.2], [0.3, 0.9], 0.0, 4.0)
        spray = eval_measure_geometry(self.randers, measure, [0.7, 0.2], [0.3, 0.9], 0.0, 4.0, method="spray")
        self.assertAlmostEqual(geodesic.s, spray.s, places=6)
        self.assertAlmostEqual(geodesic.s_dot, spray.s_dot, places=5)
        self.assertAlmostEqual(spray.ricci_n, spray.ricci + spray.s_dot - spray.s ** 2 / 2.0, places=12)

        with self.assertRaises(DomainError):
            eval_measure_geometry(self.randers, measure, [0.7, 0.2], [0.3, 0.9], 0.0, 1.0)
        with self.assertRaises(DomainError):
            eval_measure_geometry(self.randers, measure, [0.7, 0.2], [0.3, 0.9], 0.0, 2.0)

    def test_geodesic(self):
        """
        Test geodesic integration.

        This test verifies:
        - Euclidean geodesics are straight lines with constant speed.
        - F is conserved on a Randers family within the drift limit.

        Test steps:
        1. Integrate 10 steps of 0.1 from (0, 0) along (1, 2).
        2. Integrate a Randers geodesic and read the drift.
        """
        path = integrate_geodesic(euclidean(), [0.0, 0.0], [1.0, 2.0], 0.0, 0.1, 10)
        npt.assert_allclose(path.points[-1], [1.0, 2.0], atol=1e-12)
        self.assertLess(path.drift, 1e-12)

        path = integrate_geodesic(self.randers, [0.5, 0.5], [0.6, 0.8], 0.0, 0.01, 50)
        self.assertLess(path.drift, 1e-6)

    def test_sphere_sample(self):
        """
        Test sampling of the unit F-sphere.

        This test verifies:
        - All samples have F = 1.
        - Four Euclidean directions are the unit axis vectors.
        - Fewer than 4 directions raise ConfigurationError.

        Test steps:
        1. Sample 16 directions of a Randers family at one point.
        2. Sample 4 Euclidean directions.
        3. Request 3 directions.
        """
        x = np.array([1.0, 2.0])
        directions = sphere_sample(self.randers, x, 0.0, 16)
        norms = self.randers.norm(np, np.broadcast_to(x, directions.shape), directions, 0.0)
        npt.assert_allclose(norms, 1.0, rtol=1e-14)
        npt.assert_allclose(sphere_sample(euclidean(), x, 0.0, 4), [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
                            atol=1e-15)
        with self.assertRaises(ConfigurationError):
            sphere_sample(self.randers, x, 0.0, 3)

    def test_point_data(self):
        """
        Test the assembled tensor package at one sphere-bundle point.

        This test verifies:
        - g and Ricci agree with the individual evaluators.
        - Ric^N is assembled from the package's own Ric, S and Ṡ.
        - The horizontal Chern derivative of g vanishes at the point.
        - y = 0 raises DomainError.

        Test steps:
        1. Evaluate a Randers family with a cosine measure at one point with N = 4.
        2. Take the Chern derivatives of g at the same point.
        """
        measure = MeasureSpec("cosine", 0.3)
        x, y = [0.7, 0.2], [0.3, 0.9]
        data = evaluate_point(self.randers, measure, x, y, 0.0, N=4.0)
        npt.assert_allclose(data.g, eval_fundamental(self.randers, x, y, 0.0).g, atol=1e-14)
        npt.assert_allclose(data.g @ data.g_inverse, np.eye(2), atol=1e-12)
        self.assertAlmostEqual(data.ricci, eval_curvature(self.randers, x, y, 0.0).ricci, places=12)
        self.assertAlmostEqual(data.ricci_n, float(weighted_ricci(data.ricci, data.s, data.s_dot, 4.0)), places=12)

        calc = calculus_for(self.randers)
        derivatives = chern_derivatives(self.randers, calc.tensor("fundamental"), x, y, 0.0)
        npt.assert_allclose(derivatives.horizontal, 0.0, atol=1e-9)
        self.assertEqual(derivatives.vertical.shape, (2, 2, 2))

        with self.assertRaises(DomainError):
            evaluate_point(self.randers, measure, x, [0.0, 0.0], 0.0)


if __name__ == "__main__":
    unittest.main()
