import dataclasses
import logging
import math
import unittest

import numpy as np

from finsflow.chart_grid import ScalarField, build_grid
from finsflow.errors import ConfigurationError, DomainError
from finsflow.estimates import (
    EstimateConfig, HarnackConfig, HarnackPair, HypothesisConstants, MarginReport, bound_monotonicity, compute_q,
    draw_pairs, epsilon_stability, estimate_constants, gradient_estimate_check, harnack_check, min_over_epsilon,
    static_reduction_compare, gradient_bound,
)
from finsflow.finsler_core import calculus_for
from finsflow.flow_pde import run_heat_flow
from finsflow.legendre_gradient import dual_norm
from finsflow.metrics import MeasureSpec, euclidean, shrinking_scale


def constants_with(**values):
    data = {"n": 2, "N": 3.0, "K": 0.0, "K_prime": 0.0, "K_prime_unsquared": 0.0, "L1": 0.0, "L2": 0.0, "L3": 0.0}
    data.update(values)
    return HypothesisConstants(**data)


class TestConstantsAndQ(unittest.TestCase):
    """
    Unit tests for the hypothesis constants, Q and the configuration of the estimates.
    """
    def setUp(self):
        logging.basicConfig(level=logging.DEBUG)
        self.grid = build_grid((32, 32))

    def test_compute_q(self):
        """
        Test the arithmetic of Q.

        This test verifies:
        - L1 = 1 alone with N = 3 gives Q = 1 + √10.
        - K = 2, ε = 1, α = 2, K′ = 1, N = 3 gives Q = 1.5.
        - The sharper coefficient 1 + √(2n(N−n+4)/N) is used on request.
        - α ≤ 1, ε ≤ 0 and N ≤ n raise DomainError.

        Test steps:
        1. Evaluate compute_q on hand-built constants.
        """
        constants = constants_with(K=0.5, L1=1.0)
        self.assertAlmostEqual(compute_q(constants, 2.0, 0.5, 3.0), 1.0 + math.sqrt(10.0), places=12)
        self.assertAlmostEqual(compute_q(constants, 2.0, 0.5, 3.0), 4.16228, places=5)
        self.assertAlmostEqual(
            compute_q(constants, 2.0, 0.5, 3.0, sharper=True), 1.0 + math.sqrt(20.0 / 3.0), places=12
        )
        self.assertAlmostEqual(compute_q(constants_with(K=2.0, K_prime=1.0), 2.0, 1.0, 3.0), 1.5, places=12)

        with self.assertRaises(DomainError):
            compute_q(constants, 1.0, 0.5, 3.0)
        with self.assertRaises(DomainError):
            compute_q(constants, 2.0, 0.0, 3.0)
        with self.assertRaises(DomainError):
            compute_q(constants, 2.0, 0.5, 2.0)

    def test_estimate_config(self):
        """
        Test validation of the estimate configuration.

        This test verifies:
        - α = 1 names estimate.alpha, N = 2 names estimate.N.
        - Unsorted check times and too few directions are rejected.

        Test steps:
        1. Construct each invalid configuration.
        """
        with self.assertRaises(ConfigurationError) as context:
            EstimateConfig(alpha=1.0)
        self.assertEqual(context.exception.field, "estimate.alpha")
        with self.assertRaises(ConfigurationError) as context:
            EstimateConfig(N=2.0)
        self.assertEqual(context.exception.field, "estimate.N")
        with self.assertRaises(ConfigurationError) as context:
            EstimateConfig(check_times=(0.2, 0.1))
        self.assertEqual(context.exception.field, "estimate.check_times")
        with self.assertRaises(ConfigurationError):
            EstimateConfig(directions=8)
        with self.assertRaises(ConfigurationError):
            HarnackConfig(min_gap=0.3, max_gap=0.1)

    def test_flat_constants(self):
        """
        Test that the static flat torus has vanishing constants.

        This test verifies:
        - K, K′, L1, L2 and L3 vanish.
        - The census counts points, directions and times.

        Test steps:
        1. Estimate on a 32² grid with stride 8 over times 0 and 0.3.
        """
        constants = estimate_constants(euclidean(), MeasureSpec(), self.grid, [0.0, 0.3], stride=8)
        for name in ("K", "K_prime", "L1", "L2", "L3"):
            self.assertLessEqual(abs(getattr(constants, name)), 1e-12, name)
        self.assertEqual(constants.census["points"], 128)
        self.assertEqual(constants.census["samples"], 128 * 16 * 2)
        self.assertIn("L1", constants.locations)

    def test_shrinking_constants(self):
        """
        Test the constants of the shrinking Euclidean family.

        This test verifies:
        - L1 = λ since h = λg.
        - L2, L3, K and K′ vanish.
        - Too few directions are rejected.

        Test steps:
        1. Estimate with λ = 0.1 on a 32² grid with stride 8.
        """
        constants = estimate_constants(shrinking_scale(0.1), MeasureSpec(), self.grid, [0.0, 0.3], stride=8)
        self.assertAlmostEqual(constants.L1, 0.1, places=10)
        for name in ("K", "K_prime", "L2", "L3"):
            self.assertLessEqual(abs(getattr(constants, name)), 1e-10, name)
        with self.assertRaises(ConfigurationError):
            estimate_constants(euclidean(), MeasureSpec(), self.grid, [0.0], directions=8)

    def test_randers_shrinking_constants(self):
        """
        Test the constants of the shrinking Randers family.

        This test verifies:
        - L1 = λ since h = λg.
        - K′ is the squared dual norm of the τ-derivative at its recorded location.
        - K uses geodesic S-curvature close to the exact spray values.

        Test steps:
        1. Estimate with λ = 0.1 and b = 0.2 sin x² dx¹ on a 32² grid with stride 8.
        2. Recompute F*²(τ_|) at the location of K′.
        """
        metric = shrinking_scale(0.1, wave=(0.2, 0.0))
        constants = estimate_constants(metric, MeasureSpec(), self.grid, [0.0, 0.3], stride=8)
        self.assertAlmostEqual(constants.L1, 0.1, places=10)
        self.assertGreater(constants.K_prime, 0.0)
        self.assertAlmostEqual(constants.K_prime_unsquared ** 2, constants.K_prime, places=12)
        self.assertLess(constants.census["s_curvature_gap"], 1e-5)

        at = constants.locations["K_prime"]
        x, y, t = np.array([at["x"]]), np.array([at["y"]]), np.array([at["t"]])
        tau_h = calculus_for(metric, MeasureSpec()).evaluate("tau_horizontal", x, y, t)
        self.assertAlmostEqual(float(dual_norm(metric, x, t, tau_h)[0] ** 2), constants.K_prime, places=10)

    def test_epsilon_and_monotonicity(self):
        """
        Test the ε scan and the monotonicity of the bound.

        This test verifies:
        - Q decreases in ε, so the scan picks the cap.
        - The bound is nonincreasing in t and Q grows with every constant.

        Test steps:
        1. Scan ε up to 0.05 and up to K = 1.
        2. Evaluate bound_monotonicity on a time lattice.
        """
        constants = constants_with(L2=1.0)
        epsilon, q = min_over_epsilon(constants, 2.0, 4.0, 0.05)
        self.assertAlmostEqual(epsilon, 0.05)
        self.assertAlmostEqual(q, compute_q(constants, 2.0, 0.05, 4.0))
        epsilon, _ = min_over_epsilon(constants_with(K=1.0, L2=1.0), 2.0, 4.0, 1.0)
        self.assertAlmostEqual(epsilon, 1.0)

        result = bound_monotonicity(constants, EstimateConfig(), [0.05, 0.1, 0.2, 0.5])
        self.assertTrue(all(result.values()), result)
        self.assertGreater(gradient_bound(0.1, 2.0, 4.0, 0.0), gradient_bound(0.2, 2.0, 4.0, 0.0))

    def test_margin_report_tolerance(self):
        """
        Test the relative tolerance of margin reports.

        This test verifies:
        - A violation below 1e-6 × max|RHS| still passes.
        - A larger violation fails and is located.

        Test steps:
        1. Build reports with margins −5e-6 and −2e-5 against RHS 10.
        """
        constants = constants_with()
        samples = [{"node": [0, 0]}, {"node": [1, 1]}]
        report = MarginReport("x", np.array([10.0 + 5e-6, 0.0]), np.array([10.0, 10.0]), samples, constants, {},
                              0.0, 0.0)
        self.assertTrue(report.passed)
        report = MarginReport("x", np.array([0.0, 10.0 + 2e-5]), np.array([10.0, 10.0]), samples, constants, {},
                              0.0, 0.0)
        self.assertFalse(report.passed)
        self.assertEqual(report.location, {"node": [1, 1]})


class TestSweeps(unittest.TestCase):
    """
    Unit tests for the gradient-estimate and Harnack sweeps on flat and shrinking Randers trajectories.
    """
    @classmethod
    def setUpClass(cls):
        logging.basicConfig(level=logging.DEBUG)
        grid = build_grid((32, 32))
        cls.measure = MeasureSpec()
        u0 = ScalarField.from_function(grid, lambda x1, x2: 2.0 + np.cos(x1))
        cls.trajectory = run_heat_flow(euclidean(), cls.measure, u0, [0.05, 0.1, 0.2, 0.3])
        cls.constant = run_heat_flow(euclidean(), cls.measure, ScalarField(grid, np.full(grid.shape, 2.0)),
                                     [0.05, 0.1])
        cls.constants = estimate_constants(euclidean(), cls.measure, grid, [0.0, 0.3], stride=8)
        cls.config = EstimateConfig(check_times=(0.05, 0.1, 0.2))
        cls.randers_metric = shrinking_scale(0.1, wave=(0.2, 0.0))
        cls.randers = run_heat_flow(cls.randers_metric, cls.measure, u0, [0.05, 0.1, 0.2, 0.3])
        cls.randers_constants = estimate_constants(cls.randers_metric, cls.measure, grid, [0.0, 0.3], stride=8)

    def test_gradient_estimate(self):
        """
        Test the gradient-estimate sweep.

        This test verifies:
        - The flat trajectory passes with a positive minimum margin.
        - One per-stamp minimum is reported for each check time.
        - A constant solution has left side 0 everywhere and passes.

        Test steps:
        1. Sweep the flat trajectory at stamps 0.05, 0.1 and 0.2.
        2. Sweep the constant trajectory at 0.05 and 0.1.
        """
        report = gradient_estimate_check(self.trajectory, self.constants, self.config)
        self.assertTrue(report.passed)
        self.assertGreater(report.min_margin, 0.0)
        self.assertEqual([t for t, _ in report.stamp_minima], [0.05, 0.1, 0.2])
        self.assertEqual(np.size(report.lhs), 3 * 32 * 32)

        config = EstimateConfig(check_times=(0.05, 0.1))
        report = gradient_estimate_check(self.constant, self.constants, config)
        self.assertTrue(np.all(report.lhs == 0.0))
        self.assertTrue(report.passed)

    def test_harnack(self):
        """
        Test the Harnack sweep.

        This test verifies:
        - For x₁ = x₂ on a constant solution the log margin is Nα·log(t₂/t₁) + (Nα/2)·Q·(t₂ − t₁).
        - Seeded pairs are reproducible and respect the gap window.
        - The flat trajectory passes over random pairs.
        - A pair with t₁ ≥ t₂ raises DomainError.

        Test steps:
        1. Check one coincident pair on the constant trajectory.
        2. Draw pairs twice with the same seed and sweep them.
        """
        pair = HarnackPair((1.0, 2.0), (1.0, 2.0), 0.05, 0.1)
        report = harnack_check(self.constant, self.constants, self.config, [pair])
        q = compute_q(self.constants, 2.0, 0.05, 4.0)
        expected = 8.0 * math.log(2.0) + 4.0 * q * 0.05
        self.assertAlmostEqual(report.min_margin, expected, places=9)
        self.assertTrue(report.passed)

        harnack = HarnackConfig(pairs=10)
        pairs = draw_pairs(self.trajectory, np.random.default_rng(7), harnack)
        self.assertEqual(pairs, draw_pairs(self.trajectory, np.random.default_rng(7), harnack))
        for p in pairs:
            self.assertGreaterEqual(p.t2 - p.t1, 0.05 - 1e-12)
            self.assertLessEqual(p.t2 - p.t1, 0.3 + 1e-12)
        self.assertTrue(harnack_check(self.trajectory, self.constants, self.config, pairs, harnack).passed)

        with self.assertRaises(DomainError):
            harnack_check(self.constant, self.constants, self.config, [HarnackPair((0, 0), (1, 1), 0.1, 0.1)])

    def test_randers_sweeps(self):
        """
        Test both sweeps on a shrinking Randers trajectory.

        This test verifies:
        - The gradient estimate holds at every node with a positive minimum margin.
        - The Harnack inequality holds over seeded random pairs.
        - Q includes the L1 = λ contribution of the shrinking family.

        Test steps:
        1. Sweep the Randers trajectory at stamps 0.05, 0.1 and 0.2.
        2. Draw 10 pairs and sweep them.
        """
        report = gradient_estimate_check(self.randers, self.randers_constants, self.config)
        self.assertTrue(report.passed)
        self.assertGreater(report.min_margin, 0.0)
        self.assertEqual(np.size(report.lhs), 3 * 32 * 32)

        harnack = HarnackConfig(pairs=10)
        pairs = draw_pairs(self.randers, np.random.default_rng(7), harnack)
        report = harnack_check(self.randers, self.randers_constants, self.config, pairs, harnack)
        self.assertTrue(report.passed)
        self.assertGreater(report.min_margin, 0.0)

        flat_q = compute_q(self.constants, 2.0, 0.05, 4.0)
        self.assertGreater(compute_q(self.randers_constants, 2.0, 0.05, 4.0), flat_q + 0.1)

    def test_static_reduction(self):
        """
        Test the static specialization of the constants.

        This test verifies:
        - Forcing L1 = L2 = L3 = 0 on the flat torus changes nothing.
        - A shrinking family is refused.
        - The ε-tuned sweep keeps the verdict.

        Test steps:
        1. Compare estimated and forced constants on the flat trajectory.
        2. Relabel the trajectory with a shrinking family.
        """
        record = static_reduction_compare(self.trajectory, self.constants, self.config)
        self.assertTrue(record.agrees)
        self.assertTrue(record.to_dict()["agrees"])
        shrinking = dataclasses.replace(self.trajectory, metric=shrinking_scale(0.1))
        with self.assertRaises(DomainError):
            static_reduction_compare(shrinking, self.constants, self.config)

        stability = epsilon_stability(self.trajectory, self.constants, self.config)
        self.assertTrue(stability["stable"])
        self.assertTrue(stability["passed"])


if __name__ == "__main__":
    unittest.main()
