import logging
import math
import unittest

import numpy as np
import numpy.testing as npt

from finsflow.chart_grid import ScalarField, build_grid
from finsflow.errors import ConfigurationError, DomainError, SolverError
from finsflow.finsler_core import calculus_for
from finsflow.legendre_gradient import (
    LegendreSolveConfig, dual_norm, gradient_field, hessian_field, hessian_hs, legendre_solve, legendre_transform,
    linearized_metric,
)
from finsflow.metrics import euclidean, randers, riemannian_conformal


def randers_dual_norm(b, xi):
    """
    Closed-form dual of F = |y| + b·y with constant b.
    """
    b = np.asarray(b)
    beta = float(b @ b)
    b_xi = xi @ b
    return (np.sqrt((1.0 - beta) * np.sum(xi ** 2, axis=-1) + b_xi ** 2) - b_xi) / (1.0 - beta)


class TestLegendreGradient(unittest.TestCase):
    """
    Unit tests for the Legendre transform, gradients and Chern Hessians.
    """
    def setUp(self):
        logging.basicConfig(level=logging.DEBUG)
        rng = np.random.default_rng(5)
        self.x = rng.uniform(0.0, 2 * math.pi, size=(12, 2))
        self.xi = rng.normal(size=(12, 2))
        self.grid = build_grid((64, 64))

    def test_euclidean_and_conformal(self):
        """
        Test the Legendre transform of Riemannian families.

        This test verifies:
        - The Euclidean transform is the identity.
        - The conformal transform is ξ ↦ e^{−2φ}ξ.
        - ξ = 0 maps to y = 0.

        Test steps:
        1. Solve for random covectors on both families and compare with the closed forms.
        """
        npt.assert_allclose(legendre_solve(euclidean(), self.x, 0.0, self.xi), self.xi, atol=1e-12)

        a = 0.3
        y = legendre_solve(riemannian_conformal(a), self.x, 0.0, self.xi)
        expected = np.exp(-2 * a * np.cos(self.x[:, 0]))[:, None] * self.xi
        npt.assert_allclose(y, expected, atol=1e-11)

        npt.assert_allclose(legendre_transform(euclidean(), [0.1, 0.2], 0.0, [0.0, 0.0]), [0.0, 0.0])

    def test_randers_duality(self):
        """
        Test the Legendre transform of a Randers family with constant 1-form.

        This test verifies:
        - ½∂F²/∂y at the solution reproduces ξ.
        - F(L*ξ) equals F*(ξ) from the closed-form dual norm.
        - A warm start from the solution returns the same vectors.

        Test steps:
        1. Solve for 12 random covectors with b = (0.3, 0).
        2. Compare residual, norms and the warm-started solve.
        """
        metric = randers(const=(0.3, 0.0))
        y = legendre_solve(metric, self.x, 0.0, self.xi)
        calc = calculus_for(metric)
        residual = calc.evaluate("energy_gradient", self.x, y, np.zeros(12)) - self.xi
        npt.assert_allclose(residual, 0.0, atol=1e-11)

        expected = randers_dual_norm([0.3, 0.0], self.xi)
        npt.assert_allclose(metric.norm(np, self.x, y, 0.0), expected, rtol=1e-10)
        npt.assert_allclose(dual_norm(metric, self.x, 0.0, self.xi), expected, rtol=1e-10)

        warm = LegendreSolveConfig(initial_guess="warm-start")
        npt.assert_allclose(legendre_solve(metric, self.x, 0.0, self.xi, warm, initial=y), y, atol=1e-12)

    def test_solver_failure(self):
        """
        Test that an unreachable tolerance raises SolverError.

        This test verifies:
        - The error carries the final residual and the failing row.
        - Fewer than 8 iterations are rejected by the configuration.

        Test steps:
        1. Solve a Randers transform with tolerance 1e-300 and 8 iterations.
        2. Construct a config with max_iterations 4.
        """
        metric = randers(const=(0.3, 0.0), conformal_amplitude=0.2)
        config = LegendreSolveConfig(tolerance=1e-300, max_iterations=8)
        with self.assertRaises(SolverError) as context:
            legendre_solve(metric, self.x, 0.0, self.xi, config)
        self.assertGreaterEqual(context.exception.residual, 0.0)
        self.assertIsInstance(context.exception.node, int)

        with self.assertRaises(ConfigurationError):
            LegendreSolveConfig(max_iterations=4)

    def test_gradient_field(self):
        """
        Test the Finsler gradient of a grid field on the flat torus.

        This test verifies:
        - ∇u equals the discrete differential on the mask and vanishes off it.
        - F(∇u) and F*(du) coincide.

        Test steps:
        1. Compute the gradient of u = 2 + cos x¹ on a 64² grid.
        """
        u = ScalarField.from_function(self.grid, lambda x1, x2: 2.0 + np.cos(x1))
        gradient = gradient_field(euclidean(), u, 0.0)
        mask = u.mask
        npt.assert_allclose(gradient.vector.values[mask], u.differential[mask], atol=1e-12)
        npt.assert_allclose(gradient.vector.values[~mask], 0.0)
        npt.assert_allclose(gradient.norm, gradient.dual_norm, atol=1e-12)

    def test_gradient_traversal(self):
        """
        Test the row-by-row warm-started gradient of a Randers family.

        This test verifies:
        - The traversal reproduces a single batched solve seeded by the metric raise.
        - F(∇f) equals the closed-form F*(df) on the mask.
        - A failing solve names its (row, column) grid node.

        Test steps:
        1. Compute ∇f of f = sin x¹ + 0.5 cos x² for b = (0.3, 0) on a 64² grid.
        2. Repeat with an unreachable tolerance.
        """
        metric = randers(const=(0.3, 0.0))
        f = ScalarField.from_function(self.grid, lambda x1, x2: np.sin(x1) + 0.5 * np.cos(x2))
        gradient = gradient_field(metric, f, 0.0)
        mask = f.mask
        xi = np.where(mask[..., None], f.differential, 0.0).reshape(-1, 2)
        batched = legendre_solve(metric, self.grid.points(), 0.0, xi).reshape(self.grid.shape + (2,))
        npt.assert_allclose(gradient.vector.values, batched, atol=1e-10)
        npt.assert_allclose(gradient.norm[mask], randers_dual_norm([0.3, 0.0], f.differential[mask]),
                            rtol=1e-10, atol=1e-12)

        config = LegendreSolveConfig(tolerance=1e-300, max_iterations=8)
        with self.assertRaises(SolverError) as context:
            gradient_field(metric, f, 0.0, config)
        node = context.exception.node
        self.assertEqual(len(node), 2)
        self.assertTrue(0 <= node[0] < 64 and 0 <= node[1] < 64)

    def test_hessian_field(self):
        """
        Test the Chern Hessian on the flat torus.

        This test verifies:
        - f_{1|1} ≈ −cos x¹ and the Hilbert–Schmidt norm is |cos x¹| on the mask.
        - Off-mask nodes carry NaN.
        - hessian_hs refuses a critical node.

        Test steps:
        1. Compute the Hessian field of cos x¹ on a 64² grid.
        2. Query hessian_hs at nodes (5, 3) and (0, 0).
        """
        f = ScalarField.from_function(self.grid, lambda x1, x2: np.cos(x1))
        metric = euclidean()
        field = hessian_field(metric, f, 0.0)
        x1, _ = self.grid.coordinates()
        mask = field.mask
        self.assertTrue(mask.any())
        npt.assert_allclose(field.matrix[mask][:, 0, 0], -np.cos(x1[mask]), atol=1e-5)
        npt.assert_allclose(field.hs_norm[mask], np.abs(np.cos(x1[mask])), atol=1e-5)
        npt.assert_allclose(field.trace[mask], -np.cos(x1[mask]), atol=1e-5)
        self.assertTrue(np.isnan(field.hs_norm[~mask]).all())

        data = hessian_hs(metric, f, (5, 3), 0.0)
        self.assertAlmostEqual(data.hs_norm, abs(math.cos(5 * self.grid.spacing[0])), places=5)
        with self.assertRaises(DomainError):
            hessian_hs(metric, f, (0, 0), 0.0)

    def test_linearized_metric(self):
        """
        Test the fundamental tensor frozen at a reference direction.

        This test verifies:
        - The returned inverse inverts the returned tensor.
        - A zero reference raises DomainError.

        Test steps:
        1. Freeze a Randers metric at V = (1, 0).
        2. Freeze it at V = 0.
        """
        g, g_inv = linearized_metric(randers(wave=(0.2, 0.0)), [0.5, 1.0], 0.0, [1.0, 0.0])
        npt.assert_allclose(g @ g_inv, np.eye(2), atol=1e-12)
        with self.assertRaises(DomainError):
            linearized_metric(randers(wave=(0.2, 0.0)), [0.5, 1.0], 0.0, [0.0, 0.0])


if __name__ == "__main__":
    unittest.main()
