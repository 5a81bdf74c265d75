"""Tests for quadrature rules."""

import unittest

import numpy as np
from numpy.testing import assert_allclose

from src.core.errors import QuadratureNotConverged
from src.utils.quadrature import (
    QuadratureSpec,
    gauss_hermite,
    gauss_legendre,
    integrate_box,
    sobol_rule,
    tensor_rule,
)


class TestRules(unittest.TestCase):

    def test_gauss_legendre_polynomial(self):
        x, w = gauss_legendre(-1.0, 2.0, 5)
        self.assertAlmostEqual(float(np.sum(w * x ** 9)), (2.0 ** 10 - 1.0) / 10, places=10)

    def test_gauss_hermite_moments(self):
        x, w = gauss_hermite(10)
        self.assertAlmostEqual(float(np.sum(w)), np.sqrt(np.pi), places=12)
        self.assertAlmostEqual(float(np.sum(w * x ** 2)), np.sqrt(np.pi) / 2, places=12)

    def test_tensor_rule_volume(self):
        nodes, weights = tensor_rule([0.0, -1.0], [2.0, 1.0], 4)
        self.assertEqual(nodes.shape, (16, 2))
        self.assertAlmostEqual(float(np.sum(weights)), 4.0)

    def test_sobol_rule_reproducible(self):
        a, _ = sobol_rule([0.0] * 5, [1.0] * 5, 6, seed=3)
        b, wb = sobol_rule([0.0] * 5, [1.0] * 5, 6, seed=3)
        assert_allclose(a, b)
        self.assertEqual(a.shape, (64, 5))
        self.assertAlmostEqual(float(np.sum(wb)), 1.0)


class TestIntegrateBox(unittest.TestCase):

    def test_gaussian_2d(self):
        result = integrate_box(lambda x: np.exp(-np.sum(x ** 2, axis=-1)), [-6.0, -6.0], [6.0, 6.0],
                               QuadratureSpec(order=32))
        self.assertAlmostEqual(result.value.real, np.pi, places=10)
        self.assertLess(result.error, 1e-8)

    def test_high_dimension_uses_sobol(self):
        spec = QuadratureSpec(order=12, tol=1e-2)
        result = integrate_box(lambda x: np.prod(np.cos(x), axis=-1), [0.0] * 5, [1.0] * 5, spec)
        self.assertAlmostEqual(result.value.real, np.sin(1.0) ** 5, places=3)
        self.assertEqual(result.n_points, 2 ** 13)

    def test_not_converged(self):
        spec = QuadratureSpec(order=2, tol=1e-12)
        with self.assertRaises(QuadratureNotConverged):
            integrate_box(lambda x: np.cos(40 * x[:, 0]), [0.0], [3.0], spec)
        loose = integrate_box(lambda x: np.cos(40 * x[:, 0]), [0.0], [3.0], spec, strict=False)
        self.assertGreater(loose.error, 1e-6)


if __name__ == '__main__':
    unittest.main()
