"""Tests for Lambda orbits, kernel functions and eigenfunctions."""

import unittest

import numpy as np
from numpy.testing import assert_allclose

from src.core.errors import CollinearDegenerate, NonIntegerEigenvalue, OffSurface
from src.core.model import LinearChart, ParticleSystem, PrincipalAxesChart, shape_linear, shape_quadratic
from src.core.operators import sample_surface
from src.core.residual import (
    check_eigenfunction,
    eigenfunction_linear,
    eigenfunction_quadratic,
    kernel_gaussian,
    kernel_invariants,
    omega_factor,
    orbit_invariants_check,
    orbit_linear,
    orbit_period,
    orbit_quadratic,
    quantization_ratio_check,
    verify_generator,
)


def principal_points(sys, n, rng, min_omega=0.05):
    pts = sample_surface(sys, "principal_axes", None, 4 * n, rng)
    vals = shape_quadratic(sys, pts)
    return pts[omega_factor(vals.Q, vals.R2) > min_omega][:n]


class TestLinearOrbits(unittest.TestCase):

    def setUp(self):
        self.sys = ParticleSystem([1.0, 2.0, 3.0])
        self.chart = LinearChart([0.4, -0.3, 0.1], [0.9, 0.5, -0.7])
        self.x0 = sample_surface(self.sys, "linear", self.chart, 3, np.random.default_rng(0))

    def test_unit_frequency(self):
        assert_allclose(orbit_linear(self.sys, self.chart, self.x0, 2 * np.pi), self.x0, atol=1e-12)
        assert_allclose(orbit_linear(self.sys, self.chart, self.x0, 0.0), self.x0, atol=1e-15)

    def test_shape_values_conserved(self):
        path = orbit_linear(self.sys, self.chart, self.x0[0], np.linspace(0, 5, 11))
        vals = shape_linear(self.sys, path, self.chart)
        start = shape_linear(self.sys, self.x0[0], self.chart)
        assert_allclose(vals.s, 0.0, atol=1e-12)
        assert_allclose(vals.q, start.q, rtol=1e-12)

    def test_kernel_invariants_conserved(self):
        path = orbit_linear(self.sys, self.chart, self.x0[1], np.linspace(0, 3, 7))
        rho = kernel_invariants(self.sys, self.chart, path)
        assert_allclose(rho, np.broadcast_to(rho[0], rho.shape), rtol=1e-12)

    def test_off_surface_start(self):
        with self.assertRaises(OffSurface):
            orbit_linear(self.sys, self.chart, np.ones(6), 0.3)

    def test_invariants_report(self):
        report = orbit_invariants_check(self.sys, self.chart, self.x0)
        self.assertTrue(report.passed, report.to_dict())
        self.assertEqual(len(report.rows), 3)
        self.assertTrue(np.isnan(report.rows[0]["period_dev"]))


class TestPrincipalAxesOrbits(unittest.TestCase):

    def setUp(self):
        self.sys = ParticleSystem([1.0, 2.0, 3.0])
        self.x0 = principal_points(self.sys, 3, np.random.default_rng(1))

    def test_closes_after_period(self):
        for x in self.x0:
            period = float(orbit_period(self.sys, x))
            assert_allclose(orbit_quadratic(self.sys, x, period), x, atol=1e-10 * np.max(np.abs(x)))

    def test_shape_values_conserved(self):
        path = orbit_quadratic(self.sys, self.x0[0], np.linspace(0, 4, 9))
        vals = shape_quadratic(self.sys, path)
        start = shape_quadratic(self.sys, self.x0[0])
        assert_allclose(vals.S, 0.0, atol=1e-12 * start.R2)
        assert_allclose(vals.Q, start.Q, rtol=1e-12, atol=1e-12 * start.R2)
        assert_allclose(vals.R2, start.R2, rtol=1e-12)

    def test_collinear_shape(self):
        collinear = np.array([1.0, 0.0, -1.0, 0.0, 0.5, 0.0])
        with self.assertRaises(CollinearDegenerate):
            orbit_quadratic(self.sys, collinear, 0.5)
        with self.assertRaises(CollinearDegenerate):
            orbit_period(self.sys, collinear)

    def test_invariants_report(self):
        report = orbit_invariants_check(self.sys, PrincipalAxesChart(), self.x0)
        self.assertTrue(report.passed, report.to_dict())
        self.assertLess(report.max_of("period_dev"), 1e-10)


class TestEigenfunctions(unittest.TestCase):

    def setUp(self):
        self.sys = ParticleSystem([1.0, 2.0, 3.0])
        self.chart = LinearChart([0.4, -0.3, 0.1], [0.9, 0.5, -0.7])
        self.rng = np.random.default_rng(6)

    def test_linear_integer_eigenvalue(self):
        pts = sample_surface(self.sys, "linear", self.chart, 30, self.rng)
        kernel = kernel_gaussian(self.sys, self.chart, 2.0, poly=(1.0, 0.2))
        psi = eigenfunction_linear(self.sys, self.chart, [1, -2, 0], kernel)
        report = check_eigenfunction(self.sys, self.chart, psi, pts)
        self.assertTrue(report.passed, report.to_dict())
        assert_allclose(report.eigenvalues, -1.0)

    def test_kernel_is_annihilated(self):
        pts = sample_surface(self.sys, "linear", self.chart, 20, self.rng)
        psi = eigenfunction_linear(self.sys, self.chart, [0, 0, 0],
                                   kernel_gaussian(self.sys, self.chart, [1.0, 1.5, 2.0]))
        self.assertTrue(check_eigenfunction(self.sys, self.chart, psi, pts).passed)

    def test_principal_axes_eigenvalue(self):
        pts = principal_points(self.sys, 30, self.rng)
        kernel = kernel_gaussian(self.sys, PrincipalAxesChart(), 2.0, radial_width=3.0)
        psi = eigenfunction_quadratic(self.sys, [2, 0, -1], kernel)
        report = check_eigenfunction(self.sys, PrincipalAxesChart(), psi, pts)
        self.assertTrue(report.passed, report.to_dict())
        vals = shape_quadratic(self.sys, pts)
        assert_allclose(report.eigenvalues, omega_factor(vals.Q, vals.R2))

    def test_equal_moments_give_integer(self):
        x = principal_points(self.sys, 1, self.rng)[0]
        px = np.sum(self.sys.masses * x[0::2] ** 2)
        py = np.sum(self.sys.masses * x[1::2] ** 2)
        x[0::2] *= np.sqrt(py / px)
        psi = eigenfunction_quadratic(self.sys, [1, 1, 1])
        report = check_eigenfunction(self.sys, PrincipalAxesChart(), psi, x[None, :])
        self.assertTrue(report.passed, report.to_dict())
        self.assertAlmostEqual(float(report.eigenvalues[0]), 3.0, places=12)

    def test_quantization_ratio(self):
        pts = principal_points(self.sys, 10, self.rng)
        vals = shape_quadratic(self.sys, pts)
        omegas = omega_factor(vals.Q, vals.R2)
        out = quantization_ratio_check(self.sys, [1, 0, 1], pts[np.argmax(omegas)], pts[np.argmin(omegas)])
        self.assertLess(out["deviation"], 1e-9 * max(1.0, out["predicted_ratio"]))
        self.assertLess(out["imag_max"], 1e-9)
        with self.assertRaises(ValueError):
            quantization_ratio_check(self.sys, [1, -1, 0], pts[0], pts[1])

    def test_winding_numbers_validated(self):
        with self.assertRaises(NonIntegerEigenvalue):
            eigenfunction_linear(self.sys, self.chart, [0.5, 1, 0])
        with self.assertRaises(NonIntegerEigenvalue):
            eigenfunction_quadratic(self.sys, [1, 2.25, 0])
        with self.assertRaises(ValueError):
            eigenfunction_linear(self.sys, self.chart, [1, 2])
        psi = eigenfunction_linear(self.sys, self.chart, [1.0, 2.0, -1.0])
        self.assertEqual(psi.integers, (1, 2, -1))


class TestGenerator(unittest.TestCase):

    def test_orbit_derivative_matches_lambda(self):
        sys = ParticleSystem([1.0, 2.0, 3.0])
        rng = np.random.default_rng(8)
        chart = LinearChart([0.4, -0.3, 0.1], [0.9, 0.5, -0.7])
        lin = verify_generator(sys, chart, sample_surface(sys, "linear", chart, 5, rng))
        self.assertTrue(lin.passed, lin.to_dict())
        pa = verify_generator(sys, PrincipalAxesChart(), principal_points(sys, 5, rng))
        self.assertTrue(pa.passed, pa.to_dict())
        self.assertEqual(pa.gauge_kind, "principal_axes")


if __name__ == '__main__':
    unittest.main()
