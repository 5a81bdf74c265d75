"""Tests for the radial solver, the polar reduction and the two-body spring."""

import unittest

import numpy as np
import pandas as pd
from numpy.testing import assert_allclose

from src.core.errors import GridTooCoarse
from src.core.gauge import equilibrium_from
from src.core.model import ParticleSystem, harmonic_trap
from src.core.spectra import (
    EckartSpringParams,
    RadialProblem,
    eckart_experiment,
    eckart_oracle,
    eckart_order_check,
    eckart_perturbative,
    n1_polar_spectrum,
    oscillator_function,
    radial_solve,
)
from src.utils.quadrature import gauss_hermite


class TestRadialSolve(unittest.TestCase):

    def test_shifted_oscillator(self):
        problem = RadialProblem(1.0, lambda r: 0.5 * (r - 10.0) ** 2, 2.0, 18.0)
        result = radial_solve(problem, 4)
        assert_allclose(result.eigenvalues, [0.5, 1.5, 2.5, 3.5], atol=1e-7)
        self.assertLess(result.max_error, 1e-7)
        self.assertEqual(result.eigenvectors.shape[1], 4)

    def test_wall_too_close(self):
        problem = RadialProblem(1.0, lambda r: 0.5 * (r - 10.0) ** 2, 9.0, 11.0)
        with self.assertRaises(GridTooCoarse):
            radial_solve(problem, 2)

    def test_invalid_problems(self):
        with self.assertRaises(ValueError):
            radial_solve(RadialProblem(1.0, lambda r: r, 0.0, 5.0), 1)
        with self.assertRaises(ValueError):
            radial_solve(RadialProblem(1.0, lambda r: r, 1.0, 5.0, n_points=50), 1)
        with self.assertRaises(ValueError):
            radial_solve(RadialProblem(1.0, lambda r: r, 1.0, 5.0, boundary="periodic"), 1)


class TestPolarSpectrum(unittest.TestCase):

    def test_trap_levels(self):
        """(2 n_r + |ell| + 1) hbar omega."""
        sys = ParticleSystem([1.0], body_potential=harmonic_trap(1.0))
        for ell in (0, -2):
            result = n1_polar_spectrum(sys, ell, 3)
            exact = np.array([2 * n + abs(ell) + 1 for n in range(3)], dtype=float)
            assert_allclose(result.eigenvalues, exact, rtol=1e-5)

    def test_scaled_units(self):
        sys = ParticleSystem([2.0], body_potential=harmonic_trap(0.5), hbar=0.7)
        result = n1_polar_spectrum(sys, 2, 2)
        assert_allclose(result.eigenvalues, [3 * 0.7 * 0.5, 5 * 0.7 * 0.5], rtol=1e-5)

    def test_rejects_bad_input(self):
        trap = harmonic_trap(1.0)
        with self.assertRaises(ValueError):
            n1_polar_spectrum(ParticleSystem([1.0, 1.0], body_potential=trap), 0, 1)
        with self.assertRaises(ValueError):
            n1_polar_spectrum(ParticleSystem([1.0], body_potential=trap), 0.5, 1)
        with self.assertRaises(ValueError):
            n1_polar_spectrum(ParticleSystem([1.0]), 0, 1)


class TestEckartSpring(unittest.TestCase):

    def test_epsilon_round_trip(self):
        params = EckartSpringParams.from_epsilon(0.03, m1=1.0, m2=3.0, k=2.0)
        self.assertAlmostEqual(params.epsilon, 0.03, places=14)
        self.assertAlmostEqual(params.mu, 0.75)
        Z = params.equilibrium().Z
        self.assertAlmostEqual(Z[0] - Z[2], params.a, places=12)
        units = params.units
        self.assertAlmostEqual(float(units.to_internal_energy(3.0 * units.energy)), 3.0, places=14)
        self.assertAlmostEqual(float(units.to_internal_length(params.a)), 1 / 0.03, places=10)

    def test_perturbative_levels(self):
        params = EckartSpringParams.from_epsilon(0.05)
        hw = params.units.energy
        level = eckart_perturbative(params, 2, 1)
        self.assertAlmostEqual(level.E0, 1.5 * hw)
        self.assertAlmostEqual(level.E1, 0.5 * hw * 0.05 ** 2 * 3.75)
        self.assertEqual(sorted(level.coefficients), [0, 2])
        self.assertAlmostEqual(level.coefficients[2], 0.05 ** 3 * 3.75)
        self.assertAlmostEqual(level.printed_coefficients[2], -0.5 * level.coefficients[2])
        self.assertEqual(sorted(eckart_perturbative(params, 0, 0).coefficients), [1])
        with self.assertRaises(ValueError):
            eckart_perturbative(params, 0, -1)

    def test_oracle_close_to_series(self):
        params = EckartSpringParams.from_epsilon(0.03)
        level = eckart_perturbative(params, 1, 0)
        oracle = eckart_oracle(params, 1, 0)
        self.assertAlmostEqual(oracle, level.E0 + level.E1, delta=1e-5 * params.units.energy)

    def test_sweep_fits(self):
        sweep = [EckartSpringParams.from_epsilon(e) for e in (0.05, 0.02, 0.03)]
        report = eckart_experiment(sweep, ells=[1], ns=[0, 1])
        self.assertEqual(len(report.rows), 6)
        self.assertEqual(len(report.fits), 2)
        self.assertTrue(report.passed, report.fits.to_dict("records"))

    def test_threaded_sweep_matches_serial(self):
        sweep = [EckartSpringParams.from_epsilon(e) for e in (0.05, 0.02, 0.03)]
        serial = eckart_experiment(sweep, ells=[1, 2], ns=[0], n_workers=1)
        threaded = eckart_experiment(sweep, ells=[1, 2], ns=[0], n_workers=4)
        pd.testing.assert_frame_equal(threaded.rows, serial.rows)
        pd.testing.assert_frame_equal(threaded.fits, serial.fits)
        self.assertEqual(list(threaded.rows["ell"]), [1, 1, 1, 2, 2, 2])
        with self.assertRaises(ValueError):
            eckart_experiment(sweep, ells=[1], ns=[0], n_workers=0)

    def test_sweep_rejects_large_epsilon(self):
        sweep = [EckartSpringParams.from_epsilon(e) for e in (0.05, 0.1, 0.2)]
        with self.assertRaises(ValueError):
            eckart_experiment(sweep, ells=[0], ns=[0])

    def test_oscillator_functions_normalized(self):
        nodes, weights = gauss_hermite(32)
        for m in range(5):
            norm = np.sum(weights * np.exp(nodes ** 2) * oscillator_function(m, nodes) ** 2)
            self.assertAlmostEqual(norm, 1.0, places=12)


class TestOrderCheck(unittest.TestCase):

    def setUp(self):
        self.sys = ParticleSystem([1.0, 2.0, 3.0])
        self.Z = equilibrium_from(self.sys, np.random.default_rng(5).normal(size=6))
        self.scales = [1e-2, 5e-3, 2.5e-3, 1.25e-3]

    def test_eckart_is_first_order(self):
        report = eckart_order_check(self.sys, self.Z, "eckart", self.scales, n_draws=4, seed=1)
        self.assertTrue(report.passed, report.to_dict())
        self.assertEqual(len(report.exponents), 4)

    def test_linearized_principal_axes_is_zeroth_order(self):
        report = eckart_order_check(self.sys, self.Z, "linearized_principal_axes", self.scales,
                                    n_draws=4, seed=1)
        self.assertTrue(report.passed, report.to_dict())

    def test_unknown_chart_kind(self):
        with self.assertRaises(ValueError):
            eckart_order_check(self.sys, self.Z, "linear", self.scales)


if __name__ == '__main__':
    unittest.main()
