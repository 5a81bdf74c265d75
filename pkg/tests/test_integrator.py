"""Tests for the Dormand-Prince integrator."""

import unittest

import numpy as np
from numpy.testing import assert_allclose

from src.core.errors import StepFailure
from src.utils.integrator import DormandPrince54


def oscillator(t, y):
    return np.array([y[1], -y[0]])


class TestDormandPrince54(unittest.TestCase):
    """Test accuracy, output grid and failure modes."""

    def test_harmonic_oscillator(self):
        solver = DormandPrince54(oscillator, rtol=1e-10, atol=1e-12)
        times = np.linspace(0.0, 10.0, 11)
        ys = solver.integrate(np.array([1.0, 0.0]), times)
        assert_allclose(ys[:, 0], np.cos(times), atol=1e-8)
        assert_allclose(ys[:, 1], -np.sin(times), atol=1e-8)
        self.assertGreater(solver.n_accepted, 0)

    def test_error_decreases_with_tolerance(self):
        errors = []
        for rtol in (1e-6, 1e-9):
            ys = DormandPrince54(oscillator, rtol=rtol, atol=rtol * 1e-2).integrate(
                np.array([1.0, 0.0]), np.array([0.0, 5.0]))
            errors.append(abs(ys[-1, 0] - np.cos(5.0)))
        self.assertLess(errors[1], errors[0])

    def test_projection_applied(self):
        def renormalize(y):
            return y / np.linalg.norm(y)

        solver = DormandPrince54(oscillator, rtol=1e-6, atol=1e-8, project=renormalize)
        ys = solver.integrate(np.array([2.0, 0.0]), np.linspace(0.0, 3.0, 7))
        assert_allclose(np.linalg.norm(ys, axis=1), 1.0, atol=1e-14)

    def test_step_limit(self):
        solver = DormandPrince54(oscillator, rtol=1e-12, atol=1e-14, max_steps=3)
        with self.assertRaises(StepFailure):
            solver.integrate(np.array([1.0, 0.0]), np.array([0.0, 100.0]))

    def test_blow_up_fails(self):
        solver = DormandPrince54(lambda t, y: y ** 2, rtol=1e-8, atol=1e-10)
        with self.assertRaises(StepFailure):
            solver.integrate(np.array([1.0]), np.array([0.0, 2.0]))


if __name__ == '__main__':
    unittest.main()
