"""Tests for the lab and rotating-frame dynamics."""

import unittest

import numpy as np
from numpy.testing import assert_allclose

from src.core.dynamics import (
    FrameSpec,
    FrameState,
    body_state_from_lab,
    check_on_surface,
    gauge_equivalence_experiment,
    hamiltonian_classical,
    integrate,
    lab_energy,
    momenta_linear,
    momenta_quadratic,
    residual_angular_momentum_classical,
    residual_from_momenta,
    rotating_energy,
)
from src.core.errors import OffSurface
from src.core.model import (
    LinearChart,
    ParticleSystem,
    PrincipalAxesChart,
    angular_momentum_rotating,
    harmonic_trap,
    spring_potential,
)


def three_body():
    return ParticleSystem([1.0, 1.5, 2.0], pair_potential=spring_potential(1.0, 1.0),
                          body_potential=harmonic_trap(0.7))


CHART = LinearChart([0.3, -0.5, 0.2], [1.0, 0.4, -0.6])
CFG0 = np.array([1.0, 0.0, -0.5, 0.9, -0.4, -0.8])
VEL0 = np.array([0.1, 0.3, -0.2, 0.1, 0.05, -0.25])


class TestRotatingFrameQuantities(unittest.TestCase):
    """Test identities between lab and gauge-fixed quantities."""

    def setUp(self):
        self.sys = three_body()

    def test_body_state_linear(self):
        state = body_state_from_lab(self.sys, CHART, CFG0, VEL0)
        self.assertAlmostEqual(float(angular_momentum_rotating(self.sys, state.cfg, state.vel, state.xi)),
                               state.ell_z, places=12)
        self.assertAlmostEqual(float(rotating_energy(self.sys, state.cfg, state.vel, state.xi)),
                               float(lab_energy(self.sys, CFG0, VEL0)), places=12)

    def test_hamiltonian_equals_energy_linear(self):
        state = body_state_from_lab(self.sys, CHART, CFG0, VEL0)
        pi = momenta_linear(self.sys, CHART, state.cfg, state.vel, state.xi)
        h = hamiltonian_classical(self.sys, CHART, state.cfg, pi, state.ell_z)
        self.assertAlmostEqual(float(h), float(lab_energy(self.sys, CFG0, VEL0)), places=10)

    def test_hamiltonian_equals_energy_principal_axes(self):
        chart = PrincipalAxesChart()
        state = body_state_from_lab(self.sys, chart, CFG0, VEL0)
        pi = momenta_quadratic(self.sys, state.cfg, state.vel, state.xi)
        h = hamiltonian_classical(self.sys, chart, state.cfg, pi, state.ell_z)
        self.assertAlmostEqual(float(h), float(lab_energy(self.sys, CFG0, VEL0)), places=10)

    def test_residual_from_momenta(self):
        state = body_state_from_lab(self.sys, CHART, CFG0, VEL0)
        pi = momenta_linear(self.sys, CHART, state.cfg, state.vel, state.xi)
        exact = residual_angular_momentum_classical(self.sys, CHART, state.cfg, state.vel, state.ell_z)
        self.assertAlmostEqual(float(residual_from_momenta(state.cfg, pi)), float(exact), places=12)

    def test_off_surface(self):
        with self.assertRaises(OffSurface):
            check_on_surface(self.sys, CHART, CFG0)
        with self.assertRaises(OffSurface):
            momenta_quadratic(self.sys, CFG0, VEL0, 0.0)


class TestIntegration(unittest.TestCase):
    """Test the integration routes."""

    def setUp(self):
        self.sys = three_body()

    def test_lab_conservation(self):
        traj = integrate(self.sys, FrameSpec("lab"), FrameState(CFG0, VEL0), 5.0, rtol=1e-11, atol=1e-13,
                         n_samples=50)
        self.assertLess(np.max(np.abs(traj.L_z - traj.L_z[0])), 1e-9)
        self.assertLess(np.max(np.abs(traj.energy - traj.energy[0])), 1e-8)
        table = traj.to_frame()
        self.assertEqual(len(table), 51)
        self.assertEqual(list(table.columns[:4]), ["t", "frame", "x_1", "y_1"])
        self.assertTrue((table["frame"] == "lab").all())

    def test_body_via_lab_stays_on_surface(self):
        traj = integrate(self.sys, FrameSpec("body_via_lab", CHART), FrameState(CFG0, VEL0), 2.0,
                         rtol=1e-10, atol=1e-12, n_samples=20)
        self.assertLess(np.max(traj.gauge_residual), 1e-10)
        self.assertTrue(np.all(np.isfinite(traj.theta)))
        self.assertEqual(set(traj.to_frame()["frame"]), {"body"})

    def test_principal_axes_route(self):
        traj = integrate(self.sys, FrameSpec("body", PrincipalAxesChart()), FrameState(CFG0, VEL0), 2.0,
                         rtol=1e-10, atol=1e-12, n_samples=40)
        self.assertLess(np.max(traj.gauge_residual), 1e-10)
        self.assertLess(np.max(np.abs(np.diff(traj.theta))), np.pi / 2)

    def test_gauge_equivalence(self):
        report = gauge_equivalence_experiment(self.sys, CHART, FrameState(CFG0, VEL0), 3.0, tol=1e-11,
                                              n_samples=60, atol=1e-13)
        self.assertLess(report.max_body_deviation, 1e-6)
        self.assertLess(report.lz_drift, 1e-9)
        self.assertLess(report.max_gauge_residual, 1e-9)
        assert_allclose(report.rotating_route.L_z, report.lab_route.L_z[0], atol=1e-8)


if __name__ == '__main__':
    unittest.main()
