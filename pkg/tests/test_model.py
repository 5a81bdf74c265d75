"""Tests for particle systems, charts and shape functionals."""

import unittest

import numpy as np
from numpy.testing import assert_allclose

from src.core.errors import CoincidentParticles
from src.core.model import (
    EquilibriumShape,
    LinearChart,
    ParticleSystem,
    angular_momentum_lab,
    angular_momentum_rotating,
    center_of_mass,
    coulomb2d_potential,
    covariant_velocity,
    harmonic_trap,
    potential_energy,
    potential_gradient,
    shape_linear,
    shape_quadratic,
    spring_potential,
)
from src.core.gauge import rotate


class TestParticleSystem(unittest.TestCase):
    """Test system construction."""

    def test_rejects_nonpositive_mass(self):
        with self.assertRaises(ValueError):
            ParticleSystem([1.0, 0.0])
        with self.assertRaises(ValueError):
            ParticleSystem([1.0], hbar=-1.0)

    def test_derived_sizes(self):
        sys = ParticleSystem([1.0, 2.0, 3.0])
        self.assertEqual(sys.n_particles, 3)
        self.assertEqual(sys.dim, 6)
        self.assertEqual(sys.total_mass, 6.0)
        assert_allclose(sys.mass_vector, [1, 1, 2, 2, 3, 3])
        self.assertEqual(sys.with_masses([2.0, 2.0]).n_particles, 2)


class TestShapeFunctionals(unittest.TestCase):
    """Test shape values on hand-computed configurations."""

    def test_shape_linear(self):
        sys = ParticleSystem([1.0, 2.0])
        chart = LinearChart([1.0, 0.0], [0.0, 1.0])
        vals = shape_linear(sys, [1.0, 2.0, 3.0, 4.0], chart)
        self.assertAlmostEqual(float(vals.s), 9.0)
        self.assertAlmostEqual(float(vals.q), 4.0)
        self.assertAlmostEqual(vals.r2, 3.0)

    def test_shape_quadratic(self):
        sys = ParticleSystem([1.0, 1.0])
        vals = shape_quadratic(sys, [1.0, 0.0, 0.0, 2.0])
        self.assertAlmostEqual(float(vals.S), 0.0)
        self.assertAlmostEqual(float(vals.Q), -1.5)
        self.assertAlmostEqual(float(vals.R2), 5.0)

    def test_batched_shapes(self):
        sys = ParticleSystem([1.0, 2.0, 0.5])
        cfgs = np.random.default_rng(0).normal(size=(7, 6))
        vals = shape_quadratic(sys, cfgs)
        self.assertEqual(vals.S.shape, (7,))
        assert_allclose(vals.S[3], shape_quadratic(sys, cfgs[3]).S)

    def test_chart_validation(self):
        sys = ParticleSystem([1.0, 1.0])
        with self.assertRaises(ValueError):
            LinearChart([0.0, 0.0], [0.0, 0.0]).validate(sys)
        with self.assertRaises(ValueError):
            LinearChart([1.0], [0.0]).validate(sys)


class TestPotentials(unittest.TestCase):
    """Test potentials and their gradients."""

    def setUp(self):
        self.sys = ParticleSystem([1.0, 2.0, 3.0], pair_potential=spring_potential(1.5, 0.8),
                                  body_potential=harmonic_trap(0.7))
        self.cfg = np.array([0.9, -0.2, -0.4, 1.1, 0.3, -0.7])

    def test_gradient_matches_finite_differences(self):
        h = 1e-6
        numeric = np.array([(potential_energy(self.sys, self.cfg + h * e) -
                             potential_energy(self.sys, self.cfg - h * e)) / (2 * h)
                            for e in np.eye(6)])
        assert_allclose(potential_gradient(self.sys, self.cfg), numeric, rtol=1e-7, atol=1e-8)

    def test_coulomb_gradient(self):
        sys = ParticleSystem([1.0, 1.0], pair_potential=coulomb2d_potential(0.5))
        cfg = np.array([0.3, 0.1, -0.6, 0.4])
        d = np.hypot(0.9, -0.3)
        self.assertAlmostEqual(float(potential_energy(sys, cfg)), 0.5 * np.log(d))
        assert_allclose(potential_gradient(sys, cfg)[:2], 0.5 * np.array([0.9, -0.3]) / d ** 2)

    def test_coincident_singular_pair(self):
        sys = ParticleSystem([1.0, 1.0], pair_potential=coulomb2d_potential(1.0))
        with self.assertRaises(CoincidentParticles):
            potential_energy(sys, [0.5, 0.5, 0.5, 0.5])

    def test_potential_rotation_invariant(self):
        rotated = rotate(0.7, self.cfg)
        self.assertAlmostEqual(float(potential_energy(self.sys, rotated)),
                               float(potential_energy(self.sys, self.cfg)))


class TestConservedQuantities(unittest.TestCase):
    """Test angular momenta and center of mass."""

    def test_angular_momentum_rotation_invariant(self):
        sys = ParticleSystem([1.0, 2.0])
        rng = np.random.default_rng(1)
        cfg, vel = rng.normal(size=4), rng.normal(size=4)
        self.assertAlmostEqual(float(angular_momentum_lab(sys, rotate(1.1, cfg), rotate(1.1, vel))),
                               float(angular_momentum_lab(sys, cfg, vel)))

    def test_rotating_angular_momentum(self):
        sys = ParticleSystem([1.0, 3.0])
        cfg = np.array([1.0, 0.0, -0.5, 0.5])
        vel = np.zeros(4)
        dt = covariant_velocity(cfg, vel, 2.0)
        assert_allclose(dt, [0.0, -2.0, 1.0, 1.0])
        inertia = 1.0 + 3.0 * 0.5
        self.assertAlmostEqual(float(angular_momentum_rotating(sys, cfg, vel, 2.0)), -2.0 * inertia)

    def test_center_of_mass(self):
        sys = ParticleSystem([1.0, 3.0])
        assert_allclose(center_of_mass(sys, [4.0, 0.0, 0.0, 4.0]), [1.0, 3.0])


class TestEquilibriumShape(unittest.TestCase):

    def test_validate(self):
        sys = ParticleSystem([1.0, 1.0])
        EquilibriumShape([1.0, 0.0, -1.0, 0.0]).validate(sys)
        with self.assertRaises(ValueError):
            EquilibriumShape([1.0, 0.0, 0.0, 0.0]).validate(sys)
        with self.assertRaises(ValueError):
            EquilibriumShape([1.0, 1.0, -1.0, -1.0]).validate(sys)


if __name__ == '__main__':
    unittest.main()
