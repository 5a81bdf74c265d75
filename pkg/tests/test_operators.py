"""Tests for first-order operators, constrained momenta and the commutator algebra."""

import unittest

import numpy as np
from numpy.testing import assert_allclose

from src.core.errors import DimensionMismatch
from src.core.gauge import constraint_matrix, eckart_chart, equilibrium_from
from src.core.model import LinearChart, ParticleSystem, shape_linear
from src.core.operators import (
    GAUGE_KINDS,
    AlgebraReport,
    FirstOrderOperator,
    commutator,
    complex_step_jacobian,
    lab_momentum_check,
    lambda_eckart,
    lambda_linear,
    lambda_quadratic,
    linear_combination,
    pi_linear,
    pi_linear_cm,
    position_operator,
    sample_surface,
    verify_algebra,
)
from src.utils.wavefunctions import gaussian_bump


def rotation_field(x):
    out = np.empty_like(x)
    out[..., 0] = -x[..., 1]
    out[..., 1] = x[..., 0]
    return out


class TestFirstOrderOperator(unittest.TestCase):

    def test_complex_step_jacobian(self):
        fn = lambda z: np.stack([z[..., 0] ** 2, z[..., 0] * z[..., 1]], axis=-1)
        jac = complex_step_jacobian(fn, np.array([2.0, 3.0]))
        assert_allclose(jac[0], [[4.0, 0.0], [3.0, 2.0]], atol=1e-15)

    def test_canonical_commutator(self):
        """[x_j, p_k] = i delta_jk."""
        x = np.random.default_rng(0).normal(size=(4, 2))
        p = FirstOrderOperator(2, coeff=lambda z: np.broadcast_to([0.0, 1.0], z.shape), name="p_y")
        for j, expected in enumerate([0.0, 1.0]):
            k = commutator(position_operator(2, j), p)
            assert_allclose(k.multiplier(x), expected)

    def test_rotation_commutator(self):
        x = np.random.default_rng(1).normal(size=(4, 2))
        rot = FirstOrderOperator(2, coeff=rotation_field, name="L")
        px = FirstOrderOperator(2, coeff=lambda z: np.broadcast_to([1.0, 0.0], z.shape), name="p_x")
        k = commutator(rot, px)
        assert_allclose(k.coefficients(x), np.broadcast_to([0.0, 1.0], x.shape), atol=1e-14)

    def test_apply(self):
        psi = gaussian_bump([0.3, -0.2], 0.8, wave_vector=[0.5, 0.1])
        x = np.random.default_rng(2).normal(size=(5, 2))
        rot = FirstOrderOperator(2, coeff=rotation_field, name="L")
        expected = -1j * np.sum(rotation_field(x) * psi.grad(x), axis=-1)
        assert_allclose(rot.apply(psi, x), expected)
        doubled = rot.scaled(2.0).add(position_operator(2, 0))
        assert_allclose(doubled.apply(psi, x), 2 * expected + x[:, 0] * psi(x))

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            commutator(position_operator(2, 0), position_operator(4, 0))
        with self.assertRaises(DimensionMismatch):
            linear_combination([position_operator(2, 0), position_operator(4, 1)], [1.0, 1.0])
        with self.assertRaises(DimensionMismatch):
            position_operator(4, 0).apply(gaussian_bump([0.0, 0.0], 1.0), np.zeros((1, 2)))


class TestConstrainedMomenta(unittest.TestCase):

    def setUp(self):
        self.sys = ParticleSystem([1.0, 2.0, 1.5])
        self.chart = LinearChart([0.3, -0.5, 0.2], [1.0, 0.4, -0.6])
        self.rng = np.random.default_rng(3)

    def test_pi_fields_tangent(self):
        x = sample_surface(self.sys, "linear", self.chart, 10, self.rng)
        rows = constraint_matrix(self.sys, self.chart)
        fields = np.stack([p.coefficients(x) for p in pi_linear(self.sys, self.chart)], axis=-1)
        assert_allclose(np.einsum("ci,pik->pck", rows, fields), 0.0, atol=1e-13)

    def test_cm_momenta_sum_to_zero(self):
        sys = ParticleSystem([1.0, 1.0, 2.0])
        A = np.array([1.0, -0.5, -0.25])
        B = np.array([0.2, 0.6, -0.4])
        chart = LinearChart(A, B, with_cm=True)
        x = sample_surface(sys, "linear_cm", chart, 5, self.rng)
        pis = pi_linear_cm(sys, chart)
        total = sum(p.coefficients(x) for p in pis[0::2])
        assert_allclose(total, 0.0, atol=1e-13)

    def test_lambda_keeps_surface(self):
        x = sample_surface(self.sys, "linear", self.chart, 10, self.rng)
        lam = lambda_linear(self.sys, self.chart)
        rows = constraint_matrix(self.sys, self.chart)
        assert_allclose(lam.coefficients(x) @ rows.T, 0.0, atol=1e-12)
        self.assertTrue(np.all(shape_linear(self.sys, x, self.chart).q != 0))

    def test_eckart_lambda_vanishes_at_equilibrium(self):
        Z = equilibrium_from(self.sys, self.rng.normal(size=6)).Z
        lam = lambda_eckart(self.sys, Z)
        assert_allclose(lam.coefficients(np.zeros(6)), 0.0, atol=1e-13)
        delta = self.rng.normal(scale=0.1, size=(4, 6))
        full = lambda_linear(self.sys, eckart_chart(Z))
        assert_allclose(lam.coefficients(delta), full.coefficients(Z + delta), atol=1e-13)
        assert_allclose(lam.jacobian(delta), full.jacobian(Z + delta))

    def test_lambda_quadratic_keeps_principal_axes(self):
        x = sample_surface(self.sys, "principal_axes", None, 10, self.rng)
        lam = lambda_quadratic(self.sys)
        mv = self.sys.mass_vector
        swapped = np.empty_like(x)
        swapped[:, 0::2] = x[:, 1::2]
        swapped[:, 1::2] = x[:, 0::2]
        assert_allclose(np.sum(mv * swapped * lam.coefficients(x), axis=-1), 0.0, atol=1e-12)


class TestVerifyAlgebra(unittest.TestCase):
    """Every identity of every gauge holds on random surface points."""

    def test_linear(self):
        report = verify_algebra("linear", n_points=40, seed=1)
        self.assertTrue(report.passed, [r.to_dict() for r in report.results if not r.passed])
        self.assertTrue(any(r.identity_id.startswith("constraint:") for r in report.results))

    def test_linear_cm(self):
        report = verify_algebra("linear_cm", n_points=40, seed=2, n_particles=4)
        self.assertTrue(report.passed, [r.to_dict() for r in report.results if not r.passed])
        ids = {r.identity_id for r in report.results}
        self.assertIn("constraint:total_momentum", ids)
        self.assertIn("cmm1:pi_pi", ids)

    def test_principal_axes(self):
        report = verify_algebra("principal_axes", n_points=40, seed=3)
        self.assertTrue(report.passed, [r.to_dict() for r in report.results if not r.passed])
        self.assertIn("closure:lambda_pi", {r.identity_id for r in report.results})

    def test_report_dict(self):
        report = verify_algebra("linear", n_points=5, seed=0)
        data = report.to_dict()
        self.assertEqual(data["gauge_kind"], "linear")
        self.assertEqual(len(data["identities"]), len(report.results))
        self.assertEqual(len(data["identities"][0]["point_of_max"]), 6)

    def test_sharded_run_matches_serial(self):
        for kind in GAUGE_KINDS:
            with self.subTest(gauge_kind=kind):
                serial = verify_algebra(kind, n_points=30, seed=4)
                sharded = verify_algebra(kind, n_points=30, seed=4, n_workers=4)
                self.assertEqual([r.identity_id for r in sharded.results],
                                 [r.identity_id for r in serial.results])
                self.assertEqual(sharded.n_points, 30)
                self.assertEqual(sharded.passed, serial.passed)
                assert_allclose([r.max_dev for r in sharded.results],
                                [r.max_dev for r in serial.results], atol=1e-12)

    def test_more_workers_than_points(self):
        report = verify_algebra("principal_axes", n_points=2, seed=5, n_workers=6)
        self.assertEqual(report.n_points, 2)
        self.assertTrue(report.passed)
        with self.assertRaises(ValueError):
            verify_algebra("linear", n_workers=0)

    def test_merge_keeps_largest_deviation(self):
        def shard(points, devs):
            report = AlgebraReport("linear", len(points), 1e-3)
            for identity_id, dev in zip(("first", "second"), devs):
                report.add(identity_id, np.asarray(dev), np.asarray(points), 1e-3)
            return report

        a = shard([[0.0, 1.0], [2.0, 3.0]], [[1e-4, 2e-3], [5e-4, 1e-4]])
        b = shard([[4.0, 5.0]], [[1e-5], [6e-4]])
        c = shard([[6.0, 7.0]], [[3e-3], [1e-6]])
        merged = a.merge(b)
        self.assertEqual(merged.n_points, 3)
        first, second = merged.results
        self.assertEqual(first.point_of_max, [2.0, 3.0])
        self.assertFalse(first.passed)
        self.assertEqual(second.point_of_max, [4.0, 5.0])
        self.assertAlmostEqual(second.max_dev, 6e-4)
        self.assertTrue(second.passed)
        self.assertEqual(merged.merge(c).to_dict(), a.merge(b.merge(c)).to_dict())
        with self.assertRaises(ValueError):
            a.merge(AlgebraReport("linear", 0, 1e-3))

    def test_unknown_kind(self):
        with self.assertRaises(ValueError):
            verify_algebra("eckart")
        with self.assertRaises(ValueError):
            verify_algebra("linear", n_points=0)


class TestLabMomentum(unittest.TestCase):

    def test_body_frame_expression(self):
        sys = ParticleSystem([1.0, 2.0])
        chart = LinearChart([0.4, -0.2], [1.0, 0.5])
        psi = gaussian_bump([1.0, 0.2, -0.5, 0.1], 1.2, slope=[0.1, 0.2, -0.1, 0.3])
        points = np.random.default_rng(5).normal(size=(8, 4))
        for ell_z in (0, 2):
            report = lab_momentum_check(sys, chart, psi, ell_z, points)
            self.assertTrue(report.passed, report.to_dict())

    def test_cm_chart_rejected(self):
        sys = ParticleSystem([1.0, 1.0])
        chart = LinearChart([1.0, -1.0], [0.5, -0.5], with_cm=True)
        with self.assertRaises(ValueError):
            lab_momentum_check(sys, chart, gaussian_bump([0.0] * 4, 1.0), 0, np.ones((1, 4)))


if __name__ == '__main__':
    unittest.main()
