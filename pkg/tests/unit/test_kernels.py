# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import unittest

import numpy as np
from scipy import integrate
from specdens.v0.kernels import (
    KernelError,
    KernelFamily,
    KernelSpec,
    check_flatness,
    default_rate_kernel,
    evaluate,
    l2_norm_sq,
)

ALL_KERNELS = [
    KernelSpec(KernelFamily.TRUNCATED_POWER, lam=3),
    KernelSpec(KernelFamily.TRAPEZOID_FLAT_TOP, epsilon=0.4),
    KernelSpec(KernelFamily.BARTLETT),
    KernelSpec(KernelFamily.PARZEN),
]


class TestEvaluate(unittest.TestCase):
    def test_given_any_family_when_evaluated_at_origin_then_one(self):
        for spec in ALL_KERNELS:
            self.assertEqual(float(evaluate(spec, 0.0)), 1.0)

    def test_given_truncated_power_when_evaluated_at_support_edge_then_zero(self):
        spec = KernelSpec(KernelFamily.TRUNCATED_POWER, lam=3)

        self.assertEqual(float(spec(1.0)), 0.0)
        self.assertEqual(float(spec(1.5)), 0.0)

    def test_given_truncated_power_when_evaluated_at_half_then_formula_value(self):
        spec = KernelSpec(KernelFamily.TRUNCATED_POWER, lam=3)

        self.assertAlmostEqual(float(spec(0.5)), 0.9375)

    def test_given_random_points_when_evaluated_then_symmetric_and_bounded(self):
        rng = np.random.default_rng(0)
        u = rng.uniform(-1.5, 1.5, size=200)
        for spec in ALL_KERNELS:
            values = evaluate(spec, u)

            np.testing.assert_array_equal(values, evaluate(spec, -u))
            self.assertTrue(np.all((values >= 0) & (values <= 1)))

    def test_given_increasing_radius_when_evaluated_then_nonincreasing(self):
        r = np.linspace(0.0, 1.2, 500)
        for spec in ALL_KERNELS:
            self.assertTrue(np.all(np.diff(spec.profile(r)) <= 1e-15))

    def test_given_two_dimensional_kernel_when_evaluated_then_radial(self):
        spec = KernelSpec(KernelFamily.BARTLETT, d=2)

        values = evaluate(spec, np.array([[0.3, 0.4], [0.5, 0.0], [-0.4, 0.3]]))

        np.testing.assert_allclose(values, [0.5, 0.5, 0.5])

    def test_given_truncated_power_when_difference_quotients_taken_then_lipschitz(self):
        spec = KernelSpec(KernelFamily.TRUNCATED_POWER, lam=2)
        r = np.linspace(0.0, 1.0, 1001)

        slopes = np.abs(np.diff(spec.profile(r)) / np.diff(r))

        self.assertLessEqual(slopes.max(), spec.lam + 1 + 1e-9)

    def test_given_unknown_name_when_from_name_then_error_is_raised(self):
        with self.assertRaises(KernelError):
            KernelSpec.from_name("epanechnikov")

    def test_given_config_parameters_when_from_name_then_fields_are_set(self):
        spec = KernelSpec.from_name("truncated_power", **{"lambda": 3})

        self.assertEqual(spec.family, KernelFamily.TRUNCATED_POWER)
        self.assertEqual(spec.flatness_order, 3)


class TestL2NormSq(unittest.TestCase):
    def test_given_bartlett_when_l2_norm_sq_then_two_thirds(self):
        self.assertAlmostEqual(l2_norm_sq(KernelSpec(KernelFamily.BARTLETT)), 2.0 / 3.0)

    def test_given_truncated_power_order_one_when_l2_norm_sq_then_sixteen_fifteenths(self):
        spec = KernelSpec(KernelFamily.TRUNCATED_POWER, lam=1)

        self.assertAlmostEqual(l2_norm_sq(spec), 16.0 / 15.0)

    def test_given_wide_plateau_when_l2_norm_sq_then_close_to_indicator(self):
        spec = KernelSpec(KernelFamily.TRAPEZOID_FLAT_TOP, epsilon=0.999)

        self.assertAlmostEqual(l2_norm_sq(spec), 2.0, places=2)

    def test_given_parzen_when_l2_norm_sq_then_matches_quadrature(self):
        spec = KernelSpec(KernelFamily.PARZEN)

        expected, _ = integrate.quad(lambda x: float(spec(x)) ** 2, -1, 1, points=[-0.5, 0, 0.5])

        self.assertAlmostEqual(l2_norm_sq(spec), expected, places=10)

    def test_given_two_dimensional_bartlett_when_l2_norm_sq_then_polar_integral(self):
        spec = KernelSpec(KernelFamily.BARTLETT, d=2)

        # 2 pi * integral of r (1 - r)^2 over [0, 1] = 2 pi / 12
        self.assertAlmostEqual(l2_norm_sq(spec), np.pi / 6)

    def test_given_three_dimensions_when_l2_norm_sq_then_error_is_raised(self):
        with self.assertRaises(KernelError):
            l2_norm_sq(KernelSpec(KernelFamily.BARTLETT, d=3))


class TestCheckFlatness(unittest.TestCase):
    def test_given_bartlett_when_checked_at_order_one_then_fails(self):
        report = check_flatness(KernelSpec(KernelFamily.BARTLETT), 1)

        self.assertFalse(report.passed)

    def test_given_truncated_power_order_three_when_checked_then_passes(self):
        report = check_flatness(KernelSpec(KernelFamily.TRUNCATED_POWER, lam=3), 3)

        self.assertTrue(report.passed)
        self.assertEqual(sorted(report.differences), [1, 2, 3])

    def test_given_trapezoid_when_checked_up_to_six_then_passes(self):
        spec = KernelSpec(KernelFamily.TRAPEZOID_FLAT_TOP, epsilon=0.5)

        for lam in range(1, 7):
            self.assertTrue(check_flatness(spec, lam).passed)

    def test_given_truncated_power_order_one_when_checked_at_order_two_then_fails(self):
        report = check_flatness(KernelSpec(KernelFamily.TRUNCATED_POWER, lam=1), 2)

        self.assertFalse(report.passed)

    def test_given_order_above_six_when_checked_then_error_is_raised(self):
        with self.assertRaises(KernelError):
            check_flatness(KernelSpec(KernelFamily.BARTLETT), 7)

    def test_given_beta_when_default_rate_kernel_then_order_exceeds_beta(self):
        self.assertEqual(default_rate_kernel(1.0).lam, 2)
        self.assertEqual(default_rate_kernel(1.5).lam, 3)
