# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import math
import unittest

import numpy as np
from scipy import integrate, stats
from specdens.v0.estimator import EstimatorConfig, estimate_grid
from specdens.v0.geometry import SamplingDesign
from specdens.v0.kernels import KernelFamily, KernelSpec
from specdens.v0.rkhs import (
    EigenModel,
    RkhsError,
    RkhsFamily,
    RkhsSpec,
    brownian_cholesky_check,
    hs_norm_gram,
    interpolate,
    kernel,
    project_estimate,
    project_operator,
    projected_bias,
    trace_norm_gram,
)
from specdens.v0.simulate import ProcessSample


def gram_schmidt(spec: RkhsSpec) -> np.ndarray:
    """Coefficients of the kernel sections orthonormalized one after the other."""
    basis = []
    for i in range(spec.m):
        vector = np.eye(spec.m)[:, i]
        for previous in basis:
            vector = vector - (previous @ spec.gram @ vector) * previous
        basis.append(vector / math.sqrt(vector @ spec.gram @ vector))
    return np.column_stack(basis)


def quarter_sine(u):
    return np.sin(np.pi * np.asarray(u) / 2)


class TestRkhsSpec(unittest.TestCase):
    def test_given_brownian_nodes_when_spec_built_then_factor_reproduces_gram(self):
        spec = RkhsSpec(RkhsFamily.BROWNIAN, [0.1, 0.35, 0.4, 0.9])

        np.testing.assert_allclose(spec.gram_factor @ spec.gram_factor.T, spec.gram, atol=1e-15)

    def test_given_sobolev_nodes_when_spec_built_then_gram_adds_constant(self):
        spec = RkhsSpec.uniform(RkhsFamily.SOBOLEV1, 4)

        self.assertAlmostEqual(spec.gram[0, 3], 1.25)
        self.assertGreater(spec.condition_number, 1)

    def test_given_duplicate_nodes_when_spec_built_then_rkhs_error_raised(self):
        with self.assertRaises(RkhsError):
            RkhsSpec(RkhsFamily.BROWNIAN, [0.2, 0.2, 0.5])

    def test_given_node_at_zero_when_spec_built_then_rkhs_error_raised(self):
        with self.assertRaises(RkhsError):
            RkhsSpec(RkhsFamily.BROWNIAN, [0.0, 0.5])

    def test_given_brownian_nodes_when_solving_then_matches_dense_inverse(self):
        spec = RkhsSpec(RkhsFamily.BROWNIAN, [0.05, 0.3, 0.31, 0.7, 1.0])
        values = np.random.default_rng(0).standard_normal((5, 3))

        np.testing.assert_allclose(
            spec.solve(values), np.linalg.solve(spec.gram, values), atol=1e-9
        )


class TestInterpolate(unittest.TestCase):
    def test_given_single_node_when_interpolate_then_line_through_origin(self):
        spec = RkhsSpec(RkhsFamily.BROWNIAN, [1.0])

        interpolant = interpolate(spec, [2.0])

        u = np.linspace(0, 1, 11)
        np.testing.assert_allclose(interpolant(u), 2 * u, atol=1e-15)

    def test_given_identity_function_when_interpolate_then_reproduced_with_unit_norm(self):
        spec = RkhsSpec.uniform(RkhsFamily.BROWNIAN, 8)

        interpolant = interpolate(spec, spec.nodes)

        u = np.linspace(0, 1, 37)
        np.testing.assert_allclose(interpolant(u), u, atol=1e-12)
        self.assertAlmostEqual(interpolant.norm(), 1.0)

    def test_given_smooth_function_when_interpolate_then_exact_at_nodes(self):
        for family in RkhsFamily:
            spec = RkhsSpec(family, np.sort(np.random.default_rng(1).uniform(0.01, 1, 12)))

            interpolant = interpolate(spec, quarter_sine(spec.nodes))

            self.assertLessEqual(
                np.abs(interpolant(spec.nodes) - quarter_sine(spec.nodes)).max(), 1e-12
            )

    def test_given_smooth_function_when_interpolate_then_pointwise_error_bounded(self):
        spec = RkhsSpec(RkhsFamily.BROWNIAN, np.sort(np.random.default_rng(2).uniform(0, 1, 9)))
        norm = math.pi / math.sqrt(8)
        u = np.random.default_rng(3).uniform(0, 1, 200)

        error = np.abs(interpolate(spec, quarter_sine(spec.nodes))(u) - quarter_sine(u))

        distances = kernel(spec.family, u, u)[:, None] - 2 * kernel(
            spec.family, u[:, None], spec.nodes
        ) + kernel(spec.family, spec.nodes, spec.nodes)[None, :]
        bound = norm * np.sqrt(distances.min(axis=1))
        self.assertTrue(np.all(error <= bound + 1e-12))

    def test_given_perturbation_vanishing_on_nodes_when_norm_compared_then_interpolant_smaller(
        self,
    ):
        m = 6
        spec = RkhsSpec.uniform(RkhsFamily.BROWNIAN, m)
        interpolant = interpolate(spec, quarter_sine(spec.nodes))

        for epsilon in (0.05, -0.1, 0.3):

            def squared_slope(u, epsilon=epsilon):
                bump = epsilon * m * math.pi * math.cos(m * math.pi * u)
                return (float(interpolant.derivative(u)) + bump) ** 2

            perturbed, _ = integrate.quad(squared_slope, 0, 1, points=spec.nodes[:-1], limit=200)

            self.assertLess(interpolant.norm() ** 2, perturbed)


class TestBrownianCholesky(unittest.TestCase):
    def test_given_two_nodes_when_checked_then_exact(self):
        spec = RkhsSpec.uniform(RkhsFamily.BROWNIAN, 2)

        np.testing.assert_array_equal(spec.gram, [[0.5, 0.5], [0.5, 1.0]])
        self.assertEqual(brownian_cholesky_check(2), 0.0)

    def test_given_single_node_when_checked_then_exact(self):
        self.assertEqual(brownian_cholesky_check(1), 0.0)

    def test_given_many_nodes_when_checked_then_residual_negligible(self):
        self.assertLessEqual(brownian_cholesky_check(64), 1e-13)


class TestProjectOperator(unittest.TestCase):
    def setUp(self):
        self.spec = RkhsSpec(RkhsFamily.SOBOLEV1, [0.1, 0.3, 0.45, 0.8, 1.0])
        rng = np.random.default_rng(4)
        self.g = rng.standard_normal(5)
        self.h = rng.standard_normal(5)

    def test_given_rank_one_operator_when_projected_then_hs_norm_is_squared_h_norm(self):
        projected = project_operator(self.spec, np.outer(self.g, self.g))

        expected = self.g @ np.linalg.solve(self.spec.gram, self.g)
        self.assertAlmostEqual(hs_norm_gram(projected), expected, places=10)

    def test_given_projected_operator_when_projected_again_then_unchanged(self):
        once = project_operator(self.spec, np.outer(self.g, self.h))

        twice = project_operator(self.spec, once.node_kernel())

        np.testing.assert_allclose(twice.coeffs, once.coeffs, atol=1e-10)

    def test_given_operator_when_gram_norm_then_matches_explicit_orthonormal_basis(self):
        node_kernel = np.outer(self.g, self.h) + np.outer(self.h, self.h)
        projected = project_operator(self.spec, node_kernel)
        basis = gram_schmidt(self.spec)

        matrix = basis.T @ self.spec.gram @ projected.coeffs @ self.spec.gram @ basis

        self.assertAlmostEqual(hs_norm_gram(projected), np.linalg.norm(matrix), places=10)
        self.assertAlmostEqual(
            trace_norm_gram(projected), np.linalg.svd(matrix, compute_uv=False).sum(), places=10
        )

    def test_given_positive_operator_when_projected_then_trace_norm_shrinks(self):
        model = EigenModel.power_decay(2.0, 10)
        spec = RkhsSpec.uniform(RkhsFamily.BROWNIAN, 6)
        values = model.node_values(spec.nodes)

        projected = project_operator(spec, values @ np.diag(model.nus) @ values.T)

        self.assertLessEqual(trace_norm_gram(projected), model.nus.sum() + 1e-12)

    def test_given_wrong_shape_when_projected_then_rkhs_error_raised(self):
        with self.assertRaises(RkhsError):
            project_operator(self.spec, np.eye(3))


class TestProjectEstimate(unittest.TestCase):
    def test_given_node_value_sample_when_projected_then_each_frequency_projected(self):
        spec = RkhsSpec.uniform(RkhsFamily.BROWNIAN, 4)
        design = SamplingDesign.grid([30])
        sample = ProcessSample(design, np.random.default_rng(5).standard_normal((30, 4)))
        cfg = EstimatorConfig(5.0, KernelSpec(KernelFamily.BARTLETT), [[0.0], [1.0]])
        estimate = estimate_grid(sample, cfg)

        coeffs = project_estimate(spec, estimate)

        self.assertEqual(coeffs.shape, (2, 4, 4))
        np.testing.assert_allclose(
            coeffs[1], project_operator(spec, estimate.values[1]).coeffs, atol=1e-12
        )

    def test_given_estimate_with_other_frame_when_projected_then_rkhs_error_raised(self):
        spec = RkhsSpec.uniform(RkhsFamily.BROWNIAN, 3)
        sample = ProcessSample(SamplingDesign.grid([10]), np.ones((10, 2)))
        cfg = EstimatorConfig(2.0, KernelSpec(KernelFamily.BARTLETT), [[0.0]])

        with self.assertRaises(RkhsError):
            project_estimate(spec, estimate_grid(sample, cfg))


class TestProjectedBias(unittest.TestCase):
    def test_given_linear_eigenfunction_when_projected_bias_then_zero(self):
        for m in (1, 4, 16):
            spec = RkhsSpec.uniform(RkhsFamily.BROWNIAN, m)

            self.assertLessEqual(projected_bias(EigenModel.linear(), spec).bias, 1e-7)

    def test_given_growing_node_sets_when_projected_bias_then_decreasing(self):
        model = EigenModel.power_decay(3.0, 20)
        biases = [
            projected_bias(model, RkhsSpec.uniform(RkhsFamily.BROWNIAN, m)).bias
            for m in (8, 16, 32, 64, 128)
        ]

        self.assertTrue(np.all(np.diff(biases) < 0))

    def test_given_cubic_weights_when_slope_fitted_then_at_least_square_root_rate(self):
        model = EigenModel.power_decay(3.0, 20)
        ms = np.array([8, 16, 32, 64, 128])
        biases = [projected_bias(model, RkhsSpec.uniform(RkhsFamily.BROWNIAN, m)).bias for m in ms]

        slope = stats.linregress(np.log(ms), np.log(biases)).slope

        self.assertLessEqual(slope, -0.4)

    def test_given_truncated_weights_when_projected_bias_then_tail_reported(self):
        model = EigenModel.power_decay(3.0, 20)

        result = projected_bias(model, RkhsSpec.uniform(RkhsFamily.BROWNIAN, 8))

        expected = math.sqrt(sum(j**-6.0 for j in range(21, 20000)))
        self.assertAlmostEqual(result.tail_hs, expected, places=8)
        self.assertLess(result.tail_hs, 1e-3)

    def test_given_square_summable_check_when_weights_too_slow_then_rkhs_error_raised(self):
        with self.assertRaises(RkhsError):
            EigenModel.power_decay(0.5, 10)
