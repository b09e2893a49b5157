# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import itertools
import math
import unittest

import numpy as np
from specdens.v0.models import (
    CovarianceModel,
    PseudoCovariance,
    RhoFamily,
    ScalarCorrelation,
)
from specdens.v0.moments import (
    GaussianQuadruple,
    JointGaussianSpec,
    MomentsError,
    ProcessVariable,
    chi_square_cum4,
    chi_square_cum4_bruteforce,
    check_assumption_V,
    cum4,
    extra_isserlis,
    fourth_cumulant,
    isserlis_complex,
    joint_cumulant,
    linear_process_bound,
    pairings,
    set_partitions,
)
from specdens.v0.operator_core import CoordFrame, FrameMismatchError, OperatorRep
from specdens.v0.simulate import ChiSquareProcess, LinearProcess

EXPONENTIAL = ScalarCorrelation(RhoFamily.EXPONENTIAL, a=1.0)


def random_relation(m: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    mixing = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    return mixing @ mixing.T


def noncircular_scalar_model() -> CovarianceModel:
    pseudo = PseudoCovariance(ScalarCorrelation(RhoFamily.EXPONENTIAL, a=1.5), [[0.5]])
    return CovarianceModel.separable(EXPONENTIAL, [[1.0]], complex_valued=True, pseudo=pseudo)


def noncircular_model(p: int = 2) -> CovarianceModel:
    sigma0 = np.array([[2.0, 0.5 + 0.5j], [0.5 - 0.5j, 1.0]])[:p, :p]
    pseudo = PseudoCovariance(EXPONENTIAL, np.array([[0.5, 0.2j], [0.2j, 0.3]])[:p, :p])
    return CovarianceModel.separable(EXPONENTIAL, sigma0, complex_valued=True, pseudo=pseudo)


class TestPairings(unittest.TestCase):
    def test_given_even_count_when_pairings_then_double_factorial_matchings(self):
        for m, count in ((2, 1), (4, 3), (6, 15), (8, 105), (12, 10395)):
            self.assertEqual(len(pairings(m)), count)

    def test_given_pairings_when_enumerated_then_each_covers_every_variable_once(self):
        for matching in pairings(6):
            self.assertEqual(sorted(matching.ravel().tolist()), list(range(6)))
            self.assertTrue(np.all(matching[:, 0] < matching[:, 1]))

    def test_given_odd_count_when_pairings_then_none(self):
        self.assertEqual(len(pairings(5)), 0)

    def test_given_too_many_variables_when_pairings_then_moments_error_raised(self):
        with self.assertRaises(MomentsError):
            pairings(14)


class TestIsserlisComplex(unittest.TestCase):
    def test_given_two_variables_when_isserlis_then_relation_entry(self):
        relation = random_relation(2)

        self.assertAlmostEqual(isserlis_complex(JointGaussianSpec(relation)), relation[0, 1])

    def test_given_four_variables_when_isserlis_then_three_pairings_summed(self):
        r = random_relation(4, seed=1)

        expected = r[0, 1] * r[2, 3] + r[0, 2] * r[1, 3] + r[0, 3] * r[1, 2]

        self.assertAlmostEqual(isserlis_complex(JointGaussianSpec(r)), expected, places=12)

    def test_given_odd_count_when_isserlis_then_zero(self):
        self.assertEqual(isserlis_complex(JointGaussianSpec(random_relation(5))), 0)

    def test_given_relabelled_variables_when_isserlis_then_unchanged(self):
        relation = random_relation(6, seed=2)
        order = [4, 1, 5, 0, 3, 2]

        permuted = relation[np.ix_(order, order)]

        self.assertAlmostEqual(
            isserlis_complex(JointGaussianSpec(permuted)),
            isserlis_complex(JointGaussianSpec(relation)),
            places=10,
        )

    def test_given_asymmetric_relation_when_spec_built_then_moments_error_raised(self):
        with self.assertRaises(MomentsError):
            JointGaussianSpec(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_given_noncircular_gaussian_when_monte_carlo_then_product_moment_matches(self):
        rng = np.random.default_rng(3)
        mixing = 0.5 * (rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8)))
        draws = rng.standard_normal((400_000, 8)) @ mixing.T

        products = np.prod(draws, axis=1)
        expected = isserlis_complex(JointGaussianSpec(mixing @ mixing.T))

        error = abs(products.mean() - expected)
        self.assertLessEqual(error, 4 * products.std() / math.sqrt(len(products)))

    def test_given_process_coordinates_when_spec_built_then_relation_uses_both_covariances(self):
        model = noncircular_model()
        variables = [
            ProcessVariable((0.5,), coord=0),
            ProcessVariable((0.0,), coord=1, conjugate=True),
            ProcessVariable((0.0,), coord=1),
        ]

        relation = JointGaussianSpec.from_process(model, variables).relation

        decay = math.exp(-0.5)
        self.assertAlmostEqual(relation[0, 1], decay * (0.5 + 0.5j))
        self.assertAlmostEqual(relation[0, 2], decay * 0.2j)
        self.assertAlmostEqual(relation[1, 2], 1.0)


class TestCum4(unittest.TestCase):
    def test_given_noncircular_gaussian_process_when_cum4_then_zero(self):
        quadruple = GaussianQuadruple.from_process(
            noncircular_model(), np.array([[0.0], [0.3], [1.1], [-0.4]])
        )

        self.assertLessEqual(abs(cum4(quadruple)), 1e-10)

    def test_given_real_two_dimensional_process_when_cum4_then_zero(self):
        model = CovarianceModel.separable(
            ScalarCorrelation(RhoFamily.GAUSSIAN, a=0.5), np.diag([1.0, 0.5, 0.25]), d=2
        )
        times = np.array([[0.0, 0.0], [0.5, 1.0], [-1.0, 0.2], [0.3, -0.7]])

        self.assertLessEqual(abs(cum4(GaussianQuadruple.from_process(model, times))), 1e-10)

    def test_given_scaled_first_element_when_cum4_then_still_zero(self):
        alpha = 2.0 - 1.5j
        base = GaussianQuadruple.from_process(
            noncircular_model(), np.array([[0.0], [0.2], [0.4], [0.6]])
        )
        cross, pseudo = np.array(base.cross), np.array(base.pseudo)
        cross[0, :] *= alpha
        cross[:, 0] *= np.conj(alpha)
        pseudo[0, :] *= alpha
        pseudo[:, 0] *= alpha

        scaled = GaussianQuadruple(base.frame, cross, pseudo)

        self.assertLessEqual(abs(cum4(scaled)), 1e-9)

    def test_given_independent_pairs_when_cum4_then_zero(self):
        frame_p = 2
        block = OperatorRep(np.array([[1.0, 0.3], [0.3, 2.0]]), CoordFrame(frame_p))
        cross = {(0, 0): block, (1, 1): block, (2, 2): block, (3, 3): block, (0, 2): block}
        cross[(1, 3)] = block

        quadruple = GaussianQuadruple.from_blocks(cross, {(0, 2): block, (1, 3): block})

        self.assertLessEqual(abs(cum4(quadruple)), 1e-12)

    def test_given_blocks_in_different_frames_when_assembled_then_frame_mismatch_raised(self):
        small = OperatorRep(np.eye(2), CoordFrame(2))
        large = OperatorRep(np.eye(3), CoordFrame(3))

        with self.assertRaises(FrameMismatchError):
            GaussianQuadruple.from_blocks({(0, 0): small, (1, 1): large})

    def test_given_wrongly_shaped_blocks_when_quadruple_built_then_frame_mismatch_raised(self):
        with self.assertRaises(FrameMismatchError):
            GaussianQuadruple(CoordFrame(2), np.zeros((4, 4, 3, 3)), np.zeros((4, 4, 3, 3)))

    def test_given_real_scalar_variables_when_cum4_then_matches_partition_sum(self):
        model = CovarianceModel.separable(EXPONENTIAL, [[1.0]])
        times = np.array([0.0, 0.4, 1.0, 1.7])
        quadruple = GaussianQuadruple.from_process(model, times)

        def moment(block):
            variables = [ProcessVariable((times[i],)) for i in block]
            return isserlis_complex(JointGaussianSpec.from_process(model, variables))

        self.assertAlmostEqual(cum4(quadruple), joint_cumulant(4, moment), places=12)


class TestExtraIsserlis(unittest.TestCase):
    def test_given_one_plain_pair_when_extra_isserlis_then_covariance(self):
        model = noncircular_scalar_model()

        value = extra_isserlis(model, [0.7], [0.2], 1)

        self.assertAlmostEqual(value, math.exp(-0.5))

    def test_given_two_centered_pairs_when_extra_isserlis_then_cross_terms(self):
        model = noncircular_scalar_model()
        t, s = [0.0, 0.9], [0.4, 1.5]

        value = extra_isserlis(model, t, s, 0, 2)

        cov = model.cov_array(np.array([[t[0] - s[1]], [t[1] - s[0]]]))[:, 0, 0]
        pseudo_t = model.pseudo_cov_array(np.array([[t[0] - t[1]]]))[0, 0, 0]
        pseudo_s = model.pseudo_cov_array(np.array([[s[0] - s[1]]]))[0, 0, 0]
        self.assertAlmostEqual(value, cov[0] * cov[1] + pseudo_t * np.conj(pseudo_s), places=12)

    def test_given_only_plain_pairs_when_extra_isserlis_then_full_isserlis(self):
        model = noncircular_scalar_model()
        t, s = [0.0, 0.5, 1.2], [0.3, -0.4, 0.8]
        variables = []
        for tau, sigma in zip(t, s):
            variables += [ProcessVariable((tau,)), ProcessVariable((sigma,), conjugate=True)]

        expected = isserlis_complex(JointGaussianSpec.from_process(model, variables))

        self.assertAlmostEqual(extra_isserlis(model, t, s, 3), expected, places=12)

    def test_given_three_centered_pairs_when_extra_isserlis_then_inclusion_exclusion_agrees(self):
        model = noncircular_scalar_model()
        rng = np.random.default_rng(5)
        t, s = rng.uniform(0, 2, 3), rng.uniform(0, 2, 3)
        centers = model.cov_array((t - s)[:, None])[:, 0, 0]

        expected = 0j
        for size in range(4):
            for subset in itertools.combinations(range(3), size):
                outside = [m for m in range(3) if m not in subset]
                variables = []
                for m in subset:
                    variables += [
                        ProcessVariable((t[m],)),
                        ProcessVariable((s[m],), conjugate=True),
                    ]
                moment = (
                    isserlis_complex(JointGaussianSpec.from_process(model, variables))
                    if variables
                    else 1.0
                )
                expected += (-1) ** len(outside) * np.prod(centers[outside]) * moment

        self.assertLessEqual(abs(extra_isserlis(model, t, s, 0, 3) - expected), 1e-10)

    def test_given_vector_model_when_extra_isserlis_then_moments_error_raised(self):
        with self.assertRaises(MomentsError):
            extra_isserlis(noncircular_model(), [0.0], [0.0], 1)

    def test_given_seven_pairs_when_extra_isserlis_then_moments_error_raised(self):
        with self.assertRaises(MomentsError):
            extra_isserlis(noncircular_scalar_model(), np.zeros(7), np.zeros(7), 7)

    def test_given_mismatched_counts_when_extra_isserlis_then_moments_error_raised(self):
        with self.assertRaises(MomentsError):
            extra_isserlis(noncircular_scalar_model(), [0.0, 1.0], [0.0, 1.0], 1, 2)


class TestJointCumulant(unittest.TestCase):
    def test_given_set_sizes_when_set_partitions_then_bell_numbers(self):
        for n, bell in ((1, 1), (2, 2), (3, 5), (4, 15), (5, 52), (6, 203)):
            self.assertEqual(len(set_partitions(n)), bell)

    def test_given_exponential_variable_when_joint_cumulant_then_factorial_cumulants(self):
        def moment(block):
            return math.factorial(len(block))

        for order in range(1, 7):
            self.assertAlmostEqual(joint_cumulant(order, moment), math.factorial(order - 1))

    def test_given_order_above_six_when_joint_cumulant_then_moments_error_raised(self):
        with self.assertRaises(MomentsError):
            joint_cumulant(7, lambda block: 0.0)


class TestChiSquareCumulant(unittest.TestCase):
    def test_given_random_times_when_closed_form_then_matches_bruteforce(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            times = rng.uniform(0, 3, 4)

            self.assertAlmostEqual(
                chi_square_cum4(EXPONENTIAL, times),
                chi_square_cum4_bruteforce(EXPONENTIAL, times),
                places=10,
            )

    def test_given_coincident_times_when_closed_form_then_fourth_cumulant_of_chi_square(self):
        self.assertAlmostEqual(chi_square_cum4(EXPONENTIAL, np.zeros(4)), 48.0)

    def test_given_two_dimensional_times_when_closed_form_then_matches_bruteforce(self):
        rho = ScalarCorrelation(RhoFamily.GAUSSIAN, a=0.5)
        times = np.array([[0.0, 0.0], [0.5, 0.2], [1.0, -0.3], [0.1, 0.9]])

        self.assertAlmostEqual(
            chi_square_cum4(rho, times), chi_square_cum4_bruteforce(rho, times), places=10
        )

    def test_given_chi_square_draws_when_empirical_cumulant_then_matches_closed_form(self):
        times = np.array([0.0, 0.3, 0.8, 1.0])
        model = CovarianceModel.separable(EXPONENTIAL, [[1.0]])
        covariance = model.cov_array((times[:, None] - times[None, :]).reshape(-1, 1)).real
        root = np.linalg.cholesky(covariance.reshape(4, 4))
        rng = np.random.default_rng(7)
        batches = []
        for _ in range(40):
            x = (rng.standard_normal((25_000, 4)) @ root.T) ** 2 - 1
            second = x.T @ x / len(x)
            fourth = np.mean(np.prod(x, axis=1))
            pairs = second[0, 1] * second[2, 3] + second[0, 2] * second[1, 3]
            batches.append(fourth - pairs - second[0, 3] * second[1, 2])

        error = abs(np.mean(batches) - chi_square_cum4(EXPONENTIAL, times))
        self.assertLessEqual(error, 4 * np.std(batches) / math.sqrt(len(batches)) + 0.02)


class TestFourthCumulant(unittest.TestCase):
    def test_given_gaussian_model_when_fourth_cumulant_then_zero(self):
        model = CovarianceModel.separable(EXPONENTIAL, np.eye(2))
        times = np.zeros((3, 1))

        np.testing.assert_array_equal(fourth_cumulant(model, times, times, times, times), 0)

    def test_given_unsupported_source_when_fourth_cumulant_then_moments_error_raised(self):
        with self.assertRaises(MomentsError):
            fourth_cumulant(object(), [0.0], [0.0], [0.0], [0.0])

    def test_given_scalar_linear_process_when_fourth_cumulant_then_single_innovation_sum(self):
        a = {-1: 0.3, 0: 1.0, 1: 0.5, 2: 0.25}
        process = LinearProcess(np.array([[[a.get(s, 0.0)]] for s in range(-2, 3)]), np.eye(1))
        u, v, w = 1, -1, 2

        value = fourth_cumulant(
            process, [float(u)], [float(v)], [float(w)], [0.0], innovation_cumulant=3.0
        )[0]

        expected = 3.0 * sum(
            a.get(u - r, 0) * a.get(v - r, 0) * a.get(w - r, 0) * a.get(-r, 0)
            for r in range(-4, 5)
        )
        self.assertAlmostEqual(value, expected)

    def test_given_linear_process_with_gaussian_innovations_when_cumulant_then_zero(self):
        process = LinearProcess(np.ones((3, 2, 2)), np.eye(2))

        values = fourth_cumulant(process, [0.0, 1.0], [1.0, 2.0], [0.0, 0.0], [0.0, 0.0])

        np.testing.assert_array_equal(values, 0)


class TestCheckAssumptionV(unittest.TestCase):
    def test_given_gaussian_model_when_checked_then_all_sums_zero(self):
        model = CovarianceModel.separable(EXPONENTIAL, np.eye(2))

        report = check_assumption_V(model, radius=8, delta=1.0)

        self.assertEqual(report.radii, (1, 2, 4, 8))
        self.assertEqual(report.sums, (0.0, 0.0, 0.0, 0.0))
        self.assertTrue(report.converged)
        self.assertIsNone(report.within_bound)

    def test_given_chi_square_process_when_checked_then_partial_sums_converge(self):
        report = check_assumption_V(ChiSquareProcess(EXPONENTIAL), radius=32, delta=1.0)

        self.assertTrue(np.all(report.increments >= 0))
        self.assertTrue(np.all(np.diff(report.increments) <= 1e-12))
        self.assertTrue(report.converged)
        self.assertEqual(len(report.rows()), len(report.radii))

    def test_given_two_dimensional_chi_square_when_checked_then_sums_scale_with_delta(self):
        process = ChiSquareProcess(ScalarCorrelation(RhoFamily.EXPONENTIAL, a=2.0), d=2)

        report = check_assumption_V(process, radius=4, delta=0.5)

        self.assertGreater(report.sums[-1], 0)
        self.assertTrue(np.all(report.increments >= 0))

    def test_given_linear_process_with_cumulant_when_checked_then_within_bound(self):
        coeffs = np.array([[[0.5 ** abs(s)]] for s in range(-4, 5)])
        process = LinearProcess(coeffs, np.eye(1))

        report = check_assumption_V(process, radius=16, delta=1.0, innovation_cumulant=2.0)

        self.assertAlmostEqual(report.bound, linear_process_bound(process, 2.0))
        self.assertTrue(report.within_bound)
        self.assertTrue(report.converged)

    def test_given_linear_process_on_other_spacing_when_checked_then_moments_error_raised(self):
        process = LinearProcess(np.ones((1, 1, 1)), np.eye(1), delta=0.5)

        with self.assertRaises(MomentsError):
            check_assumption_V(process, radius=4, delta=1.0)

    def test_given_oversized_lattice_when_checked_then_moments_error_raised(self):
        process = ChiSquareProcess(EXPONENTIAL, d=2)

        with self.assertRaises(MomentsError):
            check_assumption_V(process, radius=64, delta=1.0)
