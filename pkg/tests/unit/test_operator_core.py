# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import tempfile
import unittest
from pathlib import Path

import numpy as np
from specdens.v0.operator_core import (
    CoordFrame,
    ElementVector,
    FrameMismatchError,
    NotSelfAdjointError,
    OperatorError,
    OperatorRep,
    conj_op,
    conj_vec,
    eig_self_adjoint,
    hs_inner,
    hs_norm,
    imag_part,
    op_norm,
    outer,
    read_operator,
    real_part,
    trace_norm,
    write_operator,
)


def random_vector(rng: np.random.Generator, frame: CoordFrame) -> ElementVector:
    return ElementVector(rng.normal(size=frame.p) + 1j * rng.normal(size=frame.p), frame)


def random_operator(rng: np.random.Generator, frame: CoordFrame) -> OperatorRep:
    shape = (frame.p, frame.p)
    return OperatorRep(rng.normal(size=shape) + 1j * rng.normal(size=shape), frame)


class TestOuterProduct(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_given_unit_vectors_when_outer_then_single_entry_is_set(self):
        frame = CoordFrame(2)
        e1 = ElementVector(np.array([1, 0]), frame)
        e2 = ElementVector(np.array([0, 1]), frame)

        result = outer(e1, e2)

        np.testing.assert_array_equal(result.entries, np.array([[0, 1], [0, 0]]))

    def test_given_same_vector_when_outer_then_trace_norm_is_squared_norm(self):
        frame = CoordFrame(4)
        x = random_vector(self.rng, frame)

        result = outer(x, x)

        self.assertAlmostEqual(trace_norm(result), x.norm() ** 2, places=10)
        np.testing.assert_allclose(result.entries, result.entries.conj().T)

    def test_given_four_vectors_when_hs_inner_of_outers_then_factorizes(self):
        frame = CoordFrame(3)
        x1, x2, x3, x4 = (random_vector(self.rng, frame) for _ in range(4))

        value = hs_inner(outer(x1, x2), outer(x3, x4))

        self.assertAlmostEqual(abs(value - x1.inner(x3) * x4.inner(x2)), 0.0, places=10)

    def test_given_random_vectors_when_outer_then_trace_norm_is_product_of_norms(self):
        frame = CoordFrame(5)
        for _ in range(10):
            x, y = random_vector(self.rng, frame), random_vector(self.rng, frame)

            value = trace_norm(outer(x, y))

            self.assertLessEqual(abs(value - x.norm() * y.norm()), 1e-12 * value)

    def test_given_vectors_in_different_frames_when_outer_then_error_is_raised(self):
        x = ElementVector(np.ones(2), CoordFrame(2))
        y = ElementVector(np.ones(3), CoordFrame(3))

        with self.assertRaises(FrameMismatchError):
            outer(x, y)


class TestNorms(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(5)

    def test_given_identity_when_norms_then_spectrum_values_are_returned(self):
        identity = OperatorRep.identity(CoordFrame(4))

        self.assertAlmostEqual(trace_norm(identity), 4.0)
        self.assertAlmostEqual(hs_norm(identity), 2.0)
        self.assertAlmostEqual(op_norm(identity), 1.0)

    def test_given_diagonal_operator_when_norms_then_absolute_values_are_used(self):
        a = OperatorRep(np.diag([3.0, -4.0]), CoordFrame(2))

        self.assertAlmostEqual(trace_norm(a), 7.0)
        self.assertAlmostEqual(hs_norm(a), 5.0)

    def test_given_random_operator_when_trace_norm_then_matches_svd(self):
        a = random_operator(self.rng, CoordFrame(5))

        expected = np.linalg.svd(a.entries, compute_uv=False).sum()

        self.assertAlmostEqual(trace_norm(a), expected, places=10)

    def test_given_random_operator_when_norms_then_they_are_ordered(self):
        for _ in range(20):
            a = random_operator(self.rng, CoordFrame(6))

            self.assertGreaterEqual(trace_norm(a) * (1 + 1e-12), hs_norm(a))
            self.assertGreaterEqual(hs_norm(a) * (1 + 1e-12), op_norm(a))
            self.assertLessEqual(abs(a.trace()), trace_norm(a) * (1 + 1e-12))

    def test_given_random_unitary_when_conjugating_then_trace_norm_is_invariant(self):
        frame = CoordFrame(4)
        a = random_operator(self.rng, frame)
        q, _ = np.linalg.qr(random_operator(self.rng, frame).entries)
        unitary = OperatorRep(q, frame)

        rotated = unitary @ a @ unitary.adjoint()

        self.assertAlmostEqual(trace_norm(rotated), trace_norm(a), places=10)

    def test_given_two_operators_when_hs_inner_then_conjugate_symmetric(self):
        frame = CoordFrame(3)
        a, b = random_operator(self.rng, frame), random_operator(self.rng, frame)

        self.assertAlmostEqual(abs(hs_inner(a, b) - np.conj(hs_inner(b, a))), 0.0, places=12)


class TestConjugation(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.frame = CoordFrame(3)

    def test_given_real_operator_when_conj_op_then_fixed_point(self):
        a = OperatorRep(self.rng.normal(size=(3, 3)), self.frame)

        np.testing.assert_array_equal(conj_op(a).entries, a.entries)
        np.testing.assert_array_equal(imag_part(a).entries, np.zeros((3, 3)))

    def test_given_imaginary_identity_when_conj_op_then_sign_flips(self):
        a = OperatorRep.identity(self.frame) * 1j

        np.testing.assert_array_equal(conj_op(a).entries, -1j * np.eye(3))

    def test_given_outer_product_when_conj_op_then_equals_outer_of_conjugates(self):
        x, y = random_vector(self.rng, self.frame), random_vector(self.rng, self.frame)

        left = conj_op(outer(x, y))
        right = outer(conj_vec(x), conj_vec(y))

        np.testing.assert_allclose(left.entries, right.entries)

    def test_given_operator_when_conj_op_twice_then_involution(self):
        a = random_operator(self.rng, self.frame)

        np.testing.assert_array_equal(conj_op(conj_op(a)).entries, a.entries)

    def test_given_complex_scalar_when_conj_op_then_antilinear(self):
        a = random_operator(self.rng, self.frame)
        alpha = 0.3 - 1.7j

        np.testing.assert_allclose(
            conj_op(a * alpha).entries, (conj_op(a) * np.conj(alpha)).entries
        )

    def test_given_operator_when_parts_recombined_then_original_is_recovered(self):
        a = random_operator(self.rng, self.frame)

        recombined = real_part(a) + imag_part(a) * 1j

        np.testing.assert_allclose(recombined.entries, a.entries)

    def test_given_vector_when_parts_taken_then_they_are_real(self):
        x = random_vector(self.rng, self.frame)

        np.testing.assert_allclose(real_part(x).coords, x.coords.real)
        np.testing.assert_allclose(imag_part(x).coords, x.coords.imag)

    def test_given_frame_without_real_cons_when_conj_then_error_is_raised(self):
        frame = CoordFrame(2, real_cons=False)

        with self.assertRaises(OperatorError):
            conj_op(OperatorRep.identity(frame))


class TestEigSelfAdjoint(unittest.TestCase):
    def test_given_diagonal_operator_when_eig_then_descending_basis(self):
        a = OperatorRep(np.diag([1.0, 2.0]), CoordFrame(2))

        result = eig_self_adjoint(a)

        np.testing.assert_allclose(result.eigenvalues, [2.0, 1.0])
        self.assertAlmostEqual(abs(result.eigenvectors[0].coords[1]), 1.0)

    def test_given_rank_one_operator_when_eig_then_single_nonzero_eigenvalue(self):
        frame = CoordFrame(4)
        x = ElementVector(np.array([1.0, 2.0, 0.0, -1.0j]), frame)

        result = eig_self_adjoint(outer(x, x))

        self.assertAlmostEqual(result.eigenvalues[0], x.norm() ** 2)
        np.testing.assert_allclose(result.eigenvalues[1:], 0.0, atol=1e-12)

    def test_given_random_hermitian_when_eig_then_reconstruction_is_exact(self):
        frame = CoordFrame(6)
        a = random_operator(np.random.default_rng(3), frame)
        hermitian = a + a.adjoint()

        result = eig_self_adjoint(hermitian)

        residual = hs_norm(result.reconstruct() - hermitian)
        self.assertLess(residual, 1e-10 * hs_norm(hermitian))
        gram = np.array([[v.inner(w) for w in result.eigenvectors] for v in result.eigenvectors])
        np.testing.assert_allclose(gram, np.eye(6), atol=1e-12)

    def test_given_non_hermitian_operator_when_eig_then_error_is_raised(self):
        a = OperatorRep(np.array([[0.0, 1.0], [0.0, 0.0]]), CoordFrame(2))

        with self.assertRaises(NotSelfAdjointError):
            eig_self_adjoint(a)


class TestOperatorCsv(unittest.TestCase):
    def test_given_operator_when_written_and_read_then_entries_match(self):
        a = random_operator(np.random.default_rng(1), CoordFrame(3))

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "operator.csv"
            write_operator(path, a)
            loaded = read_operator(path)

        np.testing.assert_allclose(loaded.entries, a.entries, rtol=1e-15)


class TestCoordFrame(unittest.TestCase):
    def test_given_zero_dimension_when_frame_created_then_error_is_raised(self):
        with self.assertRaises(OperatorError):
            CoordFrame(0)
