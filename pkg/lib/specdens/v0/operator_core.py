#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.
"""Library for finite-dimensional Hilbert space arithmetic.

Elements of a separable complex Hilbert space are represented by their first
`p` coordinates in a fixed complete orthonormal system, and operators by the
matching `p x p` complex matrix with entries `A[j, k] = <A e_k, e_j>`.
"""

import logging
from dataclasses import dataclass, field
from functools import singledispatch
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

# Increment this major API version when introducing breaking changes
LIBAPI = 0

# Increment this PATCH version before publishing or reset
# to 0 if you are raising the major API version
LIBPATCH = 3

CSV_SIGNIFICANT_DIGITS = 17
SELF_ADJOINT_TOLERANCE = 1e-9


class LogAdapter(logging.LoggerAdapter):
    """Adapter for the logger to prepend a prefix to all log lines."""

    prefix = "operator_core"

    def process(self, msg, kwargs):
        """Decides the format for the prepended text."""
        return f"[{self.prefix}] {msg}", kwargs


logger = LogAdapter(logging.getLogger(__name__), {})


class OperatorError(Exception):
    """Exception raised for invalid operator arithmetic."""


class FrameMismatchError(OperatorError):
    """Exception raised when two objects live in different coordinate frames."""


class NotSelfAdjointError(OperatorError):
    """Exception raised when a self-adjoint operator was expected."""


@dataclass(frozen=True)
class CoordFrame:
    """Truncation of a complete orthonormal system to its first `p` vectors."""

    p: int
    real_cons: bool = True

    def __post_init__(self):
        if self.p < 1:
            raise OperatorError(f"Frame dimension must be positive, got {self.p}")


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=complex)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class ElementVector:
    """Coordinates `<x, e_j>` of a Hilbert space element."""

    coords: np.ndarray
    frame: CoordFrame

    def __post_init__(self):
        coords = _frozen(self.coords)
        if coords.shape != (self.frame.p,):
            raise FrameMismatchError(
                f"Expected {self.frame.p} coordinates, got shape {coords.shape}"
            )
        object.__setattr__(self, "coords", coords)

    def norm(self) -> float:
        """Return the Hilbert norm of the element."""
        return float(np.linalg.norm(self.coords))

    def inner(self, other: "ElementVector") -> complex:
        """Return `<self, other>`, linear in the first argument."""
        _check_same_frame(self.frame, other.frame)
        return complex(np.vdot(other.coords, self.coords))


@dataclass(frozen=True)
class OperatorRep:
    """Dense matrix of an operator on the truncated frame."""

    entries: np.ndarray
    frame: CoordFrame

    def __post_init__(self):
        entries = _frozen(self.entries)
        if entries.shape != (self.frame.p, self.frame.p):
            raise FrameMismatchError(
                f"Expected a {self.frame.p}x{self.frame.p} matrix, got shape {entries.shape}"
            )
        object.__setattr__(self, "entries", entries)

    @classmethod
    def zeros(cls, frame: CoordFrame) -> "OperatorRep":
        """Return the zero operator on `frame`."""
        return cls(np.zeros((frame.p, frame.p)), frame)

    @classmethod
    def identity(cls, frame: CoordFrame) -> "OperatorRep":
        """Return the identity operator on `frame`."""
        return cls(np.eye(frame.p), frame)

    def adjoint(self) -> "OperatorRep":
        """Return the Hilbert adjoint."""
        return OperatorRep(self.entries.conj().T, self.frame)

    def trace(self) -> complex:
        """Return the trace."""
        return complex(np.trace(self.entries))

    def apply(self, x: ElementVector) -> ElementVector:
        """Apply the operator to an element."""
        _check_same_frame(self.frame, x.frame)
        return ElementVector(self.entries @ x.coords, self.frame)

    def __add__(self, other: "OperatorRep") -> "OperatorRep":
        _check_same_frame(self.frame, other.frame)
        return OperatorRep(self.entries + other.entries, self.frame)

    def __sub__(self, other: "OperatorRep") -> "OperatorRep":
        _check_same_frame(self.frame, other.frame)
        return OperatorRep(self.entries - other.entries, self.frame)

    def __mul__(self, scalar: complex) -> "OperatorRep":
        return OperatorRep(scalar * self.entries, self.frame)

    __rmul__ = __mul__

    def __matmul__(self, other: "OperatorRep") -> "OperatorRep":
        _check_same_frame(self.frame, other.frame)
        return OperatorRep(self.entries @ other.entries, self.frame)


@dataclass(frozen=True)
class Eigendecomposition:
    """Spectral decomposition of a self-adjoint operator, eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: List[ElementVector] = field(default_factory=list)

    def reconstruct(self) -> OperatorRep:
        """Return `sum_i lambda_i v_i (x) v_i`."""
        frame = self.eigenvectors[0].frame
        total = np.zeros((frame.p, frame.p), dtype=complex)
        for value, vector in zip(self.eigenvalues, self.eigenvectors):
            total += value * np.outer(vector.coords, vector.coords.conj())
        return OperatorRep(total, frame)


def _check_same_frame(first: CoordFrame, second: CoordFrame) -> None:
    if first.p != second.p:
        raise FrameMismatchError(f"Frame dimensions differ: {first.p} != {second.p}")


def outer(x: ElementVector, y: ElementVector) -> OperatorRep:
    """Return the outer product `x (x) y`, the operator `z -> <z, y> x`.

    Args:
        x: Left factor
        y: Right factor, conjugated

    Returns:
        OperatorRep: Matrix with entries `x_j * conj(y_k)`
    """
    _check_same_frame(x.frame, y.frame)
    return OperatorRep(np.outer(x.coords, y.coords.conj()), x.frame)


def hs_inner(a: OperatorRep, b: OperatorRep) -> complex:
    """Return the Hilbert-Schmidt inner product `trace(B* A)`."""
    _check_same_frame(a.frame, b.frame)
    return complex(np.vdot(b.entries, a.entries))


def hs_norm(a: OperatorRep) -> float:
    """Return the Hilbert-Schmidt (Frobenius) norm."""
    return float(np.linalg.norm(a.entries, "fro"))


def trace_norm(a: OperatorRep) -> float:
    """Return the trace norm, the sum of singular values."""
    return float(np.linalg.svd(a.entries, compute_uv=False).sum())


def op_norm(a: OperatorRep) -> float:
    """Return the operator norm, the largest singular value."""
    return float(np.linalg.svd(a.entries, compute_uv=False).max())


@singledispatch
def conj(value):
    """Return the conjugate relative to the real orthonormal system."""
    raise OperatorError(f"Cannot conjugate object of type {type(value).__name__}")


@conj.register
def _(value: ElementVector) -> ElementVector:
    _require_real_cons(value.frame)
    return ElementVector(value.coords.conj(), value.frame)


@conj.register
def _(value: OperatorRep) -> OperatorRep:
    _require_real_cons(value.frame)
    return OperatorRep(value.entries.conj(), value.frame)


def _require_real_cons(frame: CoordFrame) -> None:
    if not frame.real_cons:
        raise OperatorError("Conjugation needs a frame flagged as the real orthonormal system")


def conj_vec(x: ElementVector) -> ElementVector:
    """Return the entrywise conjugate of an element."""
    return conj(x)


def conj_op(a: OperatorRep) -> OperatorRep:
    """Return the conjugate operator `x -> conj(A(conj(x)))`."""
    return conj(a)


Conjugable = Union[ElementVector, OperatorRep]


def real_part(value: Conjugable) -> Conjugable:
    """Return `(conj(v) + v) / 2`."""
    if isinstance(value, ElementVector):
        return ElementVector((conj(value).coords + value.coords) / 2, value.frame)
    return OperatorRep((conj(value).entries + value.entries) / 2, value.frame)


def imag_part(value: Conjugable) -> Conjugable:
    """Return `(v - conj(v)) / (2i)`."""
    if isinstance(value, ElementVector):
        return ElementVector((value.coords - conj(value).coords) / 2j, value.frame)
    return OperatorRep((value.entries - conj(value).entries) / 2j, value.frame)


def eig_self_adjoint(
    a: OperatorRep, tol: float = SELF_ADJOINT_TOLERANCE
) -> Eigendecomposition:
    """Diagonalize a self-adjoint operator.

    Args:
        a: Operator expected to satisfy `A = A*`
        tol: Relative Hilbert-Schmidt tolerance on `A - A*`

    Returns:
        Eigendecomposition: Eigenvalues in descending order with orthonormal eigenvectors

    Raises:
        NotSelfAdjointError: If `||A - A*|| > tol * ||A||`
    """
    scale = hs_norm(a)
    asymmetry = float(np.linalg.norm(a.entries - a.entries.conj().T, "fro"))
    if asymmetry > tol * max(scale, np.finfo(float).tiny):
        raise NotSelfAdjointError(
            f"Operator is not self-adjoint: asymmetry {asymmetry:.3e}, norm {scale:.3e}"
        )
    hermitian = (a.entries + a.entries.conj().T) / 2
    values, vectors = np.linalg.eigh(hermitian)
    order = np.argsort(values)[::-1]
    return Eigendecomposition(
        eigenvalues=values[order],
        eigenvectors=[ElementVector(vectors[:, i], a.frame) for i in order],
    )


def operator_to_csv_rows(a: OperatorRep) -> List[str]:
    """Serialize an operator as `p` followed by interleaved (re, im) row-major entries."""
    fmt = f"%.{CSV_SIGNIFICANT_DIGITS}g"
    values = []
    for entry in a.entries.ravel():
        values.extend([fmt % entry.real, fmt % entry.imag])
    return [str(a.frame.p), ",".join(values)]


def operator_from_csv_rows(rows: Sequence[str], real_cons: bool = True) -> OperatorRep:
    """Parse the output of `operator_to_csv_rows`."""
    p = int(rows[0])
    flat = np.array([float(v) for v in rows[1].split(",")])
    if flat.size != 2 * p * p:
        raise OperatorError(f"Expected {2 * p * p} values for p={p}, got {flat.size}")
    entries = (flat[0::2] + 1j * flat[1::2]).reshape(p, p)
    return OperatorRep(entries, CoordFrame(p, real_cons))


def write_operator(path: Path, a: OperatorRep) -> None:
    """Write an operator to a CSV file."""
    path.write_text("\n".join(operator_to_csv_rows(a)) + "\n")
    logger.info("Wrote operator file %s", path)


def read_operator(path: Path) -> OperatorRep:
    """Read an operator written by `write_operator`."""
    return operator_from_csv_rows(path.read_text().splitlines())
