#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.
"""Library for reproducing-kernel interpolation on a node set of (0, 1].

Functions of the reproducing kernel Hilbert space `H` are only observed
through their values at the nodes `u_1 < ... < u_m`. The span of the kernel
sections `R(u_i, .)` is `H_n`, and the orthogonal projection onto it maps a
function to its minimum-norm interpolant.

Operators on `H_n` are stored as coefficient matrices `B` in the kernel-section
basis, `T = sum_ik B[i, k] R(u_i, .) (x) R(u_k, .)`, and all norms are taken
with the Gram metric so that they equal the norms of the operators on `H`.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg, special

from specdens.v0.estimator import SpectralEstimate

# Increment this major API version when introducing breaking changes
LIBAPI = 0

# Increment this PATCH version before publishing or reset
# to 0 if you are raising the major API version
LIBPATCH = 2


class LogAdapter(logging.LoggerAdapter):
    """Adapter for the logger to prepend a prefix to all log lines."""

    prefix = "rkhs"

    def process(self, msg, kwargs):
        """Decides the format for the prepended text."""
        return f"[{self.prefix}] {msg}", kwargs


logger = LogAdapter(logging.getLogger(__name__), {})


class RkhsError(Exception):
    """Exception raised for invalid node sets or singular Gram matrices."""


class RkhsFamily(str, Enum):
    """Reproducing kernels on [0, 1]."""

    BROWNIAN = "brownian"
    SOBOLEV1 = "sobolev1"


def kernel(family: RkhsFamily, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Evaluate `R(u, v)`: `min(u, v)` for brownian, `1 + min(u, v)` for sobolev1."""
    base = np.minimum(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    if RkhsFamily(family) == RkhsFamily.SOBOLEV1:
        return 1.0 + base
    return base


@dataclass(frozen=True)
class RkhsSpec:
    """A kernel family with its node set, Gram matrix and Cholesky factor.

    Attributes:
        family: Kernel family
        nodes: Strictly increasing nodes in (0, 1]
        gram: Gram matrix `R[i, k] = R(u_i, u_k)`
        gram_factor: Lower-triangular `L` with `R = L L^T`
    """

    family: RkhsFamily
    nodes: np.ndarray
    gram: Optional[np.ndarray] = None
    gram_factor: Optional[np.ndarray] = None

    def __post_init__(self):
        family = RkhsFamily(self.family)
        nodes = np.array(self.nodes, dtype=float).reshape(-1)
        if len(nodes) == 0:
            raise RkhsError("A node set needs at least one node")
        if nodes[0] <= 0 or nodes[-1] > 1:
            raise RkhsError("Nodes must lie in (0, 1]")
        if np.any(np.diff(nodes) <= 0):
            raise RkhsError("Nodes must be strictly increasing")
        gram = kernel(family, nodes[:, None], nodes[None, :])
        if family == RkhsFamily.BROWNIAN:
            steps = np.diff(nodes, prepend=0.0)
            factor = np.tril(np.ones((len(nodes), len(nodes)))) * np.sqrt(steps)[None, :]
        else:
            try:
                factor = linalg.cholesky(gram, lower=True)
            except linalg.LinAlgError as e:
                raise RkhsError("Gram matrix is singular") from e
        for array in (nodes, gram, factor):
            array.setflags(write=False)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "gram_factor", factor)

    @classmethod
    def uniform(cls, family: RkhsFamily, m: int) -> "RkhsSpec":
        """Return the node set `u_i = i / m`."""
        if m < 1:
            raise RkhsError(f"Need at least one node, got {m}")
        return cls(family, np.arange(1, m + 1) / m)

    @property
    def m(self) -> int:
        """Number of nodes."""
        return len(self.nodes)

    @property
    def condition_number(self) -> float:
        """Condition number of the Gram matrix."""
        return float(np.linalg.cond(self.gram))

    def solve(self, values: np.ndarray) -> np.ndarray:
        """Return `R^-1 values` along the first axis.

        The brownian family uses `R^-1 = D^T W D` with `D` the first-difference
        operator pinned at zero and `W` the inverse node spacings.
        """
        values = np.asarray(values)
        if values.shape[0] != self.m:
            raise RkhsError(f"Expected {self.m} node values, got {values.shape[0]}")
        if self.family == RkhsFamily.BROWNIAN:
            steps = np.diff(self.nodes, prepend=0.0).reshape((-1,) + (1,) * (values.ndim - 1))
            slopes = np.diff(values, axis=0, prepend=np.zeros((1,) + values.shape[1:])) / steps
            return slopes - np.concatenate([slopes[1:], np.zeros((1,) + values.shape[1:])])
        return linalg.cho_solve((self.gram_factor, True), values)


@dataclass(frozen=True)
class Interpolant:
    """The minimum-norm interpolant `g~ = sum_i c_i R(u_i, .)`."""

    spec: RkhsSpec
    coeffs: np.ndarray
    values: np.ndarray

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        sections = kernel(self.spec.family, u[..., None], self.spec.nodes)
        return sections @ self.coeffs

    def derivative(self, u: np.ndarray) -> np.ndarray:
        """Return `g~'(u)`, piecewise constant between the nodes."""
        u = np.asarray(u, dtype=float)
        return (u[..., None] < self.spec.nodes).astype(float) @ self.coeffs

    def norm(self) -> float:
        """Return `||g~||_H = sqrt(g^T R^-1 g)`."""
        return float(np.sqrt(np.real(np.vdot(self.values, self.coeffs))))


def interpolate(spec: RkhsSpec, values: np.ndarray) -> Interpolant:
    """Return the minimum-norm interpolant of node values.

    Args:
        spec: Kernel and nodes
        values: `g(u_i)` for every node

    Returns:
        Interpolant: Coefficients `c = R^-1 g` and the evaluator
    """
    values = np.asarray(values).reshape(-1)
    return Interpolant(spec, spec.solve(values), values)


def brownian_cholesky_check(m: int) -> float:
    """Return `max |R - L L^T / m|` for nodes `i / m` and `L` the lower-triangular ones."""
    spec = RkhsSpec.uniform(RkhsFamily.BROWNIAN, m)
    ones = np.tril(np.ones((m, m)))
    return float(np.abs(spec.gram - ones @ ones.T / m).max())


@dataclass(frozen=True)
class ProjectedOperator:
    """An operator on `H_n` through its kernel-section coefficients."""

    spec: RkhsSpec
    coeffs: np.ndarray

    def node_kernel(self) -> np.ndarray:
        """Return `<T R(u_k, .), R(u_i, .)>` for all node pairs, which is `R B R`."""
        return self.spec.gram @ self.coeffs @ self.spec.gram

    def orthonormal_matrix(self) -> np.ndarray:
        """Matrix in the orthonormal basis obtained from the kernel sections, `L^T B L`."""
        factor = self.spec.gram_factor
        return factor.T @ self.coeffs @ factor


def project_operator(spec: RkhsSpec, node_kernel: np.ndarray) -> ProjectedOperator:
    """Return `Pi A Pi` for the operator with node kernel `K[i, k] = <A R(u_k, .), R(u_i, .)>`.

    For `A = g (x) h` the node kernel is `g(u_i) conj(h(u_k))`, and for a sample
    of functions the estimator computed on node values is the node kernel of
    the estimate.
    """
    node_kernel = np.asarray(node_kernel)
    if node_kernel.shape != (spec.m, spec.m):
        raise RkhsError(f"Node kernel must be {spec.m}x{spec.m}, got {node_kernel.shape}")
    return ProjectedOperator(spec, spec.solve(spec.solve(node_kernel).conj().T).conj().T)


def hs_norm_gram(operator: ProjectedOperator) -> float:
    """Hilbert-Schmidt norm in `H`, `sqrt(trace(B R B^* R))`."""
    return float(np.linalg.norm(operator.orthonormal_matrix(), "fro"))


def trace_norm_gram(operator: ProjectedOperator) -> float:
    """Trace norm in `H`, the sum of singular values of `L^T B L`."""
    return float(linalg.svdvals(operator.orthonormal_matrix()).sum())


def project_estimate(spec: RkhsSpec, estimate: SpectralEstimate) -> np.ndarray:
    """Return the kernel-section coefficients of `Pi f_hat(theta) Pi` for every frequency.

    The estimate must have been computed from samples whose coordinates are
    the node values of the observed functions.
    """
    if estimate.p != spec.m:
        raise RkhsError(f"Estimate has {estimate.p} coordinates for {spec.m} nodes")
    return np.stack([project_operator(spec, value).coeffs for value in estimate.values])


@dataclass(frozen=True)
class EigenModel:
    """A positive operator `f = sum_j nu_j phi_j (x) phi_j` with `H`-orthogonal `phi_j`.

    Attributes:
        nus: Eigen-weights `nu_j >= 0`
        basis: Maps `(j, u)` arrays to `phi_j(u)`, with `j` starting at 1
        h_norms: `||phi_j||_H`
        tail_hs_sq: `sum_{j > J} nu_j^2 ||phi_j||^4` of the weights left out
    """

    nus: np.ndarray
    basis: Callable[[np.ndarray, np.ndarray], np.ndarray]
    h_norms: np.ndarray
    tail_hs_sq: float = 0.0

    def __post_init__(self):
        nus = np.array(self.nus, dtype=float).reshape(-1)
        h_norms = np.array(self.h_norms, dtype=float).reshape(-1)
        if np.any(nus < 0):
            raise RkhsError("Eigen-weights must be nonnegative")
        if len(h_norms) != len(nus):
            raise RkhsError("Need one H-norm per eigen-weight")
        object.__setattr__(self, "nus", nus)
        object.__setattr__(self, "h_norms", h_norms)

    @property
    def size(self) -> int:
        """Number of eigenpairs `J`."""
        return len(self.nus)

    def node_values(self, nodes: np.ndarray) -> np.ndarray:
        """Return `phi_j(u_i)` as an (m, J) array."""
        j = np.arange(1, self.size + 1)
        return self.basis(j[None, :], np.asarray(nodes, dtype=float)[:, None])

    def hs_norm_sq(self) -> float:
        """Return `||f_J||_HS^2 = sum_j nu_j^2 ||phi_j||^4`."""
        return float(np.sum((self.nus * self.h_norms**2) ** 2))

    @classmethod
    def brownian_sine(cls, nus: Sequence[float], tail_hs_sq: float = 0.0) -> "EigenModel":
        """Eigenfunctions `sqrt(2) sin((j - 1/2) pi u) / ((j - 1/2) pi)`, orthonormal in `H`."""

        def basis(j: np.ndarray, u: np.ndarray) -> np.ndarray:
            frequency = (j - 0.5) * np.pi
            return np.sqrt(2.0) * np.sin(frequency * u) / frequency

        return cls(np.asarray(nus), basis, np.ones(len(nus)), tail_hs_sq)

    @classmethod
    def power_decay(cls, exponent: float, size: int) -> "EigenModel":
        """Sine eigenfunctions with `nu_j = j^-exponent`; the neglected tail is a Hurwitz zeta."""
        if exponent <= 0.5:
            raise RkhsError(f"Weights j^-{exponent} are not square summable")
        nus = np.arange(1, size + 1, dtype=float) ** -exponent
        tail = float(special.zeta(2 * exponent, size + 1))
        return cls.brownian_sine(nus, tail)

    @classmethod
    def linear(cls, nu: float = 1.0) -> "EigenModel":
        """The single eigenfunction `phi(u) = u` of unit norm."""

        def basis(j: np.ndarray, u: np.ndarray) -> np.ndarray:
            return np.broadcast_to(u, np.broadcast(j, u).shape).astype(float)

        return cls(np.array([nu]), basis, np.ones(1))


@dataclass(frozen=True)
class ProjectionBias:
    """Projection bias `||Pi f Pi - f||_HS` of an eigen-model on `m` nodes."""

    m: int
    bias: float
    tail_hs: float


def projected_bias(model: EigenModel, spec: RkhsSpec) -> ProjectionBias:
    """Return the exact projection bias of the `J`-term operator.

    `Pi` is an orthogonal projection and `f` is positive, so
    `||f - Pi f Pi||^2 = ||f||^2 - ||Pi f Pi||^2`, and the second norm only
    involves `<Pi phi_j, Pi phi_k> = phi_j(u)^T R^-1 phi_k(u)`.
    """
    values = model.node_values(spec.nodes)
    inner = values.T @ spec.solve(values)
    weighted = np.sqrt(model.nus)[:, None] * inner * np.sqrt(model.nus)[None, :]
    gap = model.hs_norm_sq() - float(np.sum(weighted**2))
    if gap < -1e-12 * max(model.hs_norm_sq(), 1.0):
        logger.warning("Negative projection gap %.3e on %s nodes", gap, spec.m)
    return ProjectionBias(spec.m, float(np.sqrt(max(gap, 0.0))), float(np.sqrt(model.tail_hs_sq)))
