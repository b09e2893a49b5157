#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.
"""Library of radial smoothing kernels.

Every kernel is radial, equals 1 at the origin, is nonnegative and vanishes
outside the closed unit ball. The bandwidth only enters through `K(h / bandwidth)`.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from math import comb, pi
from typing import Dict, Union

import numpy as np
from scipy import integrate

# Increment this major API version when introducing breaking changes
LIBAPI = 0

# Increment this PATCH version before publishing or reset
# to 0 if you are raising the major API version
LIBPATCH = 2

FLATNESS_THRESHOLD = 1e-4
FLATNESS_STEP = 1e-2
MAX_FLATNESS_ORDER = 6
QUADRATURE_TOLERANCE = 1e-10


class LogAdapter(logging.LoggerAdapter):
    """Adapter for the logger to prepend a prefix to all log lines."""

    prefix = "kernels"

    def process(self, msg, kwargs):
        """Decides the format for the prepended text."""
        return f"[{self.prefix}] {msg}", kwargs


logger = LogAdapter(logging.getLogger(__name__), {})


class KernelError(Exception):
    """Exception raised for invalid kernel specifications."""


class KernelFamily(str, Enum):
    """Supported kernel families."""

    TRUNCATED_POWER = "truncated_power"
    TRAPEZOID_FLAT_TOP = "trapezoid_flat_top"
    BARTLETT = "bartlett"
    PARZEN = "parzen"


@dataclass(frozen=True)
class KernelSpec:
    """A radial kernel on R^d.

    Attributes:
        family: Kernel family
        d: Dimension of the argument
        lam: Exponent order of the truncated power family, `1 - |u|^(lam + 1)`
        epsilon: Plateau radius of the trapezoid family
    """

    family: KernelFamily
    d: int = 1
    lam: int = 1
    epsilon: float = 0.5

    def __post_init__(self):
        if self.d < 1:
            raise KernelError(f"Kernel dimension must be positive, got {self.d}")
        if self.family == KernelFamily.TRUNCATED_POWER and self.lam < 1:
            raise KernelError(f"Truncated power order must be positive, got {self.lam}")
        if self.family == KernelFamily.TRAPEZOID_FLAT_TOP and not 0 < self.epsilon < 1:
            raise KernelError(f"Plateau radius must lie in (0, 1), got {self.epsilon}")

    @classmethod
    def from_name(cls, name: str, d: int = 1, **params: Union[int, float]) -> "KernelSpec":
        """Build a kernel from its config name and parameters.

        Args:
            name: Family name, e.g. `truncated_power`
            d: Dimension
            params: `lambda`/`lam` and `epsilon` as applicable

        Returns:
            KernelSpec: The kernel
        """
        try:
            family = KernelFamily(name)
        except ValueError as e:
            raise KernelError(f"Unknown kernel family: {name}") from e
        lam = int(params.get("lambda", params.get("lam", 1)))
        epsilon = float(params.get("epsilon", 0.5))
        return cls(family=family, d=d, lam=lam, epsilon=epsilon)

    @property
    def name(self) -> str:
        """Config name of the family."""
        return self.family.value

    @property
    def support_radius(self) -> float:
        """Radius of the ball containing the support."""
        return 1.0

    @property
    def flatness_order(self) -> int:
        """Declared order of vanishing derivatives at the origin."""
        if self.family == KernelFamily.TRUNCATED_POWER:
            return self.lam
        if self.family == KernelFamily.TRAPEZOID_FLAT_TOP:
            return MAX_FLATNESS_ORDER
        return 0

    def profile(self, r: Union[float, np.ndarray]) -> np.ndarray:
        """Evaluate the radial profile at distances `r >= 0`."""
        r = np.abs(np.asarray(r, dtype=float))
        inside = r <= 1.0
        if self.family == KernelFamily.TRUNCATED_POWER:
            values = 1.0 - r ** (self.lam + 1)
        elif self.family == KernelFamily.TRAPEZOID_FLAT_TOP:
            values = np.where(r <= self.epsilon, 1.0, (1.0 - r) / (1.0 - self.epsilon))
        elif self.family == KernelFamily.BARTLETT:
            values = 1.0 - r
        else:
            values = np.where(
                r <= 0.5, 1.0 - 6.0 * r**2 + 6.0 * r**3, 2.0 * (1.0 - r) ** 3
            )
        return np.where(inside, np.clip(values, 0.0, 1.0), 0.0)

    def __call__(self, u: Union[float, np.ndarray]) -> np.ndarray:
        return evaluate(self, u)


def evaluate(spec: KernelSpec, u: Union[float, np.ndarray]) -> np.ndarray:
    """Evaluate a kernel.

    Args:
        spec: The kernel
        u: Points; for `d > 1` the last axis holds the coordinates

    Returns:
        np.ndarray: Kernel values in [0, 1]
    """
    u = np.asarray(u, dtype=float)
    if spec.d == 1:
        r = np.abs(u[..., 0]) if u.ndim >= 2 and u.shape[-1] == 1 else np.abs(u)
    else:
        if u.shape[-1] != spec.d:
            raise KernelError(f"Expected points of dimension {spec.d}, got shape {u.shape}")
        r = np.linalg.norm(u, axis=-1)
    return spec.profile(r)


def _unit_sphere_area(d: int) -> float:
    return {1: 2.0, 2: 2.0 * pi}.get(d, 0.0)


def l2_norm_sq(spec: KernelSpec) -> float:
    """Return the squared L2 norm of the kernel over R^d.

    Closed forms are used for the power-type families, adaptive quadrature otherwise.

    Raises:
        KernelError: For dimensions other than 1 or 2
    """
    if spec.d not in (1, 2):
        raise KernelError(f"L2 norm is available for d in (1, 2), got {spec.d}")
    area = _unit_sphere_area(spec.d)
    m = {
        KernelFamily.TRUNCATED_POWER: spec.lam + 1,
        KernelFamily.BARTLETT: 1,
    }.get(spec.family)
    if m is not None:
        # integral of r^(d-1) (1 - r^m)^2 over [0, 1]
        d = spec.d
        return area * (1.0 / d - 2.0 / (m + d) + 1.0 / (2 * m + d))
    value, _ = integrate.quad(
        lambda r: r ** (spec.d - 1) * float(spec.profile(r)) ** 2,
        0.0,
        1.0,
        points=sorted({spec.epsilon, 0.5}),
        epsabs=QUADRATURE_TOLERANCE,
    )
    return area * value


@dataclass(frozen=True)
class FlatnessReport:
    """Finite-difference flatness diagnostics of a kernel at the origin."""

    order: int
    step: float
    differences: Dict[int, float] = field(default_factory=dict)
    threshold: float = FLATNESS_THRESHOLD

    @property
    def passed(self) -> bool:
        """Whether every difference is within the threshold."""
        return all(abs(value) <= self.threshold for value in self.differences.values())


def check_flatness(spec: KernelSpec, lam: int, h_step: float = FLATNESS_STEP) -> FlatnessReport:
    """Check that the kernel is flat to order `lam` at the origin.

    The forward difference of order k along the first axis,
    `sum_j (-1)^(k-j) C(k, j) K(j h e_1)`, is of order `h^(lam+1)` for a kernel
    flat to order `lam` and of order `h` for a kernel with a kink.

    Args:
        spec: The kernel
        lam: Highest order to check, at most 6
        h_step: Difference step

    Returns:
        FlatnessReport: Per-order raw differences and the verdict
    """
    if not 1 <= lam <= MAX_FLATNESS_ORDER:
        raise KernelError(f"Flatness order must lie in [1, {MAX_FLATNESS_ORDER}], got {lam}")
    differences = {}
    for k in range(1, lam + 1):
        radii = h_step * np.arange(k + 1)
        values = spec.profile(radii)
        weights = np.array([(-1) ** (k - j) * comb(k, j) for j in range(k + 1)], dtype=float)
        differences[k] = float(weights @ values)
    report = FlatnessReport(order=lam, step=h_step, differences=differences)
    logger.debug("Flatness of %s up to order %s: %s", spec.name, lam, differences)
    return report


def default_rate_kernel(beta: float, d: int = 1) -> KernelSpec:
    """Return the truncated power kernel with order `ceil(beta) + 1`."""
    return KernelSpec(KernelFamily.TRUNCATED_POWER, d=d, lam=int(np.ceil(beta)) + 1)
