#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.
"""Library of stationary operator covariance models.

A model is either separable, `C(h) = rho(h) * Sigma0`, or diagonal,
`C(h) = diag(nu_j * rho_j(h))`. Every model exposes its covariance, its
continuous spectral density, the folded spectral density seen on a lattice of
spacing `delta`, its pseudo-spectral density and power-law class diagnostics.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy import integrate

from specdens.v0.operator_core import CoordFrame, OperatorRep, trace_norm

# Increment this major API version when introducing breaking changes
LIBAPI = 0

# Increment this PATCH version before publishing or reset
# to 0 if you are raising the major API version
LIBPATCH = 6

FOLD_TOLERANCE = 1e-10
LATTICE_CHUNK = 1 << 16
MAX_LATTICE_RADIUS = {1: 1 << 20, 2: 1 << 10}
POWERLAW_CUTOFF = {1: 1 << 16, 2: 1 << 9}
POWERLAW_RATIO_LIMIT = 1.0 - 1e-3
QUADRATURE_TOLERANCE = 1e-10


class LogAdapter(logging.LoggerAdapter):
    """Adapter for the logger to prepend a prefix to all log lines."""

    prefix = "models"

    def process(self, msg, kwargs):
        """Decides the format for the prepended text."""
        return f"[{self.prefix}] {msg}", kwargs


logger = LogAdapter(logging.getLogger(__name__), {})


class ModelError(Exception):
    """Exception raised for invalid or unsupported covariance models."""


class CovarianceSource(Protocol):
    """Anything with a stationary covariance on a coordinate frame."""

    @property
    def d(self) -> int:
        """Parameter dimension."""
        ...

    @property
    def p(self) -> int:
        """Frame dimension."""
        ...

    @property
    def frame(self) -> CoordFrame:
        """Coordinate frame."""
        ...

    def cov_array(self, lags: np.ndarray) -> np.ndarray:
        """Return `C(h)` for lags of shape (m, d) as an (m, p, p) array."""
        ...

    def pseudo_cov_array(self, lags: np.ndarray) -> np.ndarray:
        """Return the pseudo-covariance for lags of shape (m, d)."""
        ...


class RhoFamily(str, Enum):
    """Scalar correlation families."""

    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"
    AR1_LATTICE = "ar1_lattice"
    POWER_LAW = "power_law"


class Structure(str, Enum):
    """Operator structure of a covariance model."""

    SEPARABLE = "separable"
    DIAGONAL = "diagonal"


@dataclass(frozen=True)
class ScalarCorrelation:
    """An even scalar correlation function with `rho(0) = 1`.

    Attributes:
        family: Correlation family
        a: Rate of the exponential and gaussian families, lag-one value of ar1_lattice
        delta: Lattice step of ar1_lattice
        beta: Exponent of power_law, `rho(h) = (1 + |h|)^(-beta - 1)`
    """

    family: RhoFamily
    a: float = 1.0
    delta: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.family == RhoFamily.AR1_LATTICE and not 0.0 <= self.a < 1.0:
            raise ModelError(f"ar1_lattice needs 0 <= a < 1, got {self.a}")
        if self.family in (RhoFamily.EXPONENTIAL, RhoFamily.GAUSSIAN) and self.a <= 0:
            raise ModelError(f"{self.family.value} needs a > 0, got {self.a}")
        if self.family == RhoFamily.POWER_LAW and self.beta <= 0:
            raise ModelError(f"power_law needs beta > 0, got {self.beta}")
        if self.delta <= 0:
            raise ModelError(f"Lattice step must be positive, got {self.delta}")

    def __call__(self, h: np.ndarray) -> np.ndarray:
        """Evaluate at lags of shape (..., d)."""
        h = np.asarray(h, dtype=float)
        if self.family == RhoFamily.AR1_LATTICE:
            return self.a ** (np.abs(h).sum(axis=-1) / self.delta)
        r = np.linalg.norm(h, axis=-1)
        if self.family == RhoFamily.EXPONENTIAL:
            return np.exp(-self.a * r)
        if self.family == RhoFamily.GAUSSIAN:
            return np.exp(-self.a * r**2)
        return (1.0 + r) ** (-self.beta - 1.0)

    @property
    def length_scale(self) -> float:
        """Distance over which the correlation decays by a factor e, 1 for power_law."""
        if self.family == RhoFamily.EXPONENTIAL:
            return 1.0 / self.a
        if self.family == RhoFamily.GAUSSIAN:
            return 1.0 / math.sqrt(self.a)
        if self.family == RhoFamily.AR1_LATTICE:
            rate = self.exponential_rate
            return self.delta if math.isinf(rate) else 1.0 / rate
        return 1.0

    @property
    def exponential_rate(self) -> float:
        """Rate of the exponential law matching an ar1 lattice correlation off the lattice."""
        if self.family != RhoFamily.AR1_LATTICE:
            raise ModelError("Only ar1_lattice correlations have an exponential extension")
        return math.inf if self.a == 0 else -math.log(self.a) / self.delta

    def density(self, theta: np.ndarray) -> np.ndarray:
        """Continuous spectral density `(2 pi)^-d int e^{i h.theta} rho(h) dh` at (m, d) points."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        d = theta.shape[1]
        w2 = np.sum(theta**2, axis=1)
        if self.family == RhoFamily.EXPONENTIAL:
            if d == 1:
                return self.a / (np.pi * (self.a**2 + w2))
            if d == 2:
                return self.a / (2 * np.pi * (self.a**2 + w2) ** 1.5)
        elif self.family == RhoFamily.GAUSSIAN:
            return (4 * np.pi * self.a) ** (-d / 2) * np.exp(-w2 / (4 * self.a))
        elif self.family == RhoFamily.AR1_LATTICE:
            rate = self.exponential_rate
            if math.isinf(rate):
                return np.zeros(len(theta))
            return np.prod(rate / (np.pi * (rate**2 + theta**2)), axis=1)
        elif d == 1:
            return np.array([_power_law_density_1d(self.beta, float(t)) for t in theta[:, 0]])
        raise ModelError(f"No continuous density for {self.family.value} in dimension {d}")

    def lattice_tail_bound(self, radius: int, delta: float, d: int) -> float:
        """Bound `sum_{|k|_inf > radius} |rho(k delta)|` over the integer lattice."""
        m = radius + 1
        if self.family == RhoFamily.POWER_LAW:
            if d == 1:
                return 2.0 * (1 + radius * delta) ** (-self.beta) / (self.beta * delta)
            if self.beta <= 1:
                return math.inf
            return 8.0 * (1 + radius * delta) ** (1 - self.beta) / (delta**2 * (self.beta - 1))
        if self.family == RhoFamily.EXPONENTIAL:
            q = math.exp(-self.a * delta)
        elif self.family == RhoFamily.GAUSSIAN:
            q = math.exp(-self.a * delta**2 * m)
        else:
            q = self.a ** (delta / self.delta)
        if q >= 1.0:
            return math.inf
        head = q**m
        if d == 1:
            return 2.0 * head / (1.0 - q)
        # shells of the sup norm hold 8m points with |k|_2 >= m
        return 8.0 * head * (m / (1.0 - q) + q / (1.0 - q) ** 2)


def _power_law_density_1d(beta: float, theta: float) -> float:
    if theta == 0.0:
        return 1.0 / (np.pi * beta)
    value, _ = integrate.quad(
        lambda x: (1.0 + x) ** (-beta - 1.0),
        0.0,
        np.inf,
        weight="cos",
        wvar=abs(theta),
        epsabs=QUADRATURE_TOLERANCE,
        limlst=200,
    )
    return value / np.pi


@dataclass(frozen=True)
class PseudoCovariance:
    """Pseudo-covariance `C_check(h) = rho(h) * matrix` of a complex process."""

    rho: ScalarCorrelation
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex)
        if np.linalg.norm(matrix - matrix.T) > 1e-12 * max(np.abs(matrix).max(), 1):
            raise ModelError("A pseudo-covariance factor must be symmetric")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)


@dataclass(frozen=True)
class CovarianceModel:
    """A stationary covariance `h -> C(h)` on a truncated frame.

    Attributes:
        frame: Coordinate frame
        d: Parameter dimension
        structure: Separable or diagonal
        rhos: One correlation (separable) or one per coordinate (diagonal)
        sigma0: Self-adjoint PSD factor of a separable model
        nus: Nonnegative coordinate variances of a diagonal model
        complex_valued: Whether the process is complex
        pseudo: Pseudo-covariance of a complex process, None meaning circular
        declared_beta: Power-law exponent claimed for the model
        declared_L: Power-law class constant claimed for the model
        declared_gamma: Hoelder exponent
        holder_const: Hoelder constant, when known
    """

    frame: CoordFrame
    d: int
    structure: Structure
    rhos: Tuple[ScalarCorrelation, ...]
    sigma0: Optional[np.ndarray] = None
    nus: Optional[np.ndarray] = None
    complex_valued: bool = False
    pseudo: Optional[PseudoCovariance] = None
    declared_beta: float = 1.0
    declared_L: float = math.inf
    declared_gamma: float = 1.0
    holder_const: Optional[float] = None

    def __post_init__(self):
        p = self.frame.p
        if self.structure == Structure.SEPARABLE:
            if len(self.rhos) != 1 or self.sigma0 is None:
                raise ModelError("A separable model needs one correlation and sigma0")
            sigma0 = np.array(self.sigma0, dtype=complex).reshape(p, p)
            if np.linalg.norm(sigma0 - sigma0.conj().T) > 1e-12 * max(np.abs(sigma0).max(), 1):
                raise ModelError("sigma0 must be self-adjoint")
            if np.linalg.eigvalsh(sigma0).min() < -1e-12 * max(np.abs(sigma0).max(), 1):
                raise ModelError("sigma0 must be positive semi-definite")
            sigma0.setflags(write=False)
            object.__setattr__(self, "sigma0", sigma0)
        else:
            if self.nus is None or len(self.rhos) != p:
                raise ModelError("A diagonal model needs p correlations and p variances")
            nus = np.array(self.nus, dtype=float).reshape(p)
            if np.any(nus < 0):
                raise ModelError("Coordinate variances must be nonnegative")
            nus.setflags(write=False)
            object.__setattr__(self, "nus", nus)
        if self.pseudo is not None and not self.complex_valued:
            raise ModelError("Only complex models carry a separate pseudo-covariance")

    @classmethod
    def separable(
        cls, rho: ScalarCorrelation, sigma0: np.ndarray, d: int = 1, **attributes
    ) -> "CovarianceModel":
        """Return `C(h) = rho(h) * sigma0`."""
        sigma0 = np.atleast_2d(np.asarray(sigma0))
        frame = CoordFrame(sigma0.shape[0])
        return cls(frame, d, Structure.SEPARABLE, (rho,), sigma0=sigma0, **attributes)

    @classmethod
    def diagonal(
        cls, rhos: Sequence[ScalarCorrelation], nus: Sequence[float], d: int = 1, **attributes
    ) -> "CovarianceModel":
        """Return `C(h) = diag(nu_j * rho_j(h))`."""
        frame = CoordFrame(len(nus))
        return cls(frame, d, Structure.DIAGONAL, tuple(rhos), nus=np.asarray(nus), **attributes)

    @property
    def p(self) -> int:
        """Frame dimension."""
        return self.frame.p

    @property
    def is_real(self) -> bool:
        """Whether the process is real-valued."""
        if self.complex_valued:
            return False
        return self.sigma0 is None or bool(np.all(self.sigma0.imag == 0))

    def trace_weights(self) -> np.ndarray:
        """Per-correlation trace-norm weights, so `||C(h)||_tr = sum_j w_j |rho_j(h)|`."""
        if self.structure == Structure.SEPARABLE:
            return np.array([trace_norm(OperatorRep(self.sigma0, self.frame))])
        return np.asarray(self.nus)

    def combine(self, scalars: np.ndarray) -> np.ndarray:
        """Map per-correlation values of shape (r, m) to operators of shape (m, p, p)."""
        if self.structure == Structure.SEPARABLE:
            return scalars[0][:, None, None] * self.sigma0[None, :, :]
        m = scalars.shape[1]
        out = np.zeros((m, self.p, self.p), dtype=complex)
        index = np.arange(self.p)
        out[:, index, index] = (self.nus[:, None] * scalars).T
        return out

    def _lags(self, h: Union[Sequence[float], np.ndarray]) -> np.ndarray:
        return np.asarray(h, dtype=float).reshape(-1, self.d)

    def cov_array(self, lags: np.ndarray) -> np.ndarray:
        """Return `C(h)` for lags of shape (m, d) as an (m, p, p) array."""
        lags = self._lags(lags)
        return self.combine(np.array([rho(lags) for rho in self.rhos]))

    def pseudo_cov_array(self, lags: np.ndarray) -> np.ndarray:
        """Return the pseudo-covariance `E[X(t+h) (x) conj X(t)]` for lags of shape (m, d)."""
        lags = self._lags(lags)
        if not self.complex_valued:
            return self.cov_array(lags)
        if self.pseudo is None:
            return np.zeros((len(lags), self.p, self.p), dtype=complex)
        return self.pseudo.rho(lags)[:, None, None] * self.pseudo.matrix[None, :, :]


def cov_at(model: CovarianceModel, h: Union[float, Sequence[float]]) -> OperatorRep:
    """Return the stationary covariance `C(h)`."""
    return OperatorRep(model.cov_array(np.atleast_1d(h))[0], model.frame)


def pseudo_cov_at(model: CovarianceModel, h: Union[float, Sequence[float]]) -> OperatorRep:
    """Return the stationary pseudo-covariance."""
    return OperatorRep(model.pseudo_cov_array(np.atleast_1d(h))[0], model.frame)


def _thetas(model: CovarianceModel, theta) -> np.ndarray:
    return np.asarray(theta, dtype=float).reshape(-1, model.d)


def spectral_density_array(model: CovarianceModel, thetas: np.ndarray) -> np.ndarray:
    """Continuous spectral density at (m, d) points as an (m, p, p) array."""
    thetas = _thetas(model, thetas)
    return model.combine(np.array([rho.density(thetas) for rho in model.rhos]))


def spectral_density(model: CovarianceModel, theta) -> OperatorRep:
    """Return the continuous-parameter spectral density `f(theta)`."""
    return OperatorRep(spectral_density_array(model, theta)[0], model.frame)


def fold_theta(theta: np.ndarray, delta: float) -> np.ndarray:
    """Map frequencies into the fundamental domain `[-pi/delta, pi/delta)^d`."""
    period = 2 * np.pi / delta
    return theta - period * np.floor((theta + period / 2) / period)


def _lattice_truncation(
    rhos: Sequence[ScalarCorrelation], weights: np.ndarray, delta: float, d: int
) -> Tuple[int, float]:
    """Return the truncation radius of the lattice sum and the trace-norm bound of its tail."""
    limit = MAX_LATTICE_RADIUS[d]
    radius = 8
    while True:
        bound = sum(w * rho.lattice_tail_bound(radius, delta, d) for w, rho in zip(weights, rhos))
        if bound < FOLD_TOLERANCE:
            return radius, bound
        if radius >= limit:
            if math.isinf(bound):
                raise ModelError("Lattice sum of the covariance does not converge")
            logger.warning(
                "Lattice truncation reached radius %s with tail bound %.3e", radius, bound
            )
            return radius, bound
        radius = min(2 * radius, limit)


def _lattice_fourier_sum(
    rho: ScalarCorrelation, thetas: np.ndarray, delta: float, radius: int
) -> np.ndarray:
    """Return `sum_{|k|_inf <= radius} e^{i k.theta delta} rho(k delta)` for even `rho`."""
    d = thetas.shape[1]
    total = np.zeros(len(thetas))
    if d == 1:
        total += 1.0
        for start in range(1, radius + 1, LATTICE_CHUNK):
            k = np.arange(start, min(start + LATTICE_CHUNK, radius + 1), dtype=float)
            weights = rho(k[:, None] * delta)
            total += 2.0 * np.cos(np.outer(thetas[:, 0] * delta, k)) @ weights
        return total
    axis = np.arange(-radius, radius + 1, dtype=float)
    for start in range(0, len(axis), max(1, LATTICE_CHUNK // len(axis))):
        rows = axis[start : start + max(1, LATTICE_CHUNK // len(axis))]
        k = np.stack(np.meshgrid(rows, axis, indexing="ij"), axis=-1).reshape(-1, 2)
        weights = rho(k * delta)
        total += np.cos((thetas * delta) @ k.T) @ weights
    return total


def _exact_ar1(rho: ScalarCorrelation, d: int, delta: float) -> bool:
    return rho.family == RhoFamily.AR1_LATTICE and d == 1 and rho.delta == delta


def folded_density_array(
    model: CovarianceModel, thetas: np.ndarray, delta: float, pseudo: bool = False
) -> np.ndarray:
    """Folded spectral density `(delta/2pi)^d sum_k e^{i k.theta delta} C(k delta)`.

    Args:
        model: Covariance model
        thetas: Frequencies of shape (m, d)
        delta: Lattice spacing
        pseudo: Sum the pseudo-covariance with phase `e^{-i k.theta delta}` instead

    Returns:
        np.ndarray: Array of shape (m, p, p)
    """
    thetas = _thetas(model, thetas)
    folded = fold_theta(thetas, delta)
    if np.any(np.abs(thetas) > (np.pi / delta) * (1 + 1e-12)):
        logger.warning("Folded frequencies outside the fundamental domain for delta=%s", delta)
    scale = (delta / (2 * np.pi)) ** model.d
    if pseudo and model.complex_valued:
        if model.pseudo is None:
            return np.zeros((len(thetas), model.p, model.p), dtype=complex)
        rho = model.pseudo.rho
        weight = np.array([np.abs(model.pseudo.matrix).sum()])
        radius, _ = _lattice_truncation([rho], weight, delta, model.d)
        values = scale * _lattice_fourier_sum(rho, folded, delta, radius)
        return values[:, None, None] * model.pseudo.matrix[None, :, :]
    scalars = []
    radius = None
    for rho in model.rhos:
        if _exact_ar1(rho, model.d, delta):
            a = rho.a
            phase = np.cos(folded[:, 0] * delta)
            scalars.append(scale * (1 - a**2) / (1 - 2 * a * phase + a**2))
            continue
        if radius is None:
            radius, _ = _lattice_truncation(model.rhos, model.trace_weights(), delta, model.d)
            logger.debug("Folded sum over lattice radius %s", radius)
        scalars.append(scale * _lattice_fourier_sum(rho, folded, delta, radius))
    return model.combine(np.array(scalars))


def folded_tail_bound(model: CovarianceModel, delta: float) -> float:
    """Trace-norm bound on the error of `folded_density_array` from truncating the lattice sum.

    Zero when every correlation is summed in closed form. Power-law tails in
    one dimension decay like `radius^-beta`, so at the radius cap the bound
    stays above the folding tolerance for small `beta`.
    """
    if all(_exact_ar1(rho, model.d, delta) for rho in model.rhos):
        return 0.0
    _, bound = _lattice_truncation(model.rhos, model.trace_weights(), delta, model.d)
    return (delta / (2 * np.pi)) ** model.d * float(bound)


def folded_density(model: CovarianceModel, theta, delta: float) -> OperatorRep:
    """Return the folded spectral density `f(theta; delta)`."""
    return OperatorRep(folded_density_array(model, theta, delta)[0], model.frame)


def pseudo_density(model: CovarianceModel, theta, delta: float) -> OperatorRep:
    """Return the pseudo-spectral density.

    `delta = 0` selects the continuous form `(2pi)^-d int e^{-i x.theta} C_check(x) dx`.
    """
    if delta > 0:
        return OperatorRep(folded_density_array(model, theta, delta, pseudo=True)[0], model.frame)
    thetas = _thetas(model, theta)
    if not model.complex_valued:
        return OperatorRep(spectral_density_array(model, thetas)[0], model.frame)
    if model.pseudo is None:
        return OperatorRep.zeros(model.frame)
    value = model.pseudo.rho.density(thetas)[0]
    return OperatorRep(value * model.pseudo.matrix, model.frame)


@dataclass(frozen=True)
class PowerLawReport:
    """Power-law class diagnostics of a model for one exponent."""

    beta: float
    partial_sum: float
    tail_estimate: float
    diverged: bool
    declared_L: float
    continuous: bool = False

    @property
    def tail_small(self) -> bool:
        """Whether the tail estimate is below 1% of the partial sum."""
        return not self.diverged and self.tail_estimate < 0.01 * self.partial_sum

    @property
    def member(self) -> bool:
        """Whether the model is in the power-law class with the declared constant."""
        return not self.diverged and self.partial_sum + self.tail_estimate <= self.declared_L


def _weighted_trace_norms(model: CovarianceModel, lags: np.ndarray) -> np.ndarray:
    values = np.array([np.abs(rho(lags)) for rho in model.rhos])
    return model.trace_weights() @ values


def _dyadic_blocks(block_sums: Sequence[float]) -> Tuple[float, bool]:
    """Extrapolate the tail from the last two dyadic block sums."""
    first, second = block_sums[-2], block_sums[-1]
    if second <= 0.0:
        return 0.0, False
    if first <= 0.0:
        return second, False
    ratio = second / first
    if ratio >= POWERLAW_RATIO_LIMIT:
        return math.inf, True
    return second * ratio / (1.0 - ratio), False


def powerlaw_norm(
    model: CovarianceModel,
    beta: float,
    cutoff: Optional[int] = None,
    continuous: bool = False,
) -> PowerLawReport:
    """Estimate the power-law norm of a model.

    Discrete: `sum_k ||C(k)||_tr (1 + |k|^beta)` over the integer lattice.
    Continuous: `int (1 + |x|^beta) ||C(x)||_tr dx`.
    Partial sums over dyadic blocks `(cutoff/4, cutoff/2]` and `(cutoff/2, cutoff]`
    are extrapolated geometrically; a non-shrinking block ratio means divergence.

    Args:
        model: Covariance model
        beta: Exponent to test
        cutoff: Largest radius included in the partial sum
        continuous: Use the integral form

    Returns:
        PowerLawReport: Partial sum, tail estimate and verdicts
    """
    cutoff = cutoff or POWERLAW_CUTOFF[model.d]
    edges = [0, cutoff // 4, cutoff // 2, cutoff]
    if continuous:
        blocks = [_continuous_block(model, beta, a, b) for a, b in zip(edges, edges[1:])]
    else:
        blocks = [_discrete_block(model, beta, a, b) for a, b in zip(edges, edges[1:])]
    tail, diverged = _dyadic_blocks(blocks)
    report = PowerLawReport(
        beta=beta,
        partial_sum=math.fsum(blocks),
        tail_estimate=tail,
        diverged=diverged,
        declared_L=model.declared_L,
        continuous=continuous,
    )
    logger.info(
        "Power-law norm for beta=%s: partial %.6g, tail %.3g, diverged=%s",
        beta,
        report.partial_sum,
        report.tail_estimate,
        report.diverged,
    )
    return report


def _discrete_block(model: CovarianceModel, beta: float, low: int, high: int) -> float:
    """Sum over lattice points with sup-norm in [low, high), or [0, high) when low is 0."""
    if model.d == 1:
        k = np.arange(max(low, 0), high, dtype=float)
        weights = np.where(k == 0, 1.0, 2.0)
        lags = k[:, None]
        return float(np.sum(weights * (1 + k**beta) * _weighted_trace_norms(model, lags)))
    total = 0.0
    for m in range(low, high):
        if m == 0:
            shell = np.zeros((1, model.d))
        else:
            side = np.arange(-m, m + 1, dtype=float)
            ring = [np.stack([side, np.full_like(side, s)], axis=-1) for s in (-m, m)]
            inner = np.arange(-m + 1, m, dtype=float)
            ring += [np.stack([np.full_like(inner, s), inner], axis=-1) for s in (-m, m)]
            shell = np.concatenate(ring)
        r = np.linalg.norm(shell, axis=1)
        total += float(np.sum((1 + r**beta) * _weighted_trace_norms(model, shell)))
    return total


def _continuous_block(model: CovarianceModel, beta: float, low: float, high: float) -> float:
    """Integrate the radial power-law weight over [low, high) on dyadic segments."""

    def integrand(r: float) -> float:
        lag = np.zeros((1, model.d))
        lag[0, 0] = r
        radial = 1.0 if model.d == 1 else r
        return radial * (1 + r**beta) * float(_weighted_trace_norms(model, lag)[0])

    factor = 2.0 if model.d == 1 else 2 * np.pi
    edges = [float(low)]
    while edges[-1] < high:
        edges.append(min(float(high), max(1.0, 2 * edges[-1])))
    total = 0.0
    for a, b in zip(edges, edges[1:]):
        value, _ = integrate.quad(integrand, a, b, limit=200, epsabs=QUADRATURE_TOLERANCE)
        total += value
    return factor * total


@dataclass(frozen=True)
class HolderRow:
    """One step of the Hoelder diagnostic."""

    delta: float
    increment_integral: float
    bound: Optional[float]

    @property
    def ratio(self) -> Optional[float]:
        """Increment integral over the declared bound."""
        return None if self.bound is None else self.increment_integral / self.bound


@dataclass(frozen=True)
class HolderReport:
    """Numeric check of `int sup_{|l|<=delta} ||C(x+l) - C(x)||_tr dx <= const * delta^gamma`."""

    gamma: float
    holder_const: Optional[float]
    rows: List[HolderRow] = field(default_factory=list)

    @property
    def passed(self) -> Optional[bool]:
        """Whether every increment integral is within the declared bound."""
        if self.holder_const is None:
            return None
        return all(row.increment_integral <= row.bound for row in self.rows)


def holder_diagnostic(
    model: CovarianceModel, deltas: Sequence[float], shifts: int = 41, extent: float = 40.0
) -> HolderReport:
    """Evaluate the sup-increment integral of a d=1 model on a shrinking grid of steps.

    Args:
        model: A model with d=1
        deltas: Increment radii
        shifts: Number of sampled shifts in `[-delta, delta]`
        extent: Half-width of the integration window in units of correlation length

    Returns:
        HolderReport: Per-step integrals against `holder_const * delta^gamma`
    """
    if model.d != 1:
        raise ModelError("The Hoelder diagnostic is available for d=1 models")
    scale = max(rho.length_scale for rho in model.rhos)
    rows = []
    for delta in deltas:
        step = delta / 20.0
        x = np.arange(-extent * scale, extent * scale + step, step)
        base = np.array([rho(x[:, None]) for rho in model.rhos])
        sup = np.zeros_like(x)
        for shift in np.linspace(-delta, delta, shifts):
            moved = np.array([rho((x + shift)[:, None]) for rho in model.rhos])
            sup = np.maximum(sup, model.trace_weights() @ np.abs(moved - base))
        value = float(integrate.trapezoid(sup, x))
        bound = None
        if model.holder_const is not None:
            bound = model.holder_const * delta**model.declared_gamma
        rows.append(HolderRow(delta=delta, increment_integral=value, bound=bound))
    return HolderReport(gamma=model.declared_gamma, holder_const=model.holder_const, rows=rows)
