#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.
"""Library of lag-window spectral density estimators.

All estimators share the form

    f_hat(theta) = (2 pi)^-d sum_{t,s} e^{i h.theta} X(t) (x) X(s) K(h / Delta) W(t, s)

with `h = t - s`. They differ in the pair weight `W`:

- irregular designs: `|V(t)| |V(s)| / |T ∩ (T - (t - s))|` with Voronoi cell volumes,
- grids of spacing `delta`: `delta^2d / |T_n ∩ (T_n - (t - s))|`,
- the one-dimensional normalization `delta / n` used for asymptotic normality.

`expected_estimate` evaluates the same sums with `X(t) (x) X(s)` replaced by the
model covariance, which is the exact expectation of the estimator.
"""

import logging
import math
import time
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import fft, integrate
from scipy.spatial import cKDTree

from specdens.v0.geometry import (
    DesignKind,
    Domain,
    SamplingDesign,
    Tessellation,
    convex_hull,
    overlap_volumes,
    voronoi,
)
from specdens.v0.kernels import KernelSpec, evaluate
from specdens.v0.models import (
    CovarianceModel,
    CovarianceSource,
    ScalarCorrelation,
    folded_density_array,
    spectral_density_array,
)
from specdens.v0.operator_core import CoordFrame, OperatorRep
from specdens.v0.simulate import ProcessSample

# Increment this major API version when introducing breaking changes
LIBAPI = 0

# Increment this PATCH version before publishing or reset
# to 0 if you are raising the major API version
LIBPATCH = 6

THETA_POINTS = 65
PAIR_CHUNK = 1 << 13
BIAS_TOLERANCE = 1e-9


class LogAdapter(logging.LoggerAdapter):
    """Adapter for the logger to prepend a prefix to all log lines."""

    prefix = "estimator"

    def process(self, msg, kwargs):
        """Decides the format for the prepended text."""
        return f"[{self.prefix}] {msg}", kwargs


logger = LogAdapter(logging.getLogger(__name__), {})


class EstimatorError(Exception):
    """Exception raised for invalid estimator inputs."""


class BandwidthError(EstimatorError):
    """Exception raised when the kernel support does not fit in the observation domain."""


class EstimatorVariant(str, Enum):
    """Pair weighting of the estimator."""

    IRREGULAR = "irregular"
    GRID = "grid"
    CLT_D1 = "clt_d1"


class Normalization(str, Enum):
    """Denominator of the pair weight."""

    OVERLAP = "overlap"
    PLAIN_VOLUME = "plain_volume"


def theta_grid(d: int, delta: Optional[float] = None, points: int = THETA_POINTS) -> np.ndarray:
    """Return an equispaced grid over `[-pi/delta, pi/delta]^d`, `[-pi, pi]^d` without delta.

    Returns:
        np.ndarray: Frequencies of shape (points^d, d)
    """
    bound = np.pi if delta is None else np.pi / delta
    axis = np.linspace(-bound, bound, points)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class EstimatorConfig:
    """Parameters of one estimation run.

    Attributes:
        bandwidth: Lag-window bandwidth `Delta`
        kernel: Lag-window kernel
        thetas: Evaluation frequencies of shape (m, d)
        variant: Pair weighting
        normalization: Overlap volume or plain domain volume in the weight
        fast_path: Use FFT autocovariances on grids
    """

    bandwidth: float
    kernel: KernelSpec
    thetas: np.ndarray
    variant: EstimatorVariant = EstimatorVariant.GRID
    normalization: Normalization = Normalization.OVERLAP
    fast_path: bool = True

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise BandwidthError(f"Bandwidth must be positive, got {self.bandwidth}")
        thetas = np.array(self.thetas, dtype=float).reshape(-1, self.kernel.d)
        if len(thetas) == 0:
            raise EstimatorError("No evaluation frequencies given")
        thetas.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "variant", EstimatorVariant(self.variant))
        object.__setattr__(self, "normalization", Normalization(self.normalization))

    @property
    def d(self) -> int:
        """Parameter dimension."""
        return self.kernel.d

    @property
    def support(self) -> float:
        """Largest lag norm with a nonzero kernel weight."""
        return self.bandwidth * self.kernel.support_radius

    def with_thetas(self, thetas: np.ndarray) -> "EstimatorConfig":
        """Return a copy evaluating at other frequencies."""
        return replace(self, thetas=thetas)

    def with_bandwidth(self, bandwidth: float) -> "EstimatorConfig":
        """Return a copy with another bandwidth."""
        return replace(self, bandwidth=bandwidth)


@dataclass(frozen=True)
class SpectralEstimate:
    """Operator-valued estimates over a frequency grid.

    Attributes:
        thetas: Frequencies of shape (m, d)
        values: Estimates of shape (m, p, p)
        bandwidth: Bandwidth used
        n: Number of sites
        variant: Estimator variant
        kernel: Kernel name
        spacing: Grid spacing, None for irregular designs
        wall_time: Seconds spent
    """

    thetas: np.ndarray
    values: np.ndarray
    bandwidth: float
    n: int
    variant: EstimatorVariant
    kernel: str
    spacing: Optional[float] = None
    wall_time: float = 0.0

    @property
    def p(self) -> int:
        """Frame dimension."""
        return self.values.shape[1]

    def operator(self, index: int) -> OperatorRep:
        """Return the estimate at `thetas[index]`."""
        return OperatorRep(self.values[index], CoordFrame(self.p))

    def hs_norms(self) -> np.ndarray:
        """Return the Hilbert-Schmidt norm of each estimate."""
        return hs_norms(self.values)

    def sup_hs_distance(self, reference: np.ndarray) -> float:
        """Return `max_theta ||f_hat(theta) - reference(theta)||_HS`."""
        return float(np.max(hs_norms(self.values - reference)))

    def to_csv(self, path: Path) -> None:
        """Write one row per frequency and entry: theta components, j, k, re, im."""
        m, p = len(self.thetas), self.p
        thetas = np.repeat(self.thetas, p * p, axis=0)
        j, k = np.divmod(np.tile(np.arange(p * p), m), p)
        flat = self.values.reshape(-1)
        table = np.column_stack([thetas, j, k, flat.real, flat.imag])
        names = [f"theta{axis}" for axis in range(self.thetas.shape[1])] + ["j", "k", "re", "im"]
        np.savetxt(path, table, delimiter=",", fmt="%.17g", header=",".join(names), comments="")
        logger.info("Wrote estimate file %s", path)


def hs_norms(values: np.ndarray) -> np.ndarray:
    """Hilbert-Schmidt norms of a stack of operators of shape (m, p, p)."""
    return np.sqrt(np.sum(np.abs(values) ** 2, axis=(-2, -1)))


ProductFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
WeightFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _pair_sum(
    points: np.ndarray, cfg: EstimatorConfig, products: ProductFn, weights: WeightFn
) -> np.ndarray:
    """Sum `e^{i h.theta} P(t, s) K(h / Delta) W(t, s)` over ordered site pairs.

    Only pairs closer than the kernel support are visited. Each unordered pair
    contributes a term and its adjoint, which is the `(s, t)` term for even
    kernels and symmetric weights.
    """
    n, d = points.shape
    index = np.arange(n)
    diagonal = products(index, index, np.zeros((n, d)))
    scale = (2 * np.pi) ** -d
    own = np.einsum("i,ijk->jk", weights(index, index, np.zeros((n, d))), diagonal)
    total = np.repeat(own[None, :, :], len(cfg.thetas), axis=0).astype(complex)
    pairs = cKDTree(points).query_pairs(cfg.support, output_type="ndarray")
    logger.debug("Pair sum over %s sites and %s close pairs", n, len(pairs))
    for start in range(0, len(pairs), PAIR_CHUNK):
        i, j = pairs[start : start + PAIR_CHUNK].T
        lags = points[i] - points[j]
        coefficient = evaluate(cfg.kernel, lags / cfg.bandwidth) * weights(i, j, lags)
        keep = coefficient != 0
        if not np.any(keep):
            continue
        i, j, lags, coefficient = i[keep], j[keep], lags[keep], coefficient[keep]
        phases = np.exp(1j * (cfg.thetas @ lags.T)) * coefficient
        half = np.einsum("mq,qjk->mjk", phases, products(i, j, lags))
        total += half + half.conj().transpose(0, 2, 1)
    return scale * total


def _sample_products(values: np.ndarray) -> ProductFn:
    def products(i: np.ndarray, j: np.ndarray, lags: np.ndarray) -> np.ndarray:
        return values[i][:, :, None] * values[j].conj()[:, None, :]

    return products


def _model_products(source: CovarianceSource) -> ProductFn:
    def products(i: np.ndarray, j: np.ndarray, lags: np.ndarray) -> np.ndarray:
        return source.cov_array(lags)

    return products


def _irregular_weights(
    volumes: np.ndarray, domain: Domain, normalization: Normalization
) -> WeightFn:
    def weights(i: np.ndarray, j: np.ndarray, lags: np.ndarray) -> np.ndarray:
        if normalization == Normalization.PLAIN_VOLUME:
            denominator = np.full(len(lags), domain.volume)
        else:
            denominator = overlap_volumes(domain, lags)
        out = np.zeros(len(lags))
        positive = denominator > 0
        out[positive] = volumes[i[positive]] * volumes[j[positive]] / denominator[positive]
        return out

    return weights


def _grid_denominators(
    lags: np.ndarray, shape: Tuple[int, ...], normalization: Normalization
) -> np.ndarray:
    """Return `prod_l (n_l - |k_l|)_+`, or `prod_l n_l` for the plain normalization."""
    if normalization == Normalization.PLAIN_VOLUME:
        return np.full(len(lags), float(np.prod(shape)))
    return np.prod(np.clip(np.asarray(shape) - np.abs(lags), 0, None), axis=1).astype(float)


def _grid_weights(
    shape: Tuple[int, ...], delta: float, normalization: Normalization
) -> WeightFn:
    d = len(shape)

    def weights(i: np.ndarray, j: np.ndarray, lags: np.ndarray) -> np.ndarray:
        steps = np.rint(lags / delta).astype(int)
        counts = _grid_denominators(steps, shape, normalization)
        out = np.zeros(len(lags))
        out[counts > 0] = delta**d / counts[counts > 0]
        return out

    return weights


def _window_lags(shape: Tuple[int, ...], delta: float, support: float) -> np.ndarray:
    """Integer lags observable on the grid with `||k delta|| <= support`, shape (L, d)."""
    reach = [min(n - 1, int(math.floor(support / delta + 1e-12))) for n in shape]
    axes = [np.arange(-r, r + 1) for r in reach]
    lags = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    return lags[np.linalg.norm(lags * delta, axis=1) <= support * (1 + 1e-12)]


def _grid_autocovariances(values: np.ndarray, shape: Tuple[int, ...], lags: np.ndarray):
    """Return `S(k) = sum_t X(t) (x) X(t - k)` over the grid for each lag, shape (L, p, p)."""
    p = values.shape[1]
    grid_values = values.reshape(*shape, p)
    axes = tuple(range(len(shape)))
    sizes = [fft.next_fast_len(2 * n - 1) for n in shape]
    spectrum = fft.fftn(grid_values, s=sizes, axes=axes)
    cross = spectrum[..., :, None] * spectrum[..., None, :].conj()
    table = fft.ifftn(cross, axes=axes)
    index = tuple(np.mod(lags[:, axis], sizes[axis]) for axis in axes)
    return table[index]


def _lag_fourier(
    thetas: np.ndarray, lags: np.ndarray, terms: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """Return `sum_k e^{i k.theta} w_k T_k` for lags of shape (L, d) in parameter units."""
    phases = np.exp(1j * (thetas @ lags.T)) * weights
    return np.einsum("ml,ljk->mjk", phases, terms)


def _grid_spacing(design: SamplingDesign, delta: Optional[float]) -> float:
    if design.kind != DesignKind.GRID or design.shape is None:
        raise EstimatorError("The grid estimator needs a grid design")
    spacing = design.spacing if delta is None else delta
    if not np.isclose(spacing, design.spacing):
        raise EstimatorError(f"Spacing {delta} does not match the design spacing {design.spacing}")
    return float(spacing)


def _check_grid_support(cfg: EstimatorConfig, design: SamplingDesign, delta: float) -> None:
    width = min(design.shape) * delta
    if cfg.support > width:
        raise BandwidthError(f"Kernel support {cfg.support} exceeds the grid width {width}")


def _estimate_on_grid(
    sample: ProcessSample,
    cfg: EstimatorConfig,
    delta: Optional[float],
    normalization: Normalization,
    variant: EstimatorVariant,
) -> SpectralEstimate:
    started = time.perf_counter()
    design = sample.design
    delta = _grid_spacing(design, delta)
    if design.d != cfg.d:
        raise EstimatorError(f"Design dimension {design.d} does not match the kernel")
    _check_grid_support(cfg, design, delta)
    shape = tuple(design.shape)
    if cfg.fast_path:
        lags = _window_lags(shape, delta, cfg.support)
        sums = _grid_autocovariances(sample.values, shape, lags)
        weights = (
            (delta / (2 * np.pi)) ** cfg.d
            * evaluate(cfg.kernel, lags * delta / cfg.bandwidth)
            / _grid_denominators(lags, shape, normalization)
        )
        values = _lag_fourier(cfg.thetas, lags * delta, sums, weights)
    else:
        values = _pair_sum(
            design.points,
            cfg,
            _sample_products(sample.values),
            _grid_weights(shape, delta, normalization),
        )
    return SpectralEstimate(
        thetas=cfg.thetas,
        values=values,
        bandwidth=cfg.bandwidth,
        n=design.n,
        variant=variant,
        kernel=cfg.kernel.name,
        spacing=delta,
        wall_time=time.perf_counter() - started,
    )


def estimate_grid(
    sample: ProcessSample, cfg: EstimatorConfig, delta: Optional[float] = None
) -> SpectralEstimate:
    """Estimate the folded spectral density from a sample on a grid of spacing `delta`.

    Args:
        sample: Sample on a grid design
        cfg: Estimator configuration; `fast_path` selects FFT autocovariances
        delta: Grid spacing, taken from the design when omitted

    Returns:
        SpectralEstimate: Estimates at `cfg.thetas`

    Raises:
        EstimatorError: If the design is not a grid
        BandwidthError: If the kernel support exceeds the grid
    """
    return _estimate_on_grid(sample, cfg, delta, cfg.normalization, EstimatorVariant.GRID)


def estimate_clt_d1(
    sample: ProcessSample, cfg: EstimatorConfig, delta: Optional[float] = None
) -> SpectralEstimate:
    """Estimate with the `delta / (2 pi n)` normalization on a one-dimensional grid."""
    if sample.design.d != 1:
        raise EstimatorError("The CLT estimator is defined for d=1 grids")
    return _estimate_on_grid(
        sample, cfg, delta, Normalization.PLAIN_VOLUME, EstimatorVariant.CLT_D1
    )


def _irregular_inputs(
    design: SamplingDesign,
    tessellation: Optional[Tessellation],
    domain: Optional[Domain],
    cfg: EstimatorConfig,
) -> Tuple[Tessellation, Domain]:
    if design.d not in (1, 2) or design.d != cfg.d:
        raise EstimatorError("Irregular estimation needs d in (1, 2) matching the kernel")
    domain = domain or convex_hull(design)
    tessellation = tessellation or voronoi(design, domain)
    if len(tessellation.volumes) != design.n:
        raise EstimatorError(
            f"Tessellation has {len(tessellation.volumes)} cells for {design.n} sites"
        )
    if cfg.support > domain.min_width():
        raise BandwidthError(
            f"Kernel support {cfg.support} exceeds the domain width {domain.min_width()}"
        )
    return tessellation, domain


def estimate_irregular(
    sample: ProcessSample,
    tessellation: Optional[Tessellation],
    domain: Optional[Domain],
    cfg: EstimatorConfig,
) -> SpectralEstimate:
    """Estimate the continuous spectral density from a sample on an irregular design.

    Args:
        sample: Sample on any design
        tessellation: Voronoi cells of the design, computed when None
        domain: Observation domain, the convex hull of the sites when None
        cfg: Estimator configuration

    Returns:
        SpectralEstimate: Estimates at `cfg.thetas`

    Raises:
        EstimatorError: If the tessellation does not match the design
        BandwidthError: If the kernel support exceeds the domain width
    """
    started = time.perf_counter()
    tessellation, domain = _irregular_inputs(sample.design, tessellation, domain, cfg)
    values = _pair_sum(
        sample.design.points,
        cfg,
        _sample_products(sample.values),
        _irregular_weights(tessellation.volumes, domain, cfg.normalization),
    )
    return SpectralEstimate(
        thetas=cfg.thetas,
        values=values,
        bandwidth=cfg.bandwidth,
        n=sample.design.n,
        variant=EstimatorVariant.IRREGULAR,
        kernel=cfg.kernel.name,
        wall_time=time.perf_counter() - started,
    )


def estimate(
    sample: ProcessSample,
    cfg: EstimatorConfig,
    tessellation: Optional[Tessellation] = None,
    domain: Optional[Domain] = None,
) -> SpectralEstimate:
    """Dispatch on `cfg.variant`."""
    if cfg.variant == EstimatorVariant.IRREGULAR:
        return estimate_irregular(sample, tessellation, domain, cfg)
    if cfg.variant == EstimatorVariant.CLT_D1:
        return estimate_clt_d1(sample, cfg)
    return estimate_grid(sample, cfg)


def expected_estimate(
    source: CovarianceSource,
    design: SamplingDesign,
    cfg: EstimatorConfig,
    tessellation: Optional[Tessellation] = None,
    domain: Optional[Domain] = None,
) -> SpectralEstimate:
    """Return the exact expectation of the estimator selected by `cfg.variant`.

    Args:
        source: Covariance model or any process exposing `cov_array`
        design: Observation sites
        cfg: Estimator configuration
        tessellation: Voronoi cells for the irregular variant
        domain: Observation domain for the irregular variant

    Returns:
        SpectralEstimate: `E f_hat(theta)` at `cfg.thetas`
    """
    started = time.perf_counter()
    spacing = None
    if cfg.variant == EstimatorVariant.IRREGULAR:
        tessellation, domain = _irregular_inputs(design, tessellation, domain, cfg)
        values = _pair_sum(
            design.points,
            cfg,
            _model_products(source),
            _irregular_weights(tessellation.volumes, domain, cfg.normalization),
        )
    else:
        spacing = _grid_spacing(design, None)
        _check_grid_support(cfg, design, spacing)
        if cfg.variant == EstimatorVariant.CLT_D1:
            normalization = Normalization.PLAIN_VOLUME
        else:
            normalization = cfg.normalization
        shape = tuple(design.shape)
        lags = _window_lags(shape, spacing, cfg.support)
        counts = _grid_denominators(lags, shape, Normalization.OVERLAP)
        terms = counts[:, None, None] * source.cov_array(lags * spacing)
        weights = (
            (spacing / (2 * np.pi)) ** cfg.d
            * evaluate(cfg.kernel, lags * spacing / cfg.bandwidth)
            / _grid_denominators(lags, shape, normalization)
        )
        values = _lag_fourier(cfg.thetas, lags * spacing, terms, weights)
    return SpectralEstimate(
        thetas=cfg.thetas,
        values=values,
        bandwidth=cfg.bandwidth,
        n=design.n,
        variant=cfg.variant,
        kernel=cfg.kernel.name,
        spacing=spacing,
        wall_time=time.perf_counter() - started,
    )


def _lattice_window(d: int, delta: float, support: float) -> np.ndarray:
    reach = int(math.floor(support / delta + 1e-12))
    return _window_lags((reach + 1,) * d, delta, support)


def _window_integral(
    rho: ScalarCorrelation, theta: np.ndarray, cfg: EstimatorConfig, deficit: bool
) -> float:
    """Return `(2pi)^-d int_{|x| <= support} cos(x.theta) rho(x) w(x) dx`, `w = 1 - K` or 1."""
    support = cfg.support

    def integrand(*coords: float) -> float:
        point = np.array(coords[::-1])
        weight = 1.0 - float(cfg.kernel(point / cfg.bandwidth)) if deficit else 1.0
        return weight * float(rho(point))

    if cfg.d == 1:
        value, _ = integrate.quad(integrand, 0.0, support, weight="cos", wvar=float(theta[0]))
        return value / np.pi

    def oscillating(y: float, x: float) -> float:
        return math.cos(x * theta[0] + y * theta[1]) * integrand(y, x)

    def half_chord(x: float) -> float:
        return math.sqrt(max(support**2 - x**2, 0.0))

    value, _ = integrate.dblquad(
        oscillating, -support, support, lambda x: -half_chord(x), half_chord
    )
    return value / (2 * np.pi) ** 2


def _continuous_window_sums(
    model: CovarianceModel, cfg: EstimatorConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Return the inside-support integral of `C` and its kernel-deficit integral per theta."""
    inside = [[_window_integral(rho, t, cfg, False) for t in cfg.thetas] for rho in model.rhos]
    deficit = [[_window_integral(rho, t, cfg, True) for t in cfg.thetas] for rho in model.rhos]
    return model.combine(np.array(inside)), model.combine(np.array(deficit))


def bias_term_arrays(
    model: CovarianceModel, cfg: EstimatorConfig, delta: Optional[float] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Return the bias terms `(B1, B2)` at every frequency of `cfg`.

    `B1` is the HS norm of the kernel-deficit sum over lags inside the kernel
    support and `B2` the HS norm of the covariance tail outside it. Both carry
    the `(delta / 2pi)^d` normalization of the grid estimator, and `delta=None`
    selects the continuous parameter versions.
    """
    if delta is None:
        inside, deficit = _continuous_window_sums(model, cfg)
        target = spectral_density_array(model, cfg.thetas)
    else:
        lags = _lattice_window(cfg.d, delta, cfg.support)
        covs = model.cov_array(lags * delta)
        scale = np.full(len(lags), (delta / (2 * np.pi)) ** cfg.d)
        inside = _lag_fourier(cfg.thetas, lags * delta, covs, scale)
        loss = scale * (1.0 - evaluate(cfg.kernel, lags * delta / cfg.bandwidth))
        deficit = _lag_fourier(cfg.thetas, lags * delta, covs, loss)
        target = folded_density_array(model, cfg.thetas, delta)
    return hs_norms(deficit), hs_norms(target - inside)


def bias_terms(
    model: CovarianceModel,
    cfg: EstimatorConfig,
    theta: np.ndarray,
    delta: Optional[float] = None,
) -> Tuple[float, float]:
    """Return `(B1, B2)` at one frequency; `delta=None` means continuous parameter."""
    b1, b2 = bias_term_arrays(model, cfg.with_thetas(theta), delta)
    return float(b1[0]), float(b2[0])


@dataclass(frozen=True)
class BiasReport:
    """Exact bias of the grid estimator against its bound `B1 + B2`."""

    thetas: np.ndarray
    bias: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    @property
    def holds(self) -> bool:
        """Whether `||E f_hat - f(.; delta)||_HS <= B1 + B2` at every frequency."""
        return bool(np.all(self.bias <= self.b1 + self.b2 + BIAS_TOLERANCE))


def bias_report(
    model: CovarianceModel, design: SamplingDesign, cfg: EstimatorConfig
) -> BiasReport:
    """Compare the exact grid bias with the bias terms on the design's spacing."""
    delta = _grid_spacing(design, None)
    grid_cfg = replace(cfg, variant=EstimatorVariant.GRID, normalization=Normalization.OVERLAP)
    expected = expected_estimate(model, design, grid_cfg).values
    target = folded_density_array(model, cfg.thetas, delta)
    b1, b2 = bias_term_arrays(model, grid_cfg, delta)
    return BiasReport(cfg.thetas, hs_norms(expected - target), b1, b2)


def bias_bound_holds(
    model: CovarianceModel, design: SamplingDesign, cfg: EstimatorConfig
) -> bool:
    """Whether the triangle inequality `||E f_hat - f|| <= B1 + B2` holds on the grid."""
    return bias_report(model, design, cfg).holds


def bandwidth_rule(beta: float, domain_volume: float, d: int) -> float:
    """Return the rate-optimal bandwidth `|T|^(1 / (2 beta + d))`."""
    if beta <= 0:
        raise EstimatorError(f"beta must be positive, got {beta}")
    return domain_volume ** (1.0 / (2 * beta + d))


def alpha_threshold(beta: float, gamma: float, d: int) -> float:
    """Return the sampling-rate exponent `(1 + (2/d + 1/beta) gamma)^-1` separating regimes."""
    return 1.0 / (1.0 + (2.0 / d + 1.0 / beta) * gamma)
