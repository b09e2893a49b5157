#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.
"""Library for drawing realizations of stationary operator-valued processes.

Three families of processes are provided:

- Gaussian processes of a `CovarianceModel`, drawn exactly on any design by a
  dense Cholesky factorization, or on one-dimensional grids by circulant
  embedding.
- The chi-square process `X(t) = Z(t)^2 - 1` of a unit-variance Gaussian `Z`.
- Truncated moving averages `X(t) = sum_s A_s eps(t - s)` of Gaussian noise.

Every random draw goes through a `numpy.random.Generator` handed out by
`RngConfig.stream`, so that a replicate can be regenerated in isolation.

Example:
```python
config = RngConfig(master_seed=42, experiment="rates")
sample = sample_gaussian_exact(model, design, config.stream(replicate=3))
sample.to_csv(Path("sample.csv"))
```
"""

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from specdens.v0.geometry import DesignKind, SamplingDesign
from specdens.v0.models import (
    CovarianceModel,
    RhoFamily,
    ScalarCorrelation,
    Structure,
)
from specdens.v0.operator_core import CoordFrame, OperatorRep

# Increment this major API version when introducing breaking changes
LIBAPI = 0

# Increment this PATCH version before publishing or reset
# to 0 if you are raising the major API version
LIBPATCH = 3

EXACT_SIZE_LIMIT = 8000
JITTER_FACTOR = 1e-10
EMBEDDING_TOLERANCE = 1e-9
MAX_EMBEDDING_DOUBLINGS = 4
MAX_MOVING_AVERAGE_ORDER = 64
ROW_BLOCK = 512
RESEED_BLOCK = (1 << 32) - 1


class LogAdapter(logging.LoggerAdapter):
    """Adapter for the logger to prepend a prefix to all log lines."""

    prefix = "simulate"

    def process(self, msg, kwargs):
        """Decides the format for the prepended text."""
        return f"[{self.prefix}] {msg}", kwargs


logger = LogAdapter(logging.getLogger(__name__), {})


class SimulationError(Exception):
    """Exception raised when a process cannot be sampled."""


class EmbeddingError(SimulationError):
    """Exception raised when circulant embedding stays indefinite after padding."""


def _stream_key(name: str) -> int:
    digest = hashlib.blake2b(name.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RngConfig:
    """Seed plumbing for reproducible Monte Carlo runs.

    Substreams are derived from `(master_seed, experiment, replicate, block)`
    by hashing, not by advancing a shared generator, so replicate `r` is the
    same whichever worker draws it and in whichever order.
    """

    master_seed: int
    experiment: str = "default"

    def seed_sequence(self, replicate: int = 0, block: int = 0) -> np.random.SeedSequence:
        """Return the seed sequence of one substream."""
        spawn_key = (_stream_key(self.experiment), int(replicate), int(block))
        return np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=spawn_key)

    def stream(self, replicate: int = 0, block: int = 0) -> np.random.Generator:
        """Return an independent generator for one replicate and site block."""
        return np.random.Generator(np.random.PCG64(self.seed_sequence(replicate, block)))

    def for_experiment(self, experiment: str) -> "RngConfig":
        """Return the same master seed scoped to another experiment."""
        return RngConfig(self.master_seed, experiment)

    def reseeded(self) -> "RngConfig":
        """Return a config with a master seed derived from this one."""
        new_seed = int(self.seed_sequence(block=RESEED_BLOCK).generate_state(1, np.uint64)[0])
        logger.warning("Reseeding %s: %s -> %s", self.experiment, self.master_seed, new_seed)
        return RngConfig(new_seed, self.experiment)


@dataclass(frozen=True)
class ProcessSample:
    """Observed values of a process on a design.

    Attributes:
        design: Observation sites
        values: Array of shape (n, p), row `i` holding the coordinates of `X(t_i)`
        is_real: Whether the process is real-valued
    """

    design: SamplingDesign
    values: np.ndarray
    is_real: bool = True

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.shape[0] != self.design.n:
            raise SimulationError(
                f"Sample has {values.shape[0]} rows for a design of {self.design.n} sites"
            )
        if self.is_real:
            if np.iscomplexobj(values) and np.any(values.imag != 0):
                raise SimulationError("A real sample cannot carry imaginary parts")
            values = np.array(values.real, dtype=float)
        else:
            values = np.array(values, dtype=complex)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def p(self) -> int:
        """Frame dimension."""
        return self.values.shape[1]

    @property
    def frame(self) -> CoordFrame:
        """Coordinate frame of the values."""
        return CoordFrame(self.p)

    def time_reversed(self) -> "ProcessSample":
        """Return the sample of `t -> X(-t)` re-anchored on the same one-dimensional grid."""
        if self.design.kind != DesignKind.GRID or self.design.d != 1:
            raise SimulationError("Time reversal needs a one-dimensional grid design")
        return ProcessSample(self.design, self.values[::-1], self.is_real)

    def to_csv(self, path: Path) -> None:
        """Write one row per site and coordinate: site coordinates, coordinate index, re, im."""
        n, p = self.values.shape
        sites = np.repeat(self.design.points, p, axis=0)
        coords = np.tile(np.arange(p), n)[:, None]
        flat = self.values.reshape(-1)
        table = np.hstack([sites, coords, flat.real[:, None], np.imag(flat)[:, None]])
        header = ",".join([f"t{axis}" for axis in range(self.design.d)] + ["coord", "re", "im"])
        np.savetxt(path, table, delimiter=",", fmt="%.17g", header=header, comments="")
        logger.info("Wrote sample file %s", path)

    @classmethod
    def from_csv(cls, path: Path, design: Optional[SamplingDesign] = None) -> "ProcessSample":
        """Read a sample written by `to_csv`.

        Args:
            path: CSV file
            design: Design to attach, which must list the same sites; an irregular
                design is rebuilt from the file otherwise

        Returns:
            ProcessSample: The sample, real when every imaginary part is zero
        """
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        coords = table[:, -3].astype(int)
        p = int(coords.max()) + 1
        n = len(table) // p
        points = table[::p, :-3]
        if design is None:
            design = SamplingDesign.irregular(points)
        elif not np.allclose(design.points, points, rtol=0, atol=1e-12):
            raise SimulationError(f"Sites in {path} do not match the given design")
        values = (table[:, -2] + 1j * table[:, -1]).reshape(n, p)
        return cls(design, values, is_real=bool(np.all(table[:, -1] == 0)))


def _hermitian_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = linalg.eigh(matrix)
    return (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.conj().T


def _block_matrix(source, points: np.ndarray, pseudo: bool = False) -> np.ndarray:
    """Return the (n p, n p) matrix with blocks `C(t_a - t_b)` or the pseudo analogue."""
    n, p = len(points), source.p
    out = np.empty((n, p, n, p), dtype=complex)
    for start in range(0, n, ROW_BLOCK):
        rows = points[start : start + ROW_BLOCK]
        lags = (rows[:, None, :] - points[None, :, :]).reshape(-1, points.shape[1])
        values = source.pseudo_cov_array(lags) if pseudo else source.cov_array(lags)
        out[start : start + len(rows)] = values.reshape(len(rows), n, p, p).transpose(0, 2, 1, 3)
    return out.reshape(n * p, n * p)


def _cholesky(matrix: np.ndarray) -> np.ndarray:
    jitter = JITTER_FACTOR * float(np.mean(np.abs(np.diag(matrix))))
    try:
        return linalg.cholesky(matrix + jitter * np.eye(len(matrix)), lower=True)
    except linalg.LinAlgError as e:
        raise SimulationError(f"Covariance matrix is not positive semi-definite: {e}") from e


def sample_gaussian_exact(
    model: CovarianceModel, design: SamplingDesign, rng: np.random.Generator
) -> ProcessSample:
    """Draw a zero-mean Gaussian process with covariance `model` on `design`.

    Real models use the real block covariance. Circular complex models use a
    complex Cholesky factor. Complex models with a pseudo-covariance are drawn
    through the real lift `(Re X, Im X)`.

    Args:
        model: Covariance model
        design: Observation sites with the model's dimension
        rng: Random generator

    Returns:
        ProcessSample: One realization

    Raises:
        SimulationError: If the design is too large or the covariance is indefinite
    """
    if design.d != model.d:
        raise SimulationError(f"Design dimension {design.d} does not match model d={model.d}")
    size = design.n * model.p
    if size > EXACT_SIZE_LIMIT:
        raise SimulationError(f"Exact sampling needs n*p <= {EXACT_SIZE_LIMIT}, got {size}")
    gamma = _block_matrix(model, design.points)
    if model.is_real:
        factor = _cholesky(gamma.real)
        values = factor @ rng.standard_normal(size)
    elif not model.complex_valued:
        raise SimulationError("A real-valued process needs a real covariance")
    elif model.pseudo is None:
        factor = _cholesky(gamma)
        noise = rng.standard_normal(size) + 1j * rng.standard_normal(size)
        values = factor @ noise / np.sqrt(2.0)
    else:
        pseudo = _block_matrix(model, design.points, pseudo=True)
        lift = 0.5 * np.block(
            [
                [(gamma + pseudo).real, (pseudo - gamma).imag],
                [(pseudo + gamma).imag, (gamma - pseudo).real],
            ]
        )
        draw = _cholesky(lift) @ rng.standard_normal(2 * size)
        values = draw[:size] + 1j * draw[size:]
    return ProcessSample(design, values.reshape(design.n, model.p), is_real=model.is_real)


def _embedding_eigenvalues(rho: ScalarCorrelation, n: int, delta: float) -> np.ndarray:
    size = 2 * max(n - 1, 1)
    for _ in range(MAX_EMBEDDING_DOUBLINGS + 1):
        half = size // 2
        k = np.concatenate([np.arange(half + 1), np.arange(half - 1, 0, -1)])
        eigenvalues = np.fft.fft(rho(k[:, None] * delta)).real
        if eigenvalues.min() >= -EMBEDDING_TOLERANCE:
            return np.clip(eigenvalues, 0.0, None)
        logger.warning(
            "Circulant embedding of size %s has eigenvalue %.3e, padding",
            size,
            eigenvalues.min(),
        )
        size *= 2
    raise EmbeddingError(
        f"Circulant embedding indefinite after {MAX_EMBEDDING_DOUBLINGS} doublings"
    )


def sample_gaussian_grid_fft(
    model: CovarianceModel, n: int, delta: float, rng: np.random.Generator
) -> ProcessSample:
    """Draw a separable Gaussian model on the grid `delta * (1..n)` by circulant embedding.

    Raises:
        SimulationError: If the model is not separable, not one-dimensional or not circular
        EmbeddingError: If the embedding stays indefinite
    """
    if model.structure != Structure.SEPARABLE or model.d != 1:
        raise SimulationError("Circulant embedding needs a separable model with d=1")
    if model.complex_valued and model.pseudo is not None:
        raise SimulationError("Circulant embedding does not cover pseudo-covariances")
    if not model.complex_valued and not model.is_real:
        raise SimulationError("A real-valued process needs a real covariance")
    eigenvalues = _embedding_eigenvalues(model.rhos[0], n, delta)
    size = len(eigenvalues)
    noise = rng.standard_normal((size, model.p)) + 1j * rng.standard_normal((size, model.p))
    fields = np.fft.fft(np.sqrt(eigenvalues / size)[:, None] * noise, axis=0)[:n]
    root = _hermitian_sqrt(model.sigma0)
    if model.is_real:
        values = fields.real @ root.real.T
    else:
        values = fields / np.sqrt(2.0) @ root.T
    return ProcessSample(SamplingDesign.grid([n], delta), values, is_real=model.is_real)


def sample_gaussian(
    model: CovarianceModel, design: SamplingDesign, rng: np.random.Generator
) -> ProcessSample:
    """Draw with the exact sampler, or by circulant embedding when only it can cope."""
    use_fft = (
        design.kind == DesignKind.GRID
        and design.d == 1
        and model.structure == Structure.SEPARABLE
        and model.pseudo is None
        and design.n * model.p > EXACT_SIZE_LIMIT
    )
    if use_fft:
        logger.debug("Sampling %s sites by circulant embedding", design.n)
        return sample_gaussian_grid_fft(model, design.n, design.spacing, rng)
    return sample_gaussian_exact(model, design, rng)


def squared_correlation(rho: ScalarCorrelation) -> ScalarCorrelation:
    """Return the correlation `rho^2`, which stays in the family of `rho`."""
    if rho.family in (RhoFamily.EXPONENTIAL, RhoFamily.GAUSSIAN):
        return ScalarCorrelation(rho.family, a=2 * rho.a)
    if rho.family == RhoFamily.AR1_LATTICE:
        return ScalarCorrelation(rho.family, a=rho.a**2, delta=rho.delta)
    return ScalarCorrelation(rho.family, beta=2 * rho.beta + 1)


@dataclass(frozen=True)
class ChiSquareProcess:
    """The scalar process `X(t) = Z(t)^2 - 1` of a Gaussian `Z` with correlation `rho`."""

    rho: ScalarCorrelation
    d: int = 1

    @property
    def p(self) -> int:
        """Frame dimension."""
        return 1

    @property
    def frame(self) -> CoordFrame:
        """Scalar frame."""
        return CoordFrame(1)

    @property
    def is_real(self) -> bool:
        """The process is real."""
        return True

    def gaussian_model(self) -> CovarianceModel:
        """Return the model of the underlying Gaussian `Z`."""
        return CovarianceModel.separable(self.rho, np.eye(1), d=self.d)

    def cov_array(self, lags: np.ndarray) -> np.ndarray:
        """Return `C(h) = 2 rho(h)^2` for lags of shape (m, d)."""
        lags = np.asarray(lags, dtype=float).reshape(-1, self.d)
        return (2.0 * self.rho(lags) ** 2).reshape(-1, 1, 1).astype(complex)

    def pseudo_cov_array(self, lags: np.ndarray) -> np.ndarray:
        """Return the pseudo-covariance, equal to the covariance of a real process."""
        return self.cov_array(lags)

    def cov_at(self, h: Union[float, Sequence[float]]) -> OperatorRep:
        """Return the covariance at one lag."""
        return OperatorRep(self.cov_array(np.atleast_1d(h))[0], self.frame)

    def as_covariance_model(self) -> CovarianceModel:
        """Return a model with the covariance of `X`, valid up to second order."""
        return CovarianceModel.separable(squared_correlation(self.rho), 2.0 * np.eye(1), d=self.d)

    def sample(self, design: SamplingDesign, rng: np.random.Generator) -> ProcessSample:
        """Draw one realization on `design`."""
        gaussian = sample_gaussian_exact(self.gaussian_model(), design, rng)
        return ProcessSample(design, gaussian.values**2 - 1.0, is_real=True)


def sample_chi_square(
    rho_z: ScalarCorrelation, design: SamplingDesign, rng: np.random.Generator
) -> ProcessSample:
    """Draw `Z(t)^2 - 1` on `design` for a unit-variance Gaussian `Z` with correlation `rho_z`."""
    return ChiSquareProcess(rho_z, design.d).sample(design, rng)


@dataclass(frozen=True)
class LinearProcess:
    """The moving average `X(t) = sum_{|s| <= S} A_s eps(t - s)` on the lattice `delta * Z`.

    Attributes:
        coeffs: Array of shape (2S + 1, p, p), entry `s + S` holding `A_s`
        innovation: Covariance of the iid Gaussian innovations
        delta: Lattice spacing
    """

    coeffs: np.ndarray
    innovation: np.ndarray
    delta: float = 1.0

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=complex)
        if coeffs.ndim != 3 or coeffs.shape[0] % 2 != 1 or coeffs.shape[1] != coeffs.shape[2]:
            raise SimulationError("Coefficients must have shape (2S + 1, p, p)")
        if coeffs.shape[0] // 2 > MAX_MOVING_AVERAGE_ORDER:
            raise SimulationError(f"Moving average order exceeds {MAX_MOVING_AVERAGE_ORDER}")
        innovation = np.array(self.innovation, dtype=complex).reshape(coeffs.shape[1:])
        if np.linalg.norm(innovation - innovation.conj().T) > 1e-12 * (
            1 + np.abs(innovation).max()
        ):
            raise SimulationError("Innovation covariance must be self-adjoint")
        for array in (coeffs, innovation):
            array.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "innovation", innovation)

    @classmethod
    def from_operators(
        cls, coeffs: Mapping[int, OperatorRep], innovation: OperatorRep, delta: float = 1.0
    ) -> "LinearProcess":
        """Build from a mapping `s -> A_s`; missing lags are zero."""
        order = max(abs(s) for s in coeffs)
        p = innovation.frame.p
        table = np.zeros((2 * order + 1, p, p), dtype=complex)
        for s, a in coeffs.items():
            table[s + order] = a.entries
        return cls(table, innovation.entries, delta)

    @property
    def order(self) -> int:
        """Largest lag `S` with a coefficient."""
        return self.coeffs.shape[0] // 2

    @property
    def p(self) -> int:
        """Frame dimension."""
        return self.coeffs.shape[1]

    @property
    def d(self) -> int:
        """Parameter dimension."""
        return 1

    @property
    def frame(self) -> CoordFrame:
        """Coordinate frame."""
        return CoordFrame(self.p)

    @property
    def is_real(self) -> bool:
        """Whether coefficients and innovations are real."""
        return bool(np.all(self.coeffs.imag == 0) and np.all(self.innovation.imag == 0))

    def _lag_cov(self, k: int) -> np.ndarray:
        """Return `sum_s A_{s+k} Sigma_eps A_s^*`."""
        total = np.zeros((self.p, self.p), dtype=complex)
        order = self.order
        for s in range(-order, order + 1):
            if abs(s + k) <= order:
                lead = self.coeffs[s + k + order]
                total += lead @ self.innovation @ self.coeffs[s + order].conj().T
        return total

    def cov_array(self, lags: np.ndarray) -> np.ndarray:
        """Return the implied covariance for lags of shape (m, 1), zero off the lattice."""
        lags = np.asarray(lags, dtype=float).reshape(-1)
        steps = lags / self.delta
        index = np.rint(steps).astype(int)
        out = np.zeros((len(lags), self.p, self.p), dtype=complex)
        cache = {}
        for i, (k, step) in enumerate(zip(index, steps)):
            if abs(step - k) > 1e-9 or abs(k) > 2 * self.order:
                continue
            if k not in cache:
                cache[k] = self._lag_cov(int(k))
            out[i] = cache[k]
        return out

    def pseudo_cov_array(self, lags: np.ndarray) -> np.ndarray:
        """Return the pseudo-covariance, zero for circular complex innovations."""
        if self.is_real:
            return self.cov_array(lags)
        return np.zeros((np.asarray(lags).size, self.p, self.p), dtype=complex)

    def cov_at(self, h: float) -> OperatorRep:
        """Return the implied covariance `C(h)`."""
        return OperatorRep(self.cov_array(np.atleast_1d(h))[0], self.frame)

    def folded_density_array(self, thetas: np.ndarray) -> np.ndarray:
        """Return `(delta/2pi) sum_{|k| <= 2S} e^{i k theta delta} C(k delta)` as (m, p, p)."""
        thetas = np.asarray(thetas, dtype=float).reshape(-1)
        k = np.arange(-2 * self.order, 2 * self.order + 1)
        covs = self.cov_array(k * self.delta)
        phases = np.exp(1j * np.outer(thetas * self.delta, k))
        return self.delta / (2 * np.pi) * np.einsum("mk,kij->mij", phases, covs)

    def sample(self, n: int, rng: np.random.Generator) -> ProcessSample:
        """Draw `X(delta), ..., X(n delta)`."""
        order, p = self.order, self.p
        root = _hermitian_sqrt(self.innovation)
        count = n + 2 * order
        if self.is_real:
            noise = rng.standard_normal((count, p)) @ root.real.T
        else:
            noise = (rng.standard_normal((count, p)) + 1j * rng.standard_normal((count, p)))
            noise = noise / np.sqrt(2.0) @ root.T
        values = np.zeros((n, p), dtype=complex)
        for s in range(-order, order + 1):
            values += noise[order - s : order - s + n] @ self.coeffs[s + order].T
        design = SamplingDesign.grid([n], self.delta)
        return ProcessSample(design, values, is_real=self.is_real)


def sample_linear_process(
    coeffs: Union[Mapping[int, OperatorRep], np.ndarray],
    innovation: Union[OperatorRep, np.ndarray],
    n: int,
    rng: np.random.Generator,
    delta: float = 1.0,
) -> ProcessSample:
    """Draw a truncated moving average of Gaussian innovations on `delta * (1..n)`.

    Args:
        coeffs: Mapping `s -> A_s`, or an array of shape (2S + 1, p, p)
        innovation: Innovation covariance
        n: Number of grid sites
        rng: Random generator
        delta: Lattice spacing

    Returns:
        ProcessSample: One realization
    """
    if isinstance(coeffs, Mapping):
        if not isinstance(innovation, OperatorRep):
            innovation = OperatorRep(np.atleast_2d(innovation), CoordFrame(len(innovation)))
        process = LinearProcess.from_operators(coeffs, innovation, delta)
    else:
        entries = innovation.entries if isinstance(innovation, OperatorRep) else innovation
        process = LinearProcess(coeffs, entries, delta)
    return process.sample(n, rng)

