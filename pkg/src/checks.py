#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Structural invariant suite run by `specdens check`."""

import logging
import math
import time
from typing import Callable, Dict, List, Tuple

import numpy as np
from config import ExperimentConfig
from experiments import Report, Table, Threshold, map_replicates
from specdens.v0.estimator import (
    EstimatorConfig,
    bias_report,
    estimate_grid,
    expected_estimate,
    theta_grid,
)
from specdens.v0.geometry import Domain, SamplingDesign, overlap_volume, voronoi
from specdens.v0.kernels import KernelFamily, KernelSpec, check_flatness
from specdens.v0.models import (
    CovarianceModel,
    PseudoCovariance,
    RhoFamily,
    ScalarCorrelation,
    holder_diagnostic,
)
from specdens.v0.moments import (
    GaussianQuadruple,
    check_assumption_V,
    chi_square_cum4,
    chi_square_cum4_bruteforce,
    cum4,
)
from specdens.v0.rkhs import brownian_cholesky_check
from specdens.v0.simulate import (
    ChiSquareProcess,
    LinearProcess,
    RngConfig,
    sample_gaussian,
    squared_correlation,
)

logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-9
SYMMETRY_TOLERANCE = 1e-10
PERIODICITY_TOLERANCE = 1e-10
REVERSAL_TOLERANCE = 1e-10
FOLDED_TOLERANCE = 1e-8
CUMULANT_TOLERANCE = 1e-10
VOLUME_TOLERANCE = 1e-9
OVERLAP_TOLERANCE = 1e-12
CHOLESKY_TOLERANCE = 1e-13
BIAS_TOLERANCE = 1e-9
GAUSSIAN_CONFIGURATIONS = 20
CHI_SQUARE_QUADRUPLES = 10
VORONOI_DESIGNS = 10
CUMULANT_RADIUS = 32
LINEAR_ORDER = 4
LINEAR_INNOVATION_CUMULANT = 2.0
HOLDER_CONSTANT = 4.0
HOLDER_STEPS = (0.4, 0.2, 0.1, 0.05)
ASSUMPTION_NOTE = "cumulant sums are a lower bound on the sup over shifts"

CheckFn = Callable[[RngConfig], float]


def _operator_sample(rng: RngConfig, p: int, complex_valued: bool = False):
    sigma0 = np.diag(np.linspace(1.0, 0.5, p)) + 0.1
    model = CovarianceModel.separable(
        ScalarCorrelation(RhoFamily.EXPONENTIAL, a=0.4),
        sigma0.astype(complex) if complex_valued else sigma0,
        complex_valued=complex_valued,
    )
    return sample_gaussian(model, SamplingDesign.grid([64]), rng.stream())


def fast_path_discrepancy(rng: RngConfig) -> float:
    """Largest HS gap between FFT autocovariances and the naive double sum."""
    sample = _operator_sample(rng, 3)
    cfg = EstimatorConfig(8.0, KernelSpec(KernelFamily.PARZEN), theta_grid(1))
    fast = estimate_grid(sample, cfg).values
    naive = estimate_grid(sample, EstimatorConfig(8.0, cfg.kernel, cfg.thetas, fast_path=False))
    return float(np.max(np.linalg.norm(fast - naive.values, axis=(1, 2))))


def self_adjoint_residual(rng: RngConfig) -> float:
    """Largest `||f_hat - f_hat*||_HS` of a complex estimate."""
    sample = _operator_sample(rng, 2, complex_valued=True)
    values = estimate_grid(
        sample, EstimatorConfig(6.0, KernelSpec(KernelFamily.BARTLETT), theta_grid(1))
    ).values
    return float(np.max(np.linalg.norm(values - values.conj().transpose(0, 2, 1), axis=(1, 2))))


def periodicity_residual(rng: RngConfig) -> float:
    """Largest gap between estimates at `theta` and `theta + 2 pi / delta`."""
    sample = _operator_sample(rng, 2)
    thetas = theta_grid(1, points=9)
    cfg = EstimatorConfig(6.0, KernelSpec(KernelFamily.TRUNCATED_POWER, lam=2), thetas)
    base = estimate_grid(sample, cfg).values
    shifted = estimate_grid(sample, cfg.with_thetas(thetas + 2 * np.pi)).values
    return float(np.max(np.abs(shifted - base)))


def time_reversal_residual(rng: RngConfig) -> float:
    """Largest gap between the estimate of the reversed sample and the conjugate estimate."""
    sample = _operator_sample(rng, 3)
    cfg = EstimatorConfig(7.0, KernelSpec(KernelFamily.TRUNCATED_POWER, lam=2), theta_grid(1))
    forward = estimate_grid(sample, cfg).values
    backward = estimate_grid(sample.time_reversed(), cfg).values
    return float(np.max(np.abs(backward - forward.conj())))


def folded_density_residual(rng: RngConfig) -> float:
    """Gap between the expected flat-top estimate of a moving average and its folded density."""
    process = LinearProcess(np.array([[[0.5]], [[1.0]], [[0.5]]]), np.eye(1))
    thetas = theta_grid(1, points=33)
    cfg = EstimatorConfig(8.0, KernelSpec(KernelFamily.TRAPEZOID_FLAT_TOP), thetas)
    expected = expected_estimate(process, SamplingDesign.grid([64]), cfg).values
    return float(np.max(np.abs(expected - process.folded_density_array(thetas))))


def bias_bound_excess(rng: RngConfig) -> float:
    """Largest excess of the exact grid bias over `B1 + B2`; nonpositive when the bound holds."""
    model = CovarianceModel.separable(
        ScalarCorrelation(RhoFamily.POWER_LAW, beta=1.0), np.array([[1.0, 0.2], [0.2, 0.5]])
    )
    cfg = EstimatorConfig(
        10.0, KernelSpec(KernelFamily.TRUNCATED_POWER, lam=2), theta_grid(1, points=17)
    )
    report = bias_report(model, SamplingDesign.grid([128]), cfg)
    return float(np.max(report.bias - report.b1 - report.b2))


def gaussian_cumulant(rng: RngConfig) -> float:
    """Largest |cum4| over random Gaussian quadruples with a pseudo-covariance."""
    largest = 0.0
    for configuration in range(GAUSSIAN_CONFIGURATIONS):
        generator = rng.stream(configuration, block=1)
        model = CovarianceModel.separable(
            ScalarCorrelation(RhoFamily.GAUSSIAN, a=generator.uniform(0.2, 2.0)),
            np.eye(2, dtype=complex),
            complex_valued=True,
            pseudo=PseudoCovariance(
                ScalarCorrelation(RhoFamily.GAUSSIAN, a=generator.uniform(0.2, 2.0)),
                np.array([[0.3, 0.1], [0.1, -0.2]], dtype=complex),
            ),
        )
        quadruple = GaussianQuadruple.from_process(model, generator.uniform(0, 3, 4))
        largest = max(largest, abs(cum4(quadruple)))
    return largest


def chi_square_cumulant_gap(rng: RngConfig) -> float:
    """Largest gap between the closed-form chi-square cumulant and the pairing sum."""
    rho = ScalarCorrelation(RhoFamily.EXPONENTIAL, a=0.7)
    generator = rng.stream(block=2)
    return max(
        abs(chi_square_cum4(rho, times) - chi_square_cum4_bruteforce(rho, times))
        for times in generator.uniform(0, 2, (CHI_SQUARE_QUADRUPLES, 4))
    )


def voronoi_volume_gap(rng: RngConfig) -> float:
    """Largest relative gap between summed Voronoi volumes and the domain volume."""
    largest = 0.0
    domains = [Domain.interval(0.0, 5.0), Domain.rectangle([0.0, 0.0], [3.0, 2.0])]
    for index in range(VORONOI_DESIGNS):
        domain = domains[index % 2]
        generator = rng.stream(index, block=3)
        design = SamplingDesign.uniform(int(generator.integers(20, 200)), domain, generator)
        total = voronoi(design, domain).total_volume
        largest = max(largest, abs(total - domain.volume) / domain.volume)
    return largest


def overlap_rectangle_gap(rng: RngConfig) -> float:
    """Largest gap between clipped overlap areas and `(a - |h1|)(b - |h2|)` on a rectangle."""
    domain = Domain.rectangle([0.0, 0.0], [3.0, 2.0])
    lags = rng.stream(block=4).uniform(-1.5, 1.5, (20, 2))
    closed = np.prod(np.clip(np.array([3.0, 2.0]) - np.abs(lags), 0.0, None), axis=1)
    clipped = np.array([overlap_volume(domain, h) for h in lags])
    return float(np.max(np.abs(clipped - closed)))


def flatness_shortfall(rng: RngConfig) -> float:
    """Zero when the truncated power kernel of order 2 passes its flatness check."""
    report = check_flatness(KernelSpec(KernelFamily.TRUNCATED_POWER, lam=2), 2)
    return 0.0 if report.passed else 1.0


def cholesky_residual(rng: RngConfig) -> float:
    """Residual of the Brownian Gram factorization on 64 uniform nodes."""
    return brownian_cholesky_check(64)


def geometric_linear_process(order: int = LINEAR_ORDER) -> LinearProcess:
    """Scalar moving average with coefficients `2^-|s|` for `|s| <= order`."""
    coeffs = np.array([[[0.5 ** abs(s)]] for s in range(-order, order + 1)])
    return LinearProcess(coeffs, np.eye(1))


def assumption_rows() -> List[Tuple[str, str, float, float, bool]]:
    """Cumulant summability and Hoelder increments of the reference processes.

    Cumulant sums take the supremum over a finite box of shifts, so each value
    is a lower bound on the supremum over all shifts.
    """
    exponential = ScalarCorrelation(RhoFamily.EXPONENTIAL, a=1.0)
    chi_square = ChiSquareProcess(exponential)
    sources = (
        ("gaussian", CovarianceModel.separable(exponential, np.eye(2)), None),
        ("chi_square", chi_square, None),
        ("linear_geometric", geometric_linear_process(), LINEAR_INNOVATION_CUMULANT),
    )
    rows = []
    for name, source, cumulant in sources:
        report = check_assumption_V(
            source, radius=CUMULANT_RADIUS, delta=1.0, innovation_cumulant=cumulant
        )
        bound = math.nan if report.bound is None else report.bound
        holds = report.converged and report.within_bound is not False
        rows.append((name, "cumulant_summability", report.sums[-1], bound, holds))
    models = (
        ("gaussian", exponential, np.eye(1), HOLDER_CONSTANT),
        ("chi_square", squared_correlation(exponential), 2.0 * np.eye(1), 2 * HOLDER_CONSTANT),
    )
    for name, rho, sigma0, holder_const in models:
        model = CovarianceModel.separable(rho, sigma0, holder_const=holder_const)
        report = holder_diagnostic(model, HOLDER_STEPS)
        ratio = max(row.ratio for row in report.rows)
        rows.append((name, "holder_increment", ratio, 1.0, bool(report.passed)))
    for row in rows:
        logger.info("Assumption %s for %s: %.6g (holds: %s)", row[1], row[0], row[2], row[4])
    return rows


CHECKS: Dict[str, CheckFn] = {
    "fast_path_oracle": fast_path_discrepancy,
    "self_adjoint": self_adjoint_residual,
    "grid_periodicity": periodicity_residual,
    "time_reversal": time_reversal_residual,
    "folded_density": folded_density_residual,
    "bias_bound": bias_bound_excess,
    "gaussian_cum4": gaussian_cumulant,
    "chi_square_cum4": chi_square_cumulant_gap,
    "voronoi_volume": voronoi_volume_gap,
    "overlap_rectangle": overlap_rectangle_gap,
    "kernel_flatness": flatness_shortfall,
    "brownian_cholesky": cholesky_residual,
}

TOLERANCES: Dict[str, float] = {
    "fast_path_oracle": ORACLE_TOLERANCE,
    "self_adjoint": SYMMETRY_TOLERANCE,
    "grid_periodicity": PERIODICITY_TOLERANCE,
    "time_reversal": REVERSAL_TOLERANCE,
    "folded_density": FOLDED_TOLERANCE,
    "bias_bound": BIAS_TOLERANCE,
    "gaussian_cum4": CUMULANT_TOLERANCE,
    "chi_square_cum4": CUMULANT_TOLERANCE,
    "voronoi_volume": VOLUME_TOLERANCE,
    "overlap_rectangle": OVERLAP_TOLERANCE,
    "kernel_flatness": 0.0,
    "brownian_cholesky": CHOLESKY_TOLERANCE,
}


def run_checks(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Run every structural check and report its residual against its tolerance."""
    started = time.perf_counter()
    rng = RngConfig(cfg.master_seed, cfg.kind.value)
    names = list(CHECKS)

    def run(index: int) -> float:
        name = names[index]
        value = float(CHECKS[name](rng))
        logger.info("Check %s: %.3e", name, value)
        return value

    values = map_replicates(run, len(names), threads)
    thresholds: List[Threshold] = [
        Threshold(name, value, high=TOLERANCES[name]) for name, value in zip(names, values)
    ]
    rows = [(name, value, TOLERANCES[name]) for name, value in zip(names, values)]
    assumptions = assumption_rows()
    thresholds += [
        Threshold(f"assumption:{model}:{condition}", float(not holds), high=0.0)
        for model, condition, _, _, holds in assumptions
    ]
    tables = {
        "invariants": Table(("name", "residual", "tolerance"), rows),
        "assumptions": Table(("model", "condition", "value", "bound", "holds"), assumptions),
    }
    return Report(
        kind=cfg.kind.value,
        tables=tables,
        thresholds=thresholds,
        header={
            "kind": cfg.kind.value,
            "master_seed": cfg.master_seed,
            "assumptions": ASSUMPTION_NOTE,
        },
        run_info={"threads": threads, "wall_time": round(time.perf_counter() - started, 3)},
    )
