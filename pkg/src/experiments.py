#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Monte Carlo experiment drivers and their reports."""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, TypeVar

import numpy as np
from config import DesignChoice, ExperimentConfig, ProcessKind
from joblib import Parallel, delayed
from scipy import stats
from specdens.v0.estimator import (
    EstimatorConfig,
    EstimatorVariant,
    SpectralEstimate,
    alpha_threshold,
    bandwidth_rule,
    estimate,
    estimate_clt_d1,
    estimate_grid,
    expected_estimate,
    hs_norms,
    theta_grid,
)
from specdens.v0.geometry import (
    Domain,
    SamplingDesign,
    Tessellation,
    convex_hull,
    voronoi,
)
from specdens.v0.kernels import KernelSpec, l2_norm_sq
from specdens.v0.models import (
    CovarianceModel,
    folded_density_array,
    folded_tail_bound,
    spectral_density_array,
)
from specdens.v0.rkhs import (
    EigenModel,
    RkhsSpec,
    brownian_cholesky_check,
    projected_bias,
)
from specdens.v0.simulate import ProcessSample, RngConfig, sample_chi_square, sample_gaussian
from workspace import Workspace

logger = logging.getLogger(__name__)

BIAS_SLOPE_TOLERANCE = 0.15
VARIANCE_SLOPE_TOLERANCE = 0.2
RMSE_SLOPE_TOLERANCE = 0.07
REGIME_SLOPE_TOLERANCE = 0.15
KS_THRESHOLD = 0.01
ODD_MOMENT_FACTOR = 5.0
RKHS_SLOPE_CEILING = -0.4
RKHS_ACCEPTANCE_NOTE = (
    f"bias slope at most {RKHS_SLOPE_CEILING}; the doubling ratio is recorded, not thresholded"
)
RKHS_TRUNCATION_TOLERANCE = 0.02
CHOLESKY_CHECK_NODES = 64
CHOLESKY_TOLERANCE = 1e-13
MIN_SLOPE_POINTS = 4
MIN_BRANCH_POINTS = 2
CROSSOVER_PARALLEL_TOLERANCE = 1e-12
BOUNDARY_TOLERANCE = 1e-9

T = TypeVar("T")


class ExperimentError(Exception):
    """Raised when an experiment cannot be run as configured."""


class Table(NamedTuple):
    """Rows of one CSV artifact."""

    columns: Tuple[str, ...]
    rows: List[Tuple]


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares line through `(log x, log y)`."""

    slope: float
    stderr: float
    intercept: float
    r_squared: float
    points: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the fitted power law at `x`."""
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> SlopeFit:
    """Fit `log y = intercept + slope * log x`.

    Raises:
        ExperimentError: With fewer than four points or nonpositive values
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < MIN_SLOPE_POINTS or len(x) != len(y):
        raise ExperimentError(f"Slope fits need at least {MIN_SLOPE_POINTS} points")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ExperimentError("Slope fits need positive finite values")
    result = stats.linregress(np.log(x), np.log(y))
    return SlopeFit(
        slope=float(result.slope),
        stderr=float(result.stderr),
        intercept=float(result.intercept),
        r_squared=float(result.rvalue**2),
        points=len(x),
    )


@dataclass(frozen=True)
class Threshold:
    """An acceptance check `low <= observed <= high`."""

    name: str
    observed: float
    low: float = -math.inf
    high: float = math.inf

    @property
    def passed(self) -> bool:
        """Whether the observation lies within bounds."""
        return bool(self.low <= self.observed <= self.high)

    @classmethod
    def around(cls, name: str, observed: float, expected: float, tolerance: float) -> "Threshold":
        """Return the check `|observed - expected| <= tolerance`."""
        return cls(name, observed, expected - tolerance, expected + tolerance)


@dataclass
class Report:
    """Tables, fitted slopes and acceptance checks of one experiment run.

    `header` holds the deterministic run description written above every
    table; `run_info` the thread count and wall time, kept apart so tables
    stay identical across thread counts.
    """

    kind: str
    tables: Dict[str, Table]
    thresholds: List[Threshold]
    header: Dict[str, object]
    slopes: Dict[str, SlopeFit] = field(default_factory=dict)
    run_info: Dict[str, object] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        """Whether every acceptance check passed."""
        return all(threshold.passed for threshold in self.thresholds)

    def comments(self) -> List[str]:
        """Header lines for the CSV artifacts."""
        return [f"{key}={value}" for key, value in self.header.items()]

    def summary_table(self) -> Table:
        """Fitted slopes, one row each."""
        rows = [
            (name, fit.slope, fit.stderr, fit.intercept, fit.r_squared, fit.points)
            for name, fit in self.slopes.items()
        ]
        return Table(("name", "slope", "stderr", "intercept", "r_squared", "points"), rows)

    def checks_table(self) -> Table:
        """Acceptance checks, one row each."""
        rows = [(t.name, t.observed, t.low, t.high, t.passed) for t in self.thresholds]
        return Table(("name", "observed", "low", "high", "passed"), rows)

    def write(self, workspace: Workspace) -> None:
        """Write every table plus `summary.csv`, `checks.csv` and `run.csv`."""
        comments = self.comments()
        for name, table in self.tables.items():
            workspace.push_rows(f"{name}.csv", table.columns, table.rows, comments)
        if self.slopes:
            summary = self.summary_table()
            workspace.push_rows("summary.csv", summary.columns, summary.rows, comments)
        checks = self.checks_table()
        workspace.push_rows("checks.csv", checks.columns, checks.rows, comments)
        workspace.push_rows("run.csv", ("key", "value"), sorted(self.run_info.items()))


class RateReport(Report):
    """Report of a rate sweep: rows per size and log-log slopes."""


class NormalityReport(Report):
    """Report of the CLT experiment: KS p-values and standardized moments per frequency."""


def map_replicates(fn: Callable[[int], T], count: int, threads: int = 1) -> List[T]:
    """Evaluate `fn(0), ..., fn(count - 1)` on a worker pool, in replicate order."""
    if threads <= 1:
        return [fn(replicate) for replicate in range(count)]
    jobs = (delayed(fn)(replicate) for replicate in range(count))
    return list(Parallel(n_jobs=threads, prefer="threads")(jobs))


def _header(cfg: ExperimentConfig, theta_points: int) -> Dict[str, object]:
    return {
        "kind": cfg.kind.value,
        "master_seed": cfg.master_seed,
        "replicates": cfg.replicates,
        "kernel": cfg.kernel_spec().name,
        "theta_points": theta_points,
    }


def _run_info(threads: int, started: float) -> Dict[str, object]:
    return {"threads": threads, "wall_time": round(time.perf_counter() - started, 3)}


def grid_bandwidth(cfg: ExperimentConfig, design: SamplingDesign) -> float:
    """Return `side^e` for a configured exponent, the rate-optimal rule otherwise."""
    volume = design.grid_domain().volume
    if cfg.bandwidth is not None:
        return cfg.bandwidth
    if cfg.bandwidth_exponent is not None:
        return volume ** (cfg.bandwidth_exponent / cfg.d)
    return bandwidth_rule(cfg.beta, volume, cfg.d)


def predicted_rmse_slope(cfg: ExperimentConfig) -> float:
    """Slope of log RMSE against log |T| implied by the bandwidth choice.

    With `Delta^d = |T|^e` the bias decays like `|T|^(-beta e / d)` and the
    variance like `|T|^(e - 1)`; the slower of the two wins.
    """
    d, beta = cfg.d, cfg.beta
    if cfg.bandwidth is not None:
        e = 0.0
    elif cfg.bandwidth_exponent is not None:
        e = cfg.bandwidth_exponent
    else:
        e = d / (2 * beta + d)
    return max(-beta * e / d, (e - 1) / 2)


def _deviation_variance(
    model: CovarianceModel,
    design: SamplingDesign,
    est_cfg: EstimatorConfig,
    mean: np.ndarray,
    streams: Callable[[int], np.random.Generator],
    replicates: int,
    threads: int,
) -> np.ndarray:
    """Mean of `||f_hat(theta) - E f_hat(theta)||_HS^2` over replicates, per frequency."""

    def deviation(replicate: int) -> np.ndarray:
        sample = sample_gaussian(model, design, streams(replicate))
        return hs_norms(estimate_grid(sample, est_cfg).values - mean) ** 2

    deviations = map_replicates(deviation, replicates, threads)
    return np.mean(np.stack(deviations), axis=0)


def bias_sweep(
    cfg: ExperimentConfig, model: CovarianceModel, kernel: KernelSpec, thetas: np.ndarray
) -> Table:
    """Exact sup-theta bias against the folded density for each sweep bandwidth."""
    delta = cfg.spacing
    target = folded_density_array(model, thetas, delta)
    rows = []
    for bandwidth in cfg.bias_bandwidths:
        n = int(math.ceil(bandwidth * kernel.support_radius / delta)) + 1
        design = SamplingDesign.grid([n] * cfg.d, delta)
        est_cfg = EstimatorConfig(bandwidth, kernel, thetas, normalization=cfg.normalization)
        mean = expected_estimate(model, design, est_cfg).values
        bias = float(hs_norms(mean - target).max())
        logger.info("Bias sweep: bandwidth %s, sup bias %.6g", bandwidth, bias)
        rows.append((bandwidth, design.n, bias))
    return Table(("bandwidth", "n", "bias"), rows)


def run_rate_experiment(cfg: ExperimentConfig, threads: int = 1) -> RateReport:
    """Bias, variance and MSE rates of the gridded estimator.

    Bias is exact, from the expected estimate against the folded density.
    Variance is a Monte Carlo mean centered at the exact expectation.

    Args:
        cfg: A `rates` configuration
        threads: Worker threads for the replicates

    Returns:
        RateReport: Rows per size, slopes of bias, variance and RMSE, and checks
    """
    started = time.perf_counter()
    model = cfg.covariance_model()
    kernel = cfg.kernel_spec()
    d, delta = cfg.d, cfg.spacing
    thetas = theta_grid(d, delta, cfg.output.theta_points)
    target = folded_density_array(model, thetas, delta)
    rng = RngConfig(cfg.master_seed, cfg.kind.value)
    rows = []
    for block, n in enumerate(cfg.sizes):
        design = SamplingDesign.grid([n] * d, delta)
        volume = design.grid_domain().volume
        bandwidth = grid_bandwidth(cfg, design)
        est_cfg = EstimatorConfig(bandwidth, kernel, thetas, normalization=cfg.normalization)
        mean = expected_estimate(model, design, est_cfg).values
        bias = hs_norms(mean - target)
        variance = _deviation_variance(
            model,
            design,
            est_cfg,
            mean,
            lambda replicate, block=block: rng.stream(replicate, block),
            cfg.replicates,
            threads,
        )
        mse = float(np.max(bias**2 + variance))
        logger.info(
            "Size %s: bandwidth %.4g, sup bias %.4g, sup variance %.4g",
            design.n,
            bandwidth,
            bias.max(),
            variance.max(),
        )
        rows.append(
            (
                design.n,
                volume,
                bandwidth,
                bandwidth**d / volume,
                float(bias.max()),
                float(variance.max()),
                mse,
                math.sqrt(mse),
            )
        )
    columns = ("n", "volume", "bandwidth", "window_ratio", "bias", "variance", "mse", "rmse")
    tables = {"rates": Table(columns, rows)}
    table = np.array(rows, dtype=float)
    slopes = {
        "variance": fit_loglog(table[:, 3], table[:, 5]),
        "rmse": fit_loglog(table[:, 1], table[:, 7]),
    }
    if cfg.bias_bandwidths:
        sweep = bias_sweep(cfg, model, kernel, thetas)
        tables["bias"] = sweep
        sweep_array = np.array(sweep.rows, dtype=float)
        slopes["bias"] = fit_loglog(sweep_array[:, 0], sweep_array[:, 2])
    else:
        slopes["bias"] = fit_loglog(table[:, 2], table[:, 4])
    thresholds = [
        Threshold.around("bias_slope", slopes["bias"].slope, -cfg.beta, BIAS_SLOPE_TOLERANCE),
        Threshold.around(
            "variance_slope", slopes["variance"].slope, 1.0, VARIANCE_SLOPE_TOLERANCE
        ),
        Threshold.around(
            "rmse_slope", slopes["rmse"].slope, predicted_rmse_slope(cfg), RMSE_SLOPE_TOLERANCE
        ),
    ]
    header = _header(cfg, len(thetas))
    header["folded_tail_bound"] = folded_tail_bound(model, delta)
    return RateReport(
        kind=cfg.kind.value,
        tables=tables,
        thresholds=thresholds,
        header=header,
        slopes=slopes,
        run_info=_run_info(threads, started),
    )


def regime_prediction(cfg: ExperimentConfig, alpha: float) -> Tuple[str, float]:
    """Classify a sampling exponent and return the predicted RMSE slope against log n."""
    d, beta, gamma = cfg.d, cfg.beta, cfg.gamma
    if alpha < alpha_threshold(beta, gamma, d):
        return "coarse", -alpha * gamma / 2
    return "fine", -beta * d * (1 - alpha) / (2 * beta + d)


def locate_crossover(alphas: Sequence[float], slopes: Sequence[float]) -> float:
    """Return where straight-line fits of the coarse and fine slope branches meet.

    Every split of the sorted exponents into two runs of at least two points
    is tried and the split with the smallest total squared residual wins.
    The intersection is clipped to the exponent range.

    Raises:
        ExperimentError: With fewer than four exponents
    """
    order = np.argsort(alphas)
    x = np.asarray(alphas, dtype=float)[order]
    y = np.asarray(slopes, dtype=float)[order]
    if len(x) < 2 * MIN_BRANCH_POINTS or len(x) != len(y):
        raise ExperimentError(f"A crossover needs at least {2 * MIN_BRANCH_POINTS} exponents")
    best_residual, crossover = math.inf, math.nan
    for split in range(MIN_BRANCH_POINTS, len(x) - MIN_BRANCH_POINTS + 1):
        left = np.polyfit(x[:split], y[:split], 1)
        right = np.polyfit(x[split:], y[split:], 1)
        residual = float(
            np.sum((np.polyval(left, x[:split]) - y[:split]) ** 2)
            + np.sum((np.polyval(right, x[split:]) - y[split:]) ** 2)
        )
        if residual >= best_residual:
            continue
        best_residual = residual
        if abs(left[0] - right[0]) < CROSSOVER_PARALLEL_TOLERANCE:
            crossover = 0.5 * (x[split - 1] + x[split])
        else:
            crossover = (right[1] - left[1]) / (left[0] - right[0])
    return float(np.clip(crossover, x[0], x[-1]))


def _regime_rows(
    cfg: ExperimentConfig,
    model: CovarianceModel,
    kernel: KernelSpec,
    thetas: np.ndarray,
    target: np.ndarray,
    alpha: float,
    rng: RngConfig,
    first_block: int,
    threads: int,
) -> Tuple[List[Tuple], List[float]]:
    """Rows and sup-theta RMSEs along the size grid for one sampling exponent."""
    if not 0 < alpha < 1:
        raise ExperimentError(f"Sampling exponent {alpha} outside (0, 1)")
    d = cfg.d
    regime, _ = regime_prediction(cfg, alpha)
    rows = []
    rmses = []
    for position, n in enumerate(cfg.sizes):
        delta = float(n) ** -alpha
        design = SamplingDesign.grid([n] * d, delta)
        volume = design.grid_domain().volume
        bandwidth = bandwidth_rule(cfg.beta, volume, d)
        est_cfg = EstimatorConfig(bandwidth, kernel, thetas, normalization=cfg.normalization)
        mean = expected_estimate(model, design, est_cfg).values
        bias = hs_norms(mean - target)
        block = first_block + position
        variance = _deviation_variance(
            model,
            design,
            est_cfg,
            mean,
            lambda replicate, block=block: rng.stream(replicate, block),
            cfg.replicates,
            threads,
        )
        mse = float(np.max(bias**2 + variance))
        rmses.append(math.sqrt(mse))
        logger.info("alpha %.4f, n %s: delta %.4g, rmse %.4g", alpha, n, delta, rmses[-1])
        rows.append(
            (
                alpha,
                regime,
                n,
                delta,
                volume,
                bandwidth,
                float(bias.max()),
                float(variance.max()),
                mse,
                rmses[-1],
            )
        )
    return rows, rmses


def run_mixed_domain_experiment(cfg: ExperimentConfig, threads: int = 1) -> RateReport:
    """RMSE against the continuous density on grids with spacing `n^-alpha`.

    Each configured factor scales the regime threshold `alpha_{beta,gamma}`;
    bandwidths follow the rate-optimal rule on `|T| = (n delta)^d`. With an
    `alpha_grid`, the RMSE slope is also fitted per grid exponent and the
    crossover of the two regimes is checked against the threshold within the
    grid spacing.

    Returns:
        RateReport: Rows per exponent and size, one RMSE slope per exponent
    """
    started = time.perf_counter()
    model = cfg.covariance_model()
    kernel = cfg.kernel_spec()
    thetas = theta_grid(cfg.d, None, cfg.output.theta_points)
    target = spectral_density_array(model, thetas)
    threshold = alpha_threshold(cfg.beta, cfg.gamma, cfg.d)
    rng = RngConfig(cfg.master_seed, cfg.kind.value)
    sweep = (cfg, model, kernel, thetas, target)
    rows = []
    slopes: Dict[str, SlopeFit] = {}
    thresholds = []
    for index, factor in enumerate(cfg.alpha_factors):
        alpha = factor * threshold
        regime, predicted = regime_prediction(cfg, alpha)
        alpha_rows, rmses = _regime_rows(*sweep, alpha, rng, index * len(cfg.sizes), threads)
        rows += alpha_rows
        name = f"rmse:alpha={alpha:.6g}"
        slopes[name] = fit_loglog(cfg.sizes, rmses)
        thresholds.append(
            Threshold.around(
                f"{regime}_slope:alpha={alpha:.6g}",
                slopes[name].slope,
                predicted,
                REGIME_SLOPE_TOLERANCE,
            )
        )
    columns = ("alpha", "regime", "n", "delta", "volume", "bandwidth", "bias", "variance")
    columns += ("mse", "rmse")
    tables = {"regimes": Table(columns, rows)}
    header = _header(cfg, len(thetas))
    header["alpha_threshold"] = threshold
    if cfg.alpha_grid:
        alphas = sorted(cfg.alpha_grid)
        grid_rows = []
        for index, alpha in enumerate(alphas, start=len(cfg.alpha_factors)):
            _, rmses = _regime_rows(*sweep, alpha, rng, index * len(cfg.sizes), threads)
            fit = fit_loglog(cfg.sizes, rmses)
            regime, predicted = regime_prediction(cfg, alpha)
            grid_rows.append((alpha, regime, predicted, fit.slope, fit.stderr))
        crossover = locate_crossover(alphas, [row[3] for row in grid_rows])
        spacing = float(np.max(np.diff(alphas)))
        logger.info("Slope crossover at alpha %.4f, threshold %.4f", crossover, threshold)
        tables["crossover"] = Table(("alpha", "regime", "predicted", "slope", "stderr"), grid_rows)
        header["alpha_crossover"] = crossover
        thresholds.append(Threshold.around("crossover", crossover, threshold, spacing))
    return RateReport(
        kind=cfg.kind.value,
        tables=tables,
        thresholds=thresholds,
        header=header,
        slopes=slopes,
        run_info=_run_info(threads, started),
    )


def boundary_indicator(thetas: np.ndarray, delta: float) -> np.ndarray:
    """Return 1 where `theta` is a multiple of `pi / delta`, 0 elsewhere."""
    ratio = np.asarray(thetas, dtype=float) * delta / np.pi
    return (np.abs(ratio - np.round(ratio)) < BOUNDARY_TOLERANCE).astype(float)


def limit_hs_norms(
    density: np.ndarray,
    kernel_norm_sq: float,
    boundary: bool,
    draws: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw HS norms of the Gaussian limit operator from its eigen-expansion.

    In the eigenbasis of `f(theta)` the limit is
    `||K||_2 sum_ij sqrt(l_i l_j) Z_ij e_i (x) e_j` with a Hermitian array `Z`
    of unit-variance entries, or, at boundary frequencies of a real process,
    a real symmetric `Z` whose diagonal has variance 2.
    """
    eigenvalues = np.clip(np.linalg.eigvalsh(density), 0.0, None)
    p = len(eigenvalues)
    upper = np.triu(np.ones((p, p), dtype=bool), k=1)
    if boundary:
        diagonal = math.sqrt(2.0) * rng.standard_normal((draws, p))
        off = rng.standard_normal((draws, p, p))
    else:
        diagonal = rng.standard_normal((draws, p))
        off = (rng.standard_normal((draws, p, p)) + 1j * rng.standard_normal((draws, p, p)))
        off = off / math.sqrt(2.0)
    squares = np.abs(off) ** 2 * upper
    squares = squares + np.transpose(squares, (0, 2, 1))
    squares[:, np.arange(p), np.arange(p)] = diagonal**2
    weights = np.outer(eigenvalues, eigenvalues)
    return np.sqrt(kernel_norm_sq * np.einsum("rij,ij->r", squares, weights))


def _clt_statistics(
    cfg: ExperimentConfig,
    model: CovarianceModel,
    design: SamplingDesign,
    est_cfg: EstimatorConfig,
    rng: RngConfig,
    threads: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Return the projected statistics and HS norms of the scaled centered estimates."""
    mean = expected_estimate(model, design, est_cfg).values
    scale = math.sqrt(design.grid_domain().volume / est_cfg.bandwidth)
    g = np.ones(model.p) / math.sqrt(model.p)

    def replicate_statistics(replicate: int) -> Tuple[np.ndarray, np.ndarray]:
        sample = sample_gaussian(model, design, rng.stream(replicate))
        centered = scale * (estimate_clt_d1(sample, est_cfg).values - mean)
        projected = np.einsum("j,mjk,k->m", g, centered, g).real
        return projected, hs_norms(centered)

    results = map_replicates(replicate_statistics, cfg.replicates, threads)
    return np.stack([r[0] for r in results]), np.stack([r[1] for r in results])


def _clt_attempt(
    cfg: ExperimentConfig,
    model: CovarianceModel,
    design: SamplingDesign,
    est_cfg: EstimatorConfig,
    rng: RngConfig,
    threads: int,
    attempt: int,
) -> Tuple[List[Tuple], List[Threshold]]:
    delta = design.spacing
    thetas = est_cfg.thetas[:, 0]
    norm_sq = l2_norm_sq(est_cfg.kernel)
    density = folded_density_array(model, est_cfg.thetas, delta)
    pseudo = folded_density_array(model, est_cfg.thetas, delta, pseudo=True)
    boundary = boundary_indicator(thetas, delta)
    g = np.ones(model.p) / math.sqrt(model.p)
    statistics, norms = _clt_statistics(cfg, model, design, est_cfg, rng, threads)
    rows = []
    thresholds = []
    for i, theta in enumerate(thetas):
        f_gg = float(np.real(g @ density[i] @ g))
        pseudo_gg = abs(g @ pseudo[i] @ g)
        target_variance = norm_sq * (f_gg**2 + boundary[i] * pseudo_gg**2)
        sigma = math.sqrt(target_variance)
        ks_pvalue = float(stats.kstest(statistics[:, i], "norm", args=(0.0, sigma)).pvalue)
        limit = limit_hs_norms(
            density[i],
            norm_sq,
            bool(boundary[i]) and model.is_real,
            cfg.limit_draws,
            rng.stream(block=1 + i),
        )
        limit_pvalue = float(stats.ks_2samp(norms[:, i], limit).pvalue)
        z = statistics[:, i] / sigma
        third = float(np.mean(z**3))
        third_se = float(np.std(z**3, ddof=1) / math.sqrt(len(z)))
        logger.info(
            "theta %.4f attempt %s: KS p %.4f, limit KS p %.4f",
            theta,
            attempt,
            ks_pvalue,
            limit_pvalue,
        )
        rows.append(
            (
                attempt,
                rng.master_seed,
                float(theta),
                int(boundary[i]),
                target_variance,
                ks_pvalue,
                limit_pvalue,
                float(np.mean(z)),
                float(np.var(z, ddof=1)),
                third,
                third_se,
            )
        )
        label = f"theta={theta:.6g}"
        thresholds += [
            Threshold(f"ks_pvalue:{label}", ks_pvalue, low=KS_THRESHOLD),
            Threshold(f"limit_ks_pvalue:{label}", limit_pvalue, low=KS_THRESHOLD),
            Threshold(f"third_moment:{label}", abs(third), high=ODD_MOMENT_FACTOR * third_se),
        ]
    return rows, thresholds


def run_clt_experiment(cfg: ExperimentConfig, threads: int = 1) -> NormalityReport:
    """Normality of `sqrt(|T| / Delta) (f_hat - E f_hat)` on a one-dimensional grid.

    Statistics `<T g, g>` for the normalized all-ones `g` are tested with a
    one-sample KS test against the limit variance; HS norms are compared with
    draws of the limit law by a two-sample KS test. A failing KS test triggers
    one rerun under a derived seed, and both attempts are reported.

    Returns:
        NormalityReport: One row per frequency and attempt
    """
    started = time.perf_counter()
    model = cfg.covariance_model()
    if model.complex_valued and model.pseudo is not None:
        raise ExperimentError("The limit law sampler covers real and circular models")
    n = cfg.sizes[0]
    design = SamplingDesign.grid([n], cfg.spacing)
    bandwidth = grid_bandwidth(cfg, design)
    thetas = np.array(cfg.thetas or [np.pi / 3, 0.0], dtype=float)
    est_cfg = EstimatorConfig(
        bandwidth, cfg.kernel_spec(), thetas[:, None], variant=EstimatorVariant.CLT_D1
    )
    rng = RngConfig(cfg.master_seed, cfg.kind.value)
    rows, thresholds = _clt_attempt(cfg, model, design, est_cfg, rng, threads, attempt=1)
    ks_failed = any(not t.passed for t in thresholds if "ks_pvalue" in t.name)
    if ks_failed:
        logger.warning("KS test failed under seed %s, rerunning once", rng.master_seed)
        retry_rows, thresholds = _clt_attempt(
            cfg, model, design, est_cfg, rng.reseeded(), threads, attempt=2
        )
        rows += retry_rows
    columns = ("attempt", "seed", "theta", "boundary", "target_variance", "ks_pvalue")
    columns += ("limit_ks_pvalue", "mean", "variance", "third_moment", "third_moment_se")
    header = _header(cfg, len(thetas))
    header.update(n=n, bandwidth=bandwidth)
    return NormalityReport(
        kind=cfg.kind.value,
        tables={"clt": Table(columns, rows)},
        thresholds=thresholds,
        header=header,
        run_info=_run_info(threads, started),
    )


def run_rkhs_experiment(cfg: ExperimentConfig, threads: int = 1) -> RateReport:
    """Projection bias of minimum-norm interpolation on uniform nodes.

    The sweep runs with `J` and `2J` eigenpairs to check that truncation
    does not move the fitted slope.

    Returns:
        RateReport: Rows per node count and truncation, slopes per truncation
    """
    started = time.perf_counter()
    rows = []
    slopes = {}
    for terms in (cfg.eigen_terms, 2 * cfg.eigen_terms):
        model = EigenModel.power_decay(cfg.eigen_exponent, terms)

        def bias_at(index: int, model: EigenModel = model) -> Tuple[float, float, float]:
            spec = RkhsSpec.uniform(cfg.rkhs_family, cfg.sizes[index])
            result = projected_bias(model, spec)
            return result.bias, result.tail_hs, spec.condition_number

        results = map_replicates(bias_at, len(cfg.sizes), threads)
        biases = [bias for bias, _, _ in results]
        for position, (m, (bias, tail, condition)) in enumerate(zip(cfg.sizes, results)):
            ratio = bias / biases[position - 1] if position else math.nan
            rows.append((m, terms, bias, ratio, tail, condition))
        slopes[f"bias:J={terms}"] = fit_loglog(cfg.sizes, biases)
    first, second = slopes.values()
    residual = brownian_cholesky_check(CHOLESKY_CHECK_NODES)
    thresholds = [
        Threshold("bias_slope", first.slope, high=RKHS_SLOPE_CEILING),
        Threshold.around(
            "truncation_shift", second.slope - first.slope, 0.0, RKHS_TRUNCATION_TOLERANCE
        ),
        Threshold("cholesky_residual", residual, high=CHOLESKY_TOLERANCE),
    ]
    header = {
        "kind": cfg.kind.value,
        "master_seed": cfg.master_seed,
        "eigen_exponent": cfg.eigen_exponent,
        "rkhs_family": cfg.rkhs_family.value,
        "acceptance": RKHS_ACCEPTANCE_NOTE,
    }
    columns = ("m", "terms", "bias", "ratio", "tail_hs", "condition_number")
    return RateReport(
        kind=cfg.kind.value,
        tables={"rkhs": Table(columns, rows)},
        thresholds=thresholds,
        header=header,
        slopes=slopes,
        run_info=_run_info(threads, started),
    )


def simulation_design(cfg: ExperimentConfig, rng: np.random.Generator) -> SamplingDesign:
    """Return the configured design with `sizes[0]` sites per axis."""
    n, d, spacing = cfg.sizes[0], cfg.d, cfg.spacing
    grid = SamplingDesign.grid([n] * d, spacing)
    if cfg.design == DesignChoice.GRID:
        return grid
    if cfg.design == DesignChoice.JITTERED:
        return SamplingDesign.jittered_grid([n] * d, spacing, rng)
    return SamplingDesign.uniform(grid.n, grid.grid_domain(), rng)


def run_simulation(cfg: ExperimentConfig) -> ProcessSample:
    """Draw one realization of the configured process on the configured design."""
    rng = RngConfig(cfg.master_seed, cfg.kind.value).stream()
    design = simulation_design(cfg, rng)
    if cfg.model.process == ProcessKind.CHI_SQUARE:
        if cfg.model.p != 1:
            raise ExperimentError("The chi-square process has one coordinate")
        return sample_chi_square(cfg.correlation(), design, rng)
    return sample_gaussian(cfg.covariance_model(), design, rng)


def _read_design(path: Path) -> SamplingDesign:
    try:
        return SamplingDesign.from_csv(path)
    except (OSError, ValueError) as e:
        raise ExperimentError(f"Cannot read design {path}: {e}") from e


def _read_sample(path: Path, design: Optional[SamplingDesign]) -> ProcessSample:
    try:
        return ProcessSample.from_csv(path, design)
    except (OSError, ValueError, IndexError) as e:
        raise ExperimentError(f"Cannot read sample {path}: {e}") from e


def run_estimation(
    cfg: ExperimentConfig,
    sample_path: Path,
    design_path: Optional[Path] = None,
    domain: Optional[Domain] = None,
    axis: Optional[np.ndarray] = None,
) -> Tuple[SpectralEstimate, Optional[Tessellation]]:
    """Estimate from stored CSV files.

    Grid variants rebuild the configured grid and check the stored sites
    against it. The irregular variant reads the design file when given and
    tessellates the domain, the convex hull of the sites by default.
    Frequencies default to the sup-theta grid; `axis` replaces it by the
    product grid of the given values.

    Returns:
        Tuple[SpectralEstimate, Optional[Tessellation]]: The estimate and, for
            the irregular variant, the tessellation used
    """
    if cfg.bandwidth is None:
        raise ExperimentError("The estimate command needs a bandwidth")
    if cfg.variant == EstimatorVariant.IRREGULAR:
        design = _read_design(design_path) if design_path else None
        sample = _read_sample(sample_path, design)
        domain = domain or convex_hull(sample.design)
        tessellation: Optional[Tessellation] = voronoi(sample.design, domain)
        thetas = theta_grid(sample.design.d, None, cfg.output.theta_points)
    else:
        n = cfg.sizes[0]
        design = SamplingDesign.grid([n] * cfg.d, cfg.spacing)
        sample = _read_sample(sample_path, design)
        tessellation = None
        thetas = theta_grid(cfg.d, cfg.spacing, cfg.output.theta_points)
    if axis is not None:
        mesh = np.meshgrid(*([np.asarray(axis, dtype=float)] * sample.design.d), indexing="ij")
        thetas = np.stack([m.ravel() for m in mesh], axis=-1)
    est_cfg = EstimatorConfig(
        cfg.bandwidth,
        KernelSpec(cfg.kernel.family, sample.design.d, cfg.kernel.lam, cfg.kernel.epsilon),
        thetas,
        variant=cfg.variant,
        normalization=cfg.normalization,
    )
    return estimate(sample, est_cfg, tessellation, domain), tessellation
