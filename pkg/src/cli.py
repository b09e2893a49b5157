#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""The specdens command line."""

import logging
import math
import re
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import typer
from checks import run_checks
from config import (
    ConfigError,
    ExperimentConfig,
    ExperimentKind,
    config_content_matches,
    default_config,
    load_config,
    render_config,
)
from experiments import (
    ExperimentError,
    Report,
    Table,
    run_clt_experiment,
    run_estimation,
    run_mixed_domain_experiment,
    run_rate_experiment,
    run_rkhs_experiment,
    run_simulation,
)
from plots import PlotError, emit_plots
from specdens.v0.estimator import EstimatorError, EstimatorVariant
from specdens.v0.geometry import GeometryError
from specdens.v0.kernels import KernelError, KernelFamily
from specdens.v0.models import ModelError
from specdens.v0.moments import MomentsError
from specdens.v0.operator_core import OperatorError
from specdens.v0.rkhs import RkhsError, RkhsFamily
from specdens.v0.simulate import SimulationError
from workspace import Workspace, resolve_threads

logger = logging.getLogger(__name__)

CONFIG_FILE_NAME = "experiment.hcl"
ERROR_EXIT_CODE = 2
FAILED_EXIT_CODE = 1
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
NU_PATTERN = re.compile(r"^\s*j\s*\^\s*-\s*(\d+(?:\.\d*)?)\s*$")
COMMAND_ERRORS = (
    ConfigError,
    EstimatorError,
    ExperimentError,
    GeometryError,
    KernelError,
    ModelError,
    MomentsError,
    OperatorError,
    PlotError,
    RkhsError,
    SimulationError,
)

app = typer.Typer(
    help="Lag-window spectral density estimation for Hilbert-space valued processes.",
    add_completion=False,
)


class LogLevel(str, Enum):
    """Root logger levels accepted by `--log-level`."""

    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"


CONFIG_OPTION = typer.Option(None, "--config", help="HCL experiment file.")
SEED_OPTION = typer.Option(None, "--seed", help="Master seed, overriding the file.")
OUT_DIR_OPTION = typer.Option(None, "--out-dir", help="Directory receiving the artifacts.")
THREADS_OPTION = typer.Option(None, "--threads", help="Worker threads.")
LOG_LEVEL_OPTION = typer.Option(LogLevel.INFO, "--log-level", help="Root logger level.")


@contextmanager
def command_boundary():
    """Log library and configuration errors and exit with the error code."""
    try:
        yield
    except COMMAND_ERRORS as e:
        logger.error("%s", e)
        raise typer.Exit(ERROR_EXIT_CODE)


def configure_logging(level: LogLevel) -> None:
    """Configure the root logger once per invocation."""
    logging.basicConfig(level=level.value, format=LOG_FORMAT, force=True)


def parse_axis(text: str) -> np.ndarray:
    """Parse `start:step:stop` into the frequencies `start, start + step, ...` up to `stop`.

    Raises:
        ConfigError: If the range is malformed
    """
    try:
        start, step, stop = (float(part) for part in text.split(":"))
    except ValueError as e:
        raise ConfigError(f"Frequencies must read start:step:stop, got {text!r}") from e
    if step <= 0 or stop < start:
        raise ConfigError(f"Empty frequency range {text!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def parse_nu(text: str) -> float:
    """Parse an eigenvalue decay written `j^-e` and return `e`.

    Raises:
        ConfigError: If the decay is not of that form
    """
    match = NU_PATTERN.match(text)
    if match is None:
        raise ConfigError(f"Eigenvalue decay must read j^-e, got {text!r}")
    return float(match.group(1))


def parse_sizes(text: str) -> List[int]:
    """Parse a comma separated list of positive integers."""
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"Expected comma separated integers, got {text!r}") from e


def prepare(
    kind: ExperimentKind,
    config_path: Optional[Path],
    threads: Optional[int],
    **overrides,
) -> Tuple[ExperimentConfig, int, Workspace]:
    """Load, override and record the configuration of one command.

    The resolved configuration is rendered to `experiment.hcl` in the
    workspace `<out_dir>/<kind>`; a rerun logs whether it changed.

    Returns:
        Tuple[ExperimentConfig, int, Workspace]: The configuration, the worker
            count and the workspace
    """
    cfg = load_config(config_path) if config_path else default_config(kind)
    if cfg.kind != kind:
        raise ConfigError(f"Configuration is for {cfg.kind.value}, not {kind.value}")
    if overrides.get("out_dir") is not None:
        overrides["out_dir"] = str(overrides["out_dir"])
    cfg = cfg.with_overrides(**overrides)
    try:
        workers = resolve_threads(threads if threads is not None else cfg.threads)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    workspace = Workspace(Path(cfg.output.out_dir) / kind.value)
    rendered = render_config(cfg)
    if workspace.exists(CONFIG_FILE_NAME):
        with workspace.pull(CONFIG_FILE_NAME) as existing:
            if config_content_matches(existing.read(), rendered):
                logger.info("Configuration unchanged since the last run")
            else:
                logger.info("Configuration changed since the last run")
    workspace.push(CONFIG_FILE_NAME, rendered)
    logger.info("Running %s with seed %s on %s threads", kind.value, cfg.master_seed, workers)
    return cfg, workers, workspace


def format_table(table: Table) -> str:
    """Render a table as aligned text columns."""

    def cell(value: object) -> str:
        if isinstance(value, float):
            return f"{value:.6g}"
        return str(value)

    rows = [list(table.columns)] + [[cell(value) for value in row] for row in table.rows]
    widths = [max(len(row[i]) for row in rows) for i in range(len(table.columns))]
    return "\n".join(
        "  ".join(text.ljust(width) for text, width in zip(row, widths)).rstrip() for row in rows
    )


def finish(report: Report, cfg: ExperimentConfig, workspace: Workspace) -> None:
    """Write the report and plots, print the checks and exit 0 iff every check passed."""
    report.write(workspace)
    if cfg.output.plots:
        emit_plots(workspace, report.kind)
    typer.echo(format_table(report.checks_table()))
    for threshold in report.thresholds:
        if not threshold.passed:
            logger.warning(
                "Check %s failed: %s not in [%s, %s]",
                threshold.name,
                threshold.observed,
                threshold.low,
                threshold.high,
            )
    raise typer.Exit(0 if report.passed else FAILED_EXIT_CODE)


@app.command()
def simulate(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    out_dir: Optional[Path] = OUT_DIR_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    log_level: LogLevel = LOG_LEVEL_OPTION,
):
    """Draw one realization and write `sample.csv` and `design.csv`."""
    configure_logging(log_level)
    with command_boundary():
        cfg, _, workspace = prepare(
            ExperimentKind.SIMULATE, config, threads, master_seed=seed, out_dir=out_dir
        )
        sample = run_simulation(cfg)
        workspace.make_dir()
        sample.to_csv(workspace.path("sample.csv"))
        sample.design.to_csv(workspace.path("design.csv"))


@app.command()
def estimate(
    sample: Path = typer.Option(..., "--sample", "--data", help="Sample CSV."),
    design: Optional[Path] = typer.Option(None, "--design", help="Design CSV."),
    kernel: Optional[KernelFamily] = typer.Option(None, "--kernel", help="Kernel family."),
    lam: Optional[int] = typer.Option(None, "--lambda", help="Truncated power order."),
    bandwidth: Optional[float] = typer.Option(
        None, "--bandwidth", "--delta-bw", help="Lag-window bandwidth."
    ),
    thetas: Optional[str] = typer.Option(None, "--thetas", help="Frequencies start:step:stop."),
    variant: Optional[EstimatorVariant] = typer.Option(None, "--variant", help="Variant."),
    out: Optional[Path] = typer.Option(None, "--out", help="Estimate CSV."),
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    out_dir: Optional[Path] = OUT_DIR_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    log_level: LogLevel = LOG_LEVEL_OPTION,
):
    """Estimate the spectral density operator of a stored sample."""
    configure_logging(log_level)
    with command_boundary():
        cfg, _, workspace = prepare(
            ExperimentKind.ESTIMATE,
            config,
            threads,
            master_seed=seed,
            out_dir=out_dir,
            kernel_family=kernel,
            lam=lam,
            bandwidth=bandwidth,
            variant=variant,
        )
        axis = parse_axis(thetas) if thetas else None
        result, tessellation = run_estimation(cfg, sample, design, axis=axis)
        workspace.make_dir()
        result.to_csv(out or workspace.path("estimate.csv"))
        if tessellation is not None:
            tessellation.to_csv(workspace.path("tessellation.csv"))


@app.command()
def rates(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    out_dir: Optional[Path] = OUT_DIR_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    log_level: LogLevel = LOG_LEVEL_OPTION,
):
    """Bias, variance and MSE rates of the gridded estimator."""
    configure_logging(log_level)
    with command_boundary():
        cfg, workers, workspace = prepare(
            ExperimentKind.RATES, config, threads, master_seed=seed, out_dir=out_dir
        )
        finish(run_rate_experiment(cfg, workers), cfg, workspace)


@app.command("mixed-domain")
def mixed_domain(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    out_dir: Optional[Path] = OUT_DIR_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    log_level: LogLevel = LOG_LEVEL_OPTION,
):
    """RMSE regimes under mixed-domain sampling."""
    configure_logging(log_level)
    with command_boundary():
        cfg, workers, workspace = prepare(
            ExperimentKind.MIXED_DOMAIN, config, threads, master_seed=seed, out_dir=out_dir
        )
        finish(run_mixed_domain_experiment(cfg, workers), cfg, workspace)


@app.command()
def clt(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    out_dir: Optional[Path] = OUT_DIR_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    log_level: LogLevel = LOG_LEVEL_OPTION,
):
    """Normality of the standardized estimator."""
    configure_logging(log_level)
    with command_boundary():
        cfg, workers, workspace = prepare(
            ExperimentKind.CLT, config, threads, master_seed=seed, out_dir=out_dir
        )
        finish(run_clt_experiment(cfg, workers), cfg, workspace)


@app.command()
def rkhs(
    family: Optional[RkhsFamily] = typer.Option(None, "--family", help="Reproducing kernel."),
    nu: Optional[str] = typer.Option(None, "--nu", help="Eigenvalue decay, j^-e."),
    slope_grid: Optional[str] = typer.Option(None, "--slope-grid", help="Node counts."),
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    out_dir: Optional[Path] = OUT_DIR_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    log_level: LogLevel = LOG_LEVEL_OPTION,
):
    """Projection bias of minimum-norm interpolation."""
    configure_logging(log_level)
    with command_boundary():
        cfg, workers, workspace = prepare(
            ExperimentKind.RKHS,
            config,
            threads,
            master_seed=seed,
            out_dir=out_dir,
            rkhs_family=family,
            eigen_exponent=parse_nu(nu) if nu else None,
            sizes=parse_sizes(slope_grid) if slope_grid else None,
        )
        finish(run_rkhs_experiment(cfg, workers), cfg, workspace)


@app.command()
def check(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    out_dir: Optional[Path] = OUT_DIR_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    log_level: LogLevel = LOG_LEVEL_OPTION,
):
    """Run the structural invariant suite and the assumption diagnostics."""
    configure_logging(log_level)
    with command_boundary():
        cfg, workers, workspace = prepare(
            ExperimentKind.CHECK, config, threads, master_seed=seed, out_dir=out_dir
        )
        report = run_checks(cfg, workers)
        typer.echo(format_table(report.tables["invariants"]))
        typer.echo(format_table(report.tables["assumptions"]))
        finish(report, cfg, workspace)


if __name__ == "__main__":  # pragma: nocover
    app()
