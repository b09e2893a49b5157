#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Experiment configuration for the specdens command line."""

import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import hcl
import numpy as np
from jinja2 import Environment, FileSystemLoader
from pydantic import BaseModel, Field, ValidationError, root_validator, validator
from specdens.v0.estimator import EstimatorVariant, Normalization
from specdens.v0.kernels import KernelFamily, KernelSpec
from specdens.v0.models import (
    CovarianceModel,
    RhoFamily,
    ScalarCorrelation,
    Structure,
)
from specdens.v0.rkhs import RkhsFamily

logger = logging.getLogger(__name__)

CONFIG_DIR_PATH = Path(__file__).parent / "configs"
CONFIG_TEMPLATE_DIR_PATH = Path(__file__).parent / "templates"
CONFIG_TEMPLATE_NAME = "experiment.hcl.j2"
CONFIG_SECTIONS = ("experiment", "model", "kernel", "output")
MIN_SLOPE_POINTS = 4
SEED_KEY = "master_seed"
SIGMA0_IDENTITY = "identity"
SIGMA0_TOLERANCE = 1e-10
SECTION_OVERRIDES = {
    "out_dir": ("output", "out_dir"),
    "kernel_family": ("kernel", "family"),
    "lam": ("kernel", "lam"),
}


class ConfigError(Exception):
    """Raised when an experiment configuration cannot be read or is invalid."""


class ExperimentKind(str, Enum):
    """Commands that read an experiment configuration."""

    SIMULATE = "simulate"
    ESTIMATE = "estimate"
    RATES = "rates"
    MIXED_DOMAIN = "mixed-domain"
    CLT = "clt"
    RKHS = "rkhs"
    CHECK = "check"


class DesignChoice(str, Enum):
    """How observation sites are laid out."""

    GRID = "grid"
    UNIFORM = "uniform"
    JITTERED = "jittered"


def load_sigma0(path: str, p: int) -> np.ndarray:
    """Read a lag-zero operator from a comma separated `p x p` matrix.

    Raises:
        ValueError: When the file is unreadable, of the wrong shape, not symmetric or
            not positive semidefinite
    """
    try:
        matrix = np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))
    except (OSError, ValueError) as e:
        raise ValueError(f"cannot read sigma0 matrix {path}: {e}") from e
    if matrix.shape != (p, p):
        raise ValueError(f"sigma0 matrix {path} has shape {matrix.shape}, expected ({p}, {p})")
    scale = max(1.0, float(np.abs(matrix).max()))
    if not np.allclose(matrix, matrix.T, rtol=0, atol=SIGMA0_TOLERANCE * scale):
        raise ValueError(f"sigma0 matrix {path} is not symmetric")
    if np.linalg.eigvalsh(matrix).min() < -SIGMA0_TOLERANCE * scale:
        raise ValueError(f"sigma0 matrix {path} is not positive semidefinite")
    return matrix


class ProcessKind(str, Enum):
    """Processes the simulate command can draw."""

    GAUSSIAN = "gaussian"
    CHI_SQUARE = "chi_square"


class ModelBlock(BaseModel):
    """The `model {}` section."""

    family: RhoFamily = Field(RhoFamily.POWER_LAW, description="Scalar correlation family.")
    a: float = Field(1.0, ge=0, description="Rate, or lag-one value for ar1_lattice.")
    beta: float = Field(1.0, gt=0, description="Exponent of the power_law correlation.")
    d: int = Field(1, ge=1, le=2, description="Parameter dimension.")
    p: int = Field(1, ge=1, le=64, description="Number of coordinates of the frame.")
    structure: Structure = Field(Structure.SEPARABLE, description="Separable or diagonal.")
    variances: Optional[List[float]] = Field(
        None, description="Coordinate variances, one per coordinate; ones when omitted."
    )
    sigma0: str = Field(
        SIGMA0_IDENTITY, description="Lag-zero operator: identity or a CSV matrix path."
    )
    complex_valued: bool = Field(False, description="Draw a circular complex process.")
    process: ProcessKind = Field(ProcessKind.GAUSSIAN, description="Process to simulate.")

    @validator("variances")
    def variances_nonnegative(cls, value):  # noqa: N805
        """Reject negative variances."""
        if value is not None and any(v < 0 for v in value):
            raise ValueError("variances must be nonnegative")
        return value

    @root_validator(skip_on_failure=True)
    def variances_match_frame(cls, values):  # noqa: N805
        """Require one variance per coordinate."""
        variances = values.get("variances")
        if variances is not None and len(variances) != values["p"]:
            raise ValueError(f"expected {values['p']} variances, got {len(variances)}")
        return values

    @root_validator(skip_on_failure=True)
    def sigma0_fits_frame(cls, values):  # noqa: N805
        """Load a sigma0 matrix once to check it against the frame."""
        if values["sigma0"] == SIGMA0_IDENTITY:
            return values
        if values.get("variances") is not None:
            raise ValueError("variances and a sigma0 matrix are exclusive")
        if values["structure"] != Structure.SEPARABLE:
            raise ValueError("a sigma0 matrix needs the separable structure")
        load_sigma0(values["sigma0"], values["p"])
        return values

    def sigma0_matrix(self) -> np.ndarray:
        """Return the lag-zero operator of the separable structure."""
        if self.sigma0 == SIGMA0_IDENTITY:
            return np.diag(self.variances or [1.0] * self.p)
        return load_sigma0(self.sigma0, self.p)


class KernelBlock(BaseModel):
    """The `kernel {}` section."""

    family: KernelFamily = Field(KernelFamily.TRUNCATED_POWER, description="Kernel family.")
    lam: int = Field(2, ge=1, description="Order of the truncated power kernel.")
    epsilon: float = Field(0.5, gt=0, lt=1, description="Plateau radius of the trapezoid.")


class OutputBlock(BaseModel):
    """The `output {}` section."""

    out_dir: str = Field("results", description="Directory receiving the artifacts.")
    plots: bool = Field(True, description="Render SVG plots of the fitted slopes.")
    theta_points: int = Field(65, ge=3, description="Points per axis of the sup-theta grid.")


class ExperimentConfig(BaseModel):
    """A validated experiment: the `experiment {}` section plus its sub-blocks."""

    kind: ExperimentKind = Field(description="Experiment to run.")
    master_seed: int = Field(0, ge=0, lt=2**64, description="Seed of every random stream.")
    threads: Optional[int] = Field(None, ge=1, description="Worker threads.")
    sizes: List[int] = Field(
        [256, 512, 1024, 2048], description="Sample sizes, or RKHS node counts."
    )
    spacing: float = Field(1.0, gt=0, description="Fixed grid spacing.")
    design: DesignChoice = Field(DesignChoice.GRID, description="Site layout.")
    variant: EstimatorVariant = Field(EstimatorVariant.GRID, description="Estimator variant.")
    normalization: Normalization = Field(Normalization.OVERLAP, description="Pair weighting.")
    bandwidth: Optional[float] = Field(None, gt=0, description="Fixed bandwidth.")
    bandwidth_exponent: Optional[float] = Field(
        None, gt=0, lt=1, description="Bandwidth `n^e`; the rate-optimal rule when omitted."
    )
    bias_bandwidths: List[float] = Field(
        [], description="Bandwidths of the exact bias sweep; the size grid when empty."
    )
    alpha_factors: List[float] = Field(
        [0.5, 1.5], description="Sampling exponents as multiples of the regime threshold."
    )
    alpha_grid: List[float] = Field(
        [], description="Sampling exponents of the regime crossover sweep; none when empty."
    )
    beta: float = Field(1.0, gt=0, description="Power-law exponent of the model class.")
    gamma: float = Field(1.0, gt=0, le=1, description="Hoelder exponent of the model.")
    replicates: int = Field(200, ge=2, description="Monte Carlo replicates.")
    limit_draws: int = Field(2000, ge=2, description="Draws of the limit law sampler.")
    thetas: List[float] = Field([], description="Frequencies of the CLT experiment.")
    eigen_exponent: float = Field(3.0, gt=0.5, description="Eigenvalue decay `j^-e`.")
    eigen_terms: int = Field(20, ge=1, description="Eigenfunctions kept in the RKHS model.")
    rkhs_family: RkhsFamily = Field(RkhsFamily.BROWNIAN, description="Reproducing kernel.")
    model: ModelBlock = ModelBlock()
    kernel: KernelBlock = KernelBlock()
    output: OutputBlock = OutputBlock()

    @validator("sizes", each_item=True)
    def sizes_positive(cls, value):  # noqa: N805
        """Reject empty or negative sizes."""
        if value < 1:
            raise ValueError("sizes must be positive")
        return value

    @validator("bias_bandwidths", "alpha_factors", each_item=True)
    def sweep_positive(cls, value):  # noqa: N805
        """Reject nonpositive sweep values."""
        if value <= 0:
            raise ValueError("sweep values must be positive")
        return value

    @validator("alpha_grid")
    def alpha_grid_fits_slopes(cls, value):  # noqa: N805
        """Keep crossover exponents in (0, 1) with enough points for two branch fits."""
        if not all(0 < alpha < 1 for alpha in value):
            raise ValueError("alpha_grid values must lie in (0, 1)")
        if 0 < len(value) < MIN_SLOPE_POINTS:
            raise ValueError(f"alpha_grid needs at least {MIN_SLOPE_POINTS} values")
        return value

    @root_validator(skip_on_failure=True)
    def sweeps_fit_slopes(cls, values):  # noqa: N805
        """Require enough points for every slope the experiment fits."""
        kind = values["kind"]
        if not values["sizes"]:
            raise ValueError("at least one size is required")
        fitted = kind in (ExperimentKind.RATES, ExperimentKind.MIXED_DOMAIN, ExperimentKind.RKHS)
        if fitted and len(values["sizes"]) < MIN_SLOPE_POINTS:
            raise ValueError(f"{kind.value} fits slopes over at least {MIN_SLOPE_POINTS} sizes")
        bias_bandwidths = values["bias_bandwidths"]
        if kind == ExperimentKind.RATES and 0 < len(bias_bandwidths) < MIN_SLOPE_POINTS:
            raise ValueError(f"bias_bandwidths needs at least {MIN_SLOPE_POINTS} values")
        if kind == ExperimentKind.CLT and values["model"].d != 1:
            raise ValueError("the clt experiment needs d = 1")
        return values

    @property
    def d(self) -> int:
        """Parameter dimension."""
        return self.model.d

    def kernel_spec(self) -> KernelSpec:
        """Return the configured kernel in the model's dimension."""
        return KernelSpec(
            self.kernel.family, d=self.d, lam=self.kernel.lam, epsilon=self.kernel.epsilon
        )

    def correlation(self) -> ScalarCorrelation:
        """Return the configured scalar correlation."""
        model = self.model
        return ScalarCorrelation(model.family, a=model.a, delta=self.spacing, beta=model.beta)

    def covariance_model(self) -> CovarianceModel:
        """Return the configured covariance model."""
        model = self.model
        variances = model.variances or [1.0] * model.p
        attributes: Dict[str, Any] = dict(
            complex_valued=model.complex_valued,
            declared_beta=self.beta,
            declared_gamma=self.gamma,
        )
        rho = self.correlation()
        if model.structure == Structure.DIAGONAL:
            return CovarianceModel.diagonal([rho] * model.p, variances, d=model.d, **attributes)
        return CovarianceModel.separable(rho, model.sigma0_matrix(), d=model.d, **attributes)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Return a validated copy with the non-None command line overrides applied.

        `out_dir`, `kernel_family` and `lam` are routed to their blocks.
        """
        values = self.dict()
        for key, value in overrides.items():
            if value is None:
                continue
            if key in SECTION_OVERRIDES:
                section, field = SECTION_OVERRIDES[key]
                values[section][field] = value
            else:
                values[key] = value
        return parse_config(values)


def parse_config(values: Dict[str, Any]) -> ExperimentConfig:
    """Validate a flat dictionary of experiment fields.

    Raises:
        ConfigError: With the pydantic error text
    """
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment configuration:\n{e}") from e


def config_from_hcl(raw: Dict[str, Any]) -> ExperimentConfig:
    """Validate a parsed HCL document with experiment, model, kernel and output sections."""
    unknown = set(raw) - set(CONFIG_SECTIONS)
    if unknown:
        raise ConfigError(f"Unknown configuration sections: {', '.join(sorted(unknown))}")
    if "experiment" not in raw:
        raise ConfigError("The experiment section is required")
    values = dict(raw["experiment"])
    for section in CONFIG_SECTIONS[1:]:
        values[section] = raw.get(section, {})
    return parse_config(values)


def load_config(path: Path) -> ExperimentConfig:
    """Read and validate an HCL experiment file.

    Raises:
        ConfigError: If the file is missing, not HCL or invalid
    """
    try:
        with open(path, "r") as config_file:
            raw = hcl.load(config_file)
    except OSError as e:
        raise ConfigError(f"Cannot read configuration {path}: {e}") from e
    except ValueError as e:
        raise ConfigError(f"Cannot parse configuration {path}: {e}") from e
    logger.info("Loaded configuration %s", path)
    return config_from_hcl(raw)


def default_config(kind: ExperimentKind) -> ExperimentConfig:
    """Return the shipped default configuration of a command."""
    return load_config(CONFIG_DIR_PATH / f"{kind.value}.hcl")


def render_config(cfg: ExperimentConfig) -> str:
    """Render the resolved configuration back to HCL."""
    jinja2_environment = Environment(loader=FileSystemLoader(CONFIG_TEMPLATE_DIR_PATH))
    template = jinja2_environment.get_template(CONFIG_TEMPLATE_NAME)
    values = cfg.dict(exclude={"model", "kernel", "output", "threads"}, exclude_none=True)
    return template.render(
        experiment=_hcl_values(values),
        model=_hcl_values(cfg.model.dict(exclude_none=True)),
        kernel=_hcl_values(cfg.kernel.dict()),
        output=_hcl_values(cfg.output.dict()),
    )


def _hcl_values(values: Dict[str, Any]) -> Dict[str, Any]:
    # Empty lists equal their defaults and are left out.
    return {
        key: v.value if isinstance(v, Enum) else v for key, v in values.items() if v != []
    }


def config_content_matches(existing_content: str, new_content: str) -> bool:
    """Return whether two rendered configurations describe the same experiment.

    The master seed is ignored, so a rerun under another seed counts as unchanged.

    Returns:
        bool: Whether the configurations match
    """
    existing_config_hcl = hcl.loads(existing_content)
    new_config_hcl = hcl.loads(new_content)
    if not existing_config_hcl:
        logger.info("Existing config file is empty")
        return existing_config_hcl == new_config_hcl
    if not new_config_hcl:
        logger.info("New config file is empty")
        return existing_config_hcl == new_config_hcl
    existing_config_hcl.get("experiment", {}).pop(SEED_KEY, None)
    new_config_hcl.get("experiment", {}).pop(SEED_KEY, None)
    return existing_config_hcl == new_config_hcl
