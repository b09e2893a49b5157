#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Log-log SVG plots of experiment CSVs."""

import io
import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Tuple

import matplotlib
import numpy as np
from experiments import SlopeFit
from matplotlib.figure import Figure
from workspace import Workspace, read_rows

logger = logging.getLogger(__name__)

PLOT_WIDTH = 640
PLOT_HEIGHT = 480
PLOT_DPI = 100
SVG_RC_PARAMS = {"svg.hashsalt": "specdens", "svg.fonttype": "none"}
SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
SUMMARY_FILE = "summary.csv"


class PlotError(Exception):
    """Raised when a CSV cannot be plotted."""


@dataclass(frozen=True)
class PlotSource:
    """Columns of one CSV table."""

    table: str
    x: str
    y: str


@dataclass(frozen=True)
class PlotSpec:
    """One SVG file: the first existing source is plotted.

    With `group_by`, rows are split into one series per value of that column
    and the slope name is completed with the value.
    """

    filename: str
    title: str
    x_label: str
    y_label: str
    sources: Tuple[PlotSource, ...]
    slope: str
    group_by: Optional[str] = None


class Series(NamedTuple):
    """Points of one plotted series and its fitted line, if any."""

    label: str
    x: np.ndarray
    y: np.ndarray
    fit: Optional[SlopeFit] = None


PLOTS: Dict[str, Tuple[PlotSpec, ...]] = {
    "rates": (
        PlotSpec(
            "bias.svg",
            "Sup-theta bias against bandwidth",
            "bandwidth",
            "sup bias",
            (PlotSource("bias", "bandwidth", "bias"), PlotSource("rates", "bandwidth", "bias")),
            "bias",
        ),
        PlotSpec(
            "variance.svg",
            "Sup-theta variance against window ratio",
            "bandwidth^d / |T|",
            "sup variance",
            (PlotSource("rates", "window_ratio", "variance"),),
            "variance",
        ),
        PlotSpec(
            "mse.svg",
            "Root MSE against observation volume",
            "|T|",
            "root MSE",
            (PlotSource("rates", "volume", "rmse"),),
            "rmse",
        ),
    ),
    "mixed-domain": (
        PlotSpec(
            "mse.svg",
            "Root MSE against sample size",
            "n",
            "root MSE",
            (PlotSource("regimes", "n", "rmse"),),
            "rmse:alpha=",
            group_by="alpha",
        ),
    ),
    "rkhs": (
        PlotSpec(
            "bias.svg",
            "Projection bias against node count",
            "m",
            "HS bias",
            (PlotSource("rkhs", "m", "bias"),),
            "bias:J=",
            group_by="terms",
        ),
    ),
}


def _floats(rows: List[Dict[str, str]], column: str, name: str) -> np.ndarray:
    try:
        return np.array([float(row[column]) for row in rows], dtype=float)
    except KeyError as e:
        raise PlotError(f"Column {column} missing from {name}") from e
    except (TypeError, ValueError) as e:
        raise PlotError(f"Column {column} of {name} is not numeric") from e


def _read(workspace: Workspace, name: str) -> List[Dict[str, str]]:
    try:
        return read_rows(workspace.path(name))
    except (OSError, UnicodeDecodeError) as e:
        raise PlotError(f"Cannot read {name}: {e}") from e


def read_slopes(workspace: Workspace) -> Dict[str, SlopeFit]:
    """Read the fitted slopes of `summary.csv`; empty when the file is absent.

    Raises:
        PlotError: If the file is malformed
    """
    if not workspace.exists(SUMMARY_FILE):
        return {}
    slopes = {}
    for row in _read(workspace, SUMMARY_FILE):
        try:
            slopes[row["name"]] = SlopeFit(
                slope=float(row["slope"]),
                stderr=float(row["stderr"]),
                intercept=float(row["intercept"]),
                r_squared=float(row["r_squared"]),
                points=int(row["points"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise PlotError(f"Malformed row in {SUMMARY_FILE}: {row}") from e
    return slopes


def load_series(
    workspace: Workspace, spec: PlotSpec, slopes: Dict[str, SlopeFit]
) -> List[Series]:
    """Read the series of a plot from the first source table present.

    Series without a positive finite point are skipped.

    Raises:
        PlotError: If no source table exists or a column is missing or malformed
    """
    source = next((s for s in spec.sources if workspace.exists(f"{s.table}.csv")), None)
    if source is None:
        raise PlotError(f"No table found for {spec.filename}")
    name = f"{source.table}.csv"
    rows = _read(workspace, name)
    if spec.group_by is None:
        groups = {"": rows}
    else:
        groups = {}
        for value, row in zip(_floats(rows, spec.group_by, name), rows):
            groups.setdefault(f"{value:.6g}", []).append(row)
    series = []
    for key, group in groups.items():
        x = _floats(group, source.x, name)
        y = _floats(group, source.y, name)
        keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
        label = f"{spec.group_by}={key}" if spec.group_by else source.y
        if not keep.any():
            logger.warning("Skipping empty series %s of %s", label, spec.filename)
            continue
        series.append(Series(label, x[keep], y[keep], slopes.get(f"{spec.slope}{key}")))
    return series


def render_loglog(title: str, x_label: str, y_label: str, series: List[Series]) -> str:
    """Render series as a log-log scatter with dashed fitted lines.

    The SVG carries no date and hashes its ids with a fixed salt, so equal
    inputs render to equal bytes.

    Raises:
        PlotError: If there is nothing to plot
    """
    if not series:
        raise PlotError(f"Nothing to plot for {title}")
    figure = Figure(figsize=(PLOT_WIDTH / PLOT_DPI, PLOT_HEIGHT / PLOT_DPI), dpi=PLOT_DPI)
    axes = figure.subplots()
    for index, item in enumerate(series):
        color = SERIES_COLORS[index % len(SERIES_COLORS)]
        legend = item.label
        if item.fit is not None:
            legend = f"{item.label}: slope = {item.fit.slope:.3f}"
            ends = np.array([item.x.min(), item.x.max()])
            axes.plot(ends, item.fit.predict(ends), color=color, linestyle="--", linewidth=1.2)
        axes.plot(item.x, item.y, color=color, linestyle="none", marker="o", label=legend)
    axes.set_xscale("log")
    axes.set_yscale("log")
    axes.set_title(title)
    axes.set_xlabel(x_label)
    axes.set_ylabel(y_label)
    axes.grid(True, which="major", alpha=0.3)
    axes.legend(fontsize="small")
    figure.tight_layout()
    buffer = io.BytesIO()
    with matplotlib.rc_context(SVG_RC_PARAMS):
        figure.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue().decode("utf-8")


def emit_plots(workspace: Workspace, kind: str) -> List[str]:
    """Write the SVG plots of an experiment kind from the CSVs in the workspace.

    Args:
        workspace: The directory holding the report CSVs
        kind: The experiment kind

    Returns:
        List[str]: Names of the written files; empty for kinds without plots

    Raises:
        PlotError: If a CSV is missing or malformed; plots of an earlier run are
            removed first, so none of them survives the failure
    """
    specs = PLOTS.get(kind, ())
    for spec in specs:
        workspace.remove_path(spec.filename)
    slopes = read_slopes(workspace)
    written = []
    for spec in specs:
        series = load_series(workspace, spec, slopes)
        svg = render_loglog(spec.title, spec.x_label, spec.y_label, series)
        workspace.push(spec.filename, svg)
        written.append(spec.filename)
    return written
