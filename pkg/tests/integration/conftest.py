#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import os
from pathlib import Path

import pytest
from workspace import Workspace


def pytest_addoption(parser: pytest.Parser) -> None:
    """Add options to the pytest command line.

    This is a pytest hook that is called when the pytest command line is being parsed.

    Args:
      parser: The pytest command line parser.
    """
    parser.addoption(
        "--seed", action="store", default=None, help="Master seed overriding the shipped configs"
    )
    parser.addoption(
        "--out-dir",
        action="store",
        default="acceptance-results",
        help="Directory receiving the experiment artifacts",
    )


def pytest_configure(config: pytest.Config) -> None:
    """Validate the options provided by the user.

    This is a pytest hook that is called after command line options have been parsed.

    Args:
      config: The pytest configuration object.
    """
    seed = config.getoption("--seed")
    if seed is not None and (not seed.isdigit() or int(seed) >= 2**64):
        pytest.exit(f"The --seed option must be an unsigned 64-bit integer, got {seed}")
    out_dir = str(config.getoption("--out-dir"))
    if os.path.exists(out_dir) and not os.path.isdir(out_dir):
        pytest.exit(f"The path specified is not a directory: {out_dir}")


@pytest.fixture(scope="session")
def seed(request: pytest.FixtureRequest):
    """Seed override, or None to keep the seeds of the shipped configs."""
    value = request.config.getoption("--seed")
    return None if value is None else int(value)


@pytest.fixture(scope="session")
def out_dir(request: pytest.FixtureRequest) -> Path:
    """Root directory of the acceptance artifacts."""
    return Path(request.config.getoption("--out-dir"))


@pytest.fixture
def workspace_for(out_dir: Path):
    """Return a factory of per-experiment workspaces under the output directory."""

    def factory(kind: str) -> Workspace:
        return Workspace(out_dir / kind)

    return factory
