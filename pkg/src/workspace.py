#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Output directory abstraction for experiment artifacts."""

import csv
import logging
import os
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, TextIO

import psutil

logger = logging.getLogger(__name__)

THREADS_ENV = "SPECDENS_THREADS"


class Workspace:
    """A directory receiving the files of one experiment run.

    Paths given to the methods are relative to the workspace root.
    """

    def __init__(self, root: Path):
        self.root = Path(root)

    def path(self, name: str) -> Path:
        """Return the absolute path of a workspace file."""
        return self.root / name

    def exists(self, name: str) -> bool:
        """Check if a file exists.

        Args:
            name: The path of the file

        Returns:
            bool: Whether the file exists
        """
        return self.path(name).is_file()

    def pull(self, name: str) -> TextIO:
        """Open a file for reading.

        Args:
            name: The path of the file

        Returns:
            TextIO: The open file
        """
        return open(self.path(name), "r")

    def push(self, name: str, source: str) -> None:
        """Write a file, creating its directory.

        Args:
            name: The path of the file
            source: The contents of the file to be written
        """
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as write_file:
            write_file.write(source)
            logger.info("Wrote file %s", path)

    def push_rows(
        self,
        name: str,
        header: Sequence[str],
        rows: Iterable[Sequence[object]],
        comments: Sequence[str] = (),
    ) -> None:
        """Write a CSV file with optional `# key=value` comment lines above the header."""
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as write_file:
            for comment in comments:
                write_file.write(f"# {comment}\n")
            writer = csv.writer(write_file, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
            logger.info("Wrote file %s", path)

    def make_dir(self, name: str = "") -> Path:
        """Create a directory and return its path."""
        path = self.path(name)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def remove_path(self, name: str) -> None:
        """Remove a file; a missing file is logged and skipped.

        Raises:
            ValueError: If the path escapes the workspace
        """
        path = self.path(name).resolve()
        if self.root.resolve() not in path.parents:
            raise ValueError(f"The provided path is outside the workspace: {name}")
        if path.is_file():
            path.unlink()
            logger.info("Removed file %s", path)
        else:
            logger.info("No such file: %s", path)


def read_rows(path: Path) -> List[Dict[str, str]]:
    """Read a CSV written by `Workspace.push_rows` as dictionaries, skipping comment lines."""
    with open(path, "r", newline="") as read_file:
        lines = [line for line in read_file if not line.startswith("#")]
    return list(csv.DictReader(lines))


def resolve_threads(threads: Optional[int] = None) -> int:
    """Return the worker count.

    The `--threads` flag wins over `SPECDENS_THREADS`, which wins over the
    physical core count.

    Raises:
        ValueError: If `SPECDENS_THREADS` is not a positive integer
    """
    if threads is not None:
        return max(1, int(threads))
    if value := os.environ.get(THREADS_ENV):
        try:
            count = int(value)
        except ValueError as e:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {value!r}") from e
        if count < 1:
            raise ValueError(f"{THREADS_ENV} must be positive, got {count}")
        return count
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
