#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.
"""Library for sampling designs, sampling regions and Voronoi tessellations.

Supports dimensions 1 and 2. Regions are intervals or convex polygons with
counterclockwise vertices; Voronoi cells are obtained by clipping the region
against the bisector half-planes of neighbouring sites.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

# Increment this major API version when introducing breaking changes
LIBAPI = 0

# Increment this PATCH version before publishing or reset
# to 0 if you are raising the major API version
LIBPATCH = 4

CLIP_EPSILON = 1e-12
CONVEXITY_TOLERANCE = 1e-12
INITIAL_NEIGHBOURS = 16


class LogAdapter(logging.LoggerAdapter):
    """Adapter for the logger to prepend a prefix to all log lines."""

    prefix = "geometry"

    def process(self, msg, kwargs):
        """Decides the format for the prepended text."""
        return f"[{self.prefix}] {msg}", kwargs


logger = LogAdapter(logging.getLogger(__name__), {})


class GeometryError(Exception):
    """Exception raised for invalid geometric input."""


class DegenerateDesignError(GeometryError):
    """Exception raised when sites do not span a region of positive volume."""


class SiteOutsideDomainError(GeometryError):
    """Exception raised when a site lies outside the sampling region."""


class DuplicateSitesError(GeometryError):
    """Exception raised when two sites coincide."""


class DesignKind(str, Enum):
    """Kinds of sampling designs."""

    GRID = "grid"
    IRREGULAR = "irregular"


def polygon_area(vertices: np.ndarray) -> float:
    """Return the signed shoelace area of a polygon, positive when counterclockwise."""
    if len(vertices) < 3:
        return 0.0
    x, y = vertices[:, 0], vertices[:, 1]
    terms = x * np.roll(y, -1) - np.roll(x, -1) * y
    return 0.5 * math.fsum(terms.tolist())


def clip_halfplane(polygon: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Clip a convex polygon to the half-plane `normal . x <= offset`.

    Args:
        polygon: Vertices, counterclockwise, shape (k, 2)
        normal: Unit outward normal of the half-plane
        offset: Half-plane offset

    Returns:
        np.ndarray: Clipped polygon, possibly with fewer than 3 vertices
    """
    if len(polygon) == 0:
        return polygon
    values = polygon @ normal - offset
    clipped = []
    for k in range(len(polygon)):
        a, b = polygon[k], polygon[(k + 1) % len(polygon)]
        va, vb = values[k], values[(k + 1) % len(polygon)]
        if va <= CLIP_EPSILON:
            clipped.append(a)
        if va * vb < 0 and min(abs(va), abs(vb)) > CLIP_EPSILON:
            clipped.append(a + (va / (va - vb)) * (b - a))
    return np.array(clipped, dtype=float).reshape(-1, 2)


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Intersect two convex counterclockwise polygons (Sutherland-Hodgman)."""
    result = subject
    for k in range(len(clip)):
        start, end = clip[k], clip[(k + 1) % len(clip)]
        edge = end - start
        length = float(np.hypot(*edge))
        if length == 0:
            continue
        normal = np.array([edge[1], -edge[0]]) / length
        result = clip_halfplane(result, normal, float(normal @ start))
        if len(result) < 3:
            return np.empty((0, 2))
    return result


@dataclass(frozen=True)
class Domain:
    """A convex sampling region: an interval (d=1) or a convex polygon (d=2).

    For d=1 `vertices` holds the two interval endpoints; for d=2 the
    counterclockwise polygon vertices.
    """

    d: int
    vertices: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=float)
        if self.d == 1:
            vertices = vertices.reshape(2)
            if not vertices[1] > vertices[0]:
                raise DegenerateDesignError(f"Interval {vertices.tolist()} has no length")
        elif self.d == 2:
            vertices = vertices.reshape(-1, 2)
            if polygon_area(vertices) < 0:
                vertices = vertices[::-1]
            _check_convex(vertices)
        else:
            raise GeometryError(f"Domains are supported for d in (1, 2), got {self.d}")
        vertices.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)

    @classmethod
    def interval(cls, a: float, b: float) -> "Domain":
        """Return the interval [a, b]."""
        return cls(1, np.array([a, b]))

    @classmethod
    def rectangle(cls, lower: Sequence[float], upper: Sequence[float]) -> "Domain":
        """Return the axis-aligned rectangle with the given corners."""
        (x0, y0), (x1, y1) = lower, upper
        return cls(2, np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]))

    @classmethod
    def polygon(cls, vertices: Sequence[Sequence[float]]) -> "Domain":
        """Return a convex polygon, in either orientation."""
        return cls(2, np.asarray(vertices, dtype=float))

    @property
    def volume(self) -> float:
        """Lebesgue measure of the region."""
        if self.d == 1:
            return float(self.vertices[1] - self.vertices[0])
        return polygon_area(self.vertices)

    @property
    def is_box(self) -> bool:
        """Whether the region is an interval or an axis-aligned rectangle."""
        if self.d == 1:
            return True
        if len(self.vertices) != 4:
            return False
        edges = np.roll(self.vertices, -1, axis=0) - self.vertices
        return bool(np.all(np.min(np.abs(edges), axis=1) == 0))

    @property
    def side_lengths(self) -> np.ndarray:
        """Side lengths of a box region."""
        if self.d == 1:
            return np.array([self.volume])
        return np.ptp(self.vertices, axis=0)

    def min_width(self) -> float:
        """Return the minimal width, the largest radius of a ball inside `T - T`."""
        if self.d == 1:
            return self.volume
        widths = []
        for k in range(len(self.vertices)):
            start = self.vertices[k]
            edge = self.vertices[(k + 1) % len(self.vertices)] - start
            normal = np.array([edge[1], -edge[0]]) / np.hypot(*edge)
            widths.append(float(np.max(np.abs((self.vertices - start) @ normal))))
        return min(widths)

    def contains(self, points: np.ndarray, tol: float = CLIP_EPSILON) -> np.ndarray:
        """Return a mask of the points lying in the closed region."""
        points = np.asarray(points, dtype=float).reshape(-1, self.d)
        if self.d == 1:
            a, b = self.vertices
            return (points[:, 0] >= a - tol) & (points[:, 0] <= b + tol)
        inside = np.ones(len(points), dtype=bool)
        for k in range(len(self.vertices)):
            start = self.vertices[k]
            edge = self.vertices[(k + 1) % len(self.vertices)] - start
            cross = edge[0] * (points[:, 1] - start[1]) - edge[1] * (points[:, 0] - start[0])
            inside &= cross >= -tol * np.hypot(*edge)
        return inside

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return the lower and upper corners of the bounding box."""
        vertices = self.vertices.reshape(-1, self.d)
        return vertices.min(axis=0), vertices.max(axis=0)


def _check_convex(vertices: np.ndarray) -> None:
    if len(vertices) < 3:
        raise DegenerateDesignError("A polygon needs at least 3 vertices")
    edges = np.roll(vertices, -1, axis=0) - vertices
    following = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * following[:, 1] - edges[:, 1] * following[:, 0]
    if np.any(cross < -CONVEXITY_TOLERANCE):
        raise GeometryError("Polygon vertices do not describe a convex region")
    if polygon_area(vertices) <= 0:
        raise DegenerateDesignError("Polygon has no area")


@dataclass(frozen=True)
class SamplingDesign:
    """Observation sites of a process.

    Grid designs are `spacing * (1..n_l)` per axis, listed in C order.
    """

    points: np.ndarray
    kind: DesignKind = DesignKind.IRREGULAR
    spacing: Optional[float] = None
    shape: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if len(points) == 0:
            raise DegenerateDesignError("A design needs at least one site")
        if self.kind == DesignKind.IRREGULAR and len(points) > 1:
            distances, _ = cKDTree(points).query(points, k=2)
            if np.min(distances[:, 1]) <= 0:
                raise DuplicateSitesError("Design contains duplicate sites")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def d(self) -> int:
        """Dimension of the sites."""
        return self.points.shape[1]

    @property
    def n(self) -> int:
        """Number of sites."""
        return self.points.shape[0]

    @classmethod
    def grid(cls, shape: Sequence[int], spacing: float = 1.0) -> "SamplingDesign":
        """Return the grid `spacing * {1..n_1} x ... x {1..n_d}`."""
        shape = tuple(int(n) for n in shape)
        if min(shape) < 1 or spacing <= 0:
            raise GeometryError(f"Invalid grid shape {shape} or spacing {spacing}")
        axes = [spacing * np.arange(1, n + 1) for n in shape]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([axis.ravel() for axis in mesh], axis=-1)
        return cls(points, DesignKind.GRID, float(spacing), shape)

    @classmethod
    def irregular(cls, points: np.ndarray) -> "SamplingDesign":
        """Return an irregular design from raw site coordinates."""
        return cls(np.asarray(points, dtype=float), DesignKind.IRREGULAR)

    @classmethod
    def uniform(cls, n: int, domain: Domain, rng: np.random.Generator) -> "SamplingDesign":
        """Draw `n` independent uniform sites in a domain by rejection."""
        lower, upper = domain.bounds()
        accepted: List[np.ndarray] = []
        count = 0
        while count < n:
            candidates = rng.uniform(lower, upper, size=(2 * (n - count) + 8, domain.d))
            candidates = candidates[domain.contains(candidates, tol=0.0)]
            accepted.append(candidates)
            count += len(candidates)
        return cls.irregular(np.concatenate(accepted)[:n])

    @classmethod
    def jittered_grid(
        cls, shape: Sequence[int], spacing: float, rng: np.random.Generator, jitter: float = 0.5
    ) -> "SamplingDesign":
        """Return a grid whose sites are moved uniformly within `jitter * spacing`."""
        base = cls.grid(shape, spacing).points
        offsets = rng.uniform(-jitter * spacing, jitter * spacing, size=base.shape)
        return cls.irregular(base + offsets)

    @classmethod
    def from_csv(cls, path: Path) -> "SamplingDesign":
        """Load an irregular design, one site per row."""
        points = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls.irregular(points)

    def to_csv(self, path: Path) -> None:
        """Write one site per row."""
        np.savetxt(path, self.points, delimiter=",", fmt="%.17g")
        logger.info("Wrote design file %s", path)

    def grid_domain(self) -> Domain:
        """Return the box `[spacing/2, n*spacing + spacing/2]` of a grid design."""
        if self.kind != DesignKind.GRID or self.spacing is None or self.shape is None:
            raise GeometryError("Design is not a grid")
        lower = [self.spacing / 2] * self.d
        upper = [self.spacing * (n + 0.5) for n in self.shape]
        if self.d == 1:
            return Domain.interval(lower[0], upper[0])
        if self.d == 2:
            return Domain.rectangle(lower, upper)
        raise GeometryError(f"Grid domains are supported for d in (1, 2), got {self.d}")


@dataclass(frozen=True)
class Tessellation:
    """Voronoi cells of a design clipped to its domain."""

    volumes: np.ndarray
    cells: List[np.ndarray] = field(default_factory=list)
    diameter: float = 0.0

    @property
    def total_volume(self) -> float:
        """Sum of the cell volumes."""
        return math.fsum(self.volumes.tolist())

    def summary_rows(self) -> List[Tuple[int, float, int]]:
        """Return (site, volume, vertex count) per cell."""
        return [(i, float(v), len(c)) for i, (v, c) in enumerate(zip(self.volumes, self.cells))]

    def to_csv(self, path: Path) -> None:
        """Write the tessellation summary."""
        lines = ["site,volume,vertices"]
        lines += [f"{i},{v:.17g},{k}" for i, v, k in self.summary_rows()]
        path.write_text("\n".join(lines) + "\n")
        logger.info("Wrote tessellation summary %s", path)


def convex_hull(design: SamplingDesign) -> Domain:
    """Return the closed convex hull of the sites.

    Raises:
        DegenerateDesignError: If the sites are collinear (d=2) or coincide (d=1)
    """
    points = design.points
    if design.d == 1:
        return Domain.interval(float(points.min()), float(points.max()))
    if design.d != 2:
        raise GeometryError(f"Convex hulls are supported for d in (1, 2), got {design.d}")
    if design.n < 3 or np.linalg.matrix_rank(points - points.mean(axis=0), tol=1e-12) < 2:
        raise DegenerateDesignError("Sites are collinear; the hull has no area")
    try:
        hull = ConvexHull(points)
    except QhullError as e:
        raise DegenerateDesignError(f"Convex hull failed: {e}") from e
    return Domain.polygon(points[hull.vertices])


def voronoi(design: SamplingDesign, domain: Domain) -> Tessellation:
    """Compute the Voronoi tessellation of a design within a domain.

    Args:
        design: Observation sites
        domain: Convex sampling region containing every site

    Returns:
        Tessellation: Cell volumes, cells and the diameter, the largest site-to-cell distance

    Raises:
        SiteOutsideDomainError: If a site lies outside the domain
        DuplicateSitesError: If two sites coincide
    """
    if design.d != domain.d:
        raise GeometryError(f"Design dimension {design.d} != domain dimension {domain.d}")
    outside = ~domain.contains(design.points)
    if np.any(outside):
        raise SiteOutsideDomainError(
            f"{int(outside.sum())} site(s) outside the domain, first at "
            f"{design.points[np.argmax(outside)].tolist()}"
        )
    if design.d == 1:
        return _voronoi_1d(design.points[:, 0], domain)
    return _voronoi_2d(design.points, domain)


def _voronoi_1d(sites: np.ndarray, domain: Domain) -> Tessellation:
    order = np.argsort(sites)
    ordered = sites[order]
    if np.any(np.diff(ordered) <= 0):
        raise DuplicateSitesError("Design contains duplicate sites")
    a, b = domain.vertices
    edges = np.concatenate([[a], (ordered[1:] + ordered[:-1]) / 2, [b]])
    volumes = np.empty_like(sites)
    volumes[order] = np.diff(edges)
    cells: List[np.ndarray] = [np.empty(0)] * len(sites)
    for rank, index in enumerate(order):
        cells[index] = edges[rank : rank + 2].copy()
    reach = np.maximum(ordered - edges[:-1], edges[1:] - ordered)
    return Tessellation(volumes=volumes, cells=cells, diameter=float(reach.max()))


def _voronoi_2d(points: np.ndarray, domain: Domain) -> Tessellation:
    tree = cKDTree(points)
    n = len(points)
    cells = []
    volumes = np.empty(n)
    diameter = 0.0
    for index in range(n):
        cell = _voronoi_cell(index, points, tree, domain.vertices)
        cells.append(cell)
        volumes[index] = polygon_area(cell)
        if len(cell):
            diameter = max(diameter, float(np.max(np.linalg.norm(cell - points[index], axis=1))))
    logger.debug("Tessellated %s sites, diameter %.4g", n, diameter)
    return Tessellation(volumes=volumes, cells=cells, diameter=diameter)


def _voronoi_cell(index: int, points: np.ndarray, tree: cKDTree, polygon: np.ndarray):
    site = points[index]
    n = len(points)
    k = min(n, INITIAL_NEIGHBOURS)
    seen = {index}
    while True:
        distances, neighbours = tree.query(site, k=k)
        distances, neighbours = np.atleast_1d(distances), np.atleast_1d(neighbours)
        for distance, j in zip(distances, neighbours):
            if j in seen:
                continue
            seen.add(j)
            if len(polygon) < 3:
                return np.empty((0, 2))
            reach = float(np.max(np.linalg.norm(polygon - site, axis=1)))
            if distance > 2.0 * reach + CLIP_EPSILON:
                return polygon
            direction = (points[j] - site) / distance
            polygon = clip_halfplane(polygon, direction, float(direction @ (site + points[j]) / 2))
        if k == n:
            return polygon
        k = min(n, 2 * k)


def overlap_volume(domain: Domain, h: Sequence[float]) -> float:
    """Return `|T ∩ (T - h)|`.

    For d=2 the polygon is clipped against its translate by `-h`.
    """
    h = np.asarray(h, dtype=float).reshape(domain.d)
    if domain.d == 1:
        return max(domain.volume - abs(float(h[0])), 0.0)
    intersection = clip_convex(domain.vertices, domain.vertices - h)
    return max(polygon_area(intersection), 0.0)


def overlap_volumes(domain: Domain, lags: np.ndarray) -> np.ndarray:
    """Vectorized `overlap_volume` over an array of lags of shape (m, d).

    Boxes use the product formula `prod_l (L_l - |h_l|)_+`.
    """
    lags = np.asarray(lags, dtype=float).reshape(-1, domain.d)
    if domain.is_box:
        sides = domain.side_lengths
        return np.prod(np.clip(sides - np.abs(lags), 0.0, None), axis=1)
    return np.array([overlap_volume(domain, h) for h in lags])
