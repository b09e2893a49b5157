#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.
"""Library for Gaussian moment formulas and fourth-order cumulants.

Products of jointly Gaussian complex variables are expanded over perfect
matchings of the variables, each pair contributing `E[Z_a Z_b]` without
conjugation. A conjugated coordinate is a variable of its own, so one
enumerator serves circular, non-circular and real processes once the relation
matrix has been built from the covariance `C` and the pseudo-covariance.

The fourth-order cumulant of four Hilbert space valued variables is

    E<Y1 (x) Y2, Y3 (x) Y4> - <E Y1 (x) Y2, E Y3 (x) Y4> - E<Y1, Y3> E<Y4, Y2>
        - <E Y1 (x) conj Y4, E Y3 (x) conj Y2>

and `fourth_cumulant` gives it for the processes the simulator can draw.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache, singledispatch
from typing import Callable, Dict, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from specdens.v0.models import CovarianceModel, CovarianceSource, ScalarCorrelation
from specdens.v0.operator_core import CoordFrame, FrameMismatchError, OperatorRep
from specdens.v0.simulate import ChiSquareProcess, LinearProcess

# Increment this major API version when introducing breaking changes
LIBAPI = 0

# Increment this PATCH version before publishing or reset
# to 0 if you are raising the major API version
LIBPATCH = 2

MAX_VARIABLES = 12
MAX_CUMULANT_ORDER = 6
MAX_LATTICE_TERMS = 1 << 22
CAUCHY_TOLERANCE = 1e-3
SYMMETRY_TOLERANCE = 1e-10


class LogAdapter(logging.LoggerAdapter):
    """Adapter for the logger to prepend a prefix to all log lines."""

    prefix = "moments"

    def process(self, msg, kwargs):
        """Decides the format for the prepended text."""
        return f"[{self.prefix}] {msg}", kwargs


logger = LogAdapter(logging.getLogger(__name__), {})


class MomentsError(Exception):
    """Exception raised for moment computations outside the supported range."""


class ProcessVariable(NamedTuple):
    """The coordinate `coord` of `X(time)`, conjugated when `conjugate` is set."""

    time: Tuple[float, ...]
    coord: int = 0
    conjugate: bool = False


@lru_cache(maxsize=None)
def pairings(m: int) -> np.ndarray:
    """Return all perfect matchings of `0..m-1` as an array of shape (count, m/2, 2).

    Pairs are sorted and there are `(m-1)!!` matchings for even `m`, none for odd.
    """
    if m > MAX_VARIABLES:
        raise MomentsError(f"At most {MAX_VARIABLES} variables are supported, got {m}")
    if m % 2:
        return np.zeros((0, 0, 2), dtype=int)
    if m == 0:
        return np.zeros((1, 0, 2), dtype=int)

    def matchings(items: Tuple[int, ...]) -> Iterator[List[Tuple[int, int]]]:
        if not items:
            yield []
            return
        first, rest = items[0], items[1:]
        for position, partner in enumerate(rest):
            for tail in matchings(rest[:position] + rest[position + 1 :]):
                yield [(first, partner)] + tail

    table = np.array(list(matchings(tuple(range(m)))), dtype=int).reshape(-1, m // 2, 2)
    table.setflags(write=False)
    logger.debug("Enumerated %s pairings of %s variables", len(table), m)
    return table


def _pairing_sum(relation: np.ndarray, table: np.ndarray) -> complex:
    if len(table) == 0:
        return 0j
    if table.shape[1] == 0:
        return 1 + 0j
    factors = relation[table[..., 0], table[..., 1]]
    return complex(np.prod(factors, axis=1).sum())


def _relation_entries(
    cross: np.ndarray, pseudo: np.ndarray, variables: Sequence[Tuple[int, int, bool]]
) -> np.ndarray:
    """Relation matrix of `(block, coord, conjugate)` variables.

    `cross[a, b]` holds `E[Y_a (x) Y_b]` and `pseudo[a, b]` holds `E[Y_a (x) conj Y_b]`.
    """
    m = len(variables)
    relation = np.zeros((m, m), dtype=complex)
    for (x, (a, j, ca)), (y, (b, k, cb)) in itertools.product(enumerate(variables), repeat=2):
        if ca == cb:
            value = pseudo[a, b, j, k]
        else:
            value = cross[a, b, j, k]
        relation[x, y] = value.conjugate() if ca else value
    return relation


@dataclass(frozen=True)
class JointGaussianSpec:
    """Zero-mean jointly Gaussian complex variables through their relation matrix.

    Attributes:
        relation: Matrix of `E[Z_a Z_b]`, no conjugation, symmetric
    """

    relation: np.ndarray

    def __post_init__(self):
        relation = np.array(self.relation, dtype=complex)
        if relation.ndim != 2 or relation.shape[0] != relation.shape[1]:
            raise MomentsError(f"Relation matrix must be square, got shape {relation.shape}")
        if np.abs(relation - relation.T).max(initial=0) > SYMMETRY_TOLERANCE * max(
            np.abs(relation).max(initial=0), 1
        ):
            raise MomentsError("Relation matrix must be symmetric")
        relation.setflags(write=False)
        object.__setattr__(self, "relation", relation)

    @property
    def m(self) -> int:
        """Number of variables."""
        return self.relation.shape[0]

    @classmethod
    def from_process(
        cls, source: CovarianceSource, variables: Sequence[ProcessVariable]
    ) -> "JointGaussianSpec":
        """Build the relation matrix of process coordinates from `C` and the pseudo-covariance.

        Args:
            source: A Gaussian process model
            variables: Coordinates of the process, possibly conjugated

        Returns:
            JointGaussianSpec: The variables' joint law
        """
        times = np.array([np.atleast_1d(v.time) for v in variables], dtype=float)
        if times.shape[1] != source.d:
            raise MomentsError(f"Times must have {source.d} components")
        m = len(variables)
        lags = (times[:, None, :] - times[None, :, :]).reshape(-1, source.d)
        p = source.p
        cross = source.cov_array(lags).reshape(m, m, p, p)
        pseudo = source.pseudo_cov_array(lags).reshape(m, m, p, p)
        labels = [(index, v.coord, v.conjugate) for index, v in enumerate(variables)]
        return cls(_relation_entries(cross, pseudo, labels))


def isserlis_complex(spec: JointGaussianSpec) -> complex:
    """Return `E[Z_1 ... Z_m]`, the sum over pairings of products of relation entries.

    Args:
        spec: Joint law of at most twelve variables

    Returns:
        complex: The product moment, zero for odd `m`
    """
    return _pairing_sum(spec.relation, pairings(spec.m))


@dataclass(frozen=True)
class GaussianQuadruple:
    """Four jointly Gaussian zero-mean elements in one frame.

    Attributes:
        frame: Coordinate frame
        cross: Array (4, 4, p, p) with `cross[a, b] = E[Y_a (x) Y_b]`
        pseudo: Array (4, 4, p, p) with `pseudo[a, b] = E[Y_a (x) conj Y_b]`
    """

    frame: CoordFrame
    cross: np.ndarray
    pseudo: np.ndarray

    def __post_init__(self):
        shape = (4, 4, self.frame.p, self.frame.p)
        for name in ("cross", "pseudo"):
            blocks = np.array(getattr(self, name), dtype=complex)
            if blocks.shape != shape:
                raise FrameMismatchError(f"{name} blocks have shape {blocks.shape}, not {shape}")
            blocks.setflags(write=False)
            object.__setattr__(self, name, blocks)

    @classmethod
    def from_process(cls, source: CovarianceSource, times: np.ndarray) -> "GaussianQuadruple":
        """Return the quadruple `X(t_1), ..., X(t_4)` of a Gaussian process."""
        times = np.asarray(times, dtype=float).reshape(4, source.d)
        lags = (times[:, None, :] - times[None, :, :]).reshape(-1, source.d)
        p = source.p
        return cls(
            source.frame,
            source.cov_array(lags).reshape(4, 4, p, p),
            source.pseudo_cov_array(lags).reshape(4, 4, p, p),
        )

    @classmethod
    def from_blocks(
        cls,
        cross: Mapping[Tuple[int, int], OperatorRep],
        pseudo: Optional[Mapping[Tuple[int, int], OperatorRep]] = None,
    ) -> "GaussianQuadruple":
        """Assemble from blocks given for `a <= b`; the others follow by symmetry.

        Missing blocks are zero. All blocks must share one frame.

        Raises:
            FrameMismatchError: If the blocks live in different frames
        """
        pseudo = pseudo or {}
        frames = {block.frame.p for block in itertools.chain(cross.values(), pseudo.values())}
        if len(frames) != 1:
            raise FrameMismatchError(f"Blocks span frames of dimensions {sorted(frames)}")
        p = frames.pop()
        tables = np.zeros((2, 4, 4, p, p), dtype=complex)
        for kind, blocks in enumerate((cross, pseudo)):
            for (a, b), block in blocks.items():
                tables[kind, a, b] = block.entries
                if a != b:
                    mirrored = block.entries.conj().T if kind == 0 else block.entries.T
                    tables[kind, b, a] = mirrored
        return cls(CoordFrame(p), tables[0], tables[1])

    def relation(self, variables: Sequence[Tuple[int, int, bool]]) -> np.ndarray:
        """Relation matrix of `(element, coord, conjugate)` variables."""
        return _relation_entries(self.cross, self.pseudo, variables)


def cum4(quadruple: GaussianQuadruple) -> complex:
    """Return the fourth-order cumulant of the quadruple.

    The mixed fourth moment is summed coordinatewise from Isserlis expansions
    of `Y1_i conj(Y2_j) conj(Y3_i) Y4_j`, and the three second-order terms are
    Hilbert-Schmidt inner products of the blocks.
    """
    p = quadruple.frame.p
    fourth = 0j
    for i, j in itertools.product(range(p), repeat=2):
        variables = [(0, i, False), (1, j, True), (2, i, True), (3, j, False)]
        fourth += isserlis_complex(JointGaussianSpec(quadruple.relation(variables)))
    cross, pseudo = quadruple.cross, quadruple.pseudo
    paired = np.vdot(cross[2, 3], cross[0, 1])
    traces = np.trace(cross[0, 2]) * np.trace(cross[3, 1])
    swapped = np.vdot(pseudo[2, 1], pseudo[0, 3])
    return complex(fourth - paired - traces - swapped)


def extra_isserlis(
    source: CovarianceSource,
    t: Sequence,
    s: Sequence,
    n_plain: int,
    n_centered: Optional[int] = None,
) -> complex:
    """Return `E[prod_n X(t_n) conj X(s_n) prod_m (X(t_m) conj X(s_m) - C(t_m - s_m))]`.

    The first `n_plain` pairs enter as plain products and the remaining ones
    centered. The expectation is the pairing sum of all `X(t_i)` and
    `conj X(s_i)` leaving out every pairing that matches a centered pair with
    itself.

    Args:
        source: Scalar Gaussian process model
        t: Times of the unconjugated factors
        s: Times of the conjugated factors
        n_plain: Number of uncentered pairs, listed first
        n_centered: Number of centered pairs, the rest of the lists when None

    Returns:
        complex: The expectation

    Raises:
        MomentsError: For non-scalar models, mismatched lists or more than six pairs
    """
    if source.p != 1:
        raise MomentsError("The centered product formula is defined for scalar processes")
    t = np.asarray(t, dtype=float).reshape(-1, source.d)
    s = np.asarray(s, dtype=float).reshape(-1, source.d)
    total = len(t)
    if len(s) != total:
        raise MomentsError(f"Got {len(t)} unconjugated and {len(s)} conjugated times")
    if n_centered is not None and n_plain + n_centered != total:
        raise MomentsError(f"{n_plain} + {n_centered} pairs do not match {total} times")
    if 2 * total > MAX_VARIABLES:
        raise MomentsError(f"At most {MAX_VARIABLES // 2} pairs are supported, got {total}")
    variables = []
    for tau, sigma in zip(t, s):
        variables += [ProcessVariable(tuple(tau)), ProcessVariable(tuple(sigma), conjugate=True)]
    spec = JointGaussianSpec.from_process(source, variables)
    table = pairings(2 * total)
    left, right = table[..., 0], table[..., 1]
    self_paired = (right == left + 1) & (left % 2 == 0) & (left >= 2 * n_plain)
    return _pairing_sum(spec.relation, table[~self_paired.any(axis=1)])


def set_partitions(n: int) -> List[Tuple[Tuple[int, ...], ...]]:
    """Return all unordered partitions of `0..n-1` into nonempty blocks."""

    def grow(items: List[int]) -> Iterator[List[List[int]]]:
        if not items:
            yield []
            return
        first, rest = items[0], items[1:]
        for partition in grow(rest):
            yield [[first]] + partition
            for index in range(len(partition)):
                yield partition[:index] + [[first] + partition[index]] + partition[index + 1 :]

    return [tuple(tuple(block) for block in partition) for partition in grow(list(range(n)))]


def joint_cumulant(order: int, moment: Callable[[Tuple[int, ...]], complex]) -> complex:
    """Return `cum(Y_0, ..., Y_{order-1})` from joint moments by the partition sum.

    Args:
        order: Number of variables, at most six
        moment: Maps a sorted tuple of variable indices to `E[prod Y_i]`

    Returns:
        complex: The joint cumulant
    """
    if not 1 <= order <= MAX_CUMULANT_ORDER:
        raise MomentsError(f"Cumulant order must lie in 1..{MAX_CUMULANT_ORDER}, got {order}")
    cache: Dict[Tuple[int, ...], complex] = {}

    def cached(block: Tuple[int, ...]) -> complex:
        if block not in cache:
            cache[block] = moment(block)
        return cache[block]

    total = 0j
    for partition in set_partitions(order):
        q = len(partition)
        product = np.prod([cached(tuple(sorted(block))) for block in partition])
        total += (-1) ** (q - 1) * math.factorial(q - 1) * product
    return complex(total)


def _pair_correlations(rho: ScalarCorrelation, times: Sequence[np.ndarray]) -> Dict:
    return {
        (a, b): rho(times[a] - times[b]) for a, b in itertools.combinations(range(4), 2)
    }


def _chi_square_cum4_array(rho: ScalarCorrelation, times: Sequence[np.ndarray]) -> np.ndarray:
    r = _pair_correlations(rho, times)
    cycles = (
        r[0, 1] * r[1, 2] * r[2, 3] * r[0, 3]
        + r[0, 1] * r[1, 3] * r[2, 3] * r[0, 2]
        + r[0, 2] * r[1, 2] * r[1, 3] * r[0, 3]
    )
    return 16.0 * cycles


def chi_square_cum4(rho: ScalarCorrelation, times: np.ndarray) -> float:
    """Return `cum(X(t_1), ..., X(t_4))` of `X = Z^2 - 1` for Gaussian `Z` with correlation `rho`.

    The cumulant is sixteen times the sum of the three distinct four-cycles of
    correlations, `r12 r23 r34 r41 + r12 r24 r43 r31 + r13 r32 r24 r41`.
    """
    times = np.asarray(times, dtype=float).reshape(4, -1)
    return float(_chi_square_cum4_array(rho, [times[a][None, :] for a in range(4)])[0])


def chi_square_cum4_bruteforce(rho: ScalarCorrelation, times: np.ndarray) -> float:
    """Return the chi-square cumulant from Isserlis moments of the underlying Gaussian."""
    times = np.asarray(times, dtype=float).reshape(4, -1)
    gaussian = CovarianceModel.separable(rho, np.eye(1), d=times.shape[1])

    def moment(block: Tuple[int, ...]) -> complex:
        points = times[list(block)]
        return extra_isserlis(gaussian, points, points, 0)

    return float(joint_cumulant(4, moment).real)


@singledispatch
def fourth_cumulant(
    source, t1: np.ndarray, t2: np.ndarray, t3: np.ndarray, t4: np.ndarray, **options
) -> np.ndarray:
    """Return `cum(X(t1), X(t2), X(t3), X(t4))` for rows of time arrays of shape (N, d)."""
    raise MomentsError(f"No fourth-order cumulant for {type(source).__name__}")


@fourth_cumulant.register
def _(source: CovarianceModel, t1, t2, t3, t4, **options) -> np.ndarray:
    return np.zeros(len(np.atleast_2d(t1)))


@fourth_cumulant.register
def _(source: ChiSquareProcess, t1, t2, t3, t4, **options) -> np.ndarray:
    times = [np.asarray(t, dtype=float).reshape(-1, source.d) for t in (t1, t2, t3, t4)]
    return _chi_square_cum4_array(source.rho, times)


def _coefficients(process: LinearProcess, steps: np.ndarray) -> np.ndarray:
    """Return `A_k` per lag step, zero outside `|k| <= S`."""
    index = steps + process.order
    valid = (index >= 0) & (index <= 2 * process.order)
    out = np.zeros((len(steps), process.p, process.p))
    out[valid] = process.coeffs.real[index[valid]]
    return out


@fourth_cumulant.register
def _(
    source: LinearProcess,
    t1,
    t2,
    t3,
    t4,
    innovation_cumulant: Optional[np.ndarray] = None,
    **options,
) -> np.ndarray:
    steps = [
        np.rint(np.asarray(t, dtype=float).reshape(-1) / source.delta).astype(int)
        for t in (t1, t2, t3, t4)
    ]
    if innovation_cumulant is None:
        return np.zeros(len(steps[0]))
    if not source.is_real:
        raise MomentsError("Innovation cumulants are supported for real linear processes")
    kappa = np.asarray(innovation_cumulant, dtype=float).reshape((source.p,) * 4)
    u, v, w, origin = (k - steps[3] for k in steps)
    total = np.zeros(len(u))
    for r in range(-source.order, source.order + 1):
        a1, a2 = _coefficients(source, u - r), _coefficients(source, v - r)
        a3, a4 = _coefficients(source, w - r), _coefficients(source, origin - r)
        left = np.einsum("nia,nic->nac", a1, a3)
        right = np.einsum("njb,njd->nbd", a2, a4)
        total += np.einsum("nac,nbd,abcd->n", left, right, kappa)
    return total


@dataclass(frozen=True)
class CumulantSumReport:
    """Partial sums of `delta^2d sup_w sum_{u,v} |cum(X(delta u), X(delta v), X(delta w), X(0))|`.

    The supremum over `w` runs over a small lattice box, so each entry is a
    lower bound of the supremum over all shifts.

    Attributes:
        process: Name of the process type
        delta: Lattice spacing
        w_radius: Half-width of the box of shifts `w`
        radii: Truncation radii of the sums over `u` and `v`
        sums: Partial sums per radius
        bound: Closed-form upper bound, when known
    """

    process: str
    delta: float
    w_radius: int
    radii: Tuple[int, ...]
    sums: Tuple[float, ...]
    bound: Optional[float] = None

    @property
    def increments(self) -> np.ndarray:
        """Growth of the partial sums between consecutive radii."""
        return np.diff(np.asarray(self.sums))

    @property
    def converged(self) -> bool:
        """Whether the last doubling changed the sum by less than the Cauchy tolerance."""
        last = self.sums[-1]
        if last == 0:
            return True
        return bool(len(self.sums) > 1 and self.increments[-1] <= CAUCHY_TOLERANCE * last)

    @property
    def within_bound(self) -> Optional[bool]:
        """Whether every partial sum stays below the closed-form bound."""
        if self.bound is None:
            return None
        return bool(max(self.sums) <= self.bound * (1 + 1e-12))

    def rows(self) -> List[Tuple[int, float, float]]:
        """Return `(radius, sum, increment)` rows for reports."""
        steps = [0.0] + list(self.increments)
        return list(zip(self.radii, self.sums, steps))


def _lattice_box(radius: int, d: int) -> np.ndarray:
    axis = np.arange(-radius, radius + 1)
    return np.stack([m.ravel() for m in np.meshgrid(*([axis] * d), indexing="ij")], axis=-1)


def _doubling_radii(radius: int) -> Tuple[int, ...]:
    radii = [1]
    while radii[-1] < radius:
        radii.append(min(2 * radii[-1], radius))
    return tuple(radii)


def linear_process_bound(process: LinearProcess, innovation_cumulant: np.ndarray) -> float:
    """Return `B sup_s ||A_s||_HS (sum_s ||A_s||_HS)^3` with `B` the innovation cumulant norm."""
    norms = np.linalg.norm(process.coeffs, axis=(1, 2))
    b = float(np.linalg.norm(np.asarray(innovation_cumulant, dtype=float)))
    return b * float(norms.max()) * float(norms.sum()) ** 3


def check_assumption_V(
    source,
    radius: int,
    delta: float,
    w_radius: int = 1,
    innovation_cumulant: Optional[np.ndarray] = None,
) -> CumulantSumReport:
    """Report partial sums of the lattice cumulant summability condition.

    Args:
        source: Gaussian model, chi-square process or linear process
        radius: Largest truncation radius of the sums over `u` and `v`
        delta: Lattice spacing
        w_radius: Half-width of the lattice box searched for the supremum over `w`
        innovation_cumulant: Fourth cumulant tensor of linear process innovations,
            Gaussian innovations when None

    Returns:
        CumulantSumReport: Sums at doubling radii up to `radius`

    Raises:
        MomentsError: If the lattice is too large or the process has no cumulant formula
    """
    d = source.d
    if isinstance(source, LinearProcess) and not np.isclose(delta, source.delta):
        raise MomentsError(f"Linear process lives on spacing {source.delta}, not {delta}")
    box = _lattice_box(radius, d)
    if len(box) ** 2 * (2 * w_radius + 1) ** d > MAX_LATTICE_TERMS:
        raise MomentsError(f"Radius {radius} in dimension {d} exceeds the lattice budget")
    u_index, v_index = np.meshgrid(np.arange(len(box)), np.arange(len(box)), indexing="ij")
    u, v = box[u_index.ravel()], box[v_index.ravel()]
    extent = np.maximum(np.abs(u).max(axis=1), np.abs(v).max(axis=1))
    radii = _doubling_radii(radius)
    options = {}
    bound = None
    if isinstance(source, LinearProcess) and innovation_cumulant is not None:
        options["innovation_cumulant"] = innovation_cumulant
        bound = delta ** (2 * d) * linear_process_bound(source, innovation_cumulant)
    best = np.zeros(len(radii))
    origin = np.zeros_like(u, dtype=float)
    for w in _lattice_box(w_radius, d):
        shift = np.broadcast_to(w, u.shape).astype(float)
        cumulants = fourth_cumulant(source, delta * u, delta * v, delta * shift, origin, **options)
        values = np.abs(cumulants)
        sums = np.array([values[extent <= r].sum() for r in radii])
        best = np.maximum(best, sums)
    report = CumulantSumReport(
        process=type(source).__name__,
        delta=delta,
        w_radius=w_radius,
        radii=radii,
        sums=tuple(float(x) for x in delta ** (2 * d) * best),
        bound=bound,
    )
    logger.info(
        "Cumulant sums for %s up to radius %s: %.6g (converged: %s)",
        report.process,
        radius,
        report.sums[-1],
        report.converged,
    )
    return report
