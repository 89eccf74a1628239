"""Concrete metric spaces: distances, geodesics, comparison inequality.

Four space kinds are implemented:

* ``EUCLIDEAN``: R^n with the Euclidean metric.
* ``HALF_LINE``: [0, inf) with |x - y|.
* ``TRIPOD``: a metric tree made of ``k`` segments glued at a common branch
  point; a point is an ``(edge, offset)`` pair and geodesics between
  different edges run through the branch point.
* ``QUANTILE_1D``: nondecreasing quantile vectors of fixed length ``m`` with
  the scaled Euclidean metric ``|u - v| / sqrt(m)``.  This is the discrete
  embedding of one-dimensional Wasserstein geometry; monotonicity violations
  produced by vector arithmetic are repaired with pool-adjacent-violators.

All four spaces are geodesic and satisfy the quadrilateral comparison
inequality

    d(y, x_t)^2 <= (1-t) d(y, x0)^2 + t d(y, x1)^2 - t (1-t) d(x0, x1)^2

which :func:`check_cat0` evaluates as a testable residual.

Everything here is pure and immutable; values are safe to share between
threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .errors import DomainError, SpaceMismatchError

DEFAULT_TOL = 1e-9


class SpaceKind(str, Enum):
    EUCLIDEAN = "euclidean"
    HALF_LINE = "half_line"
    TRIPOD = "tripod"
    QUANTILE_1D = "quantile_1d"


@dataclass(frozen=True)
class SpaceHandle:
    """A concrete metric space with distance and geodesic oracles."""

    kind: SpaceKind
    dim: int = 1
    edge_lengths: tuple = ()
    grid_size: int = 0

    def __post_init__(self):
        if self.kind is SpaceKind.EUCLIDEAN and self.dim < 1:
            raise DomainError("euclidean dimension must be >= 1")
        if self.kind is SpaceKind.TRIPOD:
            if len(self.edge_lengths) < 2:
                raise DomainError("tripod needs at least 2 edges")
            if any(l <= 0 for l in self.edge_lengths):
                raise DomainError("tripod edge lengths must be positive")
        if self.kind is SpaceKind.QUANTILE_1D and self.grid_size < 2:
            raise DomainError("quantile grid size must be >= 2")

    def point(self, *coords) -> "Point":
        """Build a validated point of this space.

        Euclidean: ``point(x1, ..., xn)``; half-line: ``point(x)``;
        tripod: ``point(edge_index, offset)``; quantile: ``point(v1, ..., vm)``
        or ``point(sequence)``.
        """
        if len(coords) == 1 and isinstance(coords[0], (list, tuple)):
            coords = tuple(coords[0])
        coords = tuple(float(c) for c in coords)
        if self.kind is SpaceKind.EUCLIDEAN:
            if len(coords) != self.dim:
                raise DomainError(f"expected {self.dim} coordinates, got {len(coords)}")
        elif self.kind is SpaceKind.HALF_LINE:
            if len(coords) != 1 or coords[0] < 0:
                raise DomainError("half-line points are single nonnegative reals")
        elif self.kind is SpaceKind.TRIPOD:
            if len(coords) != 2:
                raise DomainError("tripod points are (edge, offset) pairs")
            e = int(coords[0])
            if not 0 <= e < len(self.edge_lengths):
                raise DomainError(f"edge index {e} out of range")
            if not 0.0 <= coords[1] <= self.edge_lengths[e] + 1e-12:
                raise DomainError(f"offset {coords[1]} outside edge {e}")
            coords = (float(e), min(coords[1], self.edge_lengths[e]))
        elif self.kind is SpaceKind.QUANTILE_1D:
            if len(coords) != self.grid_size:
                raise DomainError(f"expected {self.grid_size} quantiles, got {len(coords)}")
            if any(b < a - 1e-9 for a, b in zip(coords, coords[1:])):
                raise DomainError("quantile vector must be nondecreasing")
            coords = tuple(isotonic_repair(coords))
        return Point(self.kind, coords)

    def project(self, coords: Sequence[float]) -> "Point":
        """Repair raw coordinates into a valid point (metric projection).

        Half-line clamps at zero, quantile vectors are isotonically
        projected, tripod offsets are clamped into their edge.
        """
        coords = tuple(float(c) for c in coords)
        if self.kind is SpaceKind.HALF_LINE:
            return Point(self.kind, (max(coords[0], 0.0),))
        if self.kind is SpaceKind.QUANTILE_1D:
            return Point(self.kind, tuple(isotonic_repair(coords)))
        if self.kind is SpaceKind.TRIPOD:
            e = int(round(coords[0]))
            e = min(max(e, 0), len(self.edge_lengths) - 1)
            off = min(max(coords[1], 0.0), self.edge_lengths[e])
            return Point(self.kind, (float(e), off))
        return Point(self.kind, coords)


@dataclass(frozen=True)
class Point:
    """A point of some :class:`SpaceHandle`, tagged with the space kind."""

    space_kind: SpaceKind
    coords: tuple


def euclidean(dim: int) -> SpaceHandle:
    return SpaceHandle(SpaceKind.EUCLIDEAN, dim=dim)


def half_line() -> SpaceHandle:
    return SpaceHandle(SpaceKind.HALF_LINE)


def tripod(edge_lengths: Sequence[float] = (1.0, 1.0, 1.0)) -> SpaceHandle:
    return SpaceHandle(SpaceKind.TRIPOD, edge_lengths=tuple(float(l) for l in edge_lengths))


def quantile_1d(grid_size: int) -> SpaceHandle:
    return SpaceHandle(SpaceKind.QUANTILE_1D, grid_size=grid_size)


def isotonic_repair(values: Sequence[float]) -> list:
    """Project onto nondecreasing vectors (pool adjacent violators).

    Uniform weights, so this is the metric projection for the scaled
    Euclidean metric used by the quantile space.
    """
    blocks = []  # (sum, count)
    for v in values:
        s, n = float(v), 1
        while blocks and blocks[-1][0] / blocks[-1][1] > s / n:
            ps, pn = blocks.pop()
            s += ps
            n += pn
        blocks.append((s, n))
    out = []
    for s, n in blocks:
        out.extend([s / n] * n)
    return out


def _check_tags(space: SpaceHandle, *points: Point):
    for p in points:
        if p.space_kind is not space.kind:
            raise SpaceMismatchError(
                f"point tagged {p.space_kind.value} used with {space.kind.value} space"
            )


def distance(space: SpaceHandle, p: Point, q: Point) -> float:
    """Metric distance between two points of ``space``."""
    _check_tags(space, p, q)
    k = space.kind
    if k is SpaceKind.EUCLIDEAN:
        return math.dist(p.coords, q.coords)
    if k is SpaceKind.HALF_LINE:
        return abs(p.coords[0] - q.coords[0])
    if k is SpaceKind.QUANTILE_1D:
        return math.dist(p.coords, q.coords) / math.sqrt(space.grid_size)
    # tripod: through the branch point unless both points share an edge
    (ep, op), (eq, oq) = p.coords, q.coords
    if int(ep) == int(eq):
        return abs(op - oq)
    return op + oq


def geodesic_point(space: SpaceHandle, p: Point, q: Point, t: float) -> Point:
    """Constant speed geodesic from ``p`` to ``q`` evaluated at ``t`` in [0, 1]."""
    _check_tags(space, p, q)
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"geodesic parameter {t} outside [0, 1]")
    k = space.kind
    if k in (SpaceKind.EUCLIDEAN, SpaceKind.HALF_LINE, SpaceKind.QUANTILE_1D):
        coords = tuple((1.0 - t) * a + t * b for a, b in zip(p.coords, q.coords))
        return Point(k, coords)
    (ep, op), (eq, oq) = p.coords, q.coords
    if int(ep) == int(eq):
        return Point(k, (ep, (1.0 - t) * op + t * oq))
    total = op + oq
    s = t * total
    if s <= op:
        return Point(k, (ep, op - s))
    return Point(k, (eq, s - op))


@dataclass(frozen=True)
class Cat0Report:
    """Result of a comparison-inequality check."""

    max_residual: float
    worst_t: float
    residuals: tuple = field(default=())


def check_cat0(
    space: SpaceHandle,
    y: Point,
    x0: Point,
    x1: Point,
    t_grid: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
) -> Cat0Report:
    """Residual of the quadrilateral comparison inequality.

    Returns the max over ``t_grid`` of

        d(y, x_t)^2 - [(1-t) d(y,x0)^2 + t d(y,x1)^2 - t(1-t) d(x0,x1)^2]

    which must be nonpositive (up to tolerance) in all implemented spaces.
    """
    _check_tags(space, y, x0, x1)
    d0 = distance(space, y, x0)
    d1 = distance(space, y, x1)
    d01 = distance(space, x0, x1)
    residuals = []
    for t in t_grid:
        xt = geodesic_point(space, x0, x1, t)
        lhs = distance(space, y, xt) ** 2
        rhs = (1 - t) * d0**2 + t * d1**2 - t * (1 - t) * d01**2
        residuals.append(lhs - rhs)
    worst = max(range(len(t_grid)), key=lambda i: residuals[i])
    return Cat0Report(residuals[worst], t_grid[worst], tuple(residuals))


def point_to_json(p: Point) -> str:
    return json.dumps({"space": p.space_kind.value, "coords": list(p.coords)})


def point_from_json(text: str) -> Point:
    obj = json.loads(text)
    return Point(SpaceKind(obj["space"]), tuple(float(c) for c in obj["coords"]))


def random_point(space: SpaceHandle, rng, scale: float = 1.0) -> Point:
    """Draw a point of ``space`` using the numpy generator ``rng``."""
    if space.kind is SpaceKind.EUCLIDEAN:
        return Point(space.kind, tuple(scale * rng.normal(size=space.dim)))
    if space.kind is SpaceKind.HALF_LINE:
        return Point(space.kind, (scale * abs(rng.normal()),))
    if space.kind is SpaceKind.TRIPOD:
        e = int(rng.integers(len(space.edge_lengths)))
        return Point(space.kind, (float(e), float(rng.uniform(0, space.edge_lengths[e]))))
    vals = sorted(scale * rng.normal(size=space.grid_size))
    return Point(space.kind, tuple(float(v) for v in vals))
