"""Geodesically semi-convex functionals: evaluation, slopes, convexity checks.

A :class:`FunctionalSpec` bundles an evaluator (extended-real valued, with
``math.inf`` for points outside the effective domain), its convexity modulus
``lam``, and optional closed forms for the descending slope and the proximal
map.  Infinity saturates under IEEE arithmetic, which is exactly the
semantics the action integrals need; quadrature code guards the ``inf - inf``
and ``0 * inf`` corners explicitly.

The descending slope is computed either from a supplied closed form or from
the variational sup formula

    slope(x) = sup_{y != x}  max(f(x) - f(y) + (lam/2) d(x,y)^2, 0) / d(x,y)

sampled on deterministic concentric shells around ``x`` and then polished by
local ascent.  The sampled value can only underestimate the true supremum,
so validators that consume it stay conservative on the side they certify.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DomainError, PreconditionError
from .spaces import (
    Point,
    SpaceHandle,
    SpaceKind,
    distance,
    geodesic_point,
)

INF = math.inf

# fixed seed for the deterministic shell-direction set; reproducibility of
# sup-formula estimates depends on it
_DIRECTION_SEED = 20240517


@dataclass
class FunctionalSpec:
    """A semi-convex functional on one space.

    ``evaluate`` returns ``math.inf`` outside the effective domain.  ``lam``
    is the geodesic convexity modulus (negative allowed).  ``scale`` records
    the multiplicative factor accumulated through :meth:`scaled`.
    """

    id: str
    evaluate: Callable[[Point], float]
    lam: float
    domain_indicator: Optional[Callable[[Point], bool]] = None
    closed_form_slope: Optional[Callable[[Point], float]] = None
    closed_form_prox: Optional[Callable[[float, Point], Point]] = None
    scale: float = 1.0

    def in_domain(self, x: Point) -> bool:
        if self.domain_indicator is not None:
            return bool(self.domain_indicator(x))
        return math.isfinite(self.evaluate(x))

    def __call__(self, x: Point) -> float:
        return self.evaluate(x)

    def scaled(self, c: float) -> "FunctionalSpec":
        """The functional ``c * f`` for ``c > 0``.

        Scaling multiplies the convexity modulus, the slope, and rescales
        the proximal parameter: prox of ``c f`` at step ``tau`` equals prox
        of ``f`` at step ``c tau``.
        """
        if c <= 0:
            raise DomainError("scale factor must be positive")
        base_eval = self.evaluate
        base_slope = self.closed_form_slope
        base_prox = self.closed_form_prox
        return FunctionalSpec(
            id=f"{self.id}*{c:g}",
            evaluate=lambda x: c * base_eval(x),
            lam=c * self.lam,
            domain_indicator=self.domain_indicator,
            closed_form_slope=(None if base_slope is None else (lambda x: c * base_slope(x))),
            closed_form_prox=(None if base_prox is None else (lambda tau, x: base_prox(c * tau, x))),
            scale=c * self.scale,
        )


@dataclass
class FunctionalFamily:
    """An indexed family ``h -> f^h`` together with its limit functional.

    ``base`` carries the unscaled functional when the family has the form
    ``scale(h) * base``; constructions that ride the unscaled flow need it.
    """

    member: Callable[[int], FunctionalSpec]
    limit: FunctionalSpec
    description: str = ""
    base: Optional[FunctionalSpec] = None


def lam_neg(lam: float) -> float:
    """Negative part of the convexity modulus."""
    return max(-lam, 0.0)


def lam_pos(lam: float) -> float:
    return max(lam, 0.0)


def evaluate(f: FunctionalSpec, x: Point) -> float:
    """Extended-real evaluation; ``inf`` exactly off the effective domain."""
    if f.domain_indicator is not None and not f.domain_indicator(x):
        return INF
    return f.evaluate(x)


# --------------------------------------------------------------------------
# descending slope
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ClosedForm:
    pass


@dataclass(frozen=True)
class SupFormula:
    radius: float = 4.0
    n_samples: int = 256
    polish: bool = True


def _shell_radii(radius: float, n_shells: int) -> list:
    # log-spaced so the smallest shell resolves local derivative behaviour
    return [radius * 10.0 ** (-6.0 * (1.0 - i / (n_shells - 1))) for i in range(n_shells)]


def _directions(dim: int, n: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    rng = np.random.default_rng(_DIRECTION_SEED)
    d = rng.normal(size=(n, dim))
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    return d / np.maximum(norms, 1e-300)


def _sup_candidates(space: SpaceHandle, x: Point, radius: float, n_samples: int):
    """Deterministic probe points on concentric shells around ``x``."""
    n_shells = max(4, int(round(math.sqrt(n_samples))))
    radii = _shell_radii(radius, n_shells)
    k = space.kind
    out = []
    if k in (SpaceKind.EUCLIDEAN, SpaceKind.QUANTILE_1D):
        dim = space.dim if k is SpaceKind.EUCLIDEAN else space.grid_size
        unit = 1.0 if k is SpaceKind.EUCLIDEAN else math.sqrt(space.grid_size)
        n_dirs = max(2, n_samples // n_shells)
        dirs = _directions(dim, n_dirs)
        base = np.array(x.coords)
        for r in radii:
            for u in dirs:
                y = base + r * unit * u
                out.append(space.project(tuple(y)))
    elif k is SpaceKind.HALF_LINE:
        x0 = x.coords[0]
        for r in radii:
            if x0 - r > 0:
                out.append(Point(k, (x0 - r,)))
            if x0 - r == 0.0:
                out.append(Point(k, (0.0,)))
            out.append(Point(k, (x0 + r,)))
        if x0 > 0:
            out.append(Point(k, (0.0,)))
    else:  # tripod: move along every branch at each shell radius
        e, off = int(x.coords[0]), x.coords[1]
        for r in radii:
            if off + r <= space.edge_lengths[e]:
                out.append(Point(k, (float(e), off + r)))
            if r < off:
                out.append(Point(k, (float(e), off - r)))
            else:
                for e2 in range(len(space.edge_lengths)):
                    if e2 != e and r - off <= space.edge_lengths[e2] and r >= off:
                        out.append(Point(k, (float(e2), r - off)))
    return out


def _sup_expr(f: FunctionalSpec, space: SpaceHandle, x: Point, fx: float, y: Point) -> float:
    d = distance(space, x, y)
    if d <= 0:
        return 0.0
    fy = evaluate(f, y)
    if not math.isfinite(fy):
        return 0.0
    return max(fx - fy + 0.5 * f.lam * d * d, 0.0) / d


def _polish_vector(f, space, x, fx, y0, radius):
    """Local ascent of the sup-formula expression for vector-like spaces."""
    base = np.array(y0.coords)
    val = _sup_expr(f, space, x, fx, y0)
    step = max(0.05 * radius, 1e-6)
    for _ in range(80):
        g = np.zeros(len(base))
        eps = max(1e-7, 1e-7 * float(np.max(np.abs(base))))
        for i in range(len(base)):
            bp, bm = base.copy(), base.copy()
            bp[i] += eps
            bm[i] -= eps
            vp = _sup_expr(f, space, x, fx, space.project(tuple(bp)))
            vm = _sup_expr(f, space, x, fx, space.project(tuple(bm)))
            g[i] = (vp - vm) / (2 * eps)
        gn = float(np.linalg.norm(g))
        if gn < 1e-12:
            break
        improved = False
        s = step
        for _ in range(30):
            cand = space.project(tuple(base + s * g / gn))
            v = _sup_expr(f, space, x, fx, cand)
            if v > val + 1e-15:
                base = np.array(cand.coords)
                val, improved = v, True
                step = min(2 * s, radius)
                break
            s *= 0.5
        if not improved:
            break
    return val


def _polish_ray(f, space, x, fx, y0):
    """Golden-section ascent along the 1-d branch through the best sample."""
    d0 = distance(space, x, y0)
    if d0 <= 0:
        return 0.0

    def at(r):
        t = r / d0
        if t <= 1.0:
            return geodesic_point(space, x, y0, t)
        # extend beyond y0 where the space allows it
        if space.kind is SpaceKind.TRIPOD:
            e, off = int(y0.coords[0]), y0.coords[1]
            ex = int(x.coords[0])
            if e == ex:
                sgn = 1.0 if off >= x.coords[1] else -1.0
                return space.project((e, x.coords[1] + sgn * r))
            return space.project((e, r - x.coords[1]))
        coords = tuple(a + t * (b - a) for a, b in zip(x.coords, y0.coords))
        return space.project(coords)

    lo, hi = math.log(max(d0 * 1e-6, 1e-14)), math.log(d0 * 4)
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc = _sup_expr(f, space, x, fx, at(math.exp(c)))
    fd = _sup_expr(f, space, x, fx, at(math.exp(d)))
    for _ in range(70):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = _sup_expr(f, space, x, fx, at(math.exp(c)))
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = _sup_expr(f, space, x, fx, at(math.exp(d)))
    return max(fc, fd)


def descending_slope(
    f: FunctionalSpec,
    space: SpaceHandle,
    x: Point,
    method: ClosedForm | SupFormula | None = None,
) -> float:
    """Descending slope of ``f`` at ``x``.

    ``ClosedForm`` uses the supplied derivative expression; ``SupFormula``
    estimates the variational supremum from shell samples.  Returns ``inf``
    outside the effective domain and 0 where no sampled point descends.
    """
    if not f.in_domain(x):
        return INF
    if method is None:
        method = ClosedForm() if f.closed_form_slope is not None else SupFormula()
    if isinstance(method, ClosedForm):
        if f.closed_form_slope is None:
            raise ConfigError(f"functional {f.id!r} has no closed-form slope")
        return f.closed_form_slope(x)
    if method.n_samples <= 0:
        raise ConfigError("SupFormula needs n_samples > 0")
    fx = evaluate(f, x)
    best, best_y = 0.0, None
    for y in _sup_candidates(space, x, method.radius, method.n_samples):
        v = _sup_expr(f, space, x, fx, y)
        if v > best:
            best, best_y = v, y
    if method.polish and best_y is not None:
        if space.kind in (SpaceKind.EUCLIDEAN, SpaceKind.QUANTILE_1D) and (
            space.kind is SpaceKind.EUCLIDEAN and space.dim > 1
            or space.kind is SpaceKind.QUANTILE_1D
        ):
            best = max(best, _polish_vector(f, space, x, fx, best_y, method.radius))
        best = max(best, _polish_ray(f, space, x, fx, best_y))
    return best


def slope_method_label(method) -> str:
    if isinstance(method, SupFormula):
        return f"sup_formula(r={method.radius:g},n={method.n_samples})"
    return "closed_form"


def best_slope_method(f: FunctionalSpec) -> ClosedForm | SupFormula:
    return ClosedForm() if f.closed_form_slope is not None else SupFormula()


# --------------------------------------------------------------------------
# convexity and lower-bound validators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ResidualReport:
    residual: float
    detail: dict


def check_lambda_convexity(
    f: FunctionalSpec,
    space: SpaceHandle,
    pairs: Sequence[tuple],
    t_grid: Sequence[float] = (0.25, 0.5, 0.75),
) -> ResidualReport:
    """Max violation of geodesic semi-convexity over endpoint pairs.

    For each pair (x0, x1) with finite values, the residual at ``t`` is

        f(x_t) - [(1-t) f(x0) + t f(x1) - (lam/2) t (1-t) d(x0,x1)^2]

    and an honestly ``lam``-convex functional keeps it nonpositive.
    """
    worst = -INF
    where = None
    for x0, x1 in pairs:
        f0, f1 = evaluate(f, x0), evaluate(f, x1)
        if not (math.isfinite(f0) and math.isfinite(f1)):
            continue
        d2 = distance(space, x0, x1) ** 2
        for t in t_grid:
            xt = geodesic_point(space, x0, x1, t)
            ft = evaluate(f, xt)
            rhs = (1 - t) * f0 + t * f1 - 0.5 * f.lam * t * (1 - t) * d2
            r = ft - rhs
            if r > worst:
                worst, where = r, (x0, x1, t)
    if where is None:
        return ResidualReport(0.0, {"n_pairs": 0})
    return ResidualReport(worst, {"worst_pair": where})


def moreau_penalized(f: FunctionalSpec, y: Point, tau: float, space: SpaceHandle) -> FunctionalSpec:
    """The functional ``f + d(., y)^2 / (2 tau)`` with its improved modulus."""
    base = f.evaluate
    return FunctionalSpec(
        id=f"{f.id}+pen",
        evaluate=lambda x: base(x) + distance(space, x, y) ** 2 / (2 * tau),
        lam=f.lam + 1.0 / tau,
        domain_indicator=f.domain_indicator,
    )


def check_quadratic_lower_bound(
    f: FunctionalSpec,
    space: SpaceHandle,
    xbar: Point,
    samples: Sequence[Point],
    rng=None,
    n_ball: int = 1000,
) -> ResidualReport:
    """Check the global quadratic minorant induced by semi-convexity.

    ``m`` is estimated by sampling the closed unit ball around ``xbar``
    (the center is always included, so the estimate can only exceed the true
    infimum, which makes the check conservative).  The residual is

        min over samples of  f(y) - [(lam/2) d^2 + (m - f(xbar) - lam^+/2) d + m]

    and must be >= -tolerance.
    """
    fxbar = evaluate(f, xbar)
    if not math.isfinite(fxbar):
        raise PreconditionError("center lies outside the effective domain")
    rng = rng if rng is not None else np.random.default_rng(0)
    m = fxbar
    for _ in range(n_ball):
        y = unit_ball_point(space, xbar, rng)
        fy = evaluate(f, y)
        if math.isfinite(fy):
            m = min(m, fy)
    worst = INF
    where = None
    for y in samples:
        fy = evaluate(f, y)
        if not math.isfinite(fy):
            continue
        d = distance(space, y, xbar)
        rhs = 0.5 * f.lam * d * d + (m - fxbar - 0.5 * lam_pos(f.lam)) * d + m
        r = fy - rhs
        if r < worst:
            worst, where = r, y
    if where is None:
        return ResidualReport(0.0, {"m": m, "n_samples": 0})
    return ResidualReport(worst, {"m": m, "worst_sample": where})


def unit_ball_point(space: SpaceHandle, center: Point, rng) -> Point:
    """Uniform-ish draw from the closed unit ball around ``center``.

    Projections used for half-line and quantile constraints are
    nonexpansive, so the result never leaves the ball.
    """
    k = space.kind
    if k is SpaceKind.EUCLIDEAN:
        u = rng.normal(size=space.dim)
        u /= max(np.linalg.norm(u), 1e-300)
        r = rng.uniform() ** (1.0 / space.dim)
        return space.project(tuple(np.array(center.coords) + r * u))
    if k is SpaceKind.HALF_LINE:
        return space.project((center.coords[0] + rng.uniform(-1.0, 1.0),))
    if k is SpaceKind.QUANTILE_1D:
        u = rng.normal(size=space.grid_size)
        u /= max(np.linalg.norm(u), 1e-300)
        r = rng.uniform() * math.sqrt(space.grid_size)
        return space.project(tuple(np.array(center.coords) + r * u))
    # tripod: walk a random arc distance toward a random branch
    e, off = int(center.coords[0]), center.coords[1]
    r = rng.uniform()
    if rng.uniform() < 0.5:
        return space.project((e, off + r))
    if r <= off:
        return Point(k, (float(e), off - r))
    e2 = int(rng.integers(len(space.edge_lengths)))
    if e2 == e:
        return Point(k, (float(e), max(off - r, 0.0)))
    return space.project((e2, r - off))


# --------------------------------------------------------------------------
# built-in catalogue
# --------------------------------------------------------------------------


def zero_functional(space: SpaceHandle) -> FunctionalSpec:
    return FunctionalSpec(
        id="zero",
        evaluate=lambda x: 0.0,
        lam=0.0,
        closed_form_slope=lambda x: 0.0,
        closed_form_prox=lambda tau, x: x,
    )


def quadratic(space: SpaceHandle, center: Point, lam: float = 1.0) -> FunctionalSpec:
    """``(lam/2) d(x, center)^2``; modulus ``lam``, exact slope and prox."""
    if lam <= 0 and space.kind in (SpaceKind.TRIPOD, SpaceKind.QUANTILE_1D):
        raise ConfigError("nonconvex quadratic only supported on flat spaces")

    def ev(x):
        return 0.5 * lam * distance(space, x, center) ** 2

    def slope(x):
        d = distance(space, x, center)
        if space.kind is SpaceKind.HALF_LINE and lam < 0 and x.coords[0] == 0.0:
            return 0.0
        return abs(lam) * d

    def prox(tau, x):
        if lam >= 0:
            t = lam * tau / (1.0 + lam * tau)
            return geodesic_point(space, x, center, t)
        # flat spaces only: affine formula, then metric projection
        w = lam * tau
        coords = tuple((xc + w * cc) / (1.0 + w) for xc, cc in zip(x.coords, center.coords))
        return space.project(coords)

    return FunctionalSpec(
        id=f"quadratic(lam={lam:g})",
        evaluate=ev,
        lam=lam,
        closed_form_slope=slope,
        closed_form_prox=prox,
    )


def inverse_square(eps: float = 1.0) -> FunctionalSpec:
    """``eps / x^2`` on the half-line, infinite at the origin (catalogue
    name ``example1``)."""

    def ev(x):
        v = x.coords[0]
        return INF if v <= 0.0 else eps / (v * v)

    def slope(x):
        v = x.coords[0]
        return INF if v <= 0.0 else 2.0 * eps / (v * v * v)

    return FunctionalSpec(
        id=f"inverse_square(eps={eps:g})",
        evaluate=ev,
        lam=0.0,
        domain_indicator=lambda x: x.coords[0] > 0.0,
        closed_form_slope=slope,
        scale=eps,
    )


def ramp(h: float) -> FunctionalSpec:
    """Piecewise-linear descent ``1 - h x`` on [0, 1/h], zero beyond
    (catalogue name ``example2``)."""
    inv = 1.0 / h

    def ev(x):
        v = x.coords[0]
        return 1.0 - h * v if v <= inv else 0.0

    def slope(x):
        return h if x.coords[0] < inv else 0.0

    def prox(tau, x):
        v = x.coords[0]
        if v > inv:
            return Point(SpaceKind.HALF_LINE, (v,))
        if v >= inv - h * tau:
            return Point(SpaceKind.HALF_LINE, (inv,))
        return Point(SpaceKind.HALF_LINE, (v + h * tau,))

    return FunctionalSpec(
        id=f"ramp(h={h:g})",
        evaluate=ev,
        lam=0.0,
        closed_form_slope=slope,
        closed_form_prox=prox,
    )


def linear_half_line(c: float) -> FunctionalSpec:
    """``c x`` on the half-line (catalogue name ``linear``)."""

    def slope(x):
        return c if x.coords[0] > 0.0 else 0.0

    return FunctionalSpec(
        id=f"linear(c={c:g})",
        evaluate=lambda x: c * x.coords[0],
        lam=0.0,
        closed_form_slope=slope,
        closed_form_prox=lambda tau, x: Point(SpaceKind.HALF_LINE, (max(x.coords[0] - c * tau, 0.0),)),
    )


def build_functional(space: SpaceHandle, name: str, params: dict | None = None) -> FunctionalSpec:
    """Catalogue lookup used by config files.

    Names: ``zero``, ``quadratic`` (params ``center``, ``lam``), ``example1``
    (param ``eps``), ``example2`` (param ``h``), ``linear`` (param ``c``).
    """
    params = dict(params or {})
    if name == "zero":
        return zero_functional(space)
    if name == "quadratic":
        center = params.get("center", 0.0)
        if not isinstance(center, (list, tuple)):
            center = [center] * (space.dim if space.kind is SpaceKind.EUCLIDEAN else 1)
        if space.kind is SpaceKind.QUANTILE_1D and len(center) != space.grid_size:
            center = [center[0]] * space.grid_size
        cpt = space.point(*center) if space.kind is not SpaceKind.TRIPOD else space.point(center[0], center[1])
        return quadratic(space, cpt, float(params.get("lam", 1.0)))
    if name == "example1":
        if space.kind is not SpaceKind.HALF_LINE:
            raise ConfigError("example1 lives on the half-line")
        return inverse_square(float(params.get("eps", 1.0)))
    if name == "example2":
        if space.kind is not SpaceKind.HALF_LINE:
            raise ConfigError("example2 lives on the half-line")
        return ramp(float(params.get("h", 1.0)))
    if name == "linear":
        if space.kind is not SpaceKind.HALF_LINE:
            raise ConfigError("linear lives on the half-line")
        return linear_half_line(float(params.get("c", 1.0)))
    raise ConfigError(f"unknown catalogue functional {name!r}")


def strip_closed_forms(f: FunctionalSpec) -> FunctionalSpec:
    """Copy of ``f`` without closed forms; forces the numerical paths."""
    return replace(f, closed_form_slope=None, closed_form_prox=None)
