"""Proximal (resolvent) maps by numerical minimization, plus validators.

The resolvent of ``f`` at step ``tau`` is the minimizer of

    f(.) + d(., x)^2 / (2 tau)

which is strongly convex whenever ``tau < 1 / (2 lam^-)``, so any descent
method converges to the unique minimizer.  Solvers by space:

* half-line: golden-section on an automatically expanded bracket;
* tripod: golden-section on every edge, then compare edge minima
  (first edge wins exact ties, and near-ties are flagged);
* Euclidean and quantile vectors: proximal-gradient with backtracking on
  the smooth part, falling back to cyclic coordinate descent on a refining
  grid when the functional is not smooth enough to difference.

A supplied closed-form prox short-circuits everything.  The step range is
enforced as ``tau < 1/(2 lam^-)`` throughout so the Lipschitz estimate for
the resolvent applies in every validator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError
from .functionals import (
    INF,
    FunctionalFamily,
    FunctionalSpec,
    best_slope_method,
    descending_slope,
    evaluate,
    lam_neg,
)
from .spaces import Point, SpaceHandle, SpaceKind, distance, geodesic_point

VALUE_TOL = 1e-10
POINT_TOL = 1e-8

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class ResolventResult:
    point: Point
    value: float
    tau: float
    iterations: int
    residual: float
    method: str = ""
    tie_flag: bool = False


def tau_upper_limit(lam: float) -> float:
    ln = lam_neg(lam)
    return INF if ln == 0.0 else 1.0 / (2.0 * ln)


def _require_tau(tau: float, lam: float):
    if not 0.0 < tau < tau_upper_limit(lam):
        raise DomainError(
            f"step {tau} outside (0, {tau_upper_limit(lam):g}) for modulus {lam:g}"
        )


def golden_section(g: Callable[[float], float], lo: float, hi: float, tol: float = 1e-11):
    """Minimize a unimodal scalar function on [lo, hi].

    Tolerates ``inf`` plateaus at the ends of the bracket (the probe points
    simply lose every comparison), which covers objectives with a restricted
    effective domain.  Returns (argmin, min, evals).
    """
    a, b = float(lo), float(hi)
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    gc, gd = g(c), g(d)
    n = 2
    while b - a > tol:
        if gc <= gd:
            b, d, gd = d, c, gc
            c = b - _GOLDEN * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _GOLDEN * (b - a)
            gd = g(d)
        n += 1
        if n > 300:
            break
    xs = [(a, g(a)), (c, gc), (d, gd), (b, g(b))]
    x, v = min(xs, key=lambda p: p[1])
    return x, v, n + 2


def expand_bracket(g: Callable[[float], float], x0: float, lo_bound: float, step: float = 1.0):
    """Find [lo, hi] containing the minimizer of a convex scalar function."""
    lo = max(lo_bound, x0 - step)
    hi = x0 + step
    for _ in range(80):
        if g(hi) >= g(max(hi - 1e-9 * max(abs(hi), 1.0), lo)):
            break
        hi = x0 + 2 * (hi - x0)
    for _ in range(80):
        if lo <= lo_bound + 1e-300:
            lo = lo_bound
            break
        if g(lo) >= g(lo + 1e-9 * max(abs(lo), 1.0)):
            break
        lo = x0 - 2 * (x0 - lo)
        lo = max(lo, lo_bound)
    return lo, hi


def _objective(f: FunctionalSpec, space: SpaceHandle, tau: float, x: Point):
    def val(y: Point) -> float:
        fy = evaluate(f, y)
        if not math.isfinite(fy):
            return INF
        return fy + distance(space, y, x) ** 2 / (2.0 * tau)

    return val


def _solve_half_line(obj, x: Point):
    x0 = x.coords[0]
    g = lambda v: obj(Point(SpaceKind.HALF_LINE, (v,)))
    lo, hi = expand_bracket(g, x0, 0.0)
    v, val, n = golden_section(g, lo, hi)
    return Point(SpaceKind.HALF_LINE, (v,)), val, n


def _solve_tripod(obj, space: SpaceHandle, x: Point):
    best = None
    second = INF
    evals = 0
    for e, length in enumerate(space.edge_lengths):
        g = lambda s: obj(Point(SpaceKind.TRIPOD, (float(e), s)))
        s, val, n = golden_section(g, 0.0, length)
        evals += n
        if best is None or val < best[1] - 0.0:
            if best is not None:
                second = min(second, best[1])
            best = (Point(SpaceKind.TRIPOD, (float(e), s)), val)
        else:
            second = min(second, val)
    tie = second - best[1] < 1e-12
    return best[0], best[1], evals, tie


def _numeric_grad(fn, coords, rel=1e-6):
    g = np.zeros(len(coords))
    for i in range(len(coords)):
        eps = rel * max(abs(coords[i]), 1.0)
        cp, cm = list(coords), list(coords)
        cp[i] += eps
        cm[i] -= eps
        vp, vm = fn(cp), fn(cm)
        if not (math.isfinite(vp) and math.isfinite(vm)):
            return None
        g[i] = (vp - vm) / (2 * eps)
    return g


def _solve_vector(f: FunctionalSpec, space: SpaceHandle, tau: float, x: Point, max_iter: int):
    """Proximal-gradient with backtracking; coordinate descent fallback."""
    xv = np.array(x.coords)

    def fval(coords) -> float:
        return evaluate(f, space.project(tuple(coords)))

    scale2 = space.grid_size if space.kind is SpaceKind.QUANTILE_1D else 1.0

    def full(coords) -> float:
        p = space.project(tuple(coords))
        fy = evaluate(f, p)
        if not math.isfinite(fy):
            return INF
        return fy + distance(space, p, x) ** 2 / (2.0 * tau)

    y = xv.copy()
    step = tau
    val = full(y)
    it = 0
    smooth = math.isfinite(val)

    def prox_step(z, s):
        # exact prox of the coupling term d(., x)^2 / (2 tau) in coordinates
        w = s / (tau * scale2)
        out = (z + w * xv) / (1.0 + w)
        return np.array(space.project(tuple(out)).coords)

    for it in range(1, max_iter + 1):
        if not smooth:
            break
        g = _numeric_grad(fval, y)
        if g is None:
            smooth = False
            break
        y_new = prox_step(y - step * g, step)
        v_new = full(y_new)
        bt = 0
        while v_new > val + 1e-15 and bt < 60:
            step *= 0.5
            y_new = prox_step(y - step * g, step)
            v_new = full(y_new)
            bt += 1
        if bt >= 60:
            smooth = False
            break
        move = float(np.max(np.abs(y_new - y)))
        gain = val - v_new
        y, val = y_new, v_new
        step = min(step * 1.5, 1e6)
        if move < 0.2 * POINT_TOL and gain < VALUE_TOL:
            break
    if not smooth:
        y, val, extra = _coordinate_descent(full, y, val)
        it += extra
    return space.project(tuple(y)), val, it


def _coordinate_descent(full, y, val, sweeps: int = 60):
    y = np.array(y, dtype=float)
    n = 0
    span = np.ones(len(y))
    for _ in range(sweeps):
        moved = 0.0
        for i in range(len(y)):
            def g1(v):
                c = y.copy()
                c[i] = v
                return full(c)

            lo, hi = y[i] - span[i], y[i] + span[i]
            grid = np.linspace(lo, hi, 17)
            vals = [g1(v) for v in grid]
            j = int(np.argmin(vals))
            a = grid[max(j - 1, 0)]
            b = grid[min(j + 1, len(grid) - 1)]
            vstar, vval, k = golden_section(g1, a, b)
            n += k + 17
            if vval < val:
                moved = max(moved, abs(vstar - y[i]))
                y[i], val = vstar, vval
            span[i] = max(4 * abs(vstar - grid[j]) + 1e-6, span[i] * 0.5)
        if moved < 0.2 * POINT_TOL:
            break
    return y, val, n


def resolvent(
    f: FunctionalSpec,
    space: SpaceHandle,
    tau: float,
    x: Point,
    max_iter: int = 4000,
) -> ResolventResult:
    """Minimize ``f(.) + d(., x)^2 / (2 tau)``.

    Uses the closed-form prox when the functional carries one; otherwise
    dispatches to the space-appropriate solver.  Raises ``ConvergenceError``
    (with the best iterate attached) if the optimality probe fails.
    """
    _require_tau(tau, f.lam)
    obj = _objective(f, space, tau, x)
    if f.closed_form_prox is not None:
        u = f.closed_form_prox(tau, x)
        return ResolventResult(u, obj(u), tau, 0, 0.0, method="closed_form")
    tie = False
    if space.kind is SpaceKind.HALF_LINE:
        u, val, n = _solve_half_line(obj, x)
        method = "golden_section"
    elif space.kind is SpaceKind.TRIPOD:
        u, val, n, tie = _solve_tripod(obj, space, x)
        method = "per_edge_golden"
    else:
        u, val, n = _solve_vector(f, space, tau, x, max_iter)
        method = "proximal_gradient"
    # optimality probe: nearby perturbations must not beat the reported value
    gap = 0.0
    for delta in (POINT_TOL * 10, POINT_TOL * 1e3):
        for y in _probe_points(space, u, delta):
            gap = max(gap, val - obj(y))
    if gap > 1e-7:
        raise ConvergenceError(
            f"resolvent probe found improvement {gap:.2e}",
            best=ResolventResult(u, val, tau, n, gap, method=method, tie_flag=tie),
        )
    return ResolventResult(u, val, tau, n, gap, method=method, tie_flag=tie)


def _probe_points(space: SpaceHandle, u: Point, delta: float):
    k = space.kind
    if k is SpaceKind.HALF_LINE:
        return [space.project((u.coords[0] + delta,)), space.project((u.coords[0] - delta,))]
    if k is SpaceKind.TRIPOD:
        pts = [space.project((u.coords[0], u.coords[1] + delta))]
        if u.coords[1] - delta >= 0:
            pts.append(Point(k, (u.coords[0], u.coords[1] - delta)))
        return pts
    out = []
    for i in range(len(u.coords)):
        for s in (delta, -delta):
            c = list(u.coords)
            c[i] += s
            out.append(space.project(tuple(c)))
    return out


# --------------------------------------------------------------------------
# validators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainReport:
    """Residuals of slope(u) <= d(u,x)/tau <= slope(x)/(1 + lam tau)."""

    lower_residual: float
    upper_residual: float
    slope_u: float
    ratio: float
    slope_x: float
    method: str


def check_bound_chain(
    f: FunctionalSpec,
    space: SpaceHandle,
    tau: float,
    x: Point,
    method=None,
) -> ChainReport:
    method = method if method is not None else best_slope_method(f)
    res = resolvent(f, space, tau, x)
    u = res.point
    s_u = descending_slope(f, space, u, method)
    s_x = descending_slope(f, space, x, method)
    ratio = distance(space, u, x) / tau
    upper = INF if not math.isfinite(s_x) else ratio - s_x / (1.0 + f.lam * tau)
    from .functionals import slope_method_label

    return ChainReport(s_u - ratio, upper, s_u, ratio, s_x, slope_method_label(method))


def check_resolvent_lipschitz(
    f: FunctionalSpec, space: SpaceHandle, tau: float, x: Point, y: Point
) -> float:
    """``d(J x, J y) - d(x, y) / sqrt(1 - 2 lam^- tau)``, expected <= tol."""
    _require_tau(tau, f.lam)
    ju = resolvent(f, space, tau, x).point
    jv = resolvent(f, space, tau, y).point
    factor = 1.0 / math.sqrt(1.0 - 2.0 * lam_neg(f.lam) * tau)
    return distance(space, ju, jv) - factor * distance(space, x, y)


def check_tau_continuity(
    f: FunctionalSpec, space: SpaceHandle, nu: float, mu: float, x: Point, method=None
) -> float:
    """Step-continuity residual for 0 < nu < mu within the admissible range."""
    if not 0.0 < nu < mu:
        raise DomainError("need 0 < nu < mu")
    _require_tau(mu, f.lam)
    s_x = descending_slope(f, space, x, method if method is not None else best_slope_method(f))
    jn = resolvent(f, space, nu, x).point
    jm = resolvent(f, space, mu, x).point
    bound = (mu - nu) * s_x / ((1.0 + f.lam * mu) * math.sqrt(1.0 - 2.0 * lam_neg(f.lam) * nu))
    return distance(space, jn, jm) - bound


def check_resolvent_identity(
    f: FunctionalSpec, space: SpaceHandle, nu: float, mu: float, x: Point
) -> float:
    """``d(J_mu x, J_nu(gamma(nu/mu)))`` with gamma the geodesic J_mu x -> x."""
    if not 0.0 < nu < mu:
        raise DomainError("need 0 < nu < mu")
    _require_tau(mu, f.lam)
    jm = resolvent(f, space, mu, x).point
    mid = geodesic_point(space, jm, x, nu / mu)
    jn = resolvent(f, space, nu, mid).point
    return distance(space, jm, jn)


def resolvent_convergence_probe(
    family: FunctionalFamily,
    space: SpaceHandle,
    tau: float,
    x: Point,
    h_list: Sequence[int],
) -> list:
    """Distances from the member resolvents to the limit resolvent."""
    target = resolvent(family.limit, space, tau, x).point
    return [distance(space, resolvent(family.member(h), space, tau, x).point, target) for h in h_list]
