"""Gradient-flow trajectories by minimizing movements, with validators.

A trajectory is generated by iterating the resolvent at the step size:
``x_{k+1} = J_dt(x_k)``.  Each validator compares a discrete quantity with
the corresponding continuous inequality and returns the residual; callers
compare the residual against ``tolerance + slack(dt)`` where the slack is
``5 * L * dt`` with a configurable local Lipschitz estimate ``L``
(default 10).  The inequalities hold exactly only in the continuous limit,
so the slack keeps finite-step checks from producing false failures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .errors import DomainError, FlowError, MetricActionError
from .functionals import FunctionalSpec, best_slope_method, descending_slope, evaluate, lam_neg
from .proximal import resolvent, tau_upper_limit
from .spaces import Point, SpaceHandle, distance

DEFAULT_LIPSCHITZ = 10.0


def slack(dt: float, lipschitz: float = DEFAULT_LIPSCHITZ) -> float:
    return 5.0 * lipschitz * dt


@dataclass
class FlowTrajectory:
    times: np.ndarray
    points: list
    step: float
    f_values: np.ndarray

    def at_index(self, k: int) -> Point:
        return self.points[k]

    @property
    def end(self) -> Point:
        return self.points[-1]

    def speeds(self, space: SpaceHandle) -> np.ndarray:
        d = [
            distance(space, self.points[k], self.points[k + 1])
            for k in range(len(self.points) - 1)
        ]
        return np.array(d) / np.diff(self.times)


def flow(
    f: FunctionalSpec, space: SpaceHandle, x: Point, T: float, n_steps: int
) -> FlowTrajectory:
    """Minimizing-movement trajectory on [0, T] with uniform steps."""
    if n_steps < 1 or T <= 0:
        raise DomainError("need T > 0 and n_steps >= 1")
    dt = T / n_steps
    if dt >= tau_upper_limit(f.lam):
        raise DomainError(f"step {dt:g} too large for modulus {f.lam:g}")
    return flow_times(f, space, x, np.linspace(0.0, T, n_steps + 1))


def flow_times(f: FunctionalSpec, space: SpaceHandle, x: Point, times) -> FlowTrajectory:
    """Minimizing movements along an arbitrary increasing time grid."""
    times = np.asarray(times, dtype=float)
    pts = [x]
    vals = [evaluate(f, x)]
    for k in range(len(times) - 1):
        dt = times[k + 1] - times[k]
        try:
            res = resolvent(f, space, dt, pts[-1])
        except MetricActionError as exc:
            partial = FlowTrajectory(times[: k + 1], pts, float(dt), np.array(vals))
            raise FlowError(f"resolvent failed at step {k}: {exc}", partial=partial) from exc
        pts.append(res.point)
        vals.append(evaluate(f, res.point))
    step = float(times[1] - times[0]) if len(times) > 1 else 0.0
    return FlowTrajectory(times, pts, step, np.array(vals))


def check_evi(
    traj: FlowTrajectory,
    f: FunctionalSpec,
    lam: float,
    v: Point,
    space: SpaceHandle,
) -> float:
    """Discrete evolution-variational-inequality residual at interior nodes.

    Central differences of d(x_t, v)^2 / 2 plus the quadratic term must stay
    below f(v) - f(x_t) up to O(dt) slack.
    """
    fv = evaluate(f, v)
    d2 = np.array([distance(space, p, v) ** 2 for p in traj.points])
    worst = -math.inf
    for k in range(1, len(traj.points) - 1):
        dt2 = traj.times[k + 1] - traj.times[k - 1]
        deriv = 0.5 * (d2[k + 1] - d2[k - 1]) / dt2
        r = deriv + 0.5 * lam * d2[k] - fv + traj.f_values[k]
        worst = max(worst, r)
    return worst


def check_contraction(
    f: FunctionalSpec,
    space: SpaceHandle,
    x0: Point,
    x1: Point,
    T: float,
    n_steps: int,
) -> float:
    """Exponential contraction residual between two trajectories."""
    a = flow(f, space, x0, T, n_steps)
    b = flow(f, space, x1, T, n_steps)
    d0 = distance(space, x0, x1)
    worst = -math.inf
    for k, t in enumerate(a.times):
        r = distance(space, a.points[k], b.points[k]) - math.exp(-f.lam * t) * d0
        worst = max(worst, r)
    return worst


@dataclass(frozen=True)
class EnergyReport:
    relative_error: float
    value_drop: float
    kinetic_integral: float
    max_speed_slope_gap: float


def check_energy_identity(
    traj: FlowTrajectory, f: FunctionalSpec, space: SpaceHandle, method=None
) -> EnergyReport:
    """Compare the value drop with the integral of the squared speed.

    Along the flow both should agree with the integral of the squared slope;
    the report also carries the worst node-wise gap between interval speed
    and the slope at the right node.
    """
    speeds = traj.speeds(space)
    dts = np.diff(traj.times)
    kinetic = float(np.sum(speeds**2 * dts))
    drop = float(traj.f_values[0] - traj.f_values[-1])
    rel = abs(drop - kinetic) / max(1.0, abs(drop))
    method = method if method is not None else best_slope_method(f)
    gap = 0.0
    for k in range(len(speeds)):
        s = descending_slope(f, space, traj.points[k + 1], method)
        if math.isfinite(s):
            gap = max(gap, abs(speeds[k] - s))
    return EnergyReport(rel, drop, kinetic, gap)


def check_slope_bounds_along_flow(
    f: FunctionalSpec,
    space: SpaceHandle,
    x: Point,
    t: float,
    n_steps: int = 1000,
    method=None,
) -> tuple:
    """Two-sided chain linking slope decay, displacement rate, and the
    initial slope; returns (lower_residual, upper_residual)."""
    if t <= 0:
        raise DomainError("need t > 0")
    method = method if method is not None else best_slope_method(f)
    traj = flow(f, space, x, t, n_steps)
    u = traj.end
    s_u = descending_slope(f, space, u, method)
    s_x = descending_slope(f, space, x, method)
    rate = distance(space, u, x) / t
    lt = f.lam * t
    factor = 1.0 if abs(lt) < 1e-12 else math.expm1(lt) / lt
    lower = factor * s_u - rate
    upper = rate - math.exp(lam_neg(f.lam) * t) * s_x if math.isfinite(s_x) else -math.inf
    return lower, upper


def slope_decay_profile(
    f: FunctionalSpec, space: SpaceHandle, x: Point, T: float, n_steps: int, method=None
) -> np.ndarray:
    """Samples of exp(lam t) * slope(x_t); nonincreasing up to O(dt)."""
    method = method if method is not None else best_slope_method(f)
    traj = flow(f, space, x, T, n_steps)
    out = []
    for k, t in enumerate(traj.times):
        s = descending_slope(f, space, traj.points[k], method)
        out.append(math.exp(f.lam * t) * s)
    return np.array(out)
