import math

import numpy as np
import pytest

from metric_action_lab import distance, euclidean, half_line, uniform_distance
from metric_action_lab.curves import action, geodesic_curve
from metric_action_lab.errors import PreconditionError
from metric_action_lab.flow import flow_times
from metric_action_lab.functionals import (
    inverse_square,
    quadratic,
    ramp,
    zero_functional,
)
from metric_action_lab.recovery import (
    RecoveryConfig,
    RecoveryMode,
    build_recovery_flow,
    build_recovery_resolvent,
    build_recovery_vanishing,
    default_tau_schedule,
    diagonal_select,
    estimated_entry_constant,
    tau_cap,
)

HL = half_line()
E1 = euclidean(1)
QUAD = quadratic(E1, E1.point(0.0), 1.0)


def unit_line(n=64):
    return geodesic_curve(E1, E1.point(0.0), E1.point(1.0), n)


def cfg_for(gamma, x0_fn, x1_fn, mode=RecoveryMode.RESOLVENT, tau=None):
    return RecoveryConfig(
        mode=mode,
        base_curve=gamma,
        x0_seq=x0_fn,
        x1_seq=x1_fn,
        tau_schedule=(None if tau is None else (lambda h: tau)),
    )


def piece_by_label(out, label):
    return next(p for p in out.diagnostics["pieces"] if p.label == label)


# --------------------------------------------------------------------------
# resolvent mode
# --------------------------------------------------------------------------


def test_resolvent_recovery_middle_piece_closed_form():
    gamma = unit_line()
    cfg = cfg_for(gamma, lambda h: E1.point(0.0), lambda h: E1.point(1.0), tau=0.1)
    out = build_recovery_resolvent(QUAD, cfg, 1)
    mid = next(p for p in out.pieces if p.label == "middle")
    for t, p in zip(mid.curve.times, mid.curve.points):
        assert p.coords[0] == pytest.approx(t / 1.1, rel=1e-12)
    diag = piece_by_label(out, "middle")
    # own-time action of the middle piece: (1/1.1^2) (1 + 1/3) up to quadrature
    assert diag.kinetic + diag.potential == pytest.approx((1 + 1 / 3) / 1.1**2, abs=2e-4)


def test_resolvent_recovery_zero_functional_reproduces_base():
    gamma = unit_line()
    f = zero_functional(E1)
    cfg = cfg_for(gamma, lambda h: E1.point(0.0), lambda h: E1.point(1.0), tau=0.2)
    out = build_recovery_resolvent(f, cfg, 3)
    assert uniform_distance(out.curve, gamma) <= 1e-12
    av = action(out.curve, f, E1.point(0.0), E1.point(1.0))
    assert av.total == pytest.approx(1.0, rel=1e-9)


def test_resolvent_recovery_endpoint_exactness():
    gamma = unit_line()
    for h in (4, 16, 64):
        x0h, x1h = E1.point(1.0 / h), E1.point(1.0 + 1.0 / h)
        cfg = cfg_for(gamma, lambda _h: x0h, lambda _h: x1h)
        out = build_recovery_resolvent(QUAD, cfg, h)
        assert distance(E1, out.curve.start, x0h) <= 1e-9
        assert distance(E1, out.curve.end, x1h) <= 1e-9


def test_resolvent_recovery_repair_piece_bound():
    # moving start point 1/h away: repair cost stays under the crude
    # C d0 / tau^2 envelope computed from closed forms
    gamma = unit_line()
    h, tau = 8, 0.1
    x0h = E1.point(1.0 / h)
    cfg = cfg_for(gamma, lambda _h: x0h, lambda _h: E1.point(1.0), tau=tau)
    out = build_recovery_resolvent(QUAD, cfg, h)
    rep = piece_by_label(out, "repair_start")
    d0 = 1.0 / h
    assert rep.duration == pytest.approx(d0)
    own = rep.kinetic + rep.potential
    x_max = 1.0 / h
    direct_bound = d0 * (1.0 + x_max**2) / (1 + tau) ** 2
    assert own <= direct_bound + 1e-9
    assert own <= (1.0 + x_max**2) / tau**2 * d0  # the crude envelope


def test_resolvent_recovery_entry_piece_bound():
    gamma = unit_line()
    tau = 0.125
    x1h = E1.point(1.0)
    cfg = cfg_for(gamma, lambda h: E1.point(0.0), lambda h: x1h, tau=tau)
    out = build_recovery_resolvent(QUAD, cfg, 64)
    entry = piece_by_label(out, "exit")
    C = estimated_entry_constant(QUAD, E1, E1.point(0.0), x1h, tau, use_flow=False)
    assert C == pytest.approx(2.0, rel=1e-12)  # 2 * slope(x1)^2 for this case
    assert entry.kinetic + entry.potential <= C * tau * (1 + 1e-6)


def test_resolvent_recovery_middle_inflation():
    gamma = unit_line(128)
    theta = action(gamma, QUAD, gamma.start, gamma.end).total
    for tau in (0.2, 0.1, 0.05):
        cfg = cfg_for(gamma, lambda h: E1.point(0.0), lambda h: E1.point(1.0), tau=tau)
        out = build_recovery_resolvent(QUAD, cfg, 4)
        mid = piece_by_label(out, "middle")
        assert mid.kinetic + mid.potential <= (1 + tau) * theta + 1e-6


def test_resolvent_recovery_infinite_endpoint_slope_rejected():
    gamma = geodesic_curve(HL, HL.point(0.0), HL.point(1.0), 32)
    f = inverse_square(1.0)
    cfg = RecoveryConfig(
        mode=RecoveryMode.RESOLVENT,
        base_curve=gamma,
        x0_seq=lambda h: HL.point(0.0),  # slope is infinite here
        x1_seq=lambda h: HL.point(1.0),
    )
    with pytest.raises(PreconditionError, match="bounded endpoint slopes"):
        build_recovery_resolvent(f, cfg, 2)


def test_uniform_closeness_table_decreasing_diagonal():
    gamma = unit_line()
    taus = [0.2, 0.1, 0.05, 0.025]
    hs = [4, 8, 16, 32]
    table = np.zeros((len(taus), len(hs)))
    for i, tau in enumerate(taus):
        for j, h in enumerate(hs):
            cfg = cfg_for(gamma, lambda _h: E1.point(1.0 / _h), lambda _h: E1.point(1.0), tau=tau)
            out = build_recovery_resolvent(QUAD, cfg, h)
            table[i, j] = uniform_distance(out.curve, gamma)
    diag = [table[k, k] for k in range(len(taus))]
    assert all(b < a for a, b in zip(diag, diag[1:]))


# --------------------------------------------------------------------------
# flow mode
# --------------------------------------------------------------------------


def test_flow_recovery_middle_piece_exponential():
    gamma = unit_line(32)
    cfg = cfg_for(
        gamma, lambda h: E1.point(0.0), lambda h: E1.point(1.0),
        mode=RecoveryMode.FLOW, tau=0.1,
    )
    out = build_recovery_flow(QUAD, cfg, 1)
    mid = next(p for p in out.pieces if p.label == "middle")
    for t, p in zip(mid.curve.times, mid.curve.points):
        assert p.coords[0] == pytest.approx(math.exp(-0.1) * t, abs=1.5e-3)


def test_flow_recovery_zero_functional_identity():
    gamma = unit_line(16)
    f = zero_functional(E1)
    cfg = cfg_for(gamma, lambda h: E1.point(0.0), lambda h: E1.point(1.0),
                  mode=RecoveryMode.FLOW, tau=0.2)
    out = build_recovery_flow(f, cfg, 1)
    assert uniform_distance(out.curve, gamma) <= 1e-12


def test_flow_recovery_entry_bound_from_decay_estimates():
    # slope along the flow decays, so the entry cost obeys 2 tau e^{2 lam^- tau} s^2
    gamma = unit_line(16)
    tau = 0.1
    cfg = cfg_for(gamma, lambda h: E1.point(0.0), lambda h: E1.point(1.0),
                  mode=RecoveryMode.FLOW, tau=tau)
    out = build_recovery_flow(QUAD, cfg, 1)
    entry = piece_by_label(out, "exit")  # anchored at x1 = 1, slope 1
    C = estimated_entry_constant(QUAD, E1, E1.point(0.0), E1.point(1.0), tau, use_flow=True)
    assert C == pytest.approx(2.0, rel=1e-12)
    assert entry.kinetic + entry.potential <= C * tau * (1 + 1e-6)


# --------------------------------------------------------------------------
# vanishing mode
# --------------------------------------------------------------------------


def test_vanishing_flow_matches_ode_oracle():
    # gradient flow of 1/x^2 obeys x' = 2/x^3, i.e. x(t) = (x0^4 + 8t)^(1/4)
    f = inverse_square(1.0)
    x0 = 0.1
    times = np.linspace(0.0, 1e-4, 200)
    traj = flow_times(f, HL, HL.point(x0), times)
    for t, p in zip(times, traj.points):
        assert p.coords[0] == pytest.approx((x0**4 + 8 * t) ** 0.25, rel=2e-3)


def test_vanishing_recovery_quadratic_side_pieces_shrink():
    gamma = unit_line(32)
    rides = []
    for h in (4, 16, 64):
        cfg = RecoveryConfig(
            mode=RecoveryMode.VANISHING,
            base_curve=gamma,
            x0_seq=lambda _h: E1.point(0.0),
            x1_seq=lambda _h: E1.point(1.0),
        )
        out = build_recovery_vanishing(QUAD, lambda _h: 1.0 / _h, cfg, h)
        eps = 1.0 / h
        ride = [p for p in out.diagnostics["pieces"] if p.label.startswith("ride")]
        total = sum(p.contribution for p in ride)
        rides.append(total)
        assert distance(E1, out.curve.start, E1.point(0.0)) <= 1e-9
        assert distance(E1, out.curve.end, E1.point(1.0)) <= 1e-9
    assert rides[-1] <= 1e-4
    assert all(b <= a + 1e-12 for a, b in zip(rides, rides[1:]))


def test_vanishing_mode_schedule_error_on_impossible_cap():
    from metric_action_lab.errors import ScheduleError

    gamma = geodesic_curve(HL, HL.point(0.0), HL.point(1.0), 16)
    cfg = RecoveryConfig(
        mode=RecoveryMode.VANISHING,
        base_curve=gamma,
        x0_seq=lambda h: HL.point(0.1),
        x1_seq=lambda h: HL.point(1.0),
        slope_cap=1e-9,  # unreachable on the ride grid
    )
    with pytest.raises(ScheduleError, match="refine the grid"):
        build_recovery_vanishing(inverse_square(1.0), lambda h: 0.5, cfg, 2)


def test_vanishing_recovery_inverse_square_succeeds():
    # moving start point at sqrt(eps): the ride tames the scaled slope and
    # the repair pieces stay cheap; the ride itself must pay for the climb
    gamma = geodesic_curve(HL, HL.point(0.0), HL.point(1.0), 32)
    f = inverse_square(1.0)
    costs = {}
    for h, eps in ((100, 1e-2), (1000, 1e-3)):
        cfg = RecoveryConfig(
            mode=RecoveryMode.VANISHING,
            base_curve=gamma,
            x0_seq=lambda _h, e=eps: HL.point(math.sqrt(e)),
            x1_seq=lambda _h: HL.point(1.0),
        )
        out = build_recovery_vanishing(f, lambda _h, e=eps: e, cfg, h)
        assert distance(HL, out.curve.start, HL.point(math.sqrt(eps))) <= 1e-9
        entry = [p for p in out.diagnostics["pieces"] if p.label in ("entry", "exit")]
        costs[eps] = {
            "entry": sum(p.contribution for p in entry),
            "ride_in": piece_by_label(out, "ride_in").kinetic,
        }
    # repair machinery stays bounded while the unavoidable ride cost grows,
    # consistent with the certified obstruction for this family
    assert costs[1e-3]["entry"] <= costs[1e-2]["entry"] + 1.0
    assert costs[1e-3]["ride_in"] > costs[1e-2]["ride_in"]


# --------------------------------------------------------------------------
# schedules and diagonal selection
# --------------------------------------------------------------------------


def test_default_tau_schedule_properties():
    taus = [default_tau_schedule(h, 1.0 / h, 0.0, 1.0) for h in (4, 8, 16, 64, 256)]
    assert all(b < a for a, b in zip(taus, taus[1:]))
    assert all(0 < t <= tau_cap(1.0) for t in taus)
    # cap kicks in for negative moduli
    assert default_tau_schedule(1, 10.0, 10.0, -1.0) == tau_cap(-1.0)
    assert tau_cap(-1.0) == pytest.approx(0.125)


def test_diagonal_select_trivial_family_advances():
    taus = [0.5, 0.25, 0.125, 0.0625]
    hs = [1, 2, 3, 4, 5, 6]
    actions = [[1.0] * len(hs) for _ in taus]
    dinfs = [[0.0] * len(hs) for _ in taus]
    sel = diagonal_select(actions, dinfs, taus, hs, target=1.0)
    assert sel.conclusive
    assert sel.levels_used == len(taus)
    levels = [sel.assignment[h] for h in hs]
    assert levels == sorted(levels)
    assert levels[-1] == len(taus) - 1
    # strictly increasing thresholds force the level to advance with h
    assert len(set(levels)) == len(taus)


def test_diagonal_select_quadratic_grids():
    gamma = unit_line(32)
    theta = action(gamma, QUAD, gamma.start, gamma.end).total
    taus = [1.0 / (n + 2) for n in range(4)]
    hs = [4, 8, 16, 32, 64]
    actions, dinfs = [], []
    for tau in taus:
        row_a, row_d = [], []
        for h in hs:
            cfg = cfg_for(gamma, lambda _h: E1.point(1.0 / _h), lambda _h: E1.point(1.0), tau=tau)
            out = build_recovery_resolvent(QUAD, cfg, h)
            row_a.append(action(out.curve, QUAD, E1.point(1.0 / h), E1.point(1.0)).total)
            row_d.append(uniform_distance(out.curve, gamma))
        actions.append(row_a)
        dinfs.append(row_d)
    sel = diagonal_select(actions, dinfs, taus, hs, target=theta, C=5.0)
    assert sel.conclusive
    assert sel.assignment[hs[-1]] == len(taus) - 1


def test_diagonal_select_ramp_family_inconclusive():
    gamma = unit_line(64)
    zero = zero_functional(E1)
    theta = action(gamma, zero, gamma.start, gamma.end).total  # 1
    hs = [4, 8, 16, 32]
    n_levels = 20
    taus = [0.4 / (n + 1) for n in range(n_levels)]
    hl = half_line()
    gamma_hl = geodesic_curve(hl, hl.point(0.0), hl.point(1.0), 64)
    actions, dinfs = [], []
    for tau in taus:
        row_a, row_d = [], []
        for h in hs:
            f_h = ramp(float(h))
            cfg = RecoveryConfig(
                mode=RecoveryMode.RESOLVENT,
                base_curve=gamma_hl,
                x0_seq=lambda _h: hl.point(0.0),
                x1_seq=lambda _h: hl.point(1.0),
                tau_schedule=lambda _h, t=tau: t,
            )
            out = build_recovery_resolvent(f_h, cfg, h)
            row_a.append(action(out.curve, f_h, hl.point(0.0), hl.point(1.0)).total)
            row_d.append(uniform_distance(out.curve, gamma_hl))
        actions.append(row_a)
        dinfs.append(row_d)
    sel = diagonal_select(actions, dinfs, taus, hs, target=theta, C=5.0)
    assert not sel.conclusive
    assert sel.levels_used < n_levels
