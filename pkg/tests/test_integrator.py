import math
from dataclasses import replace

import numpy as np
import pytest

from tipcascade import (
    Branch,
    CascadeConfig,
    EventKind,
    HorizonExceeded,
    LinearCoupling,
    LocalisedCoupling,
    ParameterShift,
    SolverSettings,
    branch_state,
    coupling_value,
    find_crossings,
    integrate_cascade,
    locate_events,
)

import oracles

SQRT3 = math.sqrt(3.0)

# Fixed-step RK4 oracle state at t = 0 for the default configuration
# (dt = 1e-4 from the burn-in start; see oracles.rk4_cascade).
RK4_DEFAULT_T0 = (-1.1553291090316702, -1.6266290518781472)


@pytest.fixture(scope="module")
def default_traj():
    return integrate_cascade(CascadeConfig())


def events_by_kind(traj):
    return {e.kind: e for e in locate_events(traj)}


class TestIntegrateCascade:
    def test_starts_on_lower_branch(self, default_traj):
        assert abs(default_traj.x[0] + SQRT3) < 1e-9
        assert abs(default_traj.y[0] + SQRT3) < 1e-9
        assert default_traj.t_start == -300.0

    def test_final_state_matches_frozen_composition(self, default_traj):
        x_target = branch_state(Branch.UPPER, 4.0)
        mu_plus = float(coupling_value(default_traj.config.coupling, x_target))
        y_target = branch_state(Branch.UPPER, mu_plus)
        assert x_target == pytest.approx(2.19582, abs=1e-5)
        assert mu_plus == pytest.approx(3.92787, abs=1e-5)
        assert abs(default_traj.x[-1] - x_target) < 1e-6
        assert abs(default_traj.y[-1] - y_target) < 1e-6
        assert default_traj.status == "settled"

    def test_against_fixed_step_rk4_oracle(self, default_traj):
        x0, y0 = default_traj.state(0.0)
        assert x0 == pytest.approx(RK4_DEFAULT_T0[0], abs=1e-8)
        assert y0 == pytest.approx(RK4_DEFAULT_T0[1], abs=1e-8)
        # Re-derive the frozen values with the live oracle as well.
        xo, yo = oracles.rk4_cascade(CascadeConfig(), 0.0)
        assert xo == pytest.approx(RK4_DEFAULT_T0[0], abs=1e-12)
        assert yo == pytest.approx(RK4_DEFAULT_T0[1], abs=1e-12)

    def test_subcritical_limit_tracks(self):
        config = CascadeConfig(shift=ParameterShift(lambda_plus=1.0))
        traj = integrate_cascade(config)
        assert abs(traj.x[-1] - branch_state(Branch.LOWER, 1.0)) < 1e-6

    def test_decoupled_downstream_constant(self):
        config = CascadeConfig(coupling=LinearCoupling(b=0.0))
        traj = integrate_cascade(config)
        assert np.max(np.abs(traj.y + SQRT3)) < 1e-6

    def test_horizon_exceeded_carries_partial_trajectory(self):
        # Fast ramp with a very slow downstream: the cap lands mid-transit.
        config = CascadeConfig(
            epsilon=100.0,
            shift=ParameterShift(rate=0.5),
            solver=SolverSettings(horizon_factor=0.1),
        )
        with pytest.raises(HorizonExceeded) as err:
            integrate_cascade(config)
        assert err.value.trajectory is not None
        assert len(err.value.trajectory.t) > 10

    def test_node_budget_failure_carries_partial_trajectory(self):
        config = CascadeConfig(solver=SolverSettings(max_nodes=1000))
        with pytest.raises(HorizonExceeded) as err:
            integrate_cascade(config)
        assert err.value.trajectory is not None
        assert len(err.value.trajectory.t) == 1000


class TestTrajectory:
    def test_nodes_strictly_increasing(self, default_traj):
        assert np.all(np.diff(default_traj.t) > 0)

    def test_interpolation_exact_at_nodes(self, default_traj):
        for i in (0, len(default_traj.t) // 3, len(default_traj.t) - 1):
            x, y = default_traj.state(float(default_traj.t[i]))
            assert x == default_traj.x[i]
            assert y == default_traj.y[i]

    def test_interpolation_consistent_with_order(self):
        # Tightening tolerances tenfold moves the interpolated state at t=0
        # by less than ten times the looser relative tolerance.
        base = CascadeConfig()
        tight = replace(
            base, solver=replace(base.solver, rel_tol=1e-10, abs_tol=1e-11)
        )
        s0 = integrate_cascade(base).state(0.0)
        s1 = integrate_cascade(tight).state(0.0)
        assert abs(s0[0] - s1[0]) < 10 * base.solver.rel_tol
        assert abs(s0[1] - s1[1]) < 10 * base.solver.rel_tol

    def test_arrays_immutable(self, default_traj):
        with pytest.raises(ValueError):
            default_traj.x[0] = 0.0

    def test_mu_channel_monotone_for_linear(self, default_traj):
        assert np.all(np.diff(np.asarray(default_traj.mu)) >= -1e-9)
        assert np.all(np.diff(default_traj.x) >= -1e-9)

    def test_out_of_range_interpolation_rejected(self, default_traj):
        with pytest.raises(ValueError):
            default_traj.state(default_traj.t_end + 1.0)


class TestEvents:
    def test_default_onset_at_zero(self, default_traj):
        # Lambda(0) is exactly the midpoint 2 of the default ramp.
        ev = events_by_kind(default_traj)
        assert abs(ev[EventKind.UPSTREAM_ONSET].time) < 1e-9

    def test_default_event_order_is_dwub(self, default_traj):
        ev = events_by_kind(default_traj)
        assert set(ev) == set(EventKind)
        assert (
            ev[EventKind.UPSTREAM_ONSET].time
            < ev[EventKind.DOWNSTREAM_ONSET].time
            < ev[EventKind.DOWNSTREAM_OFFSET].time
            < ev[EventKind.UPSTREAM_OFFSET].time
        )

    def test_subcritical_has_no_onset(self):
        config = CascadeConfig(shift=ParameterShift(lambda_plus=1.0))
        assert locate_events(integrate_cascade(config)) == []

    def test_weak_localised_has_no_downstream_onset(self):
        config = CascadeConfig(coupling=LocalisedCoupling(b=1.0))
        ev = events_by_kind(integrate_cascade(config))
        assert EventKind.DOWNSTREAM_ONSET not in ev
        assert EventKind.UPSTREAM_ONSET in ev

    def test_bracket_invariant(self, default_traj):
        tol = default_traj.config.solver.event_time_tol
        for e in locate_events(default_traj):
            assert e.bracket_hi - e.bracket_lo <= tol * max(1.0, abs(e.bracket_hi))
            g_lo = default_traj.channel(_channel_for(e.kind), e.bracket_lo) - e.value
            g_hi = default_traj.channel(_channel_for(e.kind), e.bracket_hi) - e.value
            assert g_lo <= 0.0 <= g_hi or g_lo == g_hi == 0.0

    def test_event_convergence_under_tolerance_refinement(self, default_traj):
        config = default_traj.config
        tight = replace(
            config, solver=replace(config.solver, rel_tol=1e-10, abs_tol=1e-11)
        )
        ev_a = {e.kind: e.time for e in locate_events(default_traj)}
        ev_b = {e.kind: e.time for e in locate_events(integrate_cascade(tight))}
        assert set(ev_a) == set(ev_b)
        for kind in ev_a:
            assert abs(ev_a[kind] - ev_b[kind]) < 1e-7

    def test_burn_in_insensitivity(self, default_traj):
        config = default_traj.config
        longer = replace(config, solver=replace(config.solver, burn_in_s=30.0))
        s0 = default_traj.state(0.0)
        s1 = integrate_cascade(longer).state(0.0)
        assert abs(s0[0] - s1[0]) < 1e-8
        assert abs(s0[1] - s1[1]) < 1e-8

    def test_upstream_endpoint_rate_independent(self):
        x_target = branch_state(Branch.UPPER, 4.0)
        for rate in (0.01, 0.05, 0.5):
            config = CascadeConfig(shift=ParameterShift(rate=rate))
            traj = integrate_cascade(config)
            assert abs(traj.x[-1] - x_target) < 1e-6

    def test_crossing_order_invariant_under_resampling(self, default_traj):
        # Sampling the channels on strictly increasing reparametrizations of
        # time must leave the crossing order unchanged.
        traj = default_traj
        thresholds = [("lambda", 2.0), ("x", 1.8), ("mu", 2.0), ("y", 1.8)]
        reference = [e.kind for e in sorted(locate_events(traj), key=lambda e: e.time)]
        kinds = [
            EventKind.UPSTREAM_ONSET,
            EventKind.UPSTREAM_OFFSET,
            EventKind.DOWNSTREAM_ONSET,
            EventKind.DOWNSTREAM_OFFSET,
        ]
        a, b = traj.t_start, traj.t_end
        u = np.linspace(0.0, 1.0, 6001)
        warps = [u, u**3, np.sinh(3 * (u - 0.5)) / (2 * np.sinh(1.5)) + 0.5]
        for warp in warps:
            ts = a + (b - a) * warp
            order = []
            for (name, level), kind in zip(thresholds, kinds):
                vals = np.array([traj.channel(name, float(t)) for t in ts]) - level
                up = np.nonzero((vals[:-1] <= 0) & (vals[1:] > 0))[0]
                if len(up):
                    order.append((ts[up[0]], kind))
            assert [k for _, k in sorted(order)] == reference

    def test_find_crossings_directions(self):
        config = CascadeConfig(coupling=LocalisedCoupling(b=2.2), epsilon=10.0)
        traj = integrate_cascade(config)
        crossings = find_crossings(traj, "mu", 2.0)
        assert [c.direction for c in crossings] == [1, -1]


def _channel_for(kindge):
    return {
        EventKind.UPSTREAM_ONSET: "lambda",
        EventKind.UPSTREAM_OFFSET: "x",
        EventKind.DOWNSTREAM_ONSET: "mu",
        EventKind.DOWNSTREAM_OFFSET: "y",
    }[kindge]
