"""Adaptive integration of the nonautonomous cascade with event localisation.

The pullback-attracting trajectory is approximated by starting from the
frozen equilibrium under saturated forcing at scaled time -burn_in_s and
integrating with an embedded explicit 5(4) pair (quartic dense output).
Events (threshold crossings of the forcing, the effective downstream
forcing, and both states) are bracketed on accepted steps and refined by
bisection on the dense interpolant.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _dopri
from .core_model import (
    Branch,
    CascadeConfig,
    SolverSettings,  # noqa: F401  (re-exported: solver knobs belong to this layer)
    LinearCoupling,
    branch_state,
    coupling_value,
)

__all__ = [
    "Trajectory",
    "EventKind",
    "EventRecord",
    "IntegrationError",
    "StiffnessError",
    "HorizonExceeded",
    "SolverSettings",
    "integrate_cascade",
    "locate_events",
    "find_crossings",
    "stable_frozen_states",
]


class IntegrationError(RuntimeError):
    """Integration failed; carries the partial trajectory when available."""

    def __init__(self, message: str, trajectory: "Trajectory | None" = None):
        super().__init__(message)
        self.trajectory = trajectory


class StiffnessError(IntegrationError):
    """Step size underflow."""


class HorizonExceeded(IntegrationError):
    """State did not settle onto a stable frozen equilibrium before t_max."""


@dataclass(frozen=True)
class Trajectory:
    """Dense-output solution of one cascade run.

    ``t`` holds the strictly increasing accepted-step times, ``x``/``y``
    the states at those nodes, and ``q`` the per-step quartic interpolation
    coefficients.  Interpolation reproduces stored node states exactly.
    Derived channels (forcing ``lam`` and effective downstream forcing
    ``mu``) are evaluated analytically from t and x.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    q: np.ndarray
    config: CascadeConfig
    status: str

    def __post_init__(self) -> None:
        for arr in (self.t, self.x, self.y, self.q):
            arr.setflags(write=False)

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def lam(self) -> np.ndarray:
        """Forcing Lambda(r t) at the accepted nodes."""
        return self.config.shift.value(self.t)

    @property
    def mu(self) -> np.ndarray:
        """Effective downstream forcing M(x(t)) at the accepted nodes."""
        return coupling_value(self.config.coupling, self.x)

    def state(self, t: float) -> tuple[float, float]:
        """Interpolated (x, y) at time t (exact at accepted nodes)."""
        ts = self.t
        if not (ts[0] <= t <= ts[-1]):
            raise ValueError(f"time {t} outside trajectory range [{ts[0]}, {ts[-1]}]")
        i = int(np.searchsorted(ts, t, side="right")) - 1
        if i >= len(ts) - 1:
            i = len(ts) - 2
        if t == ts[i]:
            return float(self.x[i]), float(self.y[i])
        if t == ts[i + 1]:
            return float(self.x[i + 1]), float(self.y[i + 1])
        h = ts[i + 1] - ts[i]
        tau = (t - ts[i]) / h
        p1 = tau
        p2 = tau * p1
        p3 = tau * p2
        p4 = tau * p3
        qx = self.q[i, 0]
        qy = self.q[i, 1]
        xv = self.x[i] + h * (qx[0] * p1 + qx[1] * p2 + qx[2] * p3 + qx[3] * p4)
        yv = self.y[i] + h * (qy[0] * p1 + qy[1] * p2 + qy[2] * p3 + qy[3] * p4)
        return float(xv), float(yv)

    def channel(self, name: str, t: float) -> float:
        """Evaluate a named channel at arbitrary time on the dense solution."""
        if name == "lambda":
            return float(self.config.shift.value(t))
        xv, yv = self.state(t)
        if name == "x":
            return xv
        if name == "y":
            return yv
        if name == "mu":
            return float(coupling_value(self.config.coupling, xv))
        raise ValueError(f"unknown channel {name!r}")

    def channel_nodes(self, name: str) -> np.ndarray:
        if name == "lambda":
            return np.asarray(self.lam)
        if name == "x":
            return self.x
        if name == "y":
            return self.y
        if name == "mu":
            return np.asarray(self.mu)
        raise ValueError(f"unknown channel {name!r}")


class EventKind(str, Enum):
    UPSTREAM_ONSET = "upstream_onset"
    UPSTREAM_OFFSET = "upstream_offset"
    DOWNSTREAM_ONSET = "downstream_onset"
    DOWNSTREAM_OFFSET = "downstream_offset"


@dataclass(frozen=True)
class EventRecord:
    """A localised threshold crossing (kind is None for generic channel scans)."""

    kind: EventKind | None
    time: float
    direction: int  # +1 upward, -1 downward
    value: float  # the crossed threshold level
    bracket_lo: float
    bracket_hi: float


def stable_frozen_states(config: CascadeConfig, lam: float) -> np.ndarray:
    """Stable equilibria (x*, y*) of the frozen cascade at forcing lam."""
    # Local import: bifurcation builds on this module's Trajectory type.
    from .bifurcation import frozen_equilibria

    eqs = frozen_equilibria(lam, config.coupling, config.epsilon)
    pts = [(e.x_star, e.y_star) for e in eqs if e.stable]
    return np.asarray(pts, dtype=float).reshape(-1, 2)


def integrate_cascade(config: CascadeConfig) -> Trajectory:
    """Integrate the cascade from saturated past forcing until settlement.

    Starts at t0 = -burn_in_s / r from the frozen lower-branch state at the
    instantaneous forcing (x0 = lower(Lambda(r t0)), y0 = lower(M(x0))) and
    integrates until, after the ramp has saturated, the state is within
    settle_tol of a stable frozen equilibrium at lambda_plus.  Raises
    StiffnessError on step-size underflow and HorizonExceeded when the hard
    time cap is hit; both carry the partial trajectory.
    """
    shift = config.shift
    solver = config.solver
    coupling = config.coupling
    r = shift.rate

    t0 = -solver.burn_in_s / r
    lam0 = float(shift.value(t0))
    x0 = branch_state(Branch.LOWER, lam0)
    mu0 = float(coupling_value(coupling, x0))
    if mu0 >= 2.0:
        raise IntegrationError(
            f"initial downstream forcing M(x0) = {mu0:.6f} is not below the fold "
            "level 2; the past-limit downstream equilibrium does not exist"
        )
    y0 = branch_state(Branch.LOWER, mu0)

    t_max = (solver.burn_in_s + solver.horizon_factor * max(1.0, config.epsilon)) / r
    settle_gate = solver.burn_in_s / r
    stable_eq = stable_frozen_states(config, shift.lambda_plus)

    if isinstance(coupling, LinearCoupling):
        ckind = _dopri.COUPLING_LINEAR
        ca, cb, cc, cd = coupling.a, coupling.b, 0.0, 0.0
        cxref = coupling._x_ref
    else:
        ckind = _dopri.COUPLING_LOCALISED
        ca, cb, cc, cd = coupling.a, coupling.b, coupling.c, coupling.d
        cxref = 0.0

    status_code, ts, states, qcoef = _dopri.integrate_kernel(
        t0,
        x0,
        y0,
        t_max,
        solver.rel_tol,
        solver.abs_tol,
        solver.resolved_max_step(r),
        shift.lambda_minus,
        shift.lambda_plus,
        r,
        config.epsilon,
        ckind,
        ca,
        cb,
        cc,
        cd,
        cxref,
        settle_gate,
        solver.settle_tol,
        stable_eq,
        solver.max_nodes,
    )

    status = {
        _dopri.STATUS_SETTLED: "settled",
        _dopri.STATUS_HORIZON: "horizon",
        _dopri.STATUS_UNDERFLOW: "underflow",
        _dopri.STATUS_OVERFLOW: "node_overflow",
    }[status_code]
    traj = Trajectory(
        t=ts, x=states[:, 0].copy(), y=states[:, 1].copy(), q=qcoef,
        config=config, status=status,
    )
    if status == "underflow":
        raise StiffnessError(
            f"step size underflow at t = {traj.t_end:.6g}, state = "
            f"({traj.x[-1]:.6g}, {traj.y[-1]:.6g})",
            traj,
        )
    if status in ("horizon", "node_overflow"):
        raise HorizonExceeded(
            f"no settlement within t_max = {t_max:.6g} ({status}); final state = "
            f"({traj.x[-1]:.6g}, {traj.y[-1]:.6g})",
            traj,
        )
    return traj


def _refine_crossing(
    traj: Trajectory,
    name: str,
    level: float,
    t_lo: float,
    t_hi: float,
    g_lo: float,
    tol: float,
) -> tuple[float, float]:
    """Bisect the dense interpolant for g(t) = channel - level on [t_lo, t_hi]."""
    sign_lo = 1.0 if g_lo > 0.0 else -1.0
    while (t_hi - t_lo) > tol * max(1.0, abs(t_hi)):
        t_mid = 0.5 * (t_lo + t_hi)
        if t_mid == t_lo or t_mid == t_hi:
            break
        g_mid = traj.channel(name, t_mid) - level
        if g_mid == 0.0:
            return t_mid, t_mid
        if (1.0 if g_mid > 0.0 else -1.0) == sign_lo:
            t_lo = t_mid
        else:
            t_hi = t_mid
    return t_lo, t_hi


def find_crossings(
    traj: Trajectory,
    name: str,
    level: float,
    kind: EventKind | None = None,
) -> list[EventRecord]:
    """All crossings of a channel through a level, in time order.

    Crossings are bracketed between accepted nodes and refined on the dense
    interpolant to the solver's event_time_tol.  Nodes landing exactly on
    the level are reported as zero-width crossings when their neighbours
    straddle it.
    """
    tol = traj.config.solver.event_time_tol
    g = traj.channel_nodes(name) - level
    sign = np.sign(g)
    out: list[EventRecord] = []
    n = len(g)
    for i in range(n - 1):
        if sign[i] == 0.0:
            prev = sign[i - 1] if i > 0 else 0.0
            nxt = sign[i + 1]
            if prev < 0.0 < nxt or prev > 0.0 > nxt:
                out.append(
                    EventRecord(
                        kind=kind,
                        time=float(traj.t[i]),
                        direction=1 if nxt > 0 else -1,
                        value=level,
                        bracket_lo=float(traj.t[i]),
                        bracket_hi=float(traj.t[i]),
                    )
                )
            continue
        if sign[i] * sign[i + 1] < 0.0:
            t_lo, t_hi = _refine_crossing(
                traj, name, level, float(traj.t[i]), float(traj.t[i + 1]), float(g[i]), tol
            )
            out.append(
                EventRecord(
                    kind=kind,
                    time=0.5 * (t_lo + t_hi),
                    direction=1 if sign[i] < 0.0 else -1,
                    value=level,
                    bracket_lo=t_lo,
                    bracket_hi=t_hi,
                )
            )
    if sign[-1] == 0.0 and n >= 2 and sign[-2] != 0.0:
        out.append(
            EventRecord(
                kind=kind,
                time=float(traj.t[-1]),
                direction=1 if sign[-2] < 0.0 else -1,
                value=level,
                bracket_lo=float(traj.t[-1]),
                bracket_hi=float(traj.t[-1]),
            )
        )
    return out


#: Event channel/level table: onset thresholds sit at the fold forcing level,
#: offsets at the state threshold w.
def _event_table(config: CascadeConfig) -> list[tuple[EventKind, str, float]]:
    lam_u = config.element.lambda_upper
    w = config.offset_threshold
    return [
        (EventKind.UPSTREAM_ONSET, "lambda", lam_u),
        (EventKind.UPSTREAM_OFFSET, "x", w),
        (EventKind.DOWNSTREAM_ONSET, "mu", lam_u),
        (EventKind.DOWNSTREAM_OFFSET, "y", w),
    ]


def locate_events(traj: Trajectory, config: CascadeConfig | None = None) -> list[EventRecord]:
    """First upward crossing for each of the four tipping events.

    Absent events are omitted.  The returned list is ordered by time.
    """
    if config is None:
        config = traj.config
    events: list[EventRecord] = []
    for kind, name, level in _event_table(config):
        for rec in find_crossings(traj, name, level, kind=kind):
            if rec.direction > 0:
                events.append(rec)
                break
    events.sort(key=lambda e: e.time)
    return events
