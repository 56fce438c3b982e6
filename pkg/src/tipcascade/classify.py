"""Outcome labels and the seven-way tipping-sequence taxonomy.

Tipping of a subsystem counts as having occurred only once its offset
threshold (state crossing w) is passed; the onset is the crossing of the
forcing threshold.  A run is classified by comparing the upstream
interval U = [t_on_u, t_off_u] against the downstream interval
D = [t_on_d, t_off_d]: containment, partial overlap (either order) or
disjointness (either order), plus the degenerate no-tip labels.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core_model import Branch, CascadeConfig, ParameterShift, coupling_value
from .integrator import EventKind, EventRecord, Trajectory, find_crossings, locate_events

__all__ = [
    "UpstreamOutcome",
    "DownstreamOutcome",
    "Scenario",
    "ScenarioResult",
    "TippingTimings",
    "extract_timings",
    "upstream_outcome",
    "downstream_outcome",
    "classify_scenario",
    "detect_intermediate_state",
    "classification_report",
]

DEFAULT_TIME_TOL = 1e-6
DEFAULT_PROXIMITY = 0.05


class UpstreamOutcome(str, Enum):
    TRACKING = "tracking"
    B_TIPPING = "b_tipping"


class DownstreamOutcome(str, Enum):
    TRACKING = "tracking"
    B_TIPPING = "b_tipping"
    OVERSHOOT_TRACKING = "overshoot_tracking"
    OVERSHOOT_TIPPING = "overshoot_tipping"


class Scenario(str, Enum):
    NoUpstreamTip = "NoUpstreamTip"
    UB = "UB"
    DaUB = "DaUB"
    DoUB = "DoUB"
    DwUB = "DwUB"
    UoDB = "UoDB"
    UwDB = "UwDB"
    UaDB = "UaDB"


@dataclass(frozen=True)
class ScenarioResult:
    """Scenario label plus a flag for comparisons that fell within tolerance."""

    scenario: Scenario
    boundary: bool


@dataclass(frozen=True)
class TippingTimings:
    """Onset/offset event times per subsystem (None when absent).

    ``overshoot`` records a downstream onset whose offset was never
    reached; ``intermediate_state`` is filled by
    :func:`detect_intermediate_state` (None = not applicable/evaluated).
    """

    t_on_u: float | None = None
    t_off_u: float | None = None
    t_on_d: float | None = None
    t_off_d: float | None = None
    overshoot: bool = False
    intermediate_state: bool | None = None

    def __post_init__(self) -> None:
        for on, off, label in (
            (self.t_on_u, self.t_off_u, "upstream"),
            (self.t_on_d, self.t_off_d, "downstream"),
        ):
            if on is not None and off is not None and not (on < off):
                raise ValueError(f"{label} onset {on} must precede offset {off}")


def extract_timings(traj: Trajectory, events: list[EventRecord] | None = None) -> TippingTimings:
    """Collect the four event times from a trajectory's event records."""
    if events is None:
        events = locate_events(traj)
    by_kind = {e.kind: e.time for e in events}
    t_on_d = by_kind.get(EventKind.DOWNSTREAM_ONSET)
    t_off_d = by_kind.get(EventKind.DOWNSTREAM_OFFSET)
    return TippingTimings(
        t_on_u=by_kind.get(EventKind.UPSTREAM_ONSET),
        t_off_u=by_kind.get(EventKind.UPSTREAM_OFFSET),
        t_on_d=t_on_d,
        t_off_d=t_off_d,
        overshoot=(t_on_d is not None and t_off_d is None),
    )


def upstream_outcome(shift: ParameterShift) -> UpstreamOutcome:
    """End-point behaviour of the upstream element under the monotone ramp.

    Tracking iff the forcing limit stays below the fold level 2, tipping
    iff it exceeds it — independent of the rate.  The degenerate case
    lambda_plus = 2 is rejected.
    """
    if not (shift.lambda_minus < 2.0):
        raise ValueError(f"requires lambda_minus < 2, got {shift.lambda_minus}")
    if abs(shift.lambda_plus - 2.0) < 1e-12:
        raise ValueError("lambda_plus sits on the critical threshold 2; outcome undefined")
    if shift.lambda_plus < 2.0:
        return UpstreamOutcome.TRACKING
    return UpstreamOutcome.B_TIPPING


def mu_threshold_crossings(traj: Trajectory) -> list[EventRecord]:
    """All crossings of the effective downstream forcing through the fold level."""
    return find_crossings(traj, "mu", traj.config.element.lambda_upper)


def downstream_outcome(timings: TippingTimings, traj: Trajectory) -> DownstreamOutcome:
    """Downstream label: tipped iff the offset threshold was passed.

    The overshoot variants require the effective forcing to have crossed
    the fold level upward and back downward while its limit stays below
    it; with a monotone coupling image this cannot happen.
    """
    crossings = mu_threshold_crossings(traj)
    went_up = any(c.direction > 0 for c in crossings)
    came_down = any(
        c.direction < 0 and any(u.direction > 0 and u.time < c.time for u in crossings)
        for c in crossings
    )
    mu_limit = float(coupling_value(traj.config.coupling, traj.x[-1]))
    overshot = went_up and came_down and mu_limit < traj.config.element.lambda_upper
    tipped = timings.t_off_d is not None
    if tipped:
        return DownstreamOutcome.OVERSHOOT_TIPPING if overshot else DownstreamOutcome.B_TIPPING
    return DownstreamOutcome.OVERSHOOT_TRACKING if overshot else DownstreamOutcome.TRACKING


def classify_scenario(timings: TippingTimings, tol_time: float = DEFAULT_TIME_TOL) -> ScenarioResult:
    """Map the two tipping intervals onto the scenario taxonomy.

    Containment is checked first with tolerance slack, so equalities
    within tol_time resolve toward the within-cases (DwUB before UwDB when
    both hold); a disjoint/overlap tie resolves toward overlap.  Any
    comparison landing within tolerance sets the boundary flag.
    """
    if timings.t_on_u is None or timings.t_off_u is None:
        return ScenarioResult(Scenario.NoUpstreamTip, False)
    if timings.t_on_d is None or timings.t_off_d is None:
        return ScenarioResult(Scenario.UB, False)
    u1, u2 = timings.t_on_u, timings.t_off_u
    d1, d2 = timings.t_on_d, timings.t_off_d
    boundary = (
        min(abs(d1 - u1), abs(d2 - u2), abs(d1 - u2), abs(d2 - u1)) <= tol_time
    )
    if d1 >= u1 - tol_time and d2 <= u2 + tol_time:
        scenario = Scenario.DwUB
    elif u1 >= d1 - tol_time and u2 <= d2 + tol_time:
        scenario = Scenario.UwDB
    elif d1 > u2 + tol_time:
        scenario = Scenario.DaUB
    elif d2 < u1 - tol_time:
        scenario = Scenario.UaDB
    elif d1 > u1:
        scenario = Scenario.DoUB
    else:
        scenario = Scenario.UoDB
    return ScenarioResult(scenario, boundary)


def _nearest_stable_labels(
    config: CascadeConfig, lam: float, x: float, y: float
) -> tuple[Branch, Branch]:
    from .bifurcation import frozen_equilibria

    best = None
    best_dist = np.inf
    for eq in frozen_equilibria(lam, config.coupling, config.epsilon):
        if not eq.stable:
            continue
        dist = max(abs(x - eq.x_star), abs(y - eq.y_star))
        if dist < best_dist:
            best, best_dist = eq, dist
    if best is None:
        raise RuntimeError(f"no stable frozen equilibrium at forcing {lam}")
    return best.x_branch, best.y_branch


_SCAN_CAP = 1024


def detect_intermediate_state(
    traj: Trajectory,
    timings: TippingTimings,
    config: CascadeConfig | None = None,
    delta: float = DEFAULT_PROXIMITY,
) -> bool | None:
    """Did the state visit a third stable branch between two disjoint tippings?

    Applicable only when both subsystems tipped and the intervals are
    disjoint (DaUB/UaDB candidates); returns None otherwise.  True iff at
    some node between the two tipping intervals the state comes within
    ``delta`` (sup norm) of a stable frozen equilibrium (at the
    instantaneous forcing) whose branch-label pair differs from both the
    initial and final equilibria.
    """
    if config is None:
        config = traj.config
    if None in (timings.t_on_u, timings.t_off_u, timings.t_on_d, timings.t_off_d):
        return None
    if timings.t_on_d > timings.t_off_u:
        window = (timings.t_off_u, timings.t_on_d)
    elif timings.t_off_d < timings.t_on_u:
        window = (timings.t_off_d, timings.t_on_u)
    else:
        return None

    from .bifurcation import frozen_equilibria

    initial = _nearest_stable_labels(
        config, float(config.shift.value(traj.t_start)), float(traj.x[0]), float(traj.y[0])
    )
    final = _nearest_stable_labels(
        config, config.shift.lambda_plus, float(traj.x[-1]), float(traj.y[-1])
    )

    idx = np.nonzero((traj.t >= window[0]) & (traj.t <= window[1]))[0]
    if len(idx) > _SCAN_CAP:
        idx = idx[np.linspace(0, len(idx) - 1, _SCAN_CAP).astype(int)]
    lams = np.asarray(config.shift.value(traj.t[idx]))
    for i, lam in zip(idx, lams):
        x = float(traj.x[i])
        y = float(traj.y[i])
        for eq in frozen_equilibria(float(lam), config.coupling, config.epsilon):
            if not eq.stable:
                continue
            labels = (eq.x_branch, eq.y_branch)
            if labels == initial or labels == final:
                continue
            if max(abs(x - eq.x_star), abs(y - eq.y_star)) <= delta:
                return True
    return False


def classification_report(
    traj: Trajectory,
    *,
    tol_time: float = DEFAULT_TIME_TOL,
    delta: float = DEFAULT_PROXIMITY,
) -> dict:
    """Full classification of one run as a JSON-ready mapping."""
    timings = extract_timings(traj)
    result = classify_scenario(timings, tol_time)
    intermediate = detect_intermediate_state(traj, timings, delta=delta)
    return {
        "scenario": result.scenario.value,
        "boundary_flag": result.boundary,
        "timings": {
            "t_on_u": timings.t_on_u,
            "t_off_u": timings.t_off_u,
            "t_on_d": timings.t_on_d,
            "t_off_d": timings.t_off_d,
        },
        "overshoot": timings.overshoot,
        "intermediate_state": intermediate,
    }
