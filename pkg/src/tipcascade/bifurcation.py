"""Frozen-system analysis of the coupled cascade.

With the forcing frozen at a constant level the cascade is a triangular
autonomous system: the upstream cubic selects up to three states x*, and
each feeds the downstream cubic at mu = M(x*).  Folds of the coupled
system are therefore explicit — downstream folds occur exactly where
M(x*) hits the fold levels +/-2, upstream folds sit on the vertical
lines lambda = +/-2 — and the two-parameter fold curves in the
(lambda, b) plane are constructed semi-analytically from coupling
preimages rather than by continuation.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp

from .core_model import (
    Branch,
    Coupling,
    LinearCoupling,
    LocalisedCoupling,
    branch_state,
    coupling_max_on_interval,
    coupling_preimages,
    coupling_value,
    drift,
    drift_state_derivative,
    equilibria,
)

__all__ = [
    "FrozenEquilibrium",
    "Subsystem",
    "FoldCurvePoint",
    "CuspPoint",
    "FrozenTippingTrajectory",
    "DwubPrediction",
    "frozen_equilibria",
    "fold_curves",
    "downstream_fold_points",
    "cusp_points",
    "frozen_tipping_trajectory",
    "predict_dwub",
]

FOLD_LEVELS = (2.0, -2.0)


class Subsystem(str, Enum):
    UPSTREAM = "upstream"
    DOWNSTREAM = "downstream"


@dataclass(frozen=True)
class FrozenEquilibrium:
    """Equilibrium of the frozen cascade with its triangular-Jacobian data."""

    lam: float
    x_star: float
    y_star: float
    x_branch: Branch
    y_branch: Branch
    eigenvalues: tuple[float, float]
    stable: bool
    degenerate: bool = False


def frozen_equilibria(lam: float, coupling: Coupling, epsilon: float) -> list[FrozenEquilibrium]:
    """All equilibria of the frozen cascade at forcing lam (1 to 9 points).

    The Jacobian is lower triangular, so the eigenvalues are the two
    diagonal drift derivatives (3 - 3x*^2, (3 - 3y*^2)/epsilon) and
    stability requires both negative.  Degenerate (fold) roots in either
    factor are tagged rather than rejected.
    """
    out: list[FrozenEquilibrium] = []
    for rx in equilibria(lam):
        mu = float(coupling_value(coupling, rx.value))
        for ry in equilibria(mu):
            eig_x = drift_state_derivative(rx.value)
            eig_y = drift_state_derivative(ry.value) / epsilon
            out.append(
                FrozenEquilibrium(
                    lam=lam,
                    x_star=rx.value,
                    y_star=ry.value,
                    x_branch=rx.branch,
                    y_branch=ry.branch,
                    eigenvalues=(eig_x, eig_y),
                    stable=(eig_x < 0.0 and eig_y < 0.0),
                    degenerate=rx.degenerate or ry.degenerate,
                )
            )
    out.sort(key=lambda e: (e.x_star, e.y_star))
    return out


@dataclass(frozen=True)
class FoldCurvePoint:
    """One sample of a fold locus in the (lambda, b) plane.

    ``multiplicity`` counts coincident folds: the upstream fold lines at
    lambda = +/-2 carry one fold per downstream equilibrium at the fold
    state's image (3 while |M(fold state)| < 2, else 1); downstream fold
    points are simple.  ``level`` is the downstream forcing level (+/-2)
    that produced a downstream fold, and ``x_star`` the upstream state
    carrying it.
    """

    lam: float
    b: float
    subsystem: Subsystem
    x_branch: Branch
    multiplicity: int
    level: float | None = None
    x_star: float | None = None


def _with_strength(coupling: Coupling, b: float) -> Coupling:
    return replace(coupling, b=b)


def _branch_of_state(x: float) -> Branch:
    if x < -1.0:
        return Branch.LOWER
    if x > 1.0:
        return Branch.UPPER
    return Branch.MIDDLE


def downstream_fold_points(coupling: Coupling) -> list[tuple[float, float, float]]:
    """Downstream folds for one coupling instance as (level, x*, lambda).

    A downstream fold requires the effective forcing to sit exactly at a
    fold level, M(x*) = +/-2; the upstream equilibrium condition then
    fixes lambda = x*^3 - 3 x*.
    """
    out = []
    for level in FOLD_LEVELS:
        for x_star in coupling_preimages(coupling, level):
            lam = x_star**3 - 3.0 * x_star
            out.append((level, x_star, lam))
    return out


def _upstream_points(coupling: Coupling, b: float) -> list[FoldCurvePoint]:
    pts = []
    for lam_fold, x_fold, branch in ((2.0, -1.0, Branch.LOWER), (-2.0, 1.0, Branch.UPPER)):
        mu = float(coupling_value(_with_strength(coupling, b), x_fold))
        mult = len(equilibria(mu))
        pts.append(
            FoldCurvePoint(
                lam=lam_fold,
                b=b,
                subsystem=Subsystem.UPSTREAM,
                x_branch=branch,
                multiplicity=mult,
                x_star=x_fold,
            )
        )
    return pts


def fold_curves(
    coupling: Coupling,
    b_min: float,
    b_max: float,
    *,
    num: int = 200,
    max_dlambda: float = 0.01,
    lambda_window: tuple[float, float] = (-6.0, 6.0),
    max_refine: int = 60_000,
) -> list[FoldCurvePoint]:
    """Fold loci over a coupling-strength range, sampled as polylines.

    The log-spaced b grid is refined per downstream branch until adjacent
    lambda samples inside ``lambda_window`` differ by less than
    ``max_dlambda`` (the fold lambda diverges at small b on some branches,
    so the density requirement is scoped to the window of interest).
    Curves are keyed by (fold level, preimage index); the localised
    family's two preimages per level form separate branches that meet at
    the cusp.  An unattained fold level simply contributes no points.
    """
    if not (0.0 < b_min <= b_max):
        raise ValueError("require 0 < b_min <= b_max")
    if b_min == b_max:
        base = [b_min]
    else:
        base = list(np.geomspace(b_min, b_max, num))
        # Include existence boundaries of the localised preimages so the
        # curves start exactly at the cusp strength.
        if isinstance(coupling, LocalisedCoupling):
            for level in FOLD_LEVELS:
                b_edge = level - coupling.a
                if b_min < b_edge < b_max:
                    base.append(b_edge)
        base = sorted(set(base))

    samples: dict[float, list[tuple[float, float, float]]] = {}

    def folds_at(b: float) -> list[tuple[float, float, float]]:
        if b not in samples:
            samples[b] = downstream_fold_points(_with_strength(coupling, b))
        return samples[b]

    def curve_entry(b: float, level: float, index: int):
        pts = [p for p in folds_at(b) if p[0] == level]
        pts.sort(key=lambda p: p[1])
        return pts[index] if index < len(pts) else None

    # Adaptive refinement per (level, preimage index) branch.
    max_index = 2 if isinstance(coupling, LocalisedCoupling) else 1
    grid = sorted(base)
    for level in FOLD_LEVELS:
        for index in range(max_index):
            work = sorted(grid)
            budget = max_refine
            i = 0
            lam_lo, lam_hi = lambda_window
            while i < len(work) - 1 and budget > 0:
                lo, hi = work[i], work[i + 1]
                p_lo = curve_entry(lo, level, index)
                p_hi = curve_entry(hi, level, index)
                if (
                    p_lo is not None
                    and p_hi is not None
                    and (lam_lo <= p_lo[2] <= lam_hi or lam_lo <= p_hi[2] <= lam_hi)
                    and abs(p_lo[2] - p_hi[2]) >= max_dlambda
                    and (hi - lo) > 1e-12 * max(1.0, hi)
                ):
                    work.insert(i + 1, 0.5 * (lo + hi))
                    budget -= 1
                else:
                    i += 1

    for b in base:
        folds_at(b)
    out: list[FoldCurvePoint] = []
    for b in sorted(samples):
        for level, x_star, lam in samples[b]:
            out.append(
                FoldCurvePoint(
                    lam=lam,
                    b=b,
                    subsystem=Subsystem.DOWNSTREAM,
                    x_branch=_branch_of_state(x_star),
                    multiplicity=1,
                    level=level,
                    x_star=x_star,
                )
            )
    for b in base:
        out.extend(_upstream_points(coupling, b))
    out.sort(key=lambda p: (p.subsystem.value, p.level if p.level is not None else 0.0, p.b, p.lam))
    return out


@dataclass(frozen=True)
class CuspPoint:
    """Codimension-2 point where two downstream fold branches coalesce."""

    lam: float
    b: float
    x_star: float


def cusp_points(coupling: Coupling) -> list[CuspPoint]:
    """Cusps of the downstream fold curves for the given coupling family.

    Only the localised family has one in b > 0: the two preimages of the
    upper fold level coincide at the peak, so b = 2 - a, x* = d and
    lambda = d^3 - 3d.  The monotone linear family returns an empty list.
    """
    if isinstance(coupling, LinearCoupling):
        return []
    b_cusp = 2.0 - coupling.a
    if b_cusp <= 0.0:
        return []
    d = coupling.d
    return [CuspPoint(lam=d**3 - 3.0 * d, b=b_cusp, x_star=d)]


@dataclass(frozen=True)
class FrozenTippingTrajectory:
    """Connecting orbit of the frozen upstream system at the upper fold level.

    Runs from the fold state -1 (time -infinity) to the surviving
    equilibrium 2 (time +infinity); stored as the integrated samples
    between the 1e-6 truncations plus the exact endpoint values.
    """

    t: np.ndarray
    x: np.ndarray
    x_fold: float = -1.0
    x_end: float = 2.0

    def __post_init__(self) -> None:
        self.t.setflags(write=False)
        self.x.setflags(write=False)


_TRUNCATION = 1e-6


def frozen_tipping_trajectory() -> FrozenTippingTrajectory:
    """Integrate dx/dt = 3x - x^3 + 2 from -1 + 1e-6 up to 2 - 1e-6.

    The drift factors as -(x + 1)^2 (x - 2), so the endpoints are exact;
    the small offset leaves the degenerate equilibrium and the far-end
    truncation caps the infinite-duration approach.
    """

    def rhs(_t, x):
        return drift(x, 2.0)

    def reach_end(_t, x):
        return x[0] - (2.0 - _TRUNCATION)

    reach_end.terminal = True
    reach_end.direction = 1.0

    sol = solve_ivp(
        rhs,
        (0.0, 1e9),
        [-1.0 + _TRUNCATION],
        method="RK45",
        rtol=1e-10,
        atol=1e-12,
        events=reach_end,
        max_step=np.inf,
    )
    if sol.status != 1:
        raise RuntimeError(f"frozen tipping trajectory did not reach the endpoint: {sol.message}")
    t = sol.t
    x = sol.y[0]
    t_hit = float(sol.t_events[0][0])
    if t_hit > t[-1]:  # solve_ivp usually truncates the final step at the event
        t = np.append(t, t_hit)
        x = np.append(x, sol.y_events[0][0, 0])
    return FrozenTippingTrajectory(t=t, x=x)


class DwubPrediction(str, Enum):
    TRACKING = "downstream_tracking"
    TIPS_WITHIN = "downstream_tips_within"
    TIPS_AFTER = "downstream_tips_after"


def predict_dwub(coupling: Coupling, lambda_plus: float = 4.0) -> DwubPrediction:
    """Frozen-limit prediction of downstream tipping during upstream tipping.

    Valid in the limit of slow forcing and fast downstream dynamics, given
    upstream tipping (lambda_plus > 2).  The upstream path sweeps the
    tipping trajectory's closed state interval [-1, 2] and then the upper
    branch up to lambda_plus; the downstream tips within the upstream
    tipping iff the coupling image of the trajectory phase exceeds the
    fold level 2, tips after it iff only the branch-phase image does, and
    tracks iff the entire swept image stays below 2.
    """
    if not (lambda_plus > 2.0):
        raise ValueError(f"prediction requires lambda_plus > 2, got {lambda_plus}")
    trajectory_max = coupling_max_on_interval(coupling, -1.0, 2.0)
    branch_max = coupling_max_on_interval(
        coupling, 2.0, branch_state(Branch.UPPER, lambda_plus)
    )
    if trajectory_max > 2.0:
        return DwubPrediction.TIPS_WITHIN
    if branch_max > 2.0:
        return DwubPrediction.TIPS_AFTER
    return DwubPrediction.TRACKING
