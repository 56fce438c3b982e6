"""Regime maps over (b, epsilon) and bisected boundaries between regimes.

Every cell of a map runs the full pipeline (integrate, locate events,
classify); cells are independent, so maps can be evaluated by a process
pool and are assembled in grid order, making the output deterministic
regardless of scheduling.  Boundaries between regimes are refined by
bisection on event-time gaps or on classification flips.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .classify import (
    DownstreamOutcome,
    Scenario,
    TippingTimings,
    classify_scenario,
    detect_intermediate_state,
    downstream_outcome,
    extract_timings,
)
from .core_model import CascadeConfig, ConfigError
from .integrator import IntegrationError, integrate_cascade
from .io import config_to_dict

__all__ = [
    "CellResult",
    "RegimeMap",
    "BoundaryKind",
    "BoundaryPoint",
    "BoundaryCurve",
    "BracketError",
    "log_grid",
    "evaluate_cell",
    "sweep_regimes",
    "bisect_boundary",
    "trace_boundary",
]

DEFAULT_BOUNDARY_TOL = 1e-6


class BracketError(RuntimeError):
    """The requested boundary's gap function does not change across the bracket."""


def log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """Log-spaced grid, the default spacing for both map axes."""
    if not (0.0 < lo < hi):
        raise ValueError("require 0 < lo < hi")
    return np.geomspace(lo, hi, n)


@dataclass(frozen=True)
class CellResult:
    """Classification record for one (b, epsilon) cell."""

    b: float
    epsilon: float
    scenario: Scenario | None = None
    boundary: bool = False
    timings: TippingTimings | None = None
    outcome_d: DownstreamOutcome | None = None
    mu_down_crossing: bool = False
    intermediate: bool | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def _cell_config(template: CascadeConfig, b: float, epsilon: float) -> CascadeConfig:
    return replace(template, coupling=replace(template.coupling, b=b), epsilon=epsilon)


def evaluate_cell(template: CascadeConfig, b: float, epsilon: float) -> CellResult:
    """Run and classify a single cell; failures are recorded, not raised."""
    try:
        config = _cell_config(template, b, epsilon)
    except ConfigError as exc:
        return CellResult(b=b, epsilon=epsilon, error=f"config: {exc}")
    try:
        traj = integrate_cascade(config)
    except IntegrationError as exc:
        return CellResult(b=b, epsilon=epsilon, error=f"{type(exc).__name__}: {exc}")
    timings = extract_timings(traj)
    result = classify_scenario(timings)
    outcome = downstream_outcome(timings, traj)
    from .classify import mu_threshold_crossings

    down = any(c.direction < 0 for c in mu_threshold_crossings(traj))
    intermediate = detect_intermediate_state(traj, timings)
    return CellResult(
        b=b,
        epsilon=epsilon,
        scenario=result.scenario,
        boundary=result.boundary,
        timings=timings,
        outcome_d=outcome,
        mu_down_crossing=down,
        intermediate=intermediate,
    )


def _evaluate_cell_args(args: tuple[CascadeConfig, float, float]) -> CellResult:
    return evaluate_cell(*args)


@dataclass(frozen=True)
class RegimeMap:
    """Scenario classification over a (b, epsilon) grid.

    ``cells`` is row-major over b (outer) and epsilon (inner), matching
    the CSV row order.  ``config_hash`` records the template and grids for
    provenance.
    """

    b_values: tuple[float, ...]
    eps_values: tuple[float, ...]
    cells: tuple[CellResult, ...]
    config_hash: str

    def cell(self, i_b: int, i_eps: int) -> CellResult:
        return self.cells[i_b * len(self.eps_values) + i_eps]

    def scenario_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for c in self.cells:
            key = c.scenario.value if c.scenario is not None else "failed"
            counts[key] = counts.get(key, 0) + 1
        return counts


def _map_hash(template: CascadeConfig, b_values, eps_values) -> str:
    payload = {
        "config": config_to_dict(template),
        "b": [float(v) for v in b_values],
        "epsilon": [float(v) for v in eps_values],
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def sweep_regimes(
    template: CascadeConfig,
    b_values,
    eps_values,
    *,
    jobs: int = 1,
) -> RegimeMap:
    """Classify every cell of the grid; per-cell failures are recorded.

    With ``jobs`` > 1 the cells run in a process pool; assembly is by grid
    index, so the result is identical for any worker count.
    """
    b_values = [float(v) for v in b_values]
    eps_values = [float(v) for v in eps_values]
    if sorted(b_values) != b_values or sorted(eps_values) != eps_values:
        raise ValueError("grid values must be strictly increasing")
    tasks = [(template, b, eps) for b in b_values for eps in eps_values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_evaluate_cell_args, tasks, chunksize=8))
    else:
        cells = [_evaluate_cell_args(t) for t in tasks]
    return RegimeMap(
        b_values=tuple(b_values),
        eps_values=tuple(eps_values),
        cells=tuple(cells),
        config_hash=_map_hash(template, b_values, eps_values),
    )


class BoundaryKind(str, Enum):
    ONSET_ALIGNMENT = "onset_alignment"
    OFFSET_ALIGNMENT = "offset_alignment"
    TRACKING_TIPPING = "tracking_tipping"
    OVERSHOOT_EXTENT = "overshoot_extent"
    INTERMEDIATE_STATE = "intermediate_state"


#: Kinds whose gap is a continuous time difference (bisect on its sign);
#: the others flip a boolean classification (bisect on bracket width).
_TIME_KINDS = (BoundaryKind.ONSET_ALIGNMENT, BoundaryKind.OFFSET_ALIGNMENT)


@dataclass(frozen=True)
class BoundaryPoint:
    kind: BoundaryKind
    b: float
    epsilon: float
    residual: float


@dataclass(frozen=True)
class BoundaryCurve:
    """Bisected boundary polyline; ``gaps`` lists samples without a bracket."""

    kind: BoundaryKind
    points: tuple[BoundaryPoint, ...]
    gaps: tuple[float, ...]
    tol: float


def _time_gap(kind: BoundaryKind, cell: CellResult) -> float:
    if cell.failed:
        raise BracketError(f"cell failed at b={cell.b}, epsilon={cell.epsilon}: {cell.error}")
    t = cell.timings
    if t is None or t.t_on_u is None or t.t_off_u is None:
        raise BracketError(f"upstream did not tip at b={cell.b}, epsilon={cell.epsilon}")
    if kind is BoundaryKind.ONSET_ALIGNMENT:
        return math.inf if t.t_on_d is None else t.t_on_d - t.t_on_u
    if t.t_off_d is None:
        return math.inf
    return t.t_off_d - t.t_off_u


def _flip_state(kind: BoundaryKind, cell: CellResult) -> bool:
    if cell.failed:
        raise BracketError(f"cell failed at b={cell.b}, epsilon={cell.epsilon}: {cell.error}")
    if kind is BoundaryKind.TRACKING_TIPPING:
        return cell.outcome_d in (DownstreamOutcome.B_TIPPING, DownstreamOutcome.OVERSHOOT_TIPPING)
    if kind is BoundaryKind.OVERSHOOT_EXTENT:
        return cell.mu_down_crossing
    return bool(cell.intermediate)


def _point(kind, fixed_axis, fixed_value, scan_value, residual) -> BoundaryPoint:
    if fixed_axis == "epsilon":
        return BoundaryPoint(kind=kind, b=scan_value, epsilon=fixed_value, residual=residual)
    return BoundaryPoint(kind=kind, b=fixed_value, epsilon=scan_value, residual=residual)


def bisect_boundary(
    template: CascadeConfig,
    kind: BoundaryKind | str,
    fixed_axis: str,
    fixed_value: float,
    bracket: tuple[float, float],
    tol: float = DEFAULT_BOUNDARY_TOL,
    *,
    max_iter: int = 200,
) -> BoundaryPoint:
    """Bisect the scan axis until the boundary's residual is within tol.

    ``fixed_axis`` names the frozen parameter ("b" or "epsilon"); the
    other axis is scanned across ``bracket``.  Time-gap kinds bisect the
    sign of the gap until |gap| <= tol; classification-flip kinds shrink
    the bracket to a relative width of tol.  Raises BracketError when the
    gap does not change across the bracket.
    """
    kind = BoundaryKind(kind)
    if fixed_axis not in ("b", "epsilon"):
        raise ValueError("fixed_axis must be 'b' or 'epsilon'")

    def cell_at(v: float) -> CellResult:
        if fixed_axis == "epsilon":
            return evaluate_cell(template, v, fixed_value)
        return evaluate_cell(template, fixed_value, v)

    lo, hi = float(bracket[0]), float(bracket[1])
    if not (lo < hi):
        raise ValueError("bracket must satisfy lo < hi")

    if kind in _TIME_KINDS:
        g_lo = _time_gap(kind, cell_at(lo))
        g_hi = _time_gap(kind, cell_at(hi))
        if math.isfinite(g_lo) and abs(g_lo) <= tol:
            return _point(kind, fixed_axis, fixed_value, lo, abs(g_lo))
        if math.isfinite(g_hi) and abs(g_hi) <= tol:
            return _point(kind, fixed_axis, fixed_value, hi, abs(g_hi))
        s_lo = math.copysign(1.0, g_lo)
        if s_lo == math.copysign(1.0, g_hi):
            raise BracketError(
                f"{kind.value} gap has the same sign at both bracket ends "
                f"({g_lo:.3g}, {g_hi:.3g})"
            )
        best_v, best_g = (lo, g_lo) if abs(g_lo) <= abs(g_hi) else (hi, g_hi)
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            g_mid = _time_gap(kind, cell_at(mid))
            if abs(g_mid) < abs(best_g):
                best_v, best_g = mid, g_mid
            if math.isfinite(g_mid) and abs(g_mid) <= tol:
                return _point(kind, fixed_axis, fixed_value, mid, abs(g_mid))
            if math.copysign(1.0, g_mid) == s_lo:
                lo = mid
            else:
                hi = mid
        return _point(kind, fixed_axis, fixed_value, best_v, abs(best_g))

    p_lo = _flip_state(kind, cell_at(lo))
    p_hi = _flip_state(kind, cell_at(hi))
    if p_lo == p_hi:
        raise BracketError(
            f"{kind.value} classification does not flip across the bracket "
            f"({p_lo}, {p_hi})"
        )
    for _ in range(max_iter):
        if (hi - lo) <= tol * max(1.0, abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _flip_state(kind, cell_at(mid)) == p_lo:
            lo = mid
        else:
            hi = mid
    return _point(kind, fixed_axis, fixed_value, 0.5 * (lo + hi), hi - lo)


def trace_boundary(
    template: CascadeConfig,
    kind: BoundaryKind | str,
    sample_axis: str,
    samples,
    scan_range: tuple[float, float],
    tol: float = DEFAULT_BOUNDARY_TOL,
    *,
    coarse: int = 16,
) -> BoundaryCurve:
    """Bisect the boundary at each sample of the chosen axis.

    For each value of ``sample_axis`` a coarse log-spaced scan of the
    other axis locates a sign-change (or flip) bracket, which is then
    bisected.  Samples without a bracket, or whose bisection failed to
    reach tol, are reported in ``gaps`` and omitted from the polyline.
    """
    kind = BoundaryKind(kind)
    if sample_axis not in ("b", "epsilon"):
        raise ValueError("sample_axis must be 'b' or 'epsilon'")
    scan_values = log_grid(scan_range[0], scan_range[1], coarse)

    points: list[BoundaryPoint] = []
    gaps: list[float] = []
    for fixed_value in samples:
        fixed_value = float(fixed_value)

        def cell_at(v: float) -> CellResult:
            if sample_axis == "epsilon":
                return evaluate_cell(template, v, fixed_value)
            return evaluate_cell(template, fixed_value, v)

        bracket = None
        if kind in _TIME_KINDS:
            try:
                gaps_at = [_time_gap(kind, cell_at(v)) for v in scan_values]
            except BracketError:
                gaps.append(fixed_value)
                continue
            for i in range(len(scan_values) - 1):
                if math.copysign(1.0, gaps_at[i]) != math.copysign(1.0, gaps_at[i + 1]):
                    bracket = (scan_values[i], scan_values[i + 1])
                    break
        else:
            states = [_flip_state(kind, cell_at(v)) for v in scan_values]
            for i in range(len(scan_values) - 1):
                if states[i] != states[i + 1]:
                    bracket = (scan_values[i], scan_values[i + 1])
                    break
        if bracket is None:
            gaps.append(fixed_value)
            continue
        try:
            point = bisect_boundary(
                template, kind, sample_axis, fixed_value, bracket, tol
            )
        except BracketError:
            gaps.append(fixed_value)
            continue
        if kind in _TIME_KINDS and point.residual > tol:
            gaps.append(fixed_value)
            continue
        points.append(point)
    return BoundaryCurve(kind=kind, points=tuple(points), gaps=tuple(gaps), tol=tol)
