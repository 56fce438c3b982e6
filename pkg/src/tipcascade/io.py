"""CSV/JSON emission with byte-stable numeric formatting.

All CSV numbers are written with 17 significant digits ("%.17g", '.'
decimal separator, locale independent) so identical inputs produce
identical bytes on any platform.  Column orders are fixed:

  trajectory    t,s,lambda,x,y,mu
  fold curves   b,lambda,subsystem,branch,multiplicity
  branches      lambda,x_lower,x_middle,x_upper     (empty = absent)
  equilibria    lambda,x,y,x_branch,y_branch,stable
  regime map    b,epsilon,scenario,t_on_u,t_off_u,t_on_d,t_off_d,overshoot,intermediate
  boundary      kind,b,epsilon,residual
"""
from __future__ import annotations

import json
from dataclasses import asdict
from typing import IO, Iterable

import numpy as np

from .core_model import (
    Branch,
    CascadeConfig,
    LocalisedCoupling,
    branch_state,
)

__all__ = [
    "fmt",
    "config_to_dict",
    "write_trajectory_csv",
    "write_fold_csv",
    "write_branch_diagram_csv",
    "write_frozen_equilibria_csv",
    "write_regime_csv",
    "write_boundary_csv",
    "write_tipping_trajectory_csv",
    "write_json",
]


def fmt(value) -> str:
    """Format a number with 17 significant digits; empty string for None."""
    if value is None:
        return ""
    return f"{float(value):.17g}"


def _flag(value) -> str:
    if value is None:
        return ""
    return "1" if value else "0"


def config_to_dict(config: CascadeConfig) -> dict:
    """Canonical JSON-ready mapping of a cascade configuration."""
    coupling = config.coupling
    cdict: dict = {"kind": coupling.kind, "a": coupling.a, "b": coupling.b}
    if isinstance(coupling, LocalisedCoupling):
        cdict["c"] = coupling.c
        cdict["d"] = coupling.d
    else:
        cdict["x_ref"] = coupling.x_ref
    return {
        "shift": {
            "lambda_minus": config.shift.lambda_minus,
            "lambda_plus": config.shift.lambda_plus,
            "rate": config.shift.rate,
            "saturation": config.shift.saturation,
        },
        "coupling": cdict,
        "epsilon": config.epsilon,
        "w": config.offset_threshold,
        "solver": asdict(config.solver),
    }


def write_trajectory_csv(traj, fh: IO[str]) -> None:
    fh.write("t,s,lambda,x,y,mu\n")
    rate = traj.config.shift.rate
    lam = np.asarray(traj.lam)
    mu = np.asarray(traj.mu)
    for i in range(len(traj.t)):
        t = traj.t[i]
        fh.write(
            f"{fmt(t)},{fmt(rate * t)},{fmt(lam[i])},{fmt(traj.x[i])},"
            f"{fmt(traj.y[i])},{fmt(mu[i])}\n"
        )


def write_fold_csv(points, fh: IO[str], cusps=()) -> None:
    """Fold-curve rows, with any cusp points appended as subsystem 'cusp'."""
    fh.write("b,lambda,subsystem,branch,multiplicity\n")
    for p in points:
        fh.write(
            f"{fmt(p.b)},{fmt(p.lam)},{p.subsystem.value},{p.x_branch.value},{p.multiplicity}\n"
        )
    for c in cusps:
        branch = Branch.MIDDLE if -1.0 <= c.x_star <= 1.0 else (
            Branch.LOWER if c.x_star < -1.0 else Branch.UPPER
        )
        fh.write(f"{fmt(c.b)},{fmt(c.lam)},cusp,{branch.value},2\n")


def write_branch_diagram_csv(lam_values: Iterable[float], fh: IO[str]) -> None:
    """Single-element equilibrium branches over a forcing grid."""
    fh.write("lambda,x_lower,x_middle,x_upper\n")
    for lam in lam_values:
        cells = []
        for branch in (Branch.LOWER, Branch.MIDDLE, Branch.UPPER):
            try:
                cells.append(fmt(branch_state(branch, float(lam))))
            except ValueError:
                cells.append("")
        fh.write(f"{fmt(lam)},{cells[0]},{cells[1]},{cells[2]}\n")


def write_frozen_equilibria_csv(equilibria_rows, fh: IO[str]) -> None:
    """Coupled frozen equilibria (one row per equilibrium point)."""
    fh.write("lambda,x,y,x_branch,y_branch,stable\n")
    for eq in equilibria_rows:
        fh.write(
            f"{fmt(eq.lam)},{fmt(eq.x_star)},{fmt(eq.y_star)},"
            f"{eq.x_branch.value},{eq.y_branch.value},{_flag(eq.stable)}\n"
        )


def write_regime_csv(regime_map, fh: IO[str]) -> None:
    fh.write("b,epsilon,scenario,t_on_u,t_off_u,t_on_d,t_off_d,overshoot,intermediate\n")
    for cell in regime_map.cells:
        if cell.failed:
            scenario = "failed"
            t = None
        else:
            scenario = cell.scenario.value
            t = cell.timings
        times = (
            (t.t_on_u, t.t_off_u, t.t_on_d, t.t_off_d) if t is not None else (None,) * 4
        )
        overshoot = t.overshoot if t is not None else None
        fh.write(
            f"{fmt(cell.b)},{fmt(cell.epsilon)},{scenario},"
            f"{fmt(times[0])},{fmt(times[1])},{fmt(times[2])},{fmt(times[3])},"
            f"{_flag(overshoot)},{_flag(cell.intermediate)}\n"
        )


def write_boundary_csv(points, fh: IO[str]) -> None:
    fh.write("kind,b,epsilon,residual\n")
    for p in points:
        fh.write(f"{p.kind.value},{fmt(p.b)},{fmt(p.epsilon)},{fmt(p.residual)}\n")


def write_tipping_trajectory_csv(orbit, fh: IO[str]) -> None:
    fh.write("t,x\n")
    for t, x in zip(orbit.t, orbit.x):
        fh.write(f"{fmt(t)},{fmt(x)}\n")


def write_json(payload: dict, fh: IO[str]) -> None:
    json.dump(payload, fh, indent=2, sort_keys=False)
    fh.write("\n")
