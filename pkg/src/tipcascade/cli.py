"""Command-line front end: JSON config in, plot-ready CSV/JSON out.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 invalid boundary bracket.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bifurcation import (
    cusp_points,
    fold_curves,
    frozen_equilibria,
    frozen_tipping_trajectory,
    predict_dwub,
)
from .classify import classification_report
from .core_model import (
    CascadeConfig,
    ConfigError,
    LinearCoupling,
    LocalisedCoupling,
    ParameterShift,
    SolverSettings,
)
from .integrator import IntegrationError, integrate_cascade, locate_events
from .io import (
    fmt,
    write_boundary_csv,
    write_branch_diagram_csv,
    write_fold_csv,
    write_frozen_equilibria_csv,
    write_json,
    write_regime_csv,
    write_tipping_trajectory_csv,
    write_trajectory_csv,
)
from .regimes import (
    BoundaryKind,
    BracketError,
    bisect_boundary,
    log_grid,
    sweep_regimes,
    trace_boundary,
)

_SHIFT_KEYS = {"lambda_minus", "lambda_plus", "rate", "saturation"}
_COUPLING_KEYS = {"kind", "a", "b", "c", "d", "x_ref"}
_COUPLING_KEYS_BY_KIND = {
    "linear": {"kind", "a", "b", "x_ref"},
    "localised": {"kind", "a", "b", "c", "d"},
}
_SOLVER_KEYS = {
    "rel_tol",
    "abs_tol",
    "max_step",
    "event_time_tol",
    "burn_in_s",
    "settle_tol",
    "horizon_factor",
    "max_nodes",
}
_GRID_KEYS = {"min", "max", "n", "spacing"}
_TOP_KEYS = {"shift", "coupling", "epsilon", "w", "solver", "grids"}

#: Flat override aliases accepted by ``--override key=value``.
_FLAT_ALIASES = {
    "lambda_minus": ("shift", "lambda_minus"),
    "lambda_plus": ("shift", "lambda_plus"),
    "rate": ("shift", "rate"),
    "saturation": ("shift", "saturation"),
    "kind": ("coupling", "kind"),
    "a": ("coupling", "a"),
    "b": ("coupling", "b"),
    "c": ("coupling", "c"),
    "d": ("coupling", "d"),
    "x_ref": ("coupling", "x_ref"),
    "epsilon": ("epsilon",),
    "w": ("w",),
}


def _default_document() -> dict:
    return {
        "shift": {"lambda_minus": 0.0, "lambda_plus": 4.0, "rate": 0.05, "saturation": 15.0},
        "coupling": {"kind": "linear", "a": 0.0, "b": 1.0},
        "epsilon": 0.05,
        "w": 1.8,
        "solver": {},
        "grids": {},
    }


def _reject_unknown(mapping: dict, allowed: set, context: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key {context}{key!r}")


def _validate_document(doc: dict) -> None:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "")
    _reject_unknown(doc.get("shift", {}), _SHIFT_KEYS, "shift.")
    _reject_unknown(doc.get("coupling", {}), _COUPLING_KEYS, "coupling.")
    _reject_unknown(doc.get("solver", {}), _SOLVER_KEYS, "solver.")
    grids = doc.get("grids", {})
    _reject_unknown(grids, {"b", "epsilon"}, "grids.")
    for axis in grids:
        _reject_unknown(grids[axis], _GRID_KEYS, f"grids.{axis}.")


def _parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_override(doc: dict, spec: str) -> None:
    if "=" not in spec:
        raise ConfigError(f"override {spec!r} must look like key=value")
    key, _, raw = spec.partition("=")
    value = _parse_override_value(raw)
    parts = tuple(key.split(".")) if "." in key else _FLAT_ALIASES.get(key)
    if parts is None:
        raise ConfigError(f"unknown override key {key!r}")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def load_document(args) -> dict:
    """Merge defaults, an optional config file, and command-line overrides."""
    doc = _default_document()
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        try:
            loaded = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        _validate_document(loaded)
        for key, value in loaded.items():
            if isinstance(value, dict):
                doc.setdefault(key, {}).update(value)
            else:
                doc[key] = value
    for spec in getattr(args, "override", None) or []:
        _apply_override(doc, spec)
    if getattr(args, "coupling", None):
        doc["coupling"]["kind"] = args.coupling
    if getattr(args, "b", None) is not None:
        doc["coupling"]["b"] = args.b
    if getattr(args, "epsilon", None) is not None:
        doc["epsilon"] = args.epsilon
    _validate_document(doc)
    return doc


def build_coupling(cdoc: dict):
    kind = cdoc.get("kind", "linear")
    if kind not in _COUPLING_KEYS_BY_KIND:
        raise ConfigError(f"unknown coupling kind {kind!r} (expected linear or localised)")
    _reject_unknown(cdoc, _COUPLING_KEYS_BY_KIND[kind], "coupling.")
    if kind == "linear":
        return LinearCoupling(
            a=float(cdoc.get("a", 0.0)),
            b=float(cdoc.get("b", 1.0)),
            x_ref=None if cdoc.get("x_ref") is None else float(cdoc["x_ref"]),
        )
    return LocalisedCoupling(
        a=float(cdoc.get("a", 0.0)),
        b=float(cdoc.get("b", 1.0)),
        c=float(cdoc.get("c", 2.0)),
        d=float(cdoc.get("d", 0.5)),
    )


def build_config(doc: dict) -> CascadeConfig:
    sdoc = doc.get("shift", {})
    shift = ParameterShift(
        lambda_minus=float(sdoc.get("lambda_minus", 0.0)),
        lambda_plus=float(sdoc.get("lambda_plus", 4.0)),
        rate=float(sdoc.get("rate", 0.05)),
        saturation=float(sdoc.get("saturation", 15.0)),
    )
    vdoc = dict(doc.get("solver", {}))
    if "max_nodes" in vdoc:
        vdoc["max_nodes"] = int(vdoc["max_nodes"])
    solver = SolverSettings(**vdoc)
    return CascadeConfig(
        shift=shift,
        coupling=build_coupling(doc.get("coupling", {})),
        epsilon=float(doc.get("epsilon", 0.05)),
        offset_threshold=float(doc.get("w", 1.8)),
        solver=solver,
    )


def _grid_from_doc(doc: dict, axis: str, default: tuple[float, float, int]):
    spec = doc.get("grids", {}).get(axis, {})
    lo = float(spec.get("min", default[0]))
    hi = float(spec.get("max", default[1]))
    n = int(spec.get("n", default[2]))
    spacing = spec.get("spacing", "log")
    if spacing == "log":
        return log_grid(lo, hi, n)
    if spacing == "linear":
        return np.linspace(lo, hi, n)
    raise ConfigError(f"grids.{axis}.spacing must be 'log' or 'linear', got {spacing!r}")


@contextlib.contextmanager
def _open_out(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def _summary(text: str) -> None:
    print(text, file=sys.stderr)


# ---------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    config = build_config(load_document(args))
    traj = integrate_cascade(config)
    events = locate_events(traj)
    with _open_out(args.out) as fh:
        write_trajectory_csv(traj, fh)
    if events:
        listing = ",".join(f"{e.kind.value}@{e.time:.6g}" for e in events)
    else:
        listing = "none"
    _summary(
        f"simulate: status={traj.status} nodes={len(traj.t)} "
        f"t=[{traj.t_start:.6g},{traj.t_end:.6g}] events={listing}"
    )
    return 0


def cmd_classify(args) -> int:
    config = build_config(load_document(args))
    traj = integrate_cascade(config)
    report = classification_report(traj)
    with _open_out(args.out) as fh:
        write_json(report, fh)
    _summary(f"classify: scenario={report['scenario']} overshoot={report['overshoot']}")
    return 0


def cmd_frozen_branches(args) -> int:
    lams = np.linspace(args.lambda_min, args.lambda_max, args.n)
    with _open_out(args.out) as fh:
        write_branch_diagram_csv(lams, fh)
    _summary(f"frozen-branches: {args.n} forcing samples on [{args.lambda_min},{args.lambda_max}]")
    return 0


def cmd_fold_curves(args) -> int:
    config = build_config(load_document(args))
    coupling = config.coupling
    if args.b is not None:
        b_min = b_max = args.b
    else:
        b_min, b_max = args.b_min, args.b_max
    points = fold_curves(coupling, b_min, b_max, num=args.num)
    cusps = [c for c in cusp_points(coupling) if b_min <= c.b <= b_max]
    with _open_out(args.out) as fh:
        write_fold_csv(points, fh, cusps=cusps)
    _summary(
        f"fold-curves: kind={coupling.kind} b=[{fmt(b_min)},{fmt(b_max)}] "
        f"points={len(points)} cusps={len(cusps)}"
    )
    return 0


def cmd_tipping_trajectory(args) -> int:
    path = frozen_tipping_trajectory()
    with _open_out(args.out) as fh:
        write_tipping_trajectory_csv(path, fh)
    _summary(
        f"tipping-trajectory: {len(path.t)} samples, x=[{path.x[0]:.8g},{path.x[-1]:.8g}]"
    )
    return 0


def cmd_predict_dwub(args) -> int:
    config = build_config(load_document(args))
    prediction = predict_dwub(config.coupling, config.shift.lambda_plus)
    payload = {
        "prediction": prediction.value,
        "coupling_kind": config.coupling.kind,
        "b": config.coupling.b,
        "lambda_plus": config.shift.lambda_plus,
    }
    with _open_out(args.out) as fh:
        write_json(payload, fh)
    _summary(f"predict-dwub: {prediction.value}")
    return 0


def cmd_regime_map(args) -> int:
    doc = load_document(args)
    config = build_config(doc)
    if config.coupling.kind == "localised":
        b_default = (1.5, 8.0, 60)
    else:
        b_default = (0.3, 6.0, 60)
    b_values = _grid_from_doc(doc, "b", b_default)
    eps_values = _grid_from_doc(doc, "epsilon", (1e-2, 1e2, 40))
    if args.b_min is not None or args.b_max is not None or args.n_b is not None:
        b_values = log_grid(
            args.b_min if args.b_min is not None else b_default[0],
            args.b_max if args.b_max is not None else b_default[1],
            args.n_b if args.n_b is not None else b_default[2],
        )
    if args.eps_min is not None or args.eps_max is not None or args.n_eps is not None:
        eps_values = log_grid(
            args.eps_min if args.eps_min is not None else 1e-2,
            args.eps_max if args.eps_max is not None else 1e2,
            args.n_eps if args.n_eps is not None else 40,
        )
    regime_map = sweep_regimes(config, b_values, eps_values, jobs=args.jobs)
    with _open_out(args.out) as fh:
        write_regime_csv(regime_map, fh)
    counts = ",".join(f"{k}={v}" for k, v in sorted(regime_map.scenario_counts().items()))
    _summary(
        f"regime-map: {len(b_values)}x{len(eps_values)} cells, {counts}, "
        f"hash={regime_map.config_hash[:12]}"
    )
    return 0


def _parse_pair(text: str, what: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"{what} must be LO,HI")
    return float(parts[0]), float(parts[1])


def cmd_boundary(args) -> int:
    config = build_config(load_document(args))
    kind = BoundaryKind(args.kind)
    if args.trace_axis:
        if not args.samples or not args.scan:
            raise ConfigError("--trace-axis requires --samples LO,HI,N and --scan LO,HI")
        parts = args.samples.split(",")
        if len(parts) != 3:
            raise ConfigError("--samples must be LO,HI,N")
        samples = log_grid(float(parts[0]), float(parts[1]), int(parts[2]))
        scan = _parse_pair(args.scan, "--scan")
        curve = trace_boundary(config, kind, args.trace_axis, samples, scan, tol=args.tol)
        with _open_out(args.out) as fh:
            write_boundary_csv(curve.points, fh)
        _summary(
            f"boundary: kind={kind.value} points={len(curve.points)} gaps={len(curve.gaps)}"
        )
        return 0
    if not args.fix or not args.bracket:
        raise ConfigError("boundary requires --fix AXIS=VALUE and --bracket LO,HI (or --trace-axis)")
    axis, _, raw = args.fix.partition("=")
    if axis not in ("b", "epsilon") or not raw:
        raise ConfigError("--fix must be b=VALUE or epsilon=VALUE")
    point = bisect_boundary(
        config, kind, axis, float(raw), _parse_pair(args.bracket, "--bracket"), tol=args.tol
    )
    with _open_out(args.out) as fh:
        write_boundary_csv([point], fh)
    _summary(
        f"boundary: kind={kind.value} b={fmt(point.b)} epsilon={fmt(point.epsilon)} "
        f"residual={fmt(point.residual)}"
    )
    return 0


# Coupling strengths for the bundled bifurcation-data recipes (chosen to
# span the qualitatively distinct responses of each family).
_SEED_LINEAR_B = (0.3, 0.52, 1.0, 2.8, 5.0)
_SEED_LOCALISED_B = (1.0, 2.0, 2.6, 3.2, 4.2, 6.0, 8.5, 20.0)
_SEED_OVERSHOOT_B = 2.2  # overshoots the downstream threshold without tipping
_SEED_TIPPING_B = 2.6  # overshoots and tips at the default timescales


def cmd_seed_figure(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    figure = args.figure
    if figure in ("4", "5"):
        figure = "45"
    if figure in ("7", "8"):
        figure = "78"
    written: list[Path] = []

    def emit(name: str, writer) -> None:
        path = out_dir / name
        with open(path, "w") as fh:
            writer(fh)
        written.append(path)

    if figure == "3":
        for label, lam_plus in (("above", 4.0), ("below", 1.0)):
            config = CascadeConfig(shift=ParameterShift(lambda_plus=lam_plus))
            traj = integrate_cascade(config)
            emit(f"ramp_response_{label}.csv", lambda fh, tr=traj: write_trajectory_csv(tr, fh))
    elif figure in ("45", "78"):
        linear = figure == "45"
        coupling = LinearCoupling() if linear else LocalisedCoupling()
        tag = coupling.kind
        b_lo, b_hi = (0.05, 1000.0) if linear else (0.5, 40.0)
        points = fold_curves(coupling, b_lo, b_hi, num=args.num)
        cusps = cusp_points(coupling)
        emit(
            f"folds_{tag}.csv",
            lambda fh: write_fold_csv(points, fh, cusps=cusps),
        )
        lams = np.linspace(-3.0, 5.0, 321)
        for b in _SEED_LINEAR_B if linear else _SEED_LOCALISED_B:
            coup_b = replace(coupling, b=b)
            rows = [
                eq for lam in lams for eq in frozen_equilibria(float(lam), coup_b, 0.05)
            ]
            emit(
                f"equilibria_{tag}_b{b:g}.csv",
                lambda fh, r=rows: write_frozen_equilibria_csv(r, fh),
            )
        traj_bs = (0.3, 1.0, 5.0) if linear else (_SEED_OVERSHOOT_B, _SEED_TIPPING_B, 8.5)
        for b in traj_bs:
            config = CascadeConfig(coupling=replace(coupling, b=b))
            traj = integrate_cascade(config)
            emit(
                f"trajectory_{tag}_b{b:g}.csv",
                lambda fh, tr=traj: write_trajectory_csv(tr, fh),
            )
    elif figure in ("6", "9"):
        linear = figure == "6"
        coupling = LinearCoupling() if linear else LocalisedCoupling()
        config = CascadeConfig(coupling=coupling)
        b_lo, b_hi = (0.3, 6.0) if linear else (1.5, 8.0)
        b_values = log_grid(b_lo, b_hi, args.n_b or 60)
        eps_values = log_grid(1e-2, 1e2, args.n_eps or 40)
        regime_map = sweep_regimes(config, b_values, eps_values, jobs=args.jobs)
        emit(
            f"regime_map_{coupling.kind}.csv",
            lambda fh: write_regime_csv(regime_map, fh),
        )
    else:
        raise ConfigError(f"unknown figure class {args.figure!r}")
    _summary("seed-figure: wrote " + ", ".join(str(p) for p in written))
    return 0


# ---------------------------------------------------------------- parser


def _add_config_options(p: argparse.ArgumentParser, coupling_flag: bool = True) -> None:
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument(
        "--override",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key (flat alias like lambda_plus=1 or dotted like solver.rel_tol=1e-8)",
    )
    if coupling_flag:
        p.add_argument("--coupling", choices=("linear", "localised"), help="coupling kind")
    p.add_argument("--b", type=float, help="coupling strength override")
    p.add_argument("--epsilon", type=float, help="timescale ratio override")
    p.add_argument("--out", default="-", help="output path ('-' = stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tipcascade",
        description="Simulate and analyse a unidirectionally coupled pair of bistable tipping elements",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate the cascade; trajectory CSV t,s,lambda,x,y,mu")
    _add_config_options(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("classify", help="classify one run; JSON scenario report")
    _add_config_options(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("frozen-branches", help="single-element branch diagram CSV")
    p.add_argument("--lambda-min", type=float, default=-3.0)
    p.add_argument("--lambda-max", type=float, default=5.0)
    p.add_argument("--n", type=int, default=801)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_frozen_branches)

    p = sub.add_parser("fold-curves", help="fold loci in the (lambda,b) plane; CSV")
    _add_config_options(p)
    p.add_argument("--b-min", type=float, default=0.3)
    p.add_argument("--b-max", type=float, default=6.0)
    p.add_argument("--num", type=int, default=200, help="base b samples before refinement")
    p.set_defaults(func=cmd_fold_curves)

    p = sub.add_parser("tipping-trajectory", help="frozen tipping trajectory samples; CSV t,x")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_tipping_trajectory)

    p = sub.add_parser("predict-dwub", help="frozen-limit downstream tipping prediction; JSON")
    _add_config_options(p)
    p.set_defaults(func=cmd_predict_dwub)

    p = sub.add_parser("regime-map", help="classify a (b,epsilon) grid; CSV")
    _add_config_options(p)
    p.add_argument("--b-min", type=float)
    p.add_argument("--b-max", type=float)
    p.add_argument("--n-b", type=int)
    p.add_argument("--eps-min", type=float)
    p.add_argument("--eps-max", type=float)
    p.add_argument("--n-eps", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_regime_map)

    p = sub.add_parser("boundary", help="bisect a regime boundary; CSV kind,b,epsilon,residual")
    _add_config_options(p)
    p.add_argument("--kind", required=True, choices=[k.value for k in BoundaryKind])
    p.add_argument("--fix", metavar="AXIS=VALUE", help="fixed axis for a single bisection")
    p.add_argument("--bracket", metavar="LO,HI", help="scan bracket for the other axis")
    p.add_argument("--trace-axis", choices=("b", "epsilon"), help="trace along this axis")
    p.add_argument("--samples", metavar="LO,HI,N", help="log-spaced samples for --trace-axis")
    p.add_argument("--scan", metavar="LO,HI", help="scan range for the bisected axis")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("seed-figure", help="write the bundled data recipes (classes 3, 45, 6, 78, 9)")
    p.add_argument("figure", choices=("3", "4", "5", "45", "6", "7", "8", "78", "9"))
    p.add_argument("--out-dir", default="figure-data")
    p.add_argument("--num", type=int, default=200, help="fold-curve base samples")
    p.add_argument("--n-b", type=int, help="map b samples (classes 6/9)")
    p.add_argument("--n-eps", type=int, help="map epsilon samples (classes 6/9)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_seed_figure)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"tipcascade: configuration error: {exc}", file=sys.stderr)
        return 2
    except BracketError as exc:
        print(f"tipcascade: invalid bracket: {exc}", file=sys.stderr)
        return 4
    except IntegrationError as exc:
        print(f"tipcascade: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
