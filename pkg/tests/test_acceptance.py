"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and timings as they complete.
"""
import math
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from tipcascade import (
    Branch,
    CascadeConfig,
    DwubPrediction,
    LinearCoupling,
    LocalisedCoupling,
    ParameterShift,
    Scenario,
    branch_state,
    cusp_points,
    evaluate_cell,
    frozen_equilibria,
    frozen_tipping_trajectory,
    integrate_cascade,
    locate_events,
    log_grid,
    predict_dwub,
    sweep_regimes,
)
from tipcascade.bifurcation import downstream_fold_points
from tipcascade.cli import main as cli_main

import oracles

SQRT3 = math.sqrt(3.0)
JOBS = 2


@contextmanager
def criterion(number, description, budget_s):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        elapsed = time.perf_counter() - start
        print(f"\n[criterion {number}] FAIL ({elapsed:.1f}s) {description}", flush=True)
        raise
    elapsed = time.perf_counter() - start
    in_budget = elapsed < budget_s
    verdict = "PASS" if in_budget else "FAIL (runtime budget)"
    print(f"\n[criterion {number}] {verdict} ({elapsed:.1f}s) {description}", flush=True)
    assert in_budget, f"runtime {elapsed:.1f}s exceeds budget {budget_s}s"


def bisect_scenario_edge(template, eps, lo, hi, in_region, tol=2e-3):
    """Largest b (within tol) at which ``in_region`` still holds."""

    def member(b):
        cell = evaluate_cell(template, float(b), eps)
        assert not cell.failed, cell.error
        return in_region(cell.scenario)

    assert member(lo) and not member(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if member(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_criterion_1_fold_curve_geometry():
    with criterion(1, "linear downstream-fold curve crossings", 1.0):

        def lam_level2(b):
            pts = [p for p in downstream_fold_points(LinearCoupling(b=b)) if p[0] == 2.0]
            assert len(pts) == 1
            return pts[0][2]

        x_u4 = oracles.cubic_upper(4.0)
        targets = [
            (4.0, 2.0 / (x_u4 + SQRT3), "transversal", (0.4, 0.53)),
            (2.0, 2.0 / (2.0 + SQRT3), "transversal", (0.52, 0.6)),
            (-2.0, 2.0 / (1.0 + SQRT3), "tangential", (0.6, 0.9)),
            (2.0, 1.0 + SQRT3, "tangential", (2.0, 3.5)),
        ]
        stated = [0.50918, 0.535898, 0.732051, 2.732051]
        for (lam_target, b_expected, kind, bracket), b_stated in zip(targets, stated):
            if kind == "transversal":
                b_found = brentq(
                    lambda b: lam_level2(b) - lam_target, *bracket, xtol=1e-12
                )
            else:
                b_found = minimize_scalar(
                    lambda b: abs(lam_level2(b) - lam_target),
                    bounds=bracket,
                    method="bounded",
                    options={"xatol": 1e-12},
                ).x
            assert abs(b_found - b_expected) <= 1e-6, (lam_target, b_found, b_expected)
            # The quoted decimals are prints of the analytic expressions.
            assert abs(b_expected - b_stated) <= 1e-5
            # Independent numerical fold detector agrees at the crossing.
            detected = oracles.detect_downstream_folds(LinearCoupling(b=b_found))
            best = min(abs(lam - lam_target) for lam, _ in detected)
            assert best <= 1e-8


def test_criterion_2_cusp():
    with criterion(2, "localised cusp at (lambda, b) = (-1.375, 2)", 1.0):
        cusps = cusp_points(LocalisedCoupling())
        assert len(cusps) == 1
        assert abs(cusps[0].lam - (-1.375)) <= 1e-9
        assert abs(cusps[0].b - 2.0) <= 1e-9


def test_criterion_3_frozen_tipping_trajectory_and_predictor():
    with criterion(3, "tipping trajectory endpoints and predictor flips", 1.0):
        path = frozen_tipping_trajectory()
        slack = 1e-6 * (1 + 1e-6)  # the start sits at the truncation offset
        assert abs(path.x[0] + 1.0) <= slack
        assert abs(path.x[-1] - 2.0) <= slack

        def flip(make, lo, hi):
            assert predict_dwub(make(hi)) == DwubPrediction.TIPS_WITHIN
            assert predict_dwub(make(lo)) != DwubPrediction.TIPS_WITHIN
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if mid in (lo, hi):
                    break
                if predict_dwub(make(mid)) == DwubPrediction.TIPS_WITHIN:
                    hi = mid
                else:
                    lo = mid
            return 0.5 * (lo + hi)

        b_lin = flip(lambda b: LinearCoupling(b=b), 0.3, 1.0)
        assert abs(b_lin - 2.0 * (2.0 - SQRT3)) <= 1e-6
        assert abs(2.0 * (2.0 - SQRT3) - 0.535898) <= 1e-6
        b_loc = flip(lambda b: LocalisedCoupling(b=b), 1.0, 3.0)
        assert abs(b_loc - 2.0) <= 1e-6


def test_criterion_4_scenario_sweep_and_flip_locations():
    with criterion(4, "linear scenario sequence and flip strengths", 120.0):
        # (a) ordered, nonempty scenario sequence at the default timescales.
        template = CascadeConfig()
        regime_map = sweep_regimes(template, log_grid(0.3, 6.0, 60), [0.05], jobs=JOBS)
        labels = [c.scenario for c in regime_map.cells]
        main_order = [Scenario.UB, Scenario.DaUB, Scenario.DwUB, Scenario.UaDB]
        sliver_ok = {
            Scenario.DaUB: Scenario.DoUB,
            Scenario.DwUB: Scenario.DoUB,
            Scenario.UaDB: Scenario.UoDB,
        }
        collapsed = [labels[0]]
        for lab in labels[1:]:
            if lab != collapsed[-1]:
                collapsed.append(lab)
        mains = [lab for lab in collapsed if lab in main_order]
        assert mains == main_order, collapsed
        for lab in collapsed:
            if lab not in main_order:
                after = mains[: collapsed.index(lab)]
                assert lab in (Scenario.DoUB, Scenario.UoDB), collapsed

        # (b) flip strengths at r = epsilon = 0.01 against the frozen-limit
        # values.  Flips are measured where each main region ends.
        slow = CascadeConfig(shift=ParameterShift(rate=0.01), epsilon=0.01)
        b1 = bisect_scenario_edge(slow, 0.01, 0.45, 0.53, lambda s: s == Scenario.UB)
        b2 = bisect_scenario_edge(slow, 0.01, 0.53, 0.70, lambda s: s == Scenario.DaUB)
        b3 = bisect_scenario_edge(slow, 0.01, 2.6, 3.6, lambda s: s == Scenario.DwUB)
        print(f"\n  flips at r=eps=0.01: {b1:.5f}, {b2:.5f}, {b3:.5f}")
        assert abs(b1 - 0.50918) <= 0.05, f"UB exit at {b1:.5f} vs 0.50918"
        assert abs(b2 - 0.53590) <= 0.05, f"DaUB exit at {b2:.5f} vs 0.53590"
        assert abs(b3 - 2.73205) <= 0.05, f"DwUB exit at {b3:.5f} vs 2.73205"


def test_criterion_5_localised_map_has_no_daub():
    with criterion(5, "localised 60x40 regime map contains zero DaUB cells", 600.0):
        template = CascadeConfig(coupling=LocalisedCoupling())
        regime_map = sweep_regimes(
            template, log_grid(1.5, 8.0, 60), log_grid(1e-2, 1e2, 40), jobs=JOBS
        )
        failed = [c for c in regime_map.cells if c.failed]
        assert not failed, failed[:3]
        daub = [c for c in regime_map.cells if c.scenario == Scenario.DaUB]
        assert daub == [], [(c.b, c.epsilon) for c in daub[:5]]


def test_criterion_6_decelerating_cascades():
    with criterion(6, "overshoot flip in epsilon; UwDB only above epsilon = 1", 300.0):
        # (a) localised family, fixed strength inside the overshoot window:
        # tipping at small epsilon flips to overshoot tracking at large.
        template = CascadeConfig(coupling=LocalisedCoupling())
        eps_values = log_grid(5e-2, 1e2, 12)
        outcomes = []
        for eps in eps_values:
            cell = evaluate_cell(template, 2.5, float(eps))
            assert not cell.failed
            outcomes.append(cell.timings.t_off_d is not None)
        assert outcomes[0] is True
        assert outcomes[-1] is False
        flips = [i for i in range(len(outcomes) - 1) if outcomes[i] != outcomes[i + 1]]
        assert len(flips) == 1, outcomes
        tracked = [
            evaluate_cell(template, 2.5, float(eps)).outcome_d.value
            for eps in eps_values[flips[0] + 1 :][:1]
        ]
        assert tracked == ["overshoot_tracking"]

        # (b) linear family: upstream-within-downstream cells need a
        # decelerating cascade.
        lin = CascadeConfig()
        regime_map = sweep_regimes(
            lin, log_grid(0.3, 6.0, 30), log_grid(1e-2, 1e2, 20), jobs=JOBS
        )
        uwdb = [c for c in regime_map.cells if c.scenario == Scenario.UwDB]
        assert uwdb, "expected UwDB cells in the map"
        assert all(c.epsilon > 1.0 for c in uwdb)
        assert all(c.b > 1.0 + SQRT3 for c in uwdb)


def test_criterion_7_integrator_property_suite():
    with criterion(7, "integrator convergence and equilibrium-count oracle", 120.0):
        config = CascadeConfig()
        traj = integrate_cascade(config)

        tight = replace(config, solver=replace(config.solver, rel_tol=1e-10, abs_tol=1e-11))
        ev_a = {e.kind: e.time for e in locate_events(traj)}
        ev_b = {e.kind: e.time for e in locate_events(integrate_cascade(tight))}
        assert set(ev_a) == set(ev_b)
        assert all(abs(ev_a[k] - ev_b[k]) <= 1e-7 for k in ev_a)

        longer = replace(config, solver=replace(config.solver, burn_in_s=30.0))
        s0 = traj.state(0.0)
        s1 = integrate_cascade(longer).state(0.0)
        assert abs(s0[0] - s1[0]) <= 1e-8 and abs(s0[1] - s1[1]) <= 1e-8

        x_target = branch_state(Branch.UPPER, 4.0)
        for rate in (0.01, 0.05, 0.5):
            run = integrate_cascade(CascadeConfig(shift=ParameterShift(rate=rate)))
            assert abs(run.x[-1] - x_target) <= 1e-6

        rng = np.random.default_rng(2024)
        checked = 0
        while checked < 150:
            lam = float(rng.uniform(-3.5, 4.2))
            b = float(rng.uniform(0.05, 6.0))
            coupling = (
                LinearCoupling(b=b) if checked % 2 == 0 else LocalisedCoupling(b=b)
            )
            eqs = frozen_equilibria(lam, coupling, 0.05)
            # The scan oracle cannot resolve near-degenerate pairs; skip
            # samples within its resolution of a fold.
            mus = [float(coupling.value(e.x_star)) for e in eqs]
            if abs(abs(lam) - 2.0) < 1e-2 or any(abs(abs(m) - 2.0) < 1e-2 for m in mus):
                continue
            assert len(eqs) == oracles.count_frozen_equilibria_scan(lam, coupling), (
                lam,
                coupling,
            )
            checked += 1


def test_criterion_8_seed_figure_qualitative_features(tmp_path):
    with criterion(8, "bundled data recipes show the expected features", 300.0):
        lin_dir = tmp_path / "f45"
        loc_dir = tmp_path / "f78"
        assert cli_main(["seed-figure", "45", "--out-dir", str(lin_dir)]) == 0
        assert cli_main(["seed-figure", "78", "--out-dir", str(loc_dir)]) == 0

        # Nine coexisting equilibria at weak linear coupling.
        rows = (lin_dir / "equilibria_linear_b0.3.csv").read_text().splitlines()[1:]
        lam_column = np.array([float(r.split(",")[0]) for r in rows])
        lam_near_zero = lam_column[np.abs(lam_column) < 0.02]
        unique_lams, counts = np.unique(lam_near_zero, return_counts=True)
        assert len(unique_lams) >= 1
        assert all(c == 9 for c in counts)

        # Triple upstream folds on the vertical lines at weak coupling.
        fold_rows = (lin_dir / "folds_linear.csv").read_text().splitlines()[1:]
        ups = [r.split(",") for r in fold_rows if ",upstream," in r]
        weak_mults = {
            (float(f[1]), int(f[4])) for f in ups if float(f[0]) < 0.7
        }
        assert (2.0, 3) in weak_mults and (-2.0, 3) in weak_mults

        # The downstream fold curve approaches lambda = 0 at strong coupling.
        downs = [r.split(",") for r in fold_rows if ",downstream," in r]
        strong = [abs(float(f[1])) for f in downs if float(f[0]) >= 999.0]
        assert strong and min(strong) < 0.02

        # Cusp row present for the localised family.
        loc_folds = (loc_dir / "folds_localised.csv").read_text().splitlines()[1:]
        assert any(",cusp," in r for r in loc_folds)

        # Overshoot without tipping: the effective forcing exceeds the
        # threshold and retreats while the downstream state never crosses w.
        def columns(path):
            lines = path.read_text().splitlines()[1:]
            arr = np.array([[float(v) for v in line.split(",")] for line in lines])
            return arr[:, 3], arr[:, 4], arr[:, 5]  # x, y, mu

        _, y_no, mu_no = columns(loc_dir / "trajectory_localised_b2.2.csv")
        assert mu_no.max() > 2.0 and mu_no[-1] < 2.0
        assert y_no.max() < 1.8

        _, y_tip, mu_tip = columns(loc_dir / "trajectory_localised_b2.6.csv")
        assert mu_tip.max() > 2.0
        assert y_tip.max() > 1.8
