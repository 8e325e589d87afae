"""Acceptance criteria, one test each.  Every test prints a single PASS/FAIL line
(collected again in the terminal summary) and asserts at the stated tolerance."""

import numpy as np
import pytest

from wheelleg import verify
from wheelleg.metrics import compute_metrics
from wheelleg.closed_loop import load_scenario
from wheelleg.model import LEGS

from conftest import scenario_path

DRIVING = ("flat_drive_2ms", "speed_4ms", "double_incline", "trot")

slow = pytest.mark.slow


@slow
def test_c01_flat_driving_cot(run, criterion):
    r = run("flat_drive_2ms")
    m = compute_metrics(r)
    held = r.column("cmd_vx").max()
    ok = r.ok and m.cot is not None and 0.0 < m.cot <= 0.3 and r.wall_time <= 60.0 and abs(held - 2.0) < 1e-9
    criterion(1, ok, f"flat 2 m/s: COT {m.cot:.4f} in (0, 0.3], wall {r.wall_time:.1f} s <= 60 s ({r.status})")
    assert ok


@slow
def test_c02_fast_driving_no_fall(run, criterion):
    r = run("speed_4ms")
    t, v = r.column("t"), r.column("cmd_vx")
    at_speed = t[v >= 4.0 - 1e-9]
    held = at_speed[-1] - at_speed[0] if at_speed.size else 0.0
    h = r.column("base_height")
    nominal = h[0]                  # settled stance height above the terrain
    dev = float(np.max(np.abs(h - nominal)) / nominal)
    ok = r.ok and held >= 5.0 - 1e-9 and dev <= 0.2
    criterion(2, ok, f"4 m/s held {held:.3f} s, base height deviation {100 * dev:.2f} % <= 20 % ({r.status})")
    assert ok


@slow
def test_c03_double_incline(run, criterion):
    r = run("double_incline")
    terrain = load_scenario(scenario_path("double_incline")).terrain
    rise = max(float(terrain.height(x)) for x in np.linspace(0.0, r.column("base_x")[-1], 4000))
    dz = float(np.max(np.abs(r.column("com_z") - r.column("com_ref_z"))))
    mu = 0.7
    worst = -np.inf
    for leg in LEGS:
        lx, ly, ln = (r.column(f"lam_{leg}_{a}") for a in "xyn")
        on = r.column(f"flag_{leg}") > 0.5
        worst = max(worst, float(np.max(np.hypot(lx, ly)[on] - mu * ln[on], initial=-np.inf)),
                    float(np.max(-ln[on], initial=-np.inf)))
    ok = r.ok and dz < 0.1 * r.leg_length and worst <= 1e-9 and abs(rise - 0.3 * r.leg_length) < 1e-9
    criterion(3, ok, f"double incline (ramp rise {rise:.3f} m = 30 % leg length): COM height deviation "
                     f"{1e3 * dz:.2f} mm < {100 * r.leg_length:.0f} mm; "
                     f"max friction-cone violation {worst:.2e} N ({r.status})")
    assert ok


@slow
def test_c04_trot_zmp_and_tracking(run, criterion):
    r = run("trot")
    accepted = [p for p in r.plans if p.accepted]
    margin = min(p.min_hard_margin for p in accepted)
    rmse = compute_metrics(r).com_rmse
    ok = r.ok and margin >= 0.0 and rmse < 0.03 and r.column("t")[-1] >= 10.0 - 1e-9
    criterion(4, ok, f"trot: min ZMP margin {1e3 * margin:.2f} mm >= 0 over {len(accepted)} plans, "
                     f"COM RMSE {1e3 * rmse:.2f} mm < 30 mm ({r.status})")
    assert ok


@slow
def test_c05_rolling_residual(run, criterion):
    worst = max(float(np.max(run(s).column("rolling_residual"))) for s in DRIVING)
    ticks = sum(len(run(s).data) for s in DRIVING)
    ok = worst < 1e-6
    criterion(5, ok, f"rolling residual max {worst:.2e} < 1e-6 over {ticks} WBC ticks")
    assert ok


def test_c06_hierarchy_strictness(criterion):
    (c,) = verify.check_hierarchy(n_cases=100, seed=6)
    criterion(6, c.passed, f"hierarchy strictness: worst change {c.worst:.2e} < 1e-9 over {c.cases} stacks")
    assert c.passed


def test_c07_qp_oracle(criterion):
    (c,) = verify.check_qp(n_cases=100, seed=7)
    criterion(7, c.passed, f"QP vs enumeration: worst objective error {c.worst:.2e} < 1e-6 over {c.cases} QPs")
    assert c.passed


def test_c08_foothold_oracle(criterion):
    (c,) = verify.check_foothold(n_cases=1000, seed=8)
    criterion(8, c.passed, f"foothold vs RK4: worst error {c.worst:.2e} < 1e-9 over {c.cases} triples")
    assert c.passed


@slow
def test_c09_spline_junctions(run, criterion):
    jumps = [p.junction_jump for s in DRIVING for p in run(s).plans if p.accepted]
    worst = float(max(jumps))
    ok = worst <= 1e-9
    criterion(9, ok, f"spline junction jump max {worst:.2e} <= 1e-9 over {len(jumps)} accepted plans")
    assert ok


def test_c10_jacobians(criterion):
    checks = verify.check_jacobians(n_cases=100, seed=10)
    ok = all(c.passed for c in checks)
    text = ", ".join(f"{c.name.split(' vs')[0]} {c.worst:.1e}" for c in checks)
    criterion(10, ok, f"analytic vs central differences (< 1e-5, 100 states): {text}")
    assert ok


@slow
def test_c11_timing(run, criterion):
    wbc = np.concatenate([run(s).wbc_times for s in DRIVING])
    plan = np.concatenate([run(s).planner_times for s in DRIVING])
    w_ms, p_ms = 1e3 * float(np.median(wbc)), 1e3 * float(np.median(plan))
    ok = w_ms < 2.5 and p_ms < 10.0
    criterion(11, ok, f"median WBC solve {w_ms:.2f} ms < 2.5 ms, median planner cycle {p_ms:.2f} ms < 10 ms")
    assert ok
