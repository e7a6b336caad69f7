"""Acceptance battery: every exit criterion at its stated budget and tolerance.

Each test prints one PASS/FAIL line per criterion (run pytest with -s to see
them inline).  Budgets follow the documented defaults: seed 42, 1e4 paths,
dt 1e-3, 1e3 particles, clip 1e-3, test level 0.01.
"""
import math
import time

import pytest

from sloc import suites

BUDGET = suites.SuiteBudget(
    seed=42, paths=10_000, dt=1e-3, particles=1_000, eps_clip=1e-3, level=0.01
)


def _run(criterion: str, checks, started: float, limit_s: float):
    elapsed = time.time() - started
    ok = all(c.passed for c in checks)
    verdict = "PASS" if ok and elapsed <= limit_s else "FAIL"
    print(f"\n{verdict} {criterion} [{elapsed:.1f}s / limit {limit_s:.0f}s]")
    for c in checks:
        flag = "pass" if c.passed else "FAIL"
        print(f"    [{flag}] {c.name}: observed={c.observed:.6g} tol={c.tolerance:.6g} {c.detail}")
    assert ok, f"{criterion}: failed checks: {[c.name for c in checks if not c.passed]}"
    assert elapsed <= limit_s, f"{criterion}: runtime {elapsed:.1f}s over limit {limit_s}s"


def test_criterion_1_tilt_vs_channel():
    # Gaussian d=1 base; terminal moments within 4 combined stderr, KS above
    # level, Var(c_1) = 2 within 4 stderr for the standard normal base.
    started = time.time()
    checks = suites.check_tilt_vs_channel(BUDGET)
    expected_var = BUDGET.horizon**2 * 1.0 + BUDGET.horizon
    assert expected_var == 2.0
    _run("criterion-1 tilt-sde vs channel", checks, started, 60.0)


def test_criterion_2_particles_and_martingale():
    started = time.time()
    checks = suites.check_particles(BUDGET)
    _run("criterion-2 particle measure + martingale", checks, started, 120.0)


def test_criterion_3_backward_diffusion():
    # Var(sqrt(u(u+1)) x_u) = u^2 + u at u in {0.5, 1}; full-law KS against
    # the tilt run; posterior-mean score vs finite differences on 50 probes.
    started = time.time()
    checks = suites.check_backward_diffusion(BUDGET)
    _run("criterion-3 backward diffusion vs tilt + score", checks, started, 120.0)


def test_criterion_4_renormalization_flow():
    started = time.time()
    checks = suites.check_renormalization_flow(BUDGET)
    _run("criterion-4 flow identification + potential equation", checks, started, 120.0)


def test_criterion_5_girsanov_energy():
    # Energies 2 and (1 - log 2)/2 within 5 percent relative.
    started = time.time()
    checks = suites.check_girsanov_energy(BUDGET)
    assert abs(0.5 * (1.0 - math.log(2.0)) - 0.15342640972002736) < 1e-15
    _run("criterion-5 drift energy equals Gaussian KL", checks, started, 120.0)


def test_criterion_6_static_bridge():
    started = time.time()
    checks = suites.check_static_bridge(BUDGET)
    _run("criterion-6 transport/bridge objective shift + brute force", checks, started, 30.0)


def test_criterion_7_contraction():
    started = time.time()
    checks = suites.check_contraction(BUDGET)
    _run("criterion-7 chain-law contraction", checks, started, 60.0)


def test_criterion_8_kernel_identity():
    started = time.time()
    checks = suites.check_kernel_identity(BUDGET)
    _run("criterion-8 two-stage kernel identity", checks, started, 60.0)


def test_criterion_9_stability_and_reduction():
    started = time.time()
    checks = suites.check_stability_and_reduction(BUDGET)
    _run("criterion-9 entropic stability + control reduction", checks, started, 30.0)


def test_criterion_10_lsi_schedules():
    started = time.time()
    checks = suites.check_lsi_schedules(BUDGET)
    _run("criterion-10 constant-schedule identities", checks, started, 10.0)
