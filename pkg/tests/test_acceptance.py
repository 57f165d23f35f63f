"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``C<k> PASS|FAIL`` line to the terminal, then asserts.
Run on its own with ``pytest tests/test_acceptance.py -v``.
"""

import itertools
import os
import time

import numpy as np
import pytest

from fusebound.bounds import bounds_no_common, bounds_with_common, pacini_bounds
from fusebound.core_types import OutcomeSample, ProblemSpec, RegressorSample
from fusebound.grouping import grouping_from_labels
from fusebound.otcore import quantile_inner_product, wasserstein2
from fusebound.pipeline import estimate
from fusebound.regress import fwl_residualize
from fusebound.simulate import (DgpConfig, draw_dgp, gaussian_auxiliary_samples,
                                oracle_identified_set, pacini_ratio_study, problem_for,
                                run_monte_carlo)


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nC{k} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def test_c01_coupling_oracle(report):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 7))
        a = rng.standard_normal(n)
        b = rng.standard_normal(n)
        brute = max(np.dot(a, b[list(p)]) for p in itertools.permutations(range(n))) / n
        worst = max(worst, abs(quantile_inner_product(a, b) - brute))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 10
    assert report(1, ok, f"max |QIP - brute force| = {worst:.2e} over 500 instances, {dt:.2f} s")


def test_c02_w2_identity(report):
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(1000):
        na, nb = rng.integers(1, 60, size=2)
        while nb == na:
            nb = rng.integers(1, 60)
        a = rng.normal(rng.normal(), rng.uniform(0.1, 3), na)
        b = rng.normal(rng.normal(), rng.uniform(0.1, 3), nb)
        lhs = quantile_inner_product(a, b)
        rhs = 0.5 * (np.mean(a ** 2) + np.mean(b ** 2) - wasserstein2(a, b) ** 2)
        scale = max(abs(lhs), np.mean(a ** 2), np.mean(b ** 2))
        worst = max(worst, abs(lhs - rhs) / scale)
    ok = worst <= 1e-10
    assert report(2, ok, f"max relative gap = {worst:.2e} over 1000 unequal-size pairs")


@pytest.mark.slow
@pytest.mark.parametrize("panel,target", [(1, (-1.624, 1.626)), (2, (-1.583, 1.585)),
                                          (3, (0.196, 1.405))])
def test_c03_identified_sets(report, panel, target):
    t0 = time.perf_counter()
    o = oracle_identified_set(DgpConfig.panel(panel), N_big=10 ** 6)
    dt = time.perf_counter() - t0
    ok = abs(o.lower - target[0]) <= 0.02 and abs(o.upper - target[1]) <= 0.02 and dt < 60
    assert report(3, ok, f"panel {panel}: [{o.lower:.4f}, {o.upper:.4f}] vs {list(target)}, "
                         f"{dt:.1f} s")


@pytest.mark.slow
@pytest.mark.parametrize("panel", [1, 2, 3])
def test_c04_coverage(report, panel):
    r = run_monte_carlo(DgpConfig.panel(panel, n=800, seed=400 + panel), 1000)
    ok = 0.92 <= r.min_coverage <= 0.975 and r.wall_time < 900
    assert report(4, ok, f"panel {panel}: min coverage {r.min_coverage:.3f} "
                         f"(bounds [{r.avg_lower:.3f}, {r.avg_upper:.3f}], "
                         f"CI [{r.avg_ci_lower:.3f}, {r.avg_ci_upper:.3f}]), {r.wall_time:.1f} s")


@pytest.mark.slow
@pytest.mark.parametrize("panel", [1, 2, 3])
def test_c05_excess_length_decay(report, panel):
    a = run_monte_carlo(DgpConfig.panel(panel, n=1200, seed=510 + panel), 500)
    b = run_monte_carlo(DgpConfig.panel(panel, n=4800, seed=520 + panel), 500)
    ratio = b.excess_length / a.excess_length
    ok = a.excess_length > 0 and ratio < 0.55
    assert report(5, ok, f"panel {panel}: excess length {a.excess_length:.4f} -> "
                         f"{b.excess_length:.4f}, ratio {ratio:.3f}")


@pytest.mark.slow
def test_c06_k_sensitivity(report):
    cfg = DgpConfig.panel(3, n=1200, seed=600)
    k3 = run_monte_carlo(cfg, 500, K_override=3)
    k100 = run_monte_carlo(cfg, 500, K_override=100)
    ok = k3.min_coverage > 0.93 and k100.min_coverage < 0.80
    assert report(6, ok, f"coverage K=3 {k3.min_coverage:.3f}, K=100 {k100.min_coverage:.3f}")


def test_c07_pacini_ratio(report):
    rows = pacini_ratio_study([0.0, 0.9], N=10 ** 5, seed=700)
    r0, r9 = rows[0]["ratio"], rows[1]["ratio"]
    ok = 0.95 <= r0 <= 1.05 and r9 > 4
    assert report(7, ok, f"R(0) = {r0:.4f}, R(0.9) = {r9:.3f}")


def test_c08_gaussian_auxiliary(report):
    s1, s2, spec = gaussian_auxiliary_samples(0.8, 0.8, 10 ** 5, seed=800)
    g = grouping_from_labels(np.zeros(s1.n), np.zeros(s2.m))
    est = bounds_with_common(s1, s2, spec, g)
    ok = abs(est.lower - 0.28) <= 0.02 and abs(est.upper - 1.00) <= 0.02
    assert report(8, ok, f"[{est.lower:.4f}, {est.upper:.4f}] vs [0.28, 1.00]")


@pytest.mark.slow
def test_c09_variance_calibration(report):
    r = run_monte_carlo(DgpConfig.panel(1, n=2400, seed=900), 2000)
    ratios = {}
    for side in ("lower", "upper"):
        ratios[side] = np.mean(r.draws[f"se_{side}"] ** 2) / np.var(r.draws[side], ddof=1)
    ok = all(0.85 <= v <= 1.15 for v in ratios.values())
    assert report(9, ok, f"V-hat / empirical variance: lower {ratios['lower']:.3f}, "
                         f"upper {ratios['upper']:.3f}")


def test_c10_performance(report, monkeypatch):
    cfg = DgpConfig.panel(3, n=120_000, seed=1000)
    s1, s2 = draw_dgp(cfg, 0)
    times = {}
    for workers in (1, 8):
        monkeypatch.setenv("FUSEBOUND_WORKERS", str(workers))
        t0 = time.perf_counter()
        res = estimate(s1, s2, problem_for(cfg))
        times[workers] = time.perf_counter() - t0
        assert np.isfinite(res.ci.lower) and np.isfinite(res.ci.upper)
    ok = times[1] < 120 and times[8] < 20
    assert report(10, ok, f"n = m = 120000: {times[1]:.2f} s with 1 worker, "
                          f"{times[8]:.2f} s with 8 configured ({os.cpu_count()} CPU available)")


def _random_instance(rng, common):
    n, m = int(rng.integers(20, 80)), int(rng.integers(20, 80))
    if common:
        s1 = OutcomeSample(rng.standard_normal(n), rng.standard_normal((n, 2)))
        s2 = RegressorSample(rng.standard_normal((m, 2)), rng.standard_normal((m, 2)))
        spec = ProblemSpec(rng.standard_normal(4), common_regressor_columns=(0,))
        return s1, s2, spec, lambda sp: bounds_with_common(s1, s2, sp)
    s1 = OutcomeSample(rng.standard_normal(n), None)
    s2 = RegressorSample(rng.standard_normal((m, 3)), None)
    spec = ProblemSpec(rng.standard_normal(4))
    return s1, s2, spec, lambda sp: bounds_no_common(s1, s2, sp)


def test_c11_exactness_invariants(report):
    rng = np.random.default_rng(1100)
    worst = {"scaling": 0.0, "reflection": 0.0, "basis": 0.0}
    for i in range(200):
        s1, s2, spec, est = _random_instance(rng, common=bool(i % 2))
        c = float(rng.uniform(0.1, 10))
        base = est(spec)
        scale = 1 + abs(base.lower) + abs(base.upper)
        worst["scaling"] = max(worst["scaling"],
                               abs(est(spec.with_direction(c * spec.direction)).upper
                                   - c * base.upper) / (c * scale))
        worst["reflection"] = max(worst["reflection"],
                                  abs(base.lower + est(spec.with_direction(-spec.direction)).upper)
                                  / scale)
        M = np.column_stack([spec.direction, rng.standard_normal((spec.direction.size,
                                                                  spec.direction.size - 1))])
        e0 = fwl_residualize(s2, spec).eta
        e1 = fwl_residualize(s2, spec, M=M).eta
        worst["basis"] = max(worst["basis"], np.max(np.abs(e0 - e1)) / (1 + np.max(np.abs(e0))))
    ok = all(v <= 1e-10 for v in worst.values())
    assert report(11, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
                  + " over 200 instances")


def test_c12_sharp_inside_pacini(report):
    rng = np.random.default_rng(1200)
    violations = 0
    for _ in range(200):
        n, m, p = int(rng.integers(10, 100)), int(rng.integers(10, 100)), int(rng.integers(2, 5))
        L = rng.standard_normal((p, p))
        s1 = OutcomeSample(rng.standard_exponential(n) * rng.choice([-1, 1]), None)
        s2 = RegressorSample(rng.standard_normal((m, p)) @ L, None)
        spec = ProblemSpec(rng.standard_normal(p + 1))
        sharp = bounds_no_common(s1, s2, spec)
        lo, up = pacini_bounds(s1, s2, spec)
        violations += int(up - lo < sharp.width)
    ok = violations == 0
    assert report(12, ok, f"{violations} of 200 instances with Pacini width < sharp width")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
