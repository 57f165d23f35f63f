import numpy as np
import pytest

from fusebound.simulate import (DgpConfig, analytic_panel3_bounds, draw_dgp, draw_population,
                                oracle_identified_set, pacini_ratio_study, pacini_ratio_theory,
                                population_identified_set, rng_for, run_monte_carlo,
                                true_coefficient)


def test_defaults_match_design():
    c = DgpConfig()
    assert (c.a1, c.a2, c.d1, c.sigma_eta, c.b1, c.b2, c.d2, c.sigma_eps) == (1, 10, 1, 1, 1, 1, 0.25, 4)
    assert c.m == c.n


def test_draws_are_deterministic_and_shaped():
    cfg = DgpConfig.panel(3, n=50, m=70, seed=9)
    a1, a2 = draw_dgp(cfg, 4)
    b1, b2 = draw_dgp(cfg, 4)
    assert np.array_equal(a1.y, b1.y) and np.array_equal(a2.Xo, b2.Xo)
    assert a1.W.shape == (50, 2) and a2.W.shape == (70, 2) and a2.Xo.shape == (70, 1)
    c1, _ = draw_dgp(cfg, 5)
    assert not np.array_equal(a1.y, c1.y)
    assert draw_dgp(DgpConfig.panel(1, n=10), 0)[0].W.shape == (10, 0)


def test_true_coefficients_match_large_sample_ols():
    assert true_coefficient(DgpConfig.panel(1)) == pytest.approx(1.1036, abs=5e-4)
    assert true_coefficient(DgpConfig.panel(2)) == pytest.approx(1.0195, abs=5e-4)
    pop = draw_population(DgpConfig(), 10 ** 6, rng_for(1, 0))
    X = np.column_stack([pop["Xo"], pop["Xc"], np.ones(10 ** 6)])
    b = np.linalg.lstsq(X, pop["Y"], rcond=None)[0]
    assert b[0] == pytest.approx(true_coefficient(DgpConfig.panel(2)), abs=0.01)


def test_noise_free_design_is_point_identified():
    # no noise and no heteroskedasticity: X_o is a deterministic function of W_a
    cfg = DgpConfig.panel(3, sigma_eta=0.0, sigma_eps=0.0, d1=0.0, d2=0.0, b2=0.0, n=400)
    lo, hi = analytic_panel3_bounds(cfg)
    assert hi - lo == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("panel", [1, 2])
def test_oracle_agrees_with_quadrature_within_mc_error(panel):
    cfg = DgpConfig.panel(panel)
    N = 2 * 10 ** 5
    o = oracle_identified_set(cfg, N_big=N, seed=5)
    lo, hi = population_identified_set(cfg)
    # standard error of the plug-in at N, from the influence-function variance
    se = 0.053 * np.sqrt(800 / N) * np.sqrt(2)
    assert abs(o.lower - lo) <= 3 * se and abs(o.upper - hi) <= 3 * se


def test_panel3_closed_form_against_binned_oracle():
    cfg = DgpConfig.panel(3)
    o = oracle_identified_set(cfg, N_big=4 * 10 ** 5, seed=2, bins=100)
    lo, hi = o.analytic
    assert (lo, hi) == pytest.approx((0.196, 1.405), abs=1e-3)
    se = 0.07 * np.sqrt(800 / 4e5) * np.sqrt(2)
    assert abs(o.lower - lo) <= 3 * se + 2e-3 and abs(o.upper - hi) <= 3 * se + 2e-3


def test_population_sets_match_reference_values():
    lo, hi = population_identified_set(DgpConfig.panel(1))
    assert (lo, hi) == pytest.approx((-1.624, 1.626), abs=2e-3)
    lo, hi = population_identified_set(DgpConfig.panel(2))
    assert (lo, hi) == pytest.approx((-1.583, 1.585), abs=2e-3)


def test_quadrature_reproduces_panel3_formula_when_conditioning_is_trivial():
    # with d1 = 0 the model is homoskedastic and X_c-only conditioning is sharp
    cfg = DgpConfig.panel(2, d1=0.0, d2=0.0)
    lo, hi = population_identified_set(cfg)
    # eta_d and nu_Y are then linear in W_a plus Gaussian noise
    assert lo < 0 < hi


def test_monte_carlo_report_and_worker_invariance():
    cfg = DgpConfig.panel(3, n=120, seed=3)
    a = run_monte_carlo(cfg, 6, workers=1)
    b = run_monte_carlo(cfg, 6, workers=2)
    for k in ("avg_lower", "avg_upper", "avg_ci_lower", "avg_ci_upper", "min_coverage",
              "excess_length"):
        assert getattr(a, k) == getattr(b, k)
    assert a.replications == 6 and a.failures == 0 and a.ci_method == "stoye"
    assert len(a.draws["grid"]) == 41
    assert a.draws["grid"][0] == a.true_lower and a.draws["grid"][-1] == a.true_upper
    cov = a.draws["coverage"]
    assert a.min_coverage == cov.min() and 0 <= cov.min() <= 1
    row = a.row()
    assert "draws" not in row and row["n"] == 120


def test_monte_carlo_rejects_zero_replications():
    with pytest.raises(ValueError):
        run_monte_carlo(DgpConfig.panel(1, n=50), 0)


def test_pacini_ratio_study_against_theory():
    rows = pacini_ratio_study([0.0, 0.5, 0.9], N=20000, seed=1)
    assert [r["rho"] for r in rows] == [0.0, 0.5, 0.9]
    for r in rows:
        assert r["ratio"] == pytest.approx(pacini_ratio_theory(r["rho"]), rel=0.05)
        assert r["ratio"] >= 1 - 1e-12
    with pytest.raises(ValueError):
        pacini_ratio_study([1.0], N=100)


def test_variance_tracks_replication_spread():
    cfg = DgpConfig.panel(1, n=600, seed=4)
    r = run_monte_carlo(cfg, 150)
    sd = r.draws["upper"].std(ddof=1)
    assert r.draws["se_upper"].mean() == pytest.approx(sd, rel=0.25)
