import math

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from bhwave import (
    CertificateError,
    DomainError,
    GeometryParams,
    ModeFamily,
    build_lambda_average,
    critical_exponents,
    radial_mode,
    solve_exp_mode,
    solve_static_weight,
    tortoise_gap,
    verify_lambda_average,
)

P3 = GeometryParams(M=1.0, n=3)
P3V = GeometryParams(M=1.0, n=3, mu2=1.0, gamma=2.5)


class TestStaticWeight:
    def test_no_potential_is_one(self):
        w = solve_static_weight(P3, 1e6)
        assert np.all(w.values == 1.0)
        assert np.all(w.dvalues == 0.0)

    def test_bounded_and_monotone(self):
        w = solve_static_weight(P3V, 1e6)
        assert w.values[0] == 1.0
        assert w.certificate["monotone"]
        assert np.isfinite(w.certificate["max"])
        # the plateau is approached: the last decade moves the value little
        assert abs(w(1e6) / w(1e5) - 1.0) < 2e-2

    def test_slope_decay(self):
        # r^{1.2} * dw stays bounded for gamma = 2.5 (decay with margin delta = 0.2)
        w = solve_static_weight(P3V, 1e6)
        r = np.geomspace(3.0, 1e6, 200)
        weighted = r**1.2 * np.abs(w.derivative(r))
        assert np.max(weighted) < np.inf
        # and actually decays beyond its early maximum
        assert weighted[-1] < 0.5 * np.max(weighted)

    def test_r_slope_bounded(self):
        w = solve_static_weight(P3V, 1e6)
        assert w.certificate["max_r_slope"] < 10.0

    def test_horizon_slope_matches_regularity(self):
        # the degenerate point forces w'(2M) = 2M V(2M) w(2M)
        w = solve_static_weight(P3V, 100.0)
        expected = 2.0 * P3V.mu2 * 2.0 ** (-P3V.gamma)
        assert w.derivative(2.0) == pytest.approx(expected, rel=1e-12)

    def test_rejects_interior(self):
        with pytest.raises(DomainError):
            solve_static_weight(P3V, 1.0)


class TestExpMode:
    def test_stub_free_equation_exact(self):
        phi = solve_exp_mode(P3, 0.7, s_max=40.0, s_min=-20.0,
                             perturbation=lambda s: 0.0)
        assert np.max(np.abs(phi.values - 1.0)) <= 1e-10
        assert np.max(np.abs(phi.dvalues)) <= 1e-10

    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("mu1", [0.0, 1.0])
    def test_band_and_plateau(self, lam, mu1):
        params = GeometryParams(M=1.0, n=3, mu1=mu1, beta=2.0)
        phi = solve_exp_mode(params, lam, s_max=200.0, s_min=-60.0)
        cert = phi.certificate
        assert cert["c1"] > 0.0
        assert cert["ratio"] <= 100.0
        assert cert["monotone"]
        # plateau: the normalized mode has flattened by the far end (the
        # damped case keeps creeping like integral of D*F/2 ~ mu1/(2s))
        assert abs(phi(200.0) / phi(100.0) - 1.0) < 1e-2

    def test_certificate_ceiling_enforced(self):
        with pytest.raises(CertificateError):
            solve_exp_mode(P3, 1.0, s_max=200.0, s_min=-60.0, ratio_ceiling=1.01)

    def test_rejects_bad_lambda(self):
        with pytest.raises(DomainError):
            solve_exp_mode(P3, -1.0, s_max=10.0)


class TestRadialMode:
    def test_flat_stub_closed_form(self):
        # with a zero perturbation and the identity coordinate map,
        # psi = s^{-(n-1)/2} exp(lam s)
        lam = 0.8
        phi = solve_exp_mode(P3, lam, s_max=30.0, s_min=1.0,
                             perturbation=lambda s: 0.0)
        psi = radial_mode(P3, lam, phi,
                          coordinate_map=lambda s: (s, np.ones_like(s)))
        expected = phi.grid ** (-1.0) * np.exp(lam * phi.grid)
        assert np.max(np.abs(psi.values - expected) / expected) <= 1e-10

    @pytest.mark.parametrize("n", [3, 5])
    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
    def test_derivative_nonnegative(self, n, lam):
        params = GeometryParams(M=1.0, n=n)
        phi = solve_exp_mode(params, lam, s_max=200.0, s_min=-60.0)
        psi = radial_mode(params, lam, phi)
        assert psi.certificate["min_dpsi"] >= -1e-12

    def test_derivative_bound_constants(self):
        phi = solve_exp_mode(P3, 1.0, s_max=200.0, s_min=-60.0)
        psi = radial_mode(P3, 1.0, phi)
        assert np.isfinite(psi.certificate["deriv_bound_C"])
        # with V = 0 the tighter bound |psi'| <= C lam psi / F has modest C
        assert psi.certificate["deriv_bound_C_V0"] < 10.0

    def test_overflow_guard(self):
        phi = solve_exp_mode(P3, 2.0, s_max=200.0, s_min=-60.0)
        with pytest.raises(DomainError):
            radial_mode(P3, 4.0, phi.__class__(
                kind="exp_mode", coord="s", grid=np.linspace(0.0, 300.0, 10),
                values=np.ones(10), dvalues=np.zeros(10), lam=4.0, log_scaled=True))


class TestLambdaAverage:
    def test_unit_mode_order_one_closed_form(self):
        t = np.linspace(0.5, 30.0, 40)
        table = build_lambda_average(P3, 1.0, 2.0, t, [0.0], unit_mode=True)
        exact = (1.0 - np.exp(-t)) / t
        assert np.max(np.abs(table.values[:, 0] - exact) / exact) <= 1e-10

    def test_unit_mode_half_order_at_zero(self):
        table = build_lambda_average(P3, 0.5, 2.0, [0.0], [0.0], unit_mode=True)
        assert table.values[0, 0] == pytest.approx(2.0, abs=1e-10)

    def test_rejects_nonpositive_order(self):
        with pytest.raises(DomainError):
            build_lambda_average(P3, 0.0, 2.0, [1.0], [7.0])

    def test_brute_force_trapezoid_oracle(self):
        # critical-order average at one (t, s) point against a 1e6-node
        # trapezoid in the substituted variable, with the mode interpolated
        # in lambda from a dense batched solve
        p_s = critical_exponents(3).p_S
        a = 1.0 - 1.0 / p_s
        t_pt, s_pt = 100.0, 50.0
        table = build_lambda_average(P3, a, 2.0, [t_pt], [s_pt])
        fam = ModeFamily(P3, s_top=s_pt + 1.0)
        lam_grid = np.concatenate([[1e-12], np.geomspace(1e-9, 1.0, 600)])
        W, _ = fam.eval_batch(lam_grid, np.array([s_pt - 1e-9, s_pt]))
        spline = CubicSpline(lam_grid, W[:, 1])
        tau = np.linspace(0.0, 1.0, 1_000_001)
        lam = tau ** (1.0 / a)
        integrand = spline(lam) * np.exp(lam * (s_pt - t_pt))
        gap = tortoise_gap(P3, s_pt)
        rfac = (2.0 + gap) ** (-1.0)
        oracle = np.trapezoid(integrand, tau) / a * rfac
        assert table.values[0, 0] == pytest.approx(oracle, rel=1e-6)

    def test_time_derivative_identity_independent_builds(self):
        t = np.geomspace(10.0, 200.0, 7)
        s = np.linspace(4.0 + math.e, 150.0, 12)
        fam = ModeFamily(P3, s_top=float(np.max(s)) + 1.0)
        tab_a = build_lambda_average(P3, 0.5, 2.0, t, s, family=fam)
        tab_b = build_lambda_average(P3, 1.5, 2.0, t, s, family=fam)
        ok = np.isfinite(tab_a.values) & np.isfinite(tab_b.values)
        rel = np.abs(-tab_a.dt_values[ok] - tab_b.values[ok]) / np.abs(tab_b.values[ok])
        assert np.max(rel) <= 1e-7

    def test_positivity(self):
        t = np.geomspace(10.0, 100.0, 5)
        s = np.linspace(4.0 + math.e, 80.0, 8)
        table = build_lambda_average(P3, 0.5, 2.0, t, s)
        vals = table.values[np.isfinite(table.values)]
        assert np.all(vals > 0.0)


class TestVerifyLambdaAverage:
    def _table(self, params, a, t_hi=100.0):
        t = np.geomspace(10.0, t_hi, 8)
        s = np.linspace(4.0 * params.M + math.e, t_hi + 2.0, 14)
        return build_lambda_average(params, a, 2.0, t, s)

    def test_band_n3(self):
        table = self._table(P3, 0.5)
        report = verify_lambda_average(table, P3)
        assert report.passed
        assert report.data["band_ratio"] < 50.0
        assert np.isfinite(report.data["deriv_constant"])

    def test_band_n5(self):
        params = GeometryParams(M=1.0, n=5)
        table = self._table(params, 1.5)
        report = verify_lambda_average(table, params)
        assert report.passed
        assert np.isfinite(report.data["band_ratio"])

    def test_order_hypothesis_enforced(self):
        table = self._table(P3, 0.5)
        bad = build_lambda_average(P3, 1.2, 2.0, table.t_grid, table.s_grid)
        with pytest.raises(DomainError):
            verify_lambda_average(bad, P3)  # 1.2 >= (n-1)/2 = 1 for n = 3
