import math

import numpy as np
import pytest

from bhwave import (
    DomainError,
    GeometryParams,
    amplitude_weight,
    background_tables,
    critical_exponents,
    lapse,
    lifespan_law,
    ode_blowup_bound,
    profiles,
    reduced_potential,
    tortoise,
    tortoise_gap,
    tortoise_inverse,
)

P3 = GeometryParams(M=1.0, n=3)
P5 = GeometryParams(M=1.0, n=5)


class TestParams:
    def test_defaults_valid(self):
        GeometryParams()

    @pytest.mark.parametrize("kw", [
        dict(M=0.0), dict(M=-1.0), dict(n=2), dict(n=3.5),
        dict(mu1=-0.1), dict(mu2=-0.1), dict(beta=1.0), dict(beta=0.5),
        dict(gamma=2.0),
    ])
    def test_invalid_rejected(self, kw):
        with pytest.raises(DomainError):
            GeometryParams(**kw)


class TestLapse:
    def test_half_at_4m(self):
        F, dF = lapse(P3, 4.0)
        assert F == 0.5
        assert dF == 2.0 / 16.0

    def test_asymptotically_flat(self):
        F, _ = lapse(P3, 1e14)
        assert abs(F - 1.0) < 1e-13

    def test_near_horizon_extended_precision(self):
        # frozen from a 50-digit evaluation of 1 - 2/(2 + 1e-8)
        F, _ = lapse(P3, 2.0 + 1e-8)
        assert F == pytest.approx(4.999999975000000125e-9, rel=1e-12)

    def test_inside_horizon_rejected(self):
        with pytest.raises(DomainError):
            lapse(P3, 2.0)
        with pytest.raises(DomainError):
            lapse(P3, np.array([3.0, 1.5]))


class TestTortoise:
    def test_log_vanishes_at_three(self):
        assert tortoise(P3, 3.0) == 3.0

    def test_at_four(self):
        assert tortoise(P3, 4.0) == pytest.approx(5.3862943611198906, rel=1e-15)

    def test_near_horizon(self):
        # the input radius itself is quantized at ulp(2) = 4.4e-16, which moves
        # s by up to 2*ulp/(r - 2M) ~ 1e-11; the frozen constant uses exact e^-10
        assert tortoise(P3, 2.0 + math.exp(-10.0)) == pytest.approx(
            -17.999954600070238, abs=2e-11)

    def test_strictly_increasing(self):
        r = np.geomspace(2.0 + 1e-10, 1e7, 4001)
        s = tortoise(P3, r)
        assert np.all(np.diff(s) > 0)

    def test_inverse_trivial_point(self):
        assert tortoise_inverse(P3, 3.0) == pytest.approx(3.0, rel=1e-15)

    def test_inverse_near_horizon_asymptote(self):
        # r - 2M ~ exp((s - 2M)/2M) deep in the tail
        gap = tortoise_gap(P3, -40.0)
        assert gap == pytest.approx(math.exp(-21.0), rel=1e-6)
        r = tortoise_inverse(P3, -40.0)
        assert r > 2.0
        assert tortoise(P3, r) == pytest.approx(-40.0, abs=2e-5)

    def test_inverse_far_field(self):
        s = 1e6
        r = tortoise_inverse(P3, s)
        assert tortoise(P3, r) == pytest.approx(s, rel=1e-12)
        assert r == pytest.approx(s - 2.0 * math.log(s), rel=1e-4)

    def test_forward_roundtrip_moderate(self):
        # the image of the double-precision forward map is quantized by
        # ~2M*ulp(2M)/(r-2M) near the horizon; 1e-12 relative holds where
        # that spacing allows (s >= about -15 at M = 1)
        for s in (-15.0, -5.0, 0.0, 3.0, 50.0, 1e4):
            assert tortoise(P3, tortoise_inverse(P3, s)) == pytest.approx(
                s if s else 0.0, rel=1e-12, abs=1e-12)

    def test_forward_roundtrip_deep_tail_quantized(self):
        for s in (-30.0, -40.0, -60.0):
            gap = tortoise_gap(P3, s)
            quantum = 2.0 * np.spacing(2.0) / gap
            err = abs(tortoise(P3, tortoise_inverse(P3, s)) - s)
            assert err <= max(quantum, 1e-12 * abs(s))

    def test_roundtrip_from_radius(self):
        r = np.geomspace(2.0 + 1e-12, 1e8, 10_000)
        s = tortoise(P3, r)
        s2 = tortoise(P3, tortoise_inverse(P3, s))
        assert np.max(np.abs(s2 - s) / (1.0 + np.abs(s))) <= 1e-10

    def test_inverse_monotone(self):
        # strictly increasing wherever distinct radii are representable,
        # never decreasing anywhere
        s = np.linspace(-30.0, 1e5, 3001)
        assert np.all(np.diff(tortoise_inverse(P3, s)) > 0)
        s_deep = np.linspace(-1000.0, 0.0, 500)
        assert np.all(np.diff(tortoise_inverse(P3, s_deep)) >= 0)
        # the log-domain gap is strictly increasing through the whole tail
        assert np.all(np.diff(tortoise_gap(P3, s_deep)) > 0)

    def test_inverse_rejects_nonfinite(self):
        with pytest.raises(DomainError):
            tortoise_inverse(P3, math.inf)

    def test_mass_scaling_regimes(self):
        # (r - 2M)/exp(s/2M) stays in a narrow band below s = 4M, and s ~ r far out
        params = GeometryParams(M=1.0, n=3)
        s = np.linspace(-300.0, 4.0, 500)
        gap = tortoise_gap(params, s)
        ratio = gap / np.exp(s / 2.0)
        assert np.max(ratio) / np.min(ratio) < 10.0
        s_far = np.geomspace(1e4, 1e8, 50)
        r_far = tortoise_inverse(params, s_far)
        assert np.all(s_far / r_far > 0.99) and np.all(s_far / r_far < 1.01)


class TestPotentialAndWeights:
    def test_n3_closed_form(self):
        # the curvature quadratic vanishes at n = 3, leaving 2MF/r^3
        s = np.linspace(-50.0, 1e4, 2000)
        tab = background_tables(P3, s)
        direct = 2.0 * tab["F"] / tab["r"] ** 3
        assert np.max(np.abs(tab["Q"] - direct)) <= 1e-14

    def test_horizon_limit(self):
        assert reduced_potential(P3, -1e6) == 0.0

    def test_n5_value_at_four(self):
        s4 = tortoise(P5, 4.0)
        assert reduced_potential(P5, s4) == pytest.approx(0.0625, rel=1e-13)

    def test_n5_value_sympy_oracle(self):
        import sympy

        r, M = sympy.symbols("r M", positive=True)
        n = 5
        F = 1 - 2 * M / r
        Q = (n**2 - 4 * n + 3) * F**2 / (4 * r**2) + (n - 1) * M * F / r**3
        expected = float(Q.subs({r: 4, M: 1}))
        s4 = tortoise(P5, 4.0)
        assert reduced_potential(P5, s4) == pytest.approx(expected, rel=1e-13)

    def test_nonnegative_and_decaying(self):
        params = GeometryParams(M=1.0, n=7, mu2=1.0, gamma=2.5)
        s = np.concatenate([np.linspace(-100, 100, 1001), [1e6, -1e6]])
        Q = reduced_potential(params, s)
        assert np.all(Q >= 0.0)
        assert abs(reduced_potential(params, 1e6)) < 1e-8
        assert abs(reduced_potential(params, -1e6)) < 1e-8

    def test_amplitude_weight(self):
        assert amplitude_weight(P3, 3.0) == pytest.approx(1.0 / 3.0, rel=1e-14)
        assert amplitude_weight(P5, 3.0) == pytest.approx(1.0 / 9.0, rel=1e-14)
        assert amplitude_weight(P3, -40.0) == pytest.approx(0.5, rel=1e-9)

    def test_profiles(self):
        D, V = profiles(GeometryParams(mu1=0.0, mu2=0.0), 5.0)
        assert D == 0.0 and V == 0.0
        D, _ = profiles(GeometryParams(mu1=1.0, beta=2.0), 10.0)
        assert D == pytest.approx(0.01, rel=1e-15)
        _, V = profiles(GeometryParams(mu2=1.0, gamma=2.5), 4.0)
        assert V == pytest.approx(math.exp(-2.5 * math.log(4.0)), rel=1e-14)
        assert V == pytest.approx(1.0 / 32.0, rel=1e-14)
        with pytest.raises(DomainError):
            profiles(P3, 1.9)


class TestExponents:
    def test_strauss_n3(self):
        assert critical_exponents(3).p_S == pytest.approx(1.0 + math.sqrt(2.0), rel=1e-15)

    def test_glassey_n3(self):
        assert critical_exponents(3).p_G == 2.0

    def test_strauss_n4(self):
        assert critical_exponents(4).p_S == pytest.approx(2.0, abs=1e-14)

    @pytest.mark.parametrize("n", range(3, 11))
    def test_root_property_and_ordering(self, n):
        ce = critical_exponents(n)
        assert abs(ce.gamma(ce.p_S)) <= 1e-12
        assert 1.0 < ce.p_G <= ce.p_S


class TestLifespanLaw:
    def test_u_first_branch(self):
        law = lifespan_law(3, 1.5, "u")
        assert law.kind == "polynomial" and law.exponent == pytest.approx(1.0)

    def test_u_second_branch(self):
        law = lifespan_law(3, 2.0, "u")
        assert law.kind == "polynomial" and law.exponent == pytest.approx(2.0)

    def test_u_critical_requires_no_potential(self):
        p_s = critical_exponents(3).p_S
        law = lifespan_law(3, p_s, "u", V_zero=True)
        assert law.kind == "exponential"
        assert law.exponent == pytest.approx(p_s * (p_s - 1.0))
        with pytest.raises(DomainError):
            lifespan_law(3, p_s, "u", V_zero=False)

    def test_u_supercritical_rejected(self):
        with pytest.raises(DomainError):
            lifespan_law(3, 2.5, "u")

    def test_ut_branches(self):
        law = lifespan_law(3, 1.5, "ut")
        assert law.kind == "polynomial" and law.exponent == pytest.approx(1.0)
        law = lifespan_law(3, 2.0, "ut")
        assert law.kind == "exponential" and law.exponent == pytest.approx(1.0)
        with pytest.raises(DomainError):
            lifespan_law(3, 2.2, "ut")

    def test_subunit_power_rejected(self):
        with pytest.raises(DomainError):
            lifespan_law(3, 1.0, "u")

    def test_calibration_roundtrip(self):
        law = lifespan_law(3, 1.4, "u")
        C = law.calibrate(0.5, 12.0)
        assert law.bound(0.5, C) == pytest.approx(12.0, rel=1e-14)


class TestOdeBound:
    def test_unit_delta(self):
        assert ode_blowup_bound(1.0, 2.0, 1.5).value == pytest.approx(math.e)

    def test_log_value_exponent_one(self):
        assert ode_blowup_bound(0.01, 2.0, 2.0).log_value == pytest.approx(100.0)

    def test_log_value_case(self):
        # (p1-1)/(p1-p2+1) = 1 at (3, 2); 0.04^-1 = 25
        assert ode_blowup_bound(0.04, 3.0, 2.0).log_value == pytest.approx(25.0)

    def test_rejects_bad_exponents(self):
        with pytest.raises(DomainError):
            ode_blowup_bound(0.1, 2.0, 3.0)
        with pytest.raises(DomainError):
            ode_blowup_bound(-1.0, 2.0, 1.5)
