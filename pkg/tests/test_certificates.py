import math

import numpy as np
import pytest

from bhwave import (
    DomainError,
    GeometryParams,
    InsufficientSnapshotsError,
    glassey_monitor,
    initial_functionals,
    make_cutoffs,
    make_grid,
    make_initial_data,
    run,
    smooth_step,
    solution_functionals,
    solve_exp_mode,
)

P3 = GeometryParams(M=1.0, n=3)


class TestSmoothStep:
    def test_plateaus_exact(self):
        assert smooth_step(-0.5) == 0.0
        assert smooth_step(0.0) == 0.0
        assert smooth_step(1.0) == 1.0
        assert smooth_step(2.0) == 1.0

    def test_monotone(self):
        x = np.linspace(-0.5, 1.5, 2001)
        assert np.all(np.diff(smooth_step(x)) >= 0.0)

    def test_derivatives_match_finite_differences(self):
        x = np.linspace(0.05, 0.95, 19)
        h = 1e-6
        d1_fd = (smooth_step(x + h) - smooth_step(x - h)) / (2 * h)
        assert np.max(np.abs(smooth_step(x, 1) - d1_fd)) < 1e-7
        d2_fd = (smooth_step(x + h) - 2 * smooth_step(x) + smooth_step(x - h)) / h**2
        assert np.max(np.abs(smooth_step(x, 2) - d2_fd)) < 1e-4

    def test_flat_at_endpoints(self):
        # the first three derivatives tend to zero at both transition ends
        for x0 in (0.0, 1.0):
            for d in (1, 2):
                vals = [abs(smooth_step(x0 + sgn * 1e-4, d)) for sgn in (-1, 1)]
                assert max(vals) < 1e-3
        h = 1e-4
        x = np.array([h, 1.0 - h])
        d3 = (smooth_step(x + h, 2) - smooth_step(x - h, 2)) / (2 * h)
        assert np.max(np.abs(d3)) < 1e-2


class TestCutoffs:
    def test_plateau_values(self):
        cut = make_cutoffs(12.0, 2.0)
        assert cut.eta(12.0 / 4.0) == 1.0       # t = T/4 < T/3
        assert cut.eta(12.0 / 3.0) == 1.0
        assert cut.eta(12.0) == 0.0
        assert cut.eta(13.0) == 0.0
        assert cut.alpha(12.0 / 8.0) == 0.0
        assert cut.alpha(12.0 / 4.0) == 1.0
        assert cut.chi(0.5 * 12.0) == 1.0
        assert cut.chi(0.75 * 12.0) == 1.0
        assert cut.chi(0.9 * 12.0) == 0.0       # 0.9 > 5/6

    def test_eta_nonincreasing(self):
        cut = make_cutoffs(7.0, 1.5)
        t = np.linspace(0.0, 8.0, 1000)
        assert np.all(np.diff(cut.eta(t)) <= 1e-15)
        assert np.all(cut.eta(t, 1) <= 1e-15)

    def test_powered_values_and_derivatives(self):
        cut = make_cutoffs(10.0, 2.0)
        t = np.linspace(0.1, 11.0, 500)
        assert np.allclose(cut.eta_pow(t), cut.eta(t) ** cut.power)
        h = 1e-6
        d_fd = (cut.eta_pow(t + h) - cut.eta_pow(t - h)) / (2 * h)
        assert np.max(np.abs(cut.eta_pow(t, 1) - d_fd)) < 1e-6

    def test_derivative_loss_constant_finite(self):
        # |d/dt eta_T^{2p'}| <= (C/T) eta_T^{2p'-2} with finite measured C
        cut = make_cutoffs(50.0, 2.0)
        t = np.linspace(50.0 / 3.0 + 1e-9, 50.0 - 1e-9, 20_000)
        lhs = np.abs(cut.eta_pow(t, 1))
        rhs = cut.eta(t) ** (cut.power - 2.0) / 50.0
        C = np.max(lhs / rhs)
        assert np.isfinite(C)
        assert C > 0.0

    def test_invalid_args(self):
        with pytest.raises(DomainError):
            make_cutoffs(0.0, 2.0)
        with pytest.raises(DomainError):
            make_cutoffs(1.0, 1.0)


class TestInitialFunctionals:
    def test_zero_data(self):
        data = make_initial_data(0.0, R=2.0)
        reps = initial_functionals(P3, data, 6.0, 1.5)
        # per-unit-amplitude values are finite; scaled by eps = 0 they vanish
        for name in ("C1", "C2", "C3"):
            assert np.isfinite(reps[name].value)
            assert reps[name].value * data.epsilon == 0.0

    def test_positive_for_nonnegative_data(self):
        data = make_initial_data(1.0, R=2.0)
        reps = initial_functionals(P3, data, 6.0, 1.5)
        assert reps["C1"].value > 0.0
        assert reps["C2"].value > 0.0
        assert reps["C2"].value == reps["C1"].value

    def test_c3_positive_for_large_lambda0(self):
        data = make_initial_data(1.0, R=2.0)
        lam0 = 1.1 * 4.0 / (1.0 * 1.5 * 0.5)
        assert initial_functionals(P3, data, lam0, 1.5)["C3"].value > 0.0

    def test_c3_sign_flips_for_small_lambda0(self):
        # with the unsafe override, a tiny eigenvalue lets the potential
        # term win on suitable data (f-heavy, no time derivative)
        data = make_initial_data(1.0, R=2.0, g_amp=0.0)
        big = initial_functionals(P3, data, 5.0, 1.5,
                                  allow_unsafe_lambda0=True)["C3"].value
        small = initial_functionals(P3, data, 0.05, 1.5,
                                    allow_unsafe_lambda0=True)["C3"].value
        assert big > 0.0
        assert small < big

    def test_lambda0_bound_enforced(self):
        data = make_initial_data(1.0, R=2.0)
        with pytest.raises(DomainError):
            initial_functionals(P3, data, 1.0, 1.5)
        initial_functionals(P3, data, 1.0, 1.5, allow_unsafe_lambda0=True)

    def test_quadrature_tolerance_metadata(self):
        data = make_initial_data(1.0, R=2.0)
        rep = initial_functionals(P3, data, 6.0, 1.5)["C3"]
        assert rep.metadata["rel_err"] < 1e-9


def _snapshot_run(eps=0.125, p=1.5, kind="ut", t_max=11.0, ds=0.02):
    grid = make_grid(R=2.0, t_max=t_max, ds=ds, cfl=1.0)
    data = make_initial_data(eps, R=2.0)
    return run(P3, grid, data, kind, p,
               snapshot_stride=max(1, grid.n_steps // 512))


class TestSolutionFunctionals:
    @pytest.fixture(scope="class")
    def ut_run(self):
        return _snapshot_run()

    @pytest.fixture(scope="class")
    def phi(self, ut_run):
        return solve_exp_mode(P3, 5.8667, s_max=ut_run.grid.s_hi + 1.0,
                              s_min=-60.0, ratio_ceiling=None)

    def test_zero_solution_zero_functional(self):
        grid = make_grid(R=2.0, t_max=4.0, ds=0.05, cfl=1.0)
        data = make_initial_data(0.0, R=2.0)
        res = run(P3, grid, data, "u", 2.0, snapshot_stride=1)
        cut = make_cutoffs(3.0, 2.0)
        assert solution_functionals(P3, res, cut, "L").value == 0.0

    def test_L_monotone_in_T(self, ut_run):
        values = [solution_functionals(P3, ut_run, make_cutoffs(T, 1.5), "L").value
                  for T in (4.0, 6.0, 8.0, 10.0)]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert values[0] > 0.0

    def test_additivity_exact(self, ut_run):
        cut = make_cutoffs(8.0, 1.5)
        L = solution_functionals(P3, ut_run, cut, "L").value
        Li = solution_functionals(P3, ut_run, cut, "L_inf").value
        L2 = solution_functionals(P3, ut_run, cut, "L_2M").value
        assert L == pytest.approx(Li + L2, rel=1e-12)

    def test_X_positive(self, ut_run, phi):
        cut = make_cutoffs(8.0, 1.5)
        X = solution_functionals(P3, ut_run, cut, "X", phi=phi, lambda0=5.8667)
        assert X.value > 0.0

    def test_stride_halving_convergence(self):
        # relative change of L under snapshot-stride halving < 1e-6
        grid = make_grid(R=2.0, t_max=8.0, ds=0.02, cfl=1.0)
        data = make_initial_data(0.125, R=2.0)
        vals = []
        for stride in (8, 4):
            res = run(P3, grid, data, "ut", 1.5, snapshot_stride=stride)
            cut = make_cutoffs(7.0, 1.5)
            vals.append(solution_functionals(P3, res, cut, "L").value)
        assert abs(vals[1] - vals[0]) / vals[1] < 1e-6

    def test_insufficient_snapshots(self, ut_run):
        cut = make_cutoffs(8.0, 1.5)
        with pytest.raises(InsufficientSnapshotsError):
            solution_functionals(P3, ut_run, cut, "L", min_snapshots=10**9)
        grid = make_grid(R=2.0, t_max=4.0, ds=0.05, cfl=1.0)
        res = run(P3, grid, make_initial_data(0.1, R=2.0), "u", 2.0)
        with pytest.raises(InsufficientSnapshotsError):
            solution_functionals(P3, res, cut, "L")


class TestGlasseyMonitor:
    def test_zero_X_flagged(self):
        rep = glassey_monitor([3.0, 6.0, 12.0], [0.0, 0.0, 0.0], 2.0, 0.5)
        assert rep.flagged
        assert np.all(rep.Z == 0.5)

    def test_constant_X_closed_form(self):
        T = np.geomspace(3.0, 300.0, 40)
        c = 0.7
        rep = glassey_monitor(T, np.full_like(T, c), 2.0, 0.25)
        exact = c * np.log(T / 3.0)
        assert np.max(np.abs(rep.Y - exact)) <= 1e-10
        assert not rep.flagged

    def test_running_min_positive_on_real_run(self):
        res = _snapshot_run()
        lam0 = 5.8667
        phi = solve_exp_mode(P3, lam0, s_max=res.grid.s_hi + 1.0, s_min=-60.0,
                             ratio_ceiling=None)
        unit = make_initial_data(1.0, R=2.0)
        C3 = initial_functionals(P3, unit, lam0, 1.5, phi=phi)["C3"].value
        T_grid = np.geomspace(3.0, 10.5, 8)
        X = [solution_functionals(P3, res, make_cutoffs(T, 1.5), "X",
                                  phi=phi, lambda0=lam0).value for T in T_grid]
        rep = glassey_monitor(T_grid, X, 1.5, C3 * 0.125)
        assert rep.final_min is not None and rep.final_min > 0.0

    def test_bad_grid_rejected(self):
        with pytest.raises(DomainError):
            glassey_monitor([3.0, 2.0], [1.0, 1.0], 2.0, 0.1)
