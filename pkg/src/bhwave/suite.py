"""Fast certificate suite behind the ``verify`` subcommand.

Runs the closed-form oracles, the test-function certificates, the stub-mode
closed forms, a reduced lambda-average band, cutoff smoothness spot checks,
and a short linear evolution.  Everything is deterministic and finishes in
well under a minute; the heavier desk-scale experiments live in the test
suite instead.
"""

from __future__ import annotations

import math

import numpy as np

from . import certificates, geometry, solver, testfuncs
from .geometry import GeometryParams


def _check(name, fn):
    try:
        data = fn()
        return {"name": name, "passed": True, "details": data}
    except Exception as exc:  # a failed certificate, not a crash of the suite
        return {"name": name, "passed": False, "details": {"error": f"{type(exc).__name__}: {exc}"}}


def _tortoise_roundtrip():
    params = GeometryParams(M=1.0, n=3)
    r = np.geomspace(2.0 + 1e-12, 1e8, 2000)
    s = geometry.tortoise(params, r)
    s2 = geometry.tortoise(params, geometry.tortoise_inverse(params, s))
    worst = float(np.max(np.abs(s2 - s) / (1.0 + np.abs(s))))
    if worst > 1e-10:
        raise AssertionError(f"round-trip error {worst:.3e} > 1e-10")
    return {"worst_scaled_error": worst}


def _critical_exponents():
    worst = 0.0
    for n in range(3, 11):
        ce = geometry.critical_exponents(n)
        worst = max(worst, abs(ce.gamma(ce.p_S)))
    if worst > 1e-12:
        raise AssertionError(f"quadratic at its root: {worst:.3e} > 1e-12")
    if geometry.critical_exponents(3).p_G != 2.0:
        raise AssertionError("p_G(3) != 2")
    return {"worst_root_residual": worst}


def _potential_identity():
    params = GeometryParams(M=1.0, n=3, mu2=0.0)
    s = np.linspace(-40.0, 200.0, 3001)
    tab = geometry.background_tables(params, s)
    direct = 2.0 * params.M * tab["F"] / tab["r"] ** 3
    worst = float(np.max(np.abs(tab["Q"] - direct)))
    if worst > 1e-14:
        raise AssertionError(f"potential identity off by {worst:.3e}")
    return {"worst_abs_error": worst}


def _mode_bands():
    out = {}
    for n in (3, 5):
        for mu1 in (0.0, 1.0):
            params = GeometryParams(M=1.0, n=n, mu1=mu1, beta=2.0)
            for lam in (0.5, 1.0, 2.0):
                phi = testfuncs.solve_exp_mode(params, lam, s_max=200.0, s_min=-60.0,
                                               ratio_ceiling=100.0)
                out[f"n{n}_mu{mu1:g}_lam{lam:g}"] = phi.certificate["ratio"]
                psi = testfuncs.radial_mode(params, lam, phi)
                if psi.certificate["min_dpsi"] < -1e-12:
                    raise AssertionError("radial mode derivative lost nonnegativity")
    return {"ratios": out}


def _stub_closed_forms():
    params = GeometryParams(M=1.0, n=3)
    lam = 0.7
    phi = testfuncs.solve_exp_mode(params, lam, s_max=40.0, s_min=-20.0,
                                   perturbation=lambda s: 0.0)
    worst_phi = float(np.max(np.abs(phi.values - 1.0)))
    t = np.linspace(0.5, 30.0, 40)
    table = testfuncs.build_lambda_average(params, 1.0, 2.0, t, [0.0], unit_mode=True)
    exact = (1.0 - np.exp(-t)) / t
    worst_b = float(np.max(np.abs(table.values[:, 0] - exact) / exact))
    half = testfuncs.build_lambda_average(params, 0.5, 2.0, [0.0], [0.0], unit_mode=True)
    err_half = abs(half.values[0, 0] - 2.0)
    if worst_phi > 1e-10 or worst_b > 1e-10 or err_half > 1e-10:
        raise AssertionError(f"stub errors {worst_phi:.2e}, {worst_b:.2e}, {err_half:.2e}")
    return {"phi_err": worst_phi, "b1_err": worst_b, "b_half_err": err_half}


def _lambda_average_band():
    params = GeometryParams(M=1.0, n=3)
    t = np.geomspace(10.0, 100.0, 8)
    s = np.linspace(4.0 + math.e, 102.0, 14)
    table = testfuncs.build_lambda_average(params, 0.5, 2.0, t, s)
    report = testfuncs.verify_lambda_average(table, params)
    if not report.passed:
        raise AssertionError(report.message)
    nxt = testfuncs.build_lambda_average(params, 1.5, 2.0, t, s)
    region = np.isfinite(table.values) & np.isfinite(nxt.values)
    rel = np.abs(-table.dt_values[region] - nxt.values[region]) / np.abs(nxt.values[region])
    worst = float(np.max(rel))
    if worst > 1e-7:
        raise AssertionError(f"time-derivative identity off by {worst:.3e}")
    return {"band_ratio": report.data["band_ratio"], "identity_err": worst}


def _cutoffs():
    cut = certificates.make_cutoffs(12.0, 2.0)
    checks = [
        abs(cut.eta(3.0) - 1.0),        # t = T/4, on the plateau
        abs(cut.eta(12.5)),
        abs(cut.chi(0.9 * 12.0)),
        abs(cut.alpha(12.0 / 8.0)),
        abs(cut.alpha(12.0 / 4.0) - 1.0),
    ]
    if max(checks) != 0.0:
        raise AssertionError("cutoff plateaus are not exact")
    # smoothness: the first two derivatives vanish at the transition endpoints
    eps = 1e-7
    ends = [1.0 / 3.0 * 12.0, 12.0]
    worst = max(abs(cut.eta(e + sgn * eps, d)) for e in ends for sgn in (-1, 1) for d in (1, 2))
    if worst > 1e-3:
        raise AssertionError(f"cutoff derivative fails to vanish at endpoints: {worst:.2e}")
    return {"plateau_err": max(checks), "endpoint_deriv": worst}


def _linear_run():
    params = GeometryParams(M=1.0, n=3)
    # cfl = 1: the discrete domain of dependence equals the continuum cone
    grid = solver.make_grid(R=2.0, t_max=20.0, ds=0.1, cfl=1.0)
    data = solver.make_initial_data(0.05, R=2.0)
    coeffs = solver.CoefficientTables.from_params(params, grid, 2.0, linear=True)
    res = solver.run(params, grid, data, "u", 2.0, coeffs=coeffs)
    drift = float(np.max(np.abs(res.energy / res.energy[0] - 1.0)))
    if drift > 1e-6:
        raise AssertionError(f"linear energy drift {drift:.3e} > 1e-6")
    if res.blew_up or not res.cone_ok:
        raise AssertionError("linear run misbehaved")
    return {"energy_drift": drift}


def run_certificate_suite() -> dict:
    """All quick certificates; returns a JSON-ready report."""
    checks = [
        _check("tortoise_roundtrip", _tortoise_roundtrip),
        _check("critical_exponents", _critical_exponents),
        _check("reduced_potential_identity", _potential_identity),
        _check("exp_mode_bands", _mode_bands),
        _check("stub_closed_forms", _stub_closed_forms),
        _check("lambda_average_band", _lambda_average_band),
        _check("cutoff_plateaus", _cutoffs),
        _check("linear_energy", _linear_run),
    ]
    return {"checks": checks, "all_passed": all(c["passed"] for c in checks)}
