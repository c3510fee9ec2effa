"""Certified construction of the dual test functions.

Four families are built here, each as a tabulated, positivity-checked
object with an asymptotic certificate:

* the static weight: the bounded positive radial solution of the static
  equation, started at the horizon with a second-order series (the ODE
  degenerates there: the lapse multiplying the second derivative vanishes,
  so a naive start would evaluate 0/0);
* normalized exponential modes w(s) = mode(s) * exp(-lam*s), integrated
  from a point where the potential-plus-damping perturbation is negligible
  relative to lam^2, so the free data (w, w') = (1, 0) is exact to below
  the integrator tolerance;
* their radial counterparts mode(s(r)) * r**(-(n-1)/2), with the sign and
  growth of the radial derivative recorded;
* Laplace-type averages b(t, s) = integral over lam in (0, 1] of
  exp(-lam*t) * radial_mode * lam**(a-1), evaluated by composite
  Gauss-Legendre with geometric grading toward lam = 0 (the exp(-lam*t)
  factor concentrates the mass in an O(1/t) layer) and, for a < 1, the
  substitution lam = u**(1/a) that removes the endpoint singularity.

Raw mode values overflow doubles once lam*s exceeds ~700, so everything
downstream of the mode solver works with the normalized form and combines
exponents as lam*(s - t), which stays bounded on the light cone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import CertificateError, DomainError, IntegrationError, QuadratureError
from .geometry import GeometryParams, _gap_newton_scalar, tortoise_gap
from .quadrature import geometric_breakpoints, panel_nodes

__all__ = [
    "TestFunction",
    "CertificateReport",
    "LambdaAverageTable",
    "ModeFamily",
    "solve_static_weight",
    "solve_exp_mode",
    "radial_mode",
    "build_lambda_average",
    "verify_lambda_average",
]


@dataclass
class TestFunction:
    """Tabulated positive solution of one of the dual linear problems.

    ``grid`` is strictly increasing, in the coordinate named by ``coord``.
    For normalized exponential modes (``log_scaled``), ``values`` store
    mode * exp(-lam*s) and tend to 1 toward the horizon.
    """

    kind: str          # "static" | "exp_mode" | "radial_mode"
    coord: str         # "r" | "s"
    grid: np.ndarray
    values: np.ndarray
    dvalues: np.ndarray
    lam: float | None = None
    log_scaled: bool = False
    certificate: dict = field(default_factory=dict)
    _dense: object = field(default=None, repr=False)

    def __post_init__(self):
        if np.any(np.diff(self.grid) <= 0):
            raise CertificateError("test-function grid must be strictly increasing")
        if np.any(self.values <= 0.0):
            raise CertificateError("test-function values must be strictly positive")

    def __call__(self, x):
        if self._dense is not None:
            return np.asarray(self._dense(x))[0]
        return np.interp(x, self.grid, self.values)

    def derivative(self, x):
        if self._dense is not None:
            return np.asarray(self._dense(x))[1]
        return np.interp(x, self.grid, self.dvalues)


@dataclass
class CertificateReport:
    name: str
    passed: bool
    data: dict
    message: str = ""
    failure: tuple | None = None


def _q_df_scalar(params: GeometryParams, s: float) -> tuple[float, float]:
    # (Q(s), D*F(s)): the two pieces of the mode-equation perturbation.
    g = _gap_newton_scalar(params.horizon, s)
    r = params.horizon + g
    F = g / r
    n = params.n
    V = params.mu2 * r ** (-params.gamma)
    Q = F * V + (n * n - 4 * n + 3) * F * F / (4.0 * r * r) + (n - 1) * params.M * F / r**3
    return Q, params.mu1 * r ** (-params.beta) * F


def _pert_scalar(params: GeometryParams, s: float, lam: float) -> float:
    # Q(s) + lam * D * F, the perturbation of the free mode equation.
    Q, DF = _q_df_scalar(params, s)
    return Q + lam * DF


def _free_region_start(params: GeometryParams, lam: float, s_request: float,
                       tol: float = 1e-13) -> float:
    """Largest start point <= s_request where the perturbation is below tol*lam^2."""
    target = tol * lam * lam
    s0 = min(float(s_request), -6.0 * params.M)
    for _ in range(600):
        if _pert_scalar(params, s0, lam) <= target:
            return s0
        s0 -= 2.0 * params.M
    raise IntegrationError("no start point found with a negligible perturbation")


def solve_static_weight(params: GeometryParams, r_max: float, *,
                        rtol: float = 1e-10, num: int = 600) -> TestFunction:
    """Bounded positive radial solution of the static (zero-eigenvalue) equation.

    Solves the self-adjoint equation (r^{n-1} F w')' = r^{n-1} V w from the
    horizon outward.  At r = 2M the lapse vanishes and regularity forces the
    slope w'(2M) = 2M V(2M) w(2M); the first step uses the second-order
    series of the regular solution before handing off to the adaptive
    integrator.  With no potential the solution is identically 1.
    """
    two_m = params.horizon
    if r_max <= two_m:
        raise DomainError("r_max must exceed the horizon")
    grid = np.geomspace(two_m, r_max, num)

    if params.mu2 == 0.0:
        def dense_const(x):
            x = np.asarray(x, dtype=float)
            return np.stack([np.ones_like(x), np.zeros_like(x)])

        return TestFunction(kind="static", coord="r", grid=grid,
                            values=np.ones(num), dvalues=np.zeros(num),
                            certificate={"min": 1.0, "max": 1.0, "ratio": 1.0,
                                         "monotone": True, "max_r_slope": 0.0},
                            _dense=dense_const)

    V0 = params.mu2 * two_m ** (-params.gamma)
    c1 = two_m * V0
    c2 = 0.25 * V0 * (4.0 * params.M**2 * V0 + 3.0 - params.gamma - params.n)
    h0 = 1e-4 * two_m
    r0 = two_m + h0

    def rhs(r, y):
        F = 1.0 - two_m / r
        dF = two_m / (r * r)
        V = params.mu2 * r ** (-params.gamma)
        return (y[1], (V * y[0] - ((params.n - 1) * F / r + dF) * y[1]) / F)

    y0 = (1.0 + c1 * h0 + c2 * h0 * h0, c1 + 2.0 * c2 * h0)
    sol = solve_ivp(rhs, (r0, r_max), y0, method="DOP853", rtol=rtol, atol=1e-13,
                    dense_output=True)
    if not sol.success:
        raise IntegrationError(f"static weight solve failed: {sol.message}")

    def dense(x):
        x1 = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty((2, x1.size))
        lo = x1 <= r0
        if np.any(lo):
            xx = x1[lo] - two_m
            out[0, lo] = 1.0 + c1 * xx + c2 * xx * xx
            out[1, lo] = c1 + 2.0 * c2 * xx
        if np.any(~lo):
            out[:, ~lo] = sol.sol(x1[~lo])
        return out if np.ndim(x) else out[:, 0]

    vals, dvals = dense(grid)
    vmin, vmax = float(np.min(vals)), float(np.max(vals))
    cert = {
        "min": vmin,
        "max": vmax,
        "ratio": vmax / vmin,
        "monotone": bool(np.min(np.diff(vals)) >= -1e-12 * vmax),
        "max_r_slope": float(np.max(grid * np.abs(dvals))),
        "horizon_slope": c1,
    }
    return TestFunction(kind="static", coord="r", grid=grid, values=vals,
                        dvalues=dvals, certificate=cert, _dense=dense)


def solve_exp_mode(params: GeometryParams, lam: float, s_max: float,
                   s_min: float = -60.0, *, rtol: float = 1e-10, num: int = 1201,
                   ratio_ceiling: float | None = 100.0,
                   perturbation=None) -> TestFunction:
    """Normalized exponentially growing mode w(s) = mode(s) * exp(-lam*s).

    Integrates w'' + 2 lam w' = (Q + lam D F) w with exact free data
    (w, w') = (1, 0) placed where the perturbation is below 1e-13 * lam^2,
    then samples on [s_min, s_max].  Since the perturbation is nonnegative,
    w is nondecreasing from 1 and plateaus once the potential has decayed;
    the recorded band [c1, c2] certifies mode = exp(lam*s) up to constants.
    Raises CertificateError if c2/c1 exceeds ``ratio_ceiling`` (pass None to
    skip, e.g. for small-eigenvalue quadrature nodes whose plateau grows
    like lam**(-(n-1)/2)).  ``perturbation`` overrides Q + lam D F (stub
    mode: a zero perturbation reproduces the free exponential exactly).
    """
    if lam <= 0.0:
        raise DomainError("eigenvalue lambda must be positive")
    if s_max <= s_min:
        raise DomainError("need s_max > s_min")
    if perturbation is None:
        pert = lambda s: _pert_scalar(params, s, lam)  # noqa: E731
        s_start = _free_region_start(params, lam, s_min)
    else:
        pert = perturbation
        s_start = float(s_min)

    def rhs(s, y):
        return (y[1], -2.0 * lam * y[1] + pert(s) * y[0])

    sol = solve_ivp(rhs, (s_start, s_max), (1.0, 0.0), method="DOP853",
                    rtol=rtol, atol=1e-13, dense_output=True)
    if not sol.success:
        raise IntegrationError(f"mode solve failed: {sol.message}")
    grid = np.linspace(s_min, s_max, num)
    out = sol.sol(grid)
    vals, dvals = out[0], out[1]
    c1 = float(np.min(vals))
    c2 = float(np.max(vals))
    if c1 <= 0.0:
        raise CertificateError("normalized mode lost positivity")
    ratio = c2 / c1
    cert = {
        "c1": c1,
        "c2": c2,
        "ratio": ratio,
        "plateau": float(vals[-1]),
        "s_start": s_start,
        "monotone": bool(np.min(np.diff(vals)) >= -1e-10 * c2),
    }
    if ratio_ceiling is not None and ratio > ratio_ceiling:
        raise CertificateError(
            f"mode ratio band {ratio:.4g} exceeds the ceiling {ratio_ceiling:g}")
    return TestFunction(kind="exp_mode", coord="s", grid=grid, values=vals,
                        dvalues=dvals, lam=lam, log_scaled=True,
                        certificate=cert, _dense=sol.sol)


def radial_mode(params: GeometryParams, lam: float, phi: TestFunction, *,
                coordinate_map=None) -> TestFunction:
    """Radial mode psi(r) = mode(s(r)) * r**(-(n-1)/2) from a normalized mode.

    Records the minimum of the radial derivative (nonnegative up to
    roundoff) and the constant C in |psi'| <= C (lam+1) exp(lam*s) /
    (F r^{(n-1)/2}); with no potential also the constant in
    |psi'| <= C' lam psi / F.  ``coordinate_map`` (s -> (r, F)) exists for
    flat test stubs; the default is the tortoise inverse.
    """
    if phi.kind != "exp_mode" or not phi.log_scaled:
        raise DomainError("radial_mode expects a normalized exponential mode")
    s = phi.grid
    w = phi.values
    dw = phi.dvalues
    if lam * float(np.max(s)) > 700.0:
        raise DomainError("raw mode values would overflow; keep the normalized form")
    if coordinate_map is None:
        g = tortoise_gap(params, s)
        r = params.horizon + g
        F = g / r
    else:
        r, F = coordinate_map(s)
    k = (params.n - 1) / 2.0
    grow = np.exp(lam * s)
    rfac = r ** (-k)
    psi = w * grow * rfac
    core = (dw + lam * w) - k * F * w / r     # = psi' * F * r^k * exp(-lam*s)
    dpsi = grow * rfac * core / F
    cert = {
        "min_dpsi": float(np.min(dpsi)),
        "deriv_bound_C": float(np.max(np.abs(core))) / (lam + 1.0),
    }
    if params.mu2 == 0.0:
        cert["deriv_bound_C_V0"] = float(np.max(np.abs(core) / (lam * w)))
    return TestFunction(kind="radial_mode", coord="r", grid=r, values=psi,
                        dvalues=dpsi, lam=lam, log_scaled=False, certificate=cert)


class ModeFamily:
    """Normalized exponential modes over a common coordinate span.

    Quadrature nodes reach far below lambda = 1, where the normalized
    plateau legitimately grows like lam**(-(n-1)/2); no ratio ceiling is
    applied here.  ``eval_batch`` integrates all eigenvalues as one vector
    system: the scalar background profile is evaluated once per step and
    the adaptive step control is shared, so the cost is essentially one
    solve per quadrature level instead of one per node.
    """

    def __init__(self, params: GeometryParams, s_top: float, *, rtol: float = 1e-10):
        self.params = params
        self.s_top = float(s_top)
        self.rtol = rtol
        self._cache: dict[float, object] = {}

    def dense(self, lam: float):
        sol = self._cache.get(lam)
        if sol is None:
            tf = solve_exp_mode(self.params, lam, self.s_top,
                                s_min=min(-8.0 * self.params.M, self.s_top - 1.0),
                                rtol=self.rtol, num=2, ratio_ceiling=None)
            sol = tf._dense
            self._cache[lam] = sol
        return sol

    def eval(self, lam: float, s):
        out = np.asarray(self.dense(lam)(np.asarray(s, dtype=float)))
        return out[0], out[1]

    def eval_batch(self, lams, s_grid):
        """(W, dW) arrays of shape (len(lams), len(s_grid)) from one vector solve.

        All components start with the exact free data at the start point of
        the smallest eigenvalue; for the larger ones the perturbation there
        is even smaller relative to lam^2, so the shared start loses nothing.
        """
        lams = np.asarray(lams, dtype=float)
        s_grid = np.asarray(s_grid, dtype=float)
        if np.any(np.diff(s_grid) <= 0.0):
            raise DomainError("batch evaluation needs a strictly increasing s grid")
        if float(s_grid[-1]) > self.s_top + 1e-9:
            raise DomainError("s grid exceeds the family span")
        k = lams.size
        params = self.params
        s_start = _free_region_start(params, float(np.min(lams)), -8.0 * params.M)
        if s_grid[0] <= s_start:
            raise DomainError("s grid reaches below the free-data start point")

        def rhs(s, y):
            w = y[:k]
            dw = y[k:]
            Q, DF = _q_df_scalar(params, s)
            return np.concatenate([dw, -2.0 * lams * dw + (Q + lams * DF) * w])

        y0 = np.concatenate([np.ones(k), np.zeros(k)])
        sol = solve_ivp(rhs, (s_start, float(s_grid[-1])), y0, method="DOP853",
                        rtol=self.rtol, atol=1e-13, t_eval=s_grid)
        if not sol.success:
            raise IntegrationError(f"batched mode solve failed: {sol.message}")
        return sol.y[:k, :], sol.y[k:, :]


@dataclass
class LambdaAverageTable:
    """Tabulated Laplace-type average of the radial modes over lam in (0, 1].

    ``values[i, j]`` is the average at (t_grid[i], s_grid[j]); cells whose
    s - t exceeds the validity margin (far outside the cone, where the raw
    exponent overflows) hold NaN.  ``dt_values`` is the time derivative
    (the same quadrature with an extra -lam), ``ds_values`` the tortoise
    derivative.
    """

    order: float
    R: float
    t_grid: np.ndarray
    s_grid: np.ndarray
    values: np.ndarray
    dt_values: np.ndarray
    ds_values: np.ndarray
    lambda_nodes: np.ndarray
    meta: dict


def build_lambda_average(params: GeometryParams, a: float, R: float, t_grid, s_grid, *,
                         rel_tol: float = 1e-8, unit_mode: bool = False,
                         family: ModeFamily | None = None, order0: int = 8,
                         max_level: int = 4, valid_margin: float = 5.0) -> LambdaAverageTable:
    """Quadrature of exp(-lam*t) * radial_mode * lam**(a-1) over lam in (0, 1].

    The substitution lam = u**m with m = ceil(6/a) turns the endpoint weight
    lam**(a-1) d lam into m u**(ma-1) du with ma - 1 >= 5, which
    Gauss-Legendre resolves at spectral-like rates for any (also irrational)
    a; panels are additionally graded geometrically toward u = 0, where the
    exp(-lam*t) mass concentrates for large t.  The per-panel order is
    doubled until the relative change over valid cells drops below
    ``rel_tol``.  With ``unit_mode`` the radial mode is replaced by 1, which
    reduces the table to closed forms used by the stub tests.
    """
    if a <= 0.0:
        raise DomainError("moment exponent a must be positive")
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    s = np.atleast_1d(np.asarray(s_grid, dtype=float))
    if np.any(t < 0.0):
        raise DomainError("t grid must be nonnegative")
    k = (params.n - 1) / 2.0
    if not unit_mode:
        if family is None:
            family = ModeFamily(params, s_top=float(np.max(s)) + 1.0)
        g = tortoise_gap(params, s)
        r = params.horizon + g
        F = g / r
        rfac = r ** (-k)
        diff = s[None, :] - t[:, None]
        valid = diff <= (R + valid_margin)
    else:
        diff = None
        valid = np.ones((t.size, s.size), dtype=bool)

    m_sub = max(1, math.ceil(6.0 / a))
    dmax = max(float(np.max(t)), 1.0)
    u_layer = (1.0 / (1.0 + dmax)) ** (1.0 / m_sub)
    n_panels = max(3, int(math.ceil(-math.log2(u_layer))))
    bp = geometric_breakpoints(n_panels)

    prev = None
    order = order0
    for level in range(max_level + 1):
        nodes, weights = panel_nodes(bp, order)
        lam_nodes = nodes**m_sub
        coef = weights * m_sub * nodes ** (m_sub * a - 1.0)
        val = np.zeros((t.size, s.size))
        dval = np.zeros_like(val)
        sval = np.zeros_like(val)
        if not unit_mode:
            W_all, dW_all = family.eval_batch(lam_nodes, s)
        for j, (lam, c) in enumerate(zip(lam_nodes, coef)):
            if unit_mode:
                base = c * np.exp(-lam * t)[:, None] * np.ones((1, s.size))
                sgrad = np.zeros_like(base)
            else:
                with np.errstate(over="ignore"):
                    E = np.exp(np.minimum(lam * diff, 700.0))
                W, dW = W_all[j], dW_all[j]
                base = c * E * (W * rfac)[None, :]
                sgrad = c * E * ((dW + lam * W - k * F * W / r) * rfac)[None, :]
            val += base
            dval += -lam * base
            sval += sgrad
        if prev is not None:
            delta = np.abs(val - prev)[valid]
            scale = np.maximum(np.abs(val)[valid], 1e-300)
            change = float(np.max(delta / scale)) if delta.size else 0.0
            if change < rel_tol:
                val[~valid] = np.nan
                dval[~valid] = np.nan
                sval[~valid] = np.nan
                meta = {"order": order, "panels": len(bp) - 1, "rel_change": change,
                        "power_substitution": m_sub, "unit_mode": unit_mode}
                return LambdaAverageTable(order=a, R=R, t_grid=t, s_grid=s,
                                          values=val, dt_values=dval, ds_values=sval,
                                          lambda_nodes=lam_nodes, meta=meta)
        prev = val
        order *= 2
    raise QuadratureError("lambda average did not converge under node doubling")


def verify_lambda_average(table: LambdaAverageTable, params: GeometryParams) -> CertificateReport:
    """Two-sided band, next-order upper bound, and derivative domination.

    Over the region 4M + e <= s <= t + R: the product values * (t+R)**a must
    have finite positive extrema (requires 0 < a < (n-1)/2); the next-order
    average must satisfy the weighted upper bound (requires a+1 > (n-1)/2);
    and |d_r values| <= C * next-order with finite measured C.
    """
    n = params.n
    a = table.order
    if not (0.0 < a < (n - 1) / 2.0):
        raise DomainError("two-sided band requires 0 < a < (n-1)/2")
    if not (a + 1.0 > (n - 1) / 2.0):
        raise DomainError("next-order upper bound requires a + 1 > (n-1)/2")
    edge = 4.0 * params.M + math.e
    t = table.t_grid
    s = table.s_grid
    region = ((s[None, :] >= edge) & (s[None, :] <= t[:, None] + table.R)
              & np.isfinite(table.values))
    if not np.any(region):
        raise DomainError("verification region 4M+e <= s <= t+R is empty")
    tpr = t[:, None] + table.R
    band = (table.values * tpr**a)
    b_next = -table.dt_values
    # the weight is only meaningful inside the cone, where tpr + 1 - s > 0
    cone_gap = np.maximum(tpr + 1.0 - s[None, :], 0.0)
    with np.errstate(invalid="ignore"):
        upper = b_next * tpr ** ((n - 1) / 2.0) * cone_gap ** (a + 1.0 - (n - 1) / 2.0)
    g = tortoise_gap(params, s)
    F = g / (params.horizon + g)
    dr = table.ds_values / F[None, :]
    deriv_ratio = np.abs(dr) / np.maximum(b_next, 1e-300)

    c1 = float(np.min(band[region]))
    c2 = float(np.max(band[region]))
    sup_next = float(np.max(upper[region]))
    c_deriv = float(np.max(deriv_ratio[region]))
    passed = (c1 > 0.0 and np.isfinite(c2) and np.isfinite(sup_next)
              and np.isfinite(c_deriv))
    failure = None
    if not passed:
        flat = np.where(region, band, np.nan)
        idx = np.unravel_index(np.nanargmin(flat), flat.shape)
        failure = (float(t[idx[0]]), float(s[idx[1]]), float(table.values[idx]))
    data = {
        "band": (c1, c2),
        "band_ratio": c2 / c1 if c1 > 0 else math.inf,
        "sup_next_weighted": sup_next,
        "deriv_constant": c_deriv,
        "cells": int(np.count_nonzero(region)),
    }
    msg = "" if passed else "band lost positivity or finiteness"
    return CertificateReport(name=f"lambda_average[a={a:g}]", passed=passed,
                             data=data, message=msg, failure=failure)
