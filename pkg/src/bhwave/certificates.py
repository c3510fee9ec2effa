"""Cutoff functions and proof functionals evaluated as numerical diagnostics.

The cutoffs are built from the canonical exp(-1/x) mollifier step, so they
are infinitely differentiable; that matters because they are raised to the
non-integer power 2p' = 2p/(p-1) wherever the estimates do.  Plateau values
are exact, not approximate: the step returns literal 0.0 and 1.0 outside
the transition.

Initial-data functionals are radial integrals against the dual modes; the
sphere measure is kept as an explicit constant even though it cancels in
every ratio diagnostic.  Solution functionals are space-time trapezoid
quadratures over stored snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InsufficientSnapshotsError
from .geometry import GeometryParams, background_tables, sphere_area, tortoise_gap
from .quadrature import adaptive_gauss
from .solver import InitialData, RunResult
from .testfuncs import TestFunction, solve_exp_mode

__all__ = [
    "smooth_step",
    "Cutoffs",
    "make_cutoffs",
    "FunctionalReport",
    "ZReport",
    "initial_functionals",
    "solution_functionals",
    "glassey_monitor",
]

_trapz = getattr(np, "trapezoid", None) or np.trapz


def smooth_step(x, deriv: int = 0):
    """C-infinity step: exactly 0 for x <= 0, exactly 1 for x >= 1, increasing.

    S = B(x) / (B(x) + B(1-x)) with B(x) = exp(-1/x); ``deriv`` in {0, 1, 2}
    selects the value or a derivative.
    """
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    if deriv == 0:
        out[x >= 1.0] = 1.0
    mid = (x > 0.0) & (x < 1.0)
    if np.any(mid):
        xm = x[mid]
        y = 1.0 - xm
        u = np.exp(-1.0 / xm)
        w = np.exp(-1.0 / y)
        tot = u + w
        if deriv == 0:
            out[mid] = u / tot
        else:
            du = u / xm**2
            dw = -w / y**2
            num1 = du * w - u * dw
            if deriv == 1:
                out[mid] = num1 / tot**2
            elif deriv == 2:
                ddu = u * (1.0 - 2.0 * xm) / xm**4
                ddw = w * (2.0 * xm - 1.0) / y**4
                out[mid] = ((ddu * w - u * ddw) * tot - 2.0 * num1 * (du + dw)) / tot**3
            else:
                raise DomainError("smooth_step supports derivatives 0, 1, 2")
    elif deriv not in (0, 1, 2):
        raise DomainError("smooth_step supports derivatives 0, 1, 2")
    return float(out) if scalar else out


@dataclass(frozen=True)
class Cutoffs:
    """Scaled smooth cutoffs and their 2p'-th powers.

    eta(t): 1 on t <= T/3, 0 on t >= T, non-increasing.
    alpha(s): 0 on s <= T/8, 1 on s >= T/4.
    chi(rho): 1 on rho <= 3T/4, 0 on rho >= 5T/6.
    """

    T: float
    p: float

    def __post_init__(self):
        if self.T <= 0.0:
            raise DomainError("scaling horizon T must be positive")
        if self.p <= 1.0:
            raise DomainError("power p must exceed 1")

    @property
    def pprime(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def power(self) -> float:
        return 2.0 * self.pprime

    def _scaled(self, x, slope: float, shift: float, deriv: int):
        # cutoff(x) = S(slope * (x/T) + shift); chain rule in x
        arg = slope * (np.asarray(x, dtype=float) / self.T) + shift
        fac = (slope / self.T) ** deriv
        return fac * smooth_step(arg, deriv)

    def eta(self, t, deriv: int = 0):
        return self._scaled(t, -1.5, 1.5, deriv)

    def alpha(self, s, deriv: int = 0):
        return self._scaled(s, 8.0, -1.0, deriv)

    def chi(self, rho, deriv: int = 0):
        return self._scaled(rho, -12.0, 10.0, deriv)

    def _powered(self, base, x, deriv: int):
        k = self.power
        y = base(x, 0)
        if deriv == 0:
            return y**k
        d1 = base(x, 1)
        if deriv == 1:
            return k * y ** (k - 1.0) * d1
        if deriv == 2:
            d2 = base(x, 2)
            return k * (k - 1.0) * y ** (k - 2.0) * d1 * d1 + k * y ** (k - 1.0) * d2
        raise DomainError("powers support derivatives 0, 1, 2")

    def eta_pow(self, t, deriv: int = 0):
        return self._powered(self.eta, t, deriv)

    def alpha_pow(self, s, deriv: int = 0):
        return self._powered(self.alpha, s, deriv)

    def chi_pow(self, rho, deriv: int = 0):
        return self._powered(self.chi, rho, deriv)


def make_cutoffs(T: float, p: float) -> Cutoffs:
    return Cutoffs(T=T, p=p)


@dataclass
class FunctionalReport:
    name: str
    value: float
    T: float | None = None
    metadata: dict = field(default_factory=dict)


def _background_on(params: GeometryParams, s):
    g = tortoise_gap(params, s)
    r = params.horizon + g
    F = g / r
    return r, F


def initial_functionals(params: GeometryParams, data: InitialData, lambda0: float,
                        p: float, *, phi: TestFunction | None = None,
                        rel_tol: float = 1e-9,
                        allow_unsafe_lambda0: bool = False) -> dict:
    """Initial-data functionals C1, C2 (radial integrals) and C3 (reduced form).

    Values are per unit amplitude: multiply by epsilon for scaled data.  The
    admissibility bound lambda0 > 4/(M p (p-1)) is enforced unless the
    explicit unsafe flag is set (exploration only, never in certified runs).
    """
    bound = 4.0 / (params.M * p * (p - 1.0))
    if lambda0 <= bound and not allow_unsafe_lambda0:
        raise DomainError(
            f"lambda0 = {lambda0:.6g} must exceed 4/(M p (p-1)) = {bound:.6g}")
    if phi is None:
        phi = solve_exp_mode(params, lambda0, s_max=data.b + 2.0,
                             s_min=min(-60.0, data.a - 2.0), ratio_ceiling=None)
    if lambda0 * data.b > 700.0:
        raise DomainError("raw mode values would overflow on the data support")

    n = params.n

    def phi_raw(s):
        return np.asarray(phi(s)) * np.exp(lambda0 * s)

    def ig_c3(s):
        r, F = _background_on(params, s)
        D = params.mu1 * r ** (-params.beta)
        V = params.mu2 * r ** (-params.gamma)
        Q = (F * V + (n * n - 4 * n + 3) * F * F / (4.0 * r * r)
             + (n - 1) * params.M * F / r**3)
        return phi_raw(s) * (data.g(s) + (lambda0 * D * F + lambda0**2 - Q) * data.f(s))

    def ig_c1(s):
        r, F = _background_on(params, s)
        D = params.mu1 * r ** (-params.beta)
        return phi_raw(s) * (data.g(s) + lambda0 * data.f(s) + D * F * data.f(s))

    c1, e1 = adaptive_gauss(ig_c1, data.a, data.b, rel_tol)
    c3, e3 = adaptive_gauss(ig_c3, data.a, data.b, rel_tol)
    area = sphere_area(n)
    meta = {"lambda0": lambda0, "per_unit_epsilon": True, "lambda0_bound": bound}
    return {
        "C1": FunctionalReport("C1", area * c1, None, {**meta, "rel_err": e1}),
        "C2": FunctionalReport("C2", area * c1, None, {
            **meta, "rel_err": e1,
            "note": "cone cutoff is identically 1 on the data support at t = 0"}),
        "C3": FunctionalReport("C3", c3, None, {**meta, "rel_err": e3}),
    }


def solution_functionals(params: GeometryParams, result: RunResult, cutoffs: Cutoffs,
                         which: str, *, phi: TestFunction | None = None,
                         lambda0: float | None = None,
                         min_snapshots: int = 16) -> FunctionalReport:
    """Space-time quadrature of L, L_inf, L_2M, or X over stored snapshots.

    L integrates |u|^p eta^(2p') r^(n-1) over the exterior and [0, T]
    (L_inf and L_2M split it with the alpha cutoff, additively by
    construction); X integrates |v_t|^p Phi eta^(2p') F J^(p-1) over
    [T/3, T] with Phi the decaying dual mode.
    """
    if which not in ("L", "L_inf", "L_2M", "X"):
        raise DomainError("functional must be one of L, L_inf, L_2M, X")
    if result.snapshots is None:
        raise InsufficientSnapshotsError("run stored no snapshots")
    T = cutoffs.T
    snaps = result.snapshots
    times = np.asarray(snaps.times)
    lo_t = T / 3.0 if which == "X" else 0.0
    idx = np.nonzero((times >= lo_t - 1e-12) & (times <= T + 1e-12))[0]
    if idx.size < min_snapshots:
        raise InsufficientSnapshotsError(
            f"{idx.size} snapshots in the quadrature window; need >= {min_snapshots}")

    grid = result.grid
    s = grid.nodes()
    tab = background_tables(params, s)
    F, J, r = tab["F"], tab["J"], tab["r"]
    n = params.n
    p = cutoffs.p
    area = sphere_area(n)
    if which == "X":
        if phi is None or lambda0 is None:
            raise DomainError("X requires the dual mode phi and its lambda0")
        if float(phi.grid[-1]) < grid.s_hi - 1e-9:
            raise DomainError("phi table does not cover the grid; rebuild with larger s_max")
        s_lo_valid = phi.certificate.get("s_start", phi.grid[0])
        w = np.asarray(phi(np.clip(s, s_lo_valid, phi.grid[-1])))
    else:
        wgt_s = area * r ** ((n - 1) * (2.0 - p) / 2.0) * F

    slices = []
    for i in idx:
        v, vt = snaps.field_at(int(i), grid.n_points)
        t = float(times[i])
        etap = float(cutoffs.eta_pow(t))
        if which == "X":
            Phi = w * np.exp(np.minimum(lambda0 * (s - t), 700.0))
            integ = np.abs(vt) ** p * Phi * etap * F * J ** (p - 1.0)
        else:
            integ = np.abs(v) ** p * wgt_s * etap
            if which == "L_inf":
                integ = integ * cutoffs.alpha_pow(s)
            elif which == "L_2M":
                integ = integ * (1.0 - cutoffs.alpha_pow(s))
        slices.append(_trapz(integ, dx=grid.ds))
    value = float(_trapz(np.asarray(slices), times[idx]))
    return FunctionalReport(which, value, T, {"snapshots": int(idx.size),
                                              "t_window": (lo_t, T)})


@dataclass
class ZReport:
    """Accumulated functional monitor for the derivative-nonlinearity flow."""

    T: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    rho: np.ndarray
    running_min: np.ndarray
    final_min: float | None
    flagged: bool


def glassey_monitor(T_grid, X_values, p: float, C3_eps: float) -> ZReport:
    """Build Y(N) = integral of X dT/T, Z = C3*eps + Y, and the ratio T Z'/Z^p.

    The accumulation runs as a trapezoid in ln T, which is exact for
    constant X on any grid.  Where X vanishes the ratio is undefined and
    flagged rather than reported as zero.
    """
    T = np.asarray(T_grid, dtype=float)
    X = np.asarray(X_values, dtype=float)
    if T.size != X.size or T.size < 2:
        raise DomainError("need matching T and X grids with at least two points")
    if T[0] <= 0.0 or np.any(np.diff(T) <= 0.0):
        raise DomainError("T grid must be positive and strictly increasing")
    ln_t = np.log(T)
    Y = np.concatenate([[0.0], np.cumsum(0.5 * (X[1:] + X[:-1]) * np.diff(ln_t))])
    Z = C3_eps + Y
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(X > 0.0, X / Z**p, np.nan)
    defined = np.isfinite(rho)
    flagged = not bool(np.any(defined))
    running = np.fmin.accumulate(np.where(defined, rho, np.inf))
    running = np.where(np.isfinite(running), running, np.nan)
    final_min = float(np.nanmin(rho)) if not flagged else None
    return ZReport(T=T, X=X, Y=Y, Z=Z, rho=rho, running_min=running,
                   final_min=final_min, flagged=flagged)
