"""Closed-form background quantities for the exterior of a static black hole.

Everything here is an explicit formula or a scalar root solve: the lapse,
the tortoise coordinate and its inverse, the effective potential and
amplitude weight of the reduced 1+1-dimensional wave equation, power-law
damping/potential profiles, and the critical and lifespan exponents used by
the experiment drivers.

All functions are pure, accept scalars or numpy arrays, and are safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError

__all__ = [
    "GeometryParams",
    "CriticalExponents",
    "LifespanLaw",
    "OdeBound",
    "lapse",
    "tortoise",
    "tortoise_gap",
    "tortoise_inverse",
    "reduced_potential",
    "amplitude_weight",
    "fj_coefficient",
    "profiles",
    "background_tables",
    "critical_exponents",
    "lifespan_law",
    "ode_blowup_bound",
    "sphere_area",
]


@dataclass(frozen=True)
class GeometryParams:
    """Mass, dimension, and damping/potential profile parameters.

    The damping and potential are pinned to the saturating power laws
    D = mu1 * r**-beta and V = mu2 * r**-gamma.
    """

    M: float = 1.0
    n: int = 3
    mu1: float = 0.0
    beta: float = 2.0
    mu2: float = 0.0
    gamma: float = 2.5

    def __post_init__(self):
        if not self.M > 0.0:
            raise DomainError("mass M must be positive")
        if int(self.n) != self.n or self.n < 3:
            raise DomainError("dimension n must be an integer >= 3")
        if self.mu1 < 0.0 or self.mu2 < 0.0:
            raise DomainError("damping/potential amplitudes must be >= 0")
        if not self.beta > 1.0:
            raise DomainError("damping decay rate beta must exceed 1 (beta > 1 required)")
        if not self.gamma > 2.0:
            raise DomainError("potential decay rate gamma must exceed 2 (gamma > 2 required)")

    @property
    def horizon(self) -> float:
        return 2.0 * self.M


def _as_float_array(x):
    return np.asarray(x, dtype=float)


def _require_exterior(params: GeometryParams, r) -> None:
    if np.any(np.asarray(r) <= params.horizon):
        raise DomainError(f"radius must exceed the horizon 2M = {params.horizon}")


def lapse(params: GeometryParams, r):
    """Lapse F = 1 - 2M/r and its radial derivative dF/dr = 2M/r^2."""
    scalar = np.ndim(r) == 0
    r = _as_float_array(r)
    _require_exterior(params, r)
    two_m = params.horizon
    F = 1.0 - two_m / r
    dF = two_m / r**2
    if scalar:
        return float(F), float(dF)
    return F, dF


def tortoise(params: GeometryParams, r):
    """Tortoise coordinate s = r + 2M ln(r - 2M); strictly increasing in r."""
    scalar = np.ndim(r) == 0
    r = _as_float_array(r)
    _require_exterior(params, r)
    two_m = params.horizon
    s = r + two_m * np.log(r - two_m)
    return float(s) if scalar else s


def _gap_newton_scalar(two_m: float, s: float) -> float:
    # Solve 2M + e^x + 2M*x = s for x = ln(r - 2M).  h is convex and
    # increasing in x, so Newton converges monotonically after one step.
    if s <= 2.0 * two_m + math.e:
        x = (s - two_m) / two_m
    else:
        far = s - two_m * math.log(s) - two_m
        x = math.log(far) if far > 0.0 else (s - two_m) / two_m
    for _ in range(80):
        ex = math.exp(x)
        dx = (two_m + ex + two_m * x - s) / (ex + two_m)
        x -= dx
        if abs(dx) <= 1e-16 * (1.0 + abs(x)):
            break
    return math.exp(x)


def _gap_newton_vector(two_m: float, s: np.ndarray) -> np.ndarray:
    near = (s - two_m) / two_m
    with np.errstate(invalid="ignore", divide="ignore"):
        arg = s - two_m * np.log(np.maximum(s, math.e)) - two_m
        far = np.where(arg > 0.0, np.log(np.maximum(arg, 1e-300)), near)
    x = np.where(s <= 2.0 * two_m + math.e, near, far)
    for _ in range(80):
        ex = np.exp(x)
        dx = (two_m + ex + two_m * x - s) / (ex + two_m)
        x = x - dx
        if np.all(np.abs(dx) <= 1e-16 * (1.0 + np.abs(x))):
            break
    return np.exp(x)


def tortoise_gap(params: GeometryParams, s):
    """Gap r - 2M for a given tortoise coordinate, at full relative precision.

    The root solve runs in x = ln(r - 2M), so the gap stays accurate far
    into the near-horizon tail where r - 2M drops below the spacing of
    doubles near 2M.  Underflows to 0.0 roughly below s = -1490*M.
    """
    two_m = params.horizon
    if np.ndim(s) == 0:
        s = float(s)
        if not math.isfinite(s):
            raise DomainError("tortoise coordinate must be finite")
        return _gap_newton_scalar(two_m, s)
    s = _as_float_array(s)
    if not np.all(np.isfinite(s)):
        raise DomainError("tortoise coordinate must be finite")
    return _gap_newton_vector(two_m, s)


def tortoise_inverse(params: GeometryParams, s):
    """Radius r > 2M with tortoise(r) = s, exact to the representable double.

    After the log-space Newton solve the result is snapped to whichever
    neighbouring double has the closest forward image: one ulp of r moves s
    by about 2M*ulp/(r - 2M) near the horizon, so round-tripping an exact
    radius must recover that exact double.
    """
    scalar = np.ndim(s) == 0
    s_arr = np.atleast_1d(_as_float_array(s))
    if not np.all(np.isfinite(s_arr)):
        raise DomainError("tortoise coordinate must be finite")
    two_m = params.horizon
    floor = np.nextafter(two_m, np.inf)
    r = np.maximum(two_m + _gap_newton_vector(two_m, s_arr), floor)
    for _ in range(4):
        lo = np.maximum(np.nextafter(r, -np.inf), floor)
        hi = np.nextafter(r, np.inf)
        cand = np.stack((lo, r, hi))
        resid = np.abs(cand + two_m * np.log(cand - two_m) - s_arr)
        r_new = np.take_along_axis(cand, np.argmin(resid, axis=0)[None], axis=0)[0]
        if np.array_equal(r_new, r):
            break
        r = r_new
    if not np.all(np.isfinite(r)):
        raise DomainError("tortoise inversion failed to converge")
    return float(r[0]) if scalar else r


def reduced_potential(params: GeometryParams, s):
    """Effective potential Q(s) of the reduced radial equation.

    Q = F*V + (n^2 - 4n + 3) F^2 / (4 r^2) + (n - 1) M F / r^3 with
    r = r(s); nonnegative for n >= 3 and decaying at both ends.
    """
    scalar = np.ndim(s) == 0
    g = tortoise_gap(params, s)
    r = params.horizon + g
    F = g / r
    n = params.n
    V = params.mu2 * r ** (-params.gamma)
    Q = F * V + (n * n - 4 * n + 3) * F * F / (4.0 * r * r) + (n - 1) * params.M * F / r**3
    return float(Q) if scalar else Q


def amplitude_weight(params: GeometryParams, s):
    """Weight J(s) = r(s)**(-(n-1)/2) relating the physical and reduced fields."""
    scalar = np.ndim(s) == 0
    r = params.horizon + tortoise_gap(params, s)
    J = r ** (-(params.n - 1) / 2.0)
    return float(J) if scalar else J


def fj_coefficient(params: GeometryParams, s, p: float):
    """Nonlinearity coefficient F * J**(p-1) of the reduced equation."""
    scalar = np.ndim(s) == 0
    g = tortoise_gap(params, s)
    r = params.horizon + g
    out = (g / r) * r ** (-(params.n - 1) * (p - 1.0) / 2.0)
    return float(out) if scalar else out


def profiles(params: GeometryParams, r):
    """Damping and potential profiles D = mu1 r^-beta, V = mu2 r^-gamma."""
    scalar = np.ndim(r) == 0
    r = _as_float_array(r)
    _require_exterior(params, r)
    D = params.mu1 * r ** (-params.beta)
    V = params.mu2 * r ** (-params.gamma)
    if scalar:
        return float(D), float(V)
    return D, V


def background_tables(params: GeometryParams, s) -> dict:
    """All background quantities on a tortoise grid, solved once.

    Returns arrays r, F, Q, J, D, V keyed by name; near-horizon entries use
    the log-space gap so F and Q stay accurate instead of cancelling.
    """
    s = _as_float_array(s)
    g = _gap_newton_vector(params.horizon, s)
    r = params.horizon + g
    F = g / r
    n = params.n
    V = params.mu2 * r ** (-params.gamma)
    D = params.mu1 * r ** (-params.beta)
    Q = F * V + (n * n - 4 * n + 3) * F * F / (4.0 * r * r) + (n - 1) * params.M * F / r**3
    J = r ** (-(n - 1) / 2.0)
    return {"s": s, "r": r, "F": F, "Q": Q, "J": J, "D": D, "V": V}


@dataclass(frozen=True)
class CriticalExponents:
    """Critical powers for the two nonlinearities in dimension n."""

    n: int
    p_S: float
    p_G: float

    def gamma(self, p):
        """Quadratic 2 + (n+1)p - (n-1)p^2 whose positive root is p_S."""
        return 2.0 + (self.n + 1) * p - (self.n - 1) * p * p


def critical_exponents(n: int) -> CriticalExponents:
    if int(n) != n or n < 2:
        raise DomainError("dimension must be an integer >= 2")
    n = int(n)
    b = float(n + 1)
    a = float(n - 1)
    p_s = (b + math.sqrt(b * b + 8.0 * a)) / (2.0 * a)
    return CriticalExponents(n=n, p_S=p_s, p_G=b / a)


@dataclass(frozen=True)
class LifespanLaw:
    """Upper-bound lifespan law T <= C eps^-k or T <= exp(C eps^-k)."""

    kind: str  # "polynomial" | "exponential"
    exponent: float

    def log_bound(self, eps, C: float = 1.0):
        eps = _as_float_array(eps)
        if self.kind == "polynomial":
            out = np.log(C) - self.exponent * np.log(eps)
        else:
            out = C * eps ** (-self.exponent)
        return float(out) if out.ndim == 0 else out

    def bound(self, eps, C: float = 1.0):
        with np.errstate(over="ignore"):
            out = np.exp(self.log_bound(eps, C))
        return out

    def calibrate(self, eps: float, T: float) -> float:
        """Constant that puts the law exactly through the point (eps, T)."""
        if self.kind == "polynomial":
            return T * eps**self.exponent
        return math.log(T) * eps**self.exponent


def lifespan_law(n: int, p: float, nonlinearity: str = "u", V_zero: bool = False,
                 *, tol: float = 1e-10) -> LifespanLaw:
    """Theoretical lifespan upper-bound law for the given power and nonlinearity.

    Rejects powers above the relevant critical exponent, and the critical
    power-of-u case unless the potential vanishes.
    """
    if p <= 1.0:
        raise DomainError("power p must exceed 1")
    ce = critical_exponents(n)
    if nonlinearity == "u":
        border = n / (n - 1.0)
        if p <= border + tol:
            return LifespanLaw("polynomial", 2.0 * (p - 1.0) / (n + 1.0 - (n - 1.0) * p))
        if p < ce.p_S - tol:
            return LifespanLaw("polynomial", 2.0 * p * (p - 1.0) / ce.gamma(p))
        if abs(p - ce.p_S) <= tol:
            if not V_zero:
                raise DomainError("critical power of u is only covered for V = 0")
            return LifespanLaw("exponential", p * (p - 1.0))
        raise DomainError(f"p = {p} exceeds the critical power {ce.p_S:.12g} for |u|^p")
    if nonlinearity == "ut":
        if p < ce.p_G - tol:
            return LifespanLaw("polynomial", 1.0 / (1.0 / (p - 1.0) - (n - 1.0) / 2.0))
        if abs(p - ce.p_G) <= tol:
            return LifespanLaw("exponential", p - 1.0)
        raise DomainError(f"p = {p} exceeds the critical power {ce.p_G:.12g} for |u_t|^p")
    raise DomainError("nonlinearity must be 'u' or 'ut'")


class OdeBound(NamedTuple):
    value: float  # may overflow to inf; log_value is always finite
    log_value: float


def ode_blowup_bound(delta: float, p1: float, p2: float, K3: float = 1.0) -> OdeBound:
    """Closed-form bound exp(K3 * delta**(-(p1-1)/(p1-p2+1))) from the slow-blow-up ODE lemma."""
    if delta <= 0.0:
        raise DomainError("delta must be positive")
    if p1 <= 1.0 or p2 <= 1.0:
        raise DomainError("p1 and p2 must exceed 1")
    if p2 >= p1 + 1.0:
        raise DomainError("requires p2 < p1 + 1")
    log_value = K3 * delta ** (-(p1 - 1.0) / (p1 - p2 + 1.0))
    with np.errstate(over="ignore"):
        value = float(np.exp(log_value))
    return OdeBound(value=value, log_value=log_value)


def sphere_area(n: int) -> float:
    """Surface measure of the unit (n-1)-sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
