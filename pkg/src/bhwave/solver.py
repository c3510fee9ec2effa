"""Explicit evolution of the reduced 1+1-dimensional wave equation.

The scheme is the standard three-level leapfrog for

    v_tt - v_ss + Q v + F D v_t = F J^(p-1) |v_t|^p   (or |v|^p),

with two twists pinned by the design:

* the linear damping term uses the centered difference
  (v^{m+1} - v^{m-1}) / (2 dt), which is solvable in closed form for
  v^{m+1} and keeps the update unconditionally stable in the damping;
* the |v_t|^p nonlinearity is advanced by a two-stage predictor-corrector:
  the predictor uses the lagged centered difference
  (v^m - v^{m-2}) / (2 dt), the corrector re-centers with the predicted
  level.  The |v|^p nonlinearity needs no stages.

Zero Dirichlet values sit outside the maximal light cone, so they are
provably inert: with dt <= ds the stencil transports data at most one cell
per step, which also makes the cone containment check exact up to a
two-cell guard band.  The sweep is windowed over the (exactly known)
support, so cost scales with the blow-up time rather than the allocated
horizon.

The discrete energy uses the compatible product form
0.5 * sum(v_t^2 + D+ v^{m+1} D+ v^m + Q v^{m+1} v^m) ds, which the linear
undamped update conserves exactly and the damped update decreases exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConeViolationError, DomainError, InstabilityError
from .geometry import GeometryParams, background_tables
from .quadrature import adaptive_gauss

__all__ = [
    "Grid1D",
    "make_grid",
    "InitialData",
    "make_initial_data",
    "CoefficientTables",
    "Snapshots",
    "RunResult",
    "rhs_nonlinearity",
    "run",
    "run_refined",
    "energy",
    "support_extent",
]


@dataclass(frozen=True)
class Grid1D:
    """Uniform tortoise-coordinate mesh with its time step."""

    s_lo: float
    s_hi: float
    ds: float
    dt: float
    t_max: float

    def __post_init__(self):
        if self.ds <= 0.0 or self.dt <= 0.0 or self.t_max <= 0.0:
            raise DomainError("grid spacings and horizon must be positive")
        if self.s_hi <= self.s_lo:
            raise DomainError("need s_hi > s_lo")
        span = (self.s_hi - self.s_lo) / self.ds
        if abs(span - round(span)) > 1e-6:
            raise DomainError("(s_hi - s_lo) must be an integer number of cells")
        steps = self.t_max / self.dt
        if abs(steps - round(steps)) > 1e-6:
            raise DomainError("t_max must be an integer number of steps")
        if self.dt > self.ds * (1.0 + 1e-12):
            raise InstabilityError(f"cfl = {self.dt / self.ds:.4g} exceeds 1")

    @property
    def cfl(self) -> float:
        return self.dt / self.ds

    @property
    def n_points(self) -> int:
        return int(round((self.s_hi - self.s_lo) / self.ds)) + 1

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    def nodes(self) -> np.ndarray:
        return self.s_lo + self.ds * np.arange(self.n_points)

    def refined(self) -> "Grid1D":
        """Same domain and horizon at half the mesh width and time step."""
        return Grid1D(self.s_lo, self.s_hi, 0.5 * self.ds, 0.5 * self.dt, self.t_max)


def make_grid(R: float, t_max: float, ds: float, cfl: float = 0.9,
              pad_cells: int = 4) -> Grid1D:
    """Symmetric grid containing the maximal light cone |s| <= t_max + R.

    The time step is shrunk so t_max is hit exactly; the domain half-width
    is rounded up to whole cells plus a guard band, so the zero boundaries
    can never be reached by the stencil.
    """
    if not (0.0 < cfl <= 1.0):
        raise InstabilityError("cfl must lie in (0, 1]")
    if R <= 0.0 or t_max <= 0.0 or ds <= 0.0:
        raise DomainError("R, t_max, ds must be positive")
    n_steps = max(1, math.ceil(t_max / (cfl * ds) - 1e-12))
    dt = t_max / n_steps
    half = (math.ceil((t_max + R) / ds) + pad_cells) * ds
    return Grid1D(-half, half, ds, dt, t_max)


_BUMP_HALF_MASS = None  # integral of exp(1 - 1/(1-z^2)) over z in (-1, 1); filled lazily


def _unit_bump_mass() -> float:
    global _BUMP_HALF_MASS
    if _BUMP_HALF_MASS is None:
        def f(z):
            out = np.zeros_like(z)
            inside = np.abs(z) < 1.0
            zi = z[inside]
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - zi * zi))
            return out

        _BUMP_HALF_MASS, _ = adaptive_gauss(f, -1.0, 1.0, rel_tol=1e-13)
    return _BUMP_HALF_MASS


@dataclass(frozen=True)
class InitialData:
    """Smooth compactly supported data for the reduced field.

    ``f`` and ``g`` are the unit profiles of v(0, .) and v_t(0, .); the run
    applies ``epsilon``.  Both are the same normalized bump so that
    integral(g) = g_amp (1 by default) before the amplitude is applied.
    """

    epsilon: float
    R: float
    a: float
    b: float
    f_amp: float = 1.0
    g_amp: float = 1.0

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise DomainError("epsilon must be nonnegative")
        if not (0.0 < self.a < self.b <= self.R):
            raise DomainError("support must satisfy 0 < a < b <= R")

    def _bump(self, s):
        s = np.asarray(s, dtype=float)
        z = (2.0 * s - self.a - self.b) / (self.b - self.a)
        out = np.zeros_like(z)
        inside = np.abs(z) < 1.0
        zi = z[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - zi * zi))
        scale = 2.0 / ((self.b - self.a) * _unit_bump_mass())
        return out * scale

    def f(self, s):
        return self.f_amp * self._bump(s)

    def g(self, s):
        return self.g_amp * self._bump(s)


def make_initial_data(epsilon: float, R: float = 2.0, support: tuple | None = None,
                      f_amp: float = 1.0, g_amp: float = 1.0) -> InitialData:
    """Bump data on the default support [R/4, R/2], inside the cone and off s = 0."""
    a, b = support if support is not None else (R / 4.0, R / 2.0)
    return InitialData(epsilon=epsilon, R=R, a=a, b=b, f_amp=f_amp, g_amp=g_amp)


@dataclass
class CoefficientTables:
    """Per-node background coefficients, precomputed once per grid.

    Tests override these directly (e.g. zero potential with a constant
    nonlinearity coefficient turns a spatially constant run into the scalar
    blow-up ODE).
    """

    s: np.ndarray
    r: np.ndarray
    F: np.ndarray
    Q: np.ndarray
    FD: np.ndarray
    FJ: np.ndarray

    @classmethod
    def from_params(cls, params: GeometryParams, grid: Grid1D, p: float,
                    linear: bool = False) -> "CoefficientTables":
        tab = background_tables(params, grid.nodes())
        FJ = np.zeros_like(tab["F"]) if linear else tab["F"] * tab["J"] ** (p - 1.0)
        return cls(s=tab["s"], r=tab["r"], F=tab["F"], Q=tab["Q"],
                   FD=tab["F"] * tab["D"], FJ=FJ)


@dataclass
class Snapshots:
    """Windowed field slices stored every ``stride`` steps."""

    times: list = field(default_factory=list)
    offsets: list = field(default_factory=list)
    v: list = field(default_factory=list)
    vt: list = field(default_factory=list)

    def field_at(self, i: int, n_points: int):
        """Full (v, vt) arrays at snapshot i, zeros outside the stored window."""
        v = np.zeros(n_points)
        vt = np.zeros(n_points)
        j0 = self.offsets[i]
        v[j0:j0 + self.v[i].size] = self.v[i]
        vt[j0:j0 + self.vt[i].size] = self.vt[i]
        return v, vt


@dataclass
class RunResult:
    """Outcome and diagnostics of one evolution."""

    blew_up: bool
    nan_triggered: bool
    t_blow: float | None
    t_blow_uncertainty: float | None
    t_end: float
    ds: float
    dt: float
    times: np.ndarray
    max_amp: np.ndarray
    energy: np.ndarray
    support: np.ndarray
    cone_ok: bool
    grid: Grid1D
    snapshots: Snapshots | None = None
    extras: dict = field(default_factory=dict)

    @property
    def censored(self) -> bool:
        return not self.blew_up


def rhs_nonlinearity(kind: str, p: float, fj, v, vt):
    """Pointwise nonlinear term F J^(p-1) |v_t|^p (kind 'ut') or |v|^p (kind 'u')."""
    if kind == "ut":
        return fj * np.abs(vt) ** p
    if kind == "u":
        return fj * np.abs(v) ** p
    raise DomainError("nonlinearity kind must be 'u' or 'ut'")


def energy(v_new, v_old, dt: float, ds: float, Q) -> float:
    """Compatible discrete energy 0.5 * sum(v_t^2 + v_s v_s + Q v v) ds.

    Centered product discretization across the two levels: exactly conserved
    by the linear undamped update and exactly non-increasing with damping.
    """
    vt = (v_new - v_old) / dt
    e = 0.5 * float(np.dot(vt, vt)) * ds
    dn = np.diff(v_new) / ds
    do = np.diff(v_old) / ds
    e += 0.5 * float(np.dot(dn, do)) * ds
    e += 0.5 * float(np.dot(Q * v_new, v_old)) * ds
    return e


def support_extent(s, v, tol: float = 1e-12) -> float:
    """Largest |s| where |v| exceeds tol * max|v|; 0 for an empty field."""
    amax = float(np.max(np.abs(v))) if v.size else 0.0
    if amax == 0.0:
        return 0.0
    mask = np.abs(v) > tol * amax
    return float(np.max(np.abs(s[mask]))) if np.any(mask) else 0.0


def _initial_window(arrs, n: int) -> tuple[int, int]:
    nz = np.zeros(n, dtype=bool)
    for a in arrs:
        nz |= a != 0.0
    idx = np.nonzero(nz)[0]
    if idx.size == 0:
        mid = n // 2
        return mid, mid
    return max(int(idx[0]) - 1, 1), min(int(idx[-1]) + 1, n - 2)


def run(params: GeometryParams, grid: Grid1D, data: InitialData, kind: str, p: float, *,
        threshold: float = 1e10, coeffs: CoefficientTables | None = None,
        out_stride: int | None = None, snapshot_stride: int | None = None,
        check_cone: bool = True) -> RunResult:
    """Evolve the reduced equation until blow-up detection or t_max.

    Blow-up is declared at the first step where max|v| (for kind 'ut' also
    max|v_t|) reaches ``threshold``, or where a non-finite value appears
    (flagged nan-triggered).  Diagnostics (max amplitude, compatible energy,
    support extent) are recorded every ``out_stride`` steps.

    Two cone checks run at every recorded time.  The discrete causal bound
    (support grows at most one cell per step) is exact for any cfl <= 1 and
    raises ConeViolationError, since violating it means the scheme itself is
    broken.  Containment in the continuum cone s_sup <= t + R + 2 ds is
    recorded as ``cone_ok``: it coincides with the discrete bound at
    cfl = 1, while at cfl < 1 the stencil's causal speed ds/dt exceeds 1
    and the dispersive tail may legitimately cross the continuum cone at
    the relative-1e-12 contour.
    """
    if kind not in ("u", "ut"):
        raise DomainError("nonlinearity kind must be 'u' or 'ut'")
    if p <= 1.0:
        raise DomainError("power p must exceed 1")
    if threshold <= 0.0:
        raise DomainError("threshold must be positive")
    if grid.dt > grid.ds * (1.0 + 1e-12):
        raise InstabilityError(f"cfl = {grid.cfl:.4g} exceeds 1; the explicit update is unstable")
    need_hi = grid.t_max + data.R + 2.0 * grid.ds
    if check_cone and (grid.s_hi < need_hi - 1e-9 or grid.s_lo > -(need_hi) + 1e-9):
        raise DomainError("grid does not contain the maximal light cone |s| <= t_max + R + 2 ds")

    C = coeffs if coeffs is not None else CoefficientTables.from_params(params, grid, p)
    s = C.s
    n = s.size
    ds, dt = grid.ds, grid.dt
    ds2, dt2 = ds * ds, dt * dt
    n_steps = grid.n_steps
    if out_stride is None:
        out_stride = max(1, n_steps // 400)
    Q, FD, FJ = C.Q, C.FD, C.FJ
    q_half = 0.5 * dt * FD

    eps = data.epsilon
    v_prev = eps * np.asarray(data.f(s), dtype=float)
    g0 = eps * np.asarray(data.g(s), dtype=float)

    lap0 = np.zeros(n)
    lap0[1:-1] = (v_prev[:-2] - 2.0 * v_prev[1:-1] + v_prev[2:]) / ds2
    a0 = lap0 - Q * v_prev - FD * g0 + rhs_nonlinearity(kind, p, FJ, v_prev, g0)
    v_cur = v_prev + dt * g0 + 0.5 * dt2 * a0
    vt_first = g0 + dt * a0            # second-order estimate of v_t at level 1

    w0, w1 = _initial_window((v_prev, g0), n)
    w0 = max(w0 - 1, 1)
    w1 = min(w1 + 1, n - 2)            # v_cur spread one cell already

    v_m2 = np.zeros(n)                 # recycled as the write buffer each step
    times, amps, energies, supports = [], [], [], []
    snaps = Snapshots() if snapshot_stride is not None else None
    blew_up = False
    nan_triggered = False
    t_blow = None
    cone_ok = True

    sup0 = support_extent(s, v_prev) if eps > 0.0 else 0.0

    def record(m_level, v_new, v_old, lo, hi):
        nonlocal cone_ok
        t = m_level * dt
        sl = slice(lo, hi + 1)
        win_new = v_new[sl]
        amax = float(np.max(np.abs(win_new))) if win_new.size else 0.0
        e = energy(v_new[lo - 1:hi + 2], v_old[lo - 1:hi + 2], dt, ds, Q[lo - 1:hi + 2])
        sup = support_extent(s[sl], win_new)
        times.append(t)
        amps.append(amax)
        energies.append(e)
        supports.append(sup)
        if check_cone and sup > sup0 + (m_level + 2) * ds + 1e-9:
            raise ConeViolationError(
                f"support {sup:.6g} outran the discrete causal bound "
                f"{sup0 + (m_level + 2) * ds:.6g} at t = {t:.6g}")
        if sup > t + data.R + 2.0 * ds + 1e-9:
            cone_ok = False

    # level 0: exact data; the energy entry is the first half-step chain member
    if snaps is not None:
        snaps.times.append(0.0)
        snaps.offsets.append(w0)
        snaps.v.append(v_prev[w0:w1 + 1].copy())
        snaps.vt.append(g0[w0:w1 + 1].copy())
    times.append(0.0)
    amps.append(float(np.max(np.abs(v_prev))))
    energies.append(energy(v_cur, v_prev, dt, ds, Q))
    supports.append(support_extent(s, v_prev))

    t_end = grid.t_max
    for m in range(1, n_steps):
        w0 = max(w0 - 1, 1)
        w1 = min(w1 + 1, n - 2)
        sl = slice(w0, w1 + 1)
        lap = (v_cur[w0 - 1:w1] - 2.0 * v_cur[sl] + v_cur[w0 + 1:w1 + 2]) / ds2
        lin = lap - Q[sl] * v_cur[sl]
        base = 2.0 * v_cur[sl] - (1.0 - q_half[sl]) * v_prev[sl]
        denom = 1.0 + q_half[sl]
        vt_win = None
        if kind == "u":
            nl = FJ[sl] * np.abs(v_cur[sl]) ** p
            v_new_w = (base + dt2 * (lin + nl)) / denom
        else:
            if m == 1:
                vt_est = vt_first[sl]
            else:
                vt_est = (v_cur[sl] - v_m2[sl]) / (2.0 * dt)
            nl1 = FJ[sl] * np.abs(vt_est) ** p
            pred = (base + dt2 * (lin + nl1)) / denom
            vt_win = (pred - v_prev[sl]) / (2.0 * dt)
            nl2 = FJ[sl] * np.abs(vt_win) ** p
            v_new_w = (base + dt2 * (lin + nl2)) / denom
            vt_win = (v_new_w - v_prev[sl]) / (2.0 * dt)

        v_next = v_m2                   # oldest buffer; zero outside historic windows
        v_next[sl] = v_new_w

        amax = float(np.max(np.abs(v_new_w))) if v_new_w.size else 0.0
        vtmax = float(np.max(np.abs(vt_win))) if vt_win is not None else 0.0
        finite = math.isfinite(amax) and math.isfinite(vtmax)
        if not finite or amax >= threshold or vtmax >= threshold:
            blew_up = True
            nan_triggered = not finite
            t_blow = (m + 1) * dt
            t_end = t_blow
            times.append(t_blow)
            amps.append(amax if math.isfinite(amax) else math.inf)
            energies.append(math.nan)
            supports.append(math.nan)   # support check skipped after blow-up
            v_m2, v_prev, v_cur = v_prev, v_cur, v_next
            break

        if (m + 1) % out_stride == 0 or m == n_steps - 1:
            record(m + 1, v_next, v_cur, w0, w1)
        if snaps is not None and (m % snapshot_stride == 0 or m == n_steps - 1):
            # v_t is centered at level m, so the snapshot stores level m
            if vt_win is None:
                vt_win = (v_new_w - v_prev[sl]) / (2.0 * dt)
            snaps.times.append(m * dt)
            snaps.offsets.append(w0)
            snaps.v.append(v_cur[sl].copy())
            snaps.vt.append(vt_win.copy())
        v_m2, v_prev, v_cur = v_prev, v_cur, v_next

    extras = {"kind": kind, "p": p, "epsilon": data.epsilon, "threshold": threshold}
    if not blew_up:
        extras["v_final"] = v_cur.copy()
        extras["t_final"] = t_end
    return RunResult(
        blew_up=blew_up, nan_triggered=nan_triggered, t_blow=t_blow,
        t_blow_uncertainty=None, t_end=t_end, ds=ds, dt=dt,
        times=np.asarray(times), max_amp=np.asarray(amps),
        energy=np.asarray(energies), support=np.asarray(supports),
        cone_ok=cone_ok, grid=grid, snapshots=snaps, extras=extras)


def run_refined(params: GeometryParams, grid: Grid1D, data: InitialData, kind: str,
                p: float, **kwargs) -> RunResult:
    """Run at (ds, dt) and (ds/2, dt/2); Richardson-extrapolate the blow-up time.

    The reported uncertainty is |T(ds) - T(ds/2)|.  If the two resolutions
    disagree on blow-up, the refined result is returned as censored.
    """
    coarse = run(params, grid, data, kind, p, **kwargs)
    fine = run(params, grid.refined(), data, kind, p, **kwargs)
    extras = dict(fine.extras)
    extras["t_blow_coarse"] = coarse.t_blow
    extras["t_blow_fine"] = fine.t_blow
    if coarse.blew_up and fine.blew_up:
        t_ext = fine.t_blow + (fine.t_blow - coarse.t_blow) / 3.0
        unc = abs(fine.t_blow - coarse.t_blow)
        return replace(fine, t_blow=t_ext, t_blow_uncertainty=unc, extras=extras)
    return replace(fine, blew_up=False, t_blow=None, t_blow_uncertainty=None, extras=extras)
