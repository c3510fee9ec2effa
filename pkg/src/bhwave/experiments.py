"""Amplitude sweeps, lifespan-law fitting, and consistency verdicts.

Everything here is deterministic: identical configurations reproduce
bit-identical records.  Runs that reach their horizon without blow-up are
recorded as censored and excluded from fits, since the theoretical laws
are upper bounds with an unknown constant.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .certificates import initial_functionals
from .errors import ConeViolationError, DomainError, InsufficientSpanError
from .geometry import GeometryParams, LifespanLaw, lifespan_law
from .solver import make_grid, make_initial_data, run, run_refined

__all__ = [
    "SweepConfig",
    "SweepRecord",
    "FitResult",
    "Verdict",
    "run_sweep",
    "fit_lifespan",
    "compare_theorem",
]


@dataclass(frozen=True)
class SweepConfig:
    """One sweep: a geometric amplitude ladder at fixed physics and resolution.

    The default cfl is 1.0: there the discrete domain of dependence
    coincides with the continuum cone, so the per-record cone certificate is
    exact rather than polluted by sub-cone dispersive tails.
    """

    params: GeometryParams
    p: float
    kind: str
    eps_list: tuple
    R: float = 2.0
    support: tuple | None = None
    ds: float = 0.05
    cfl: float = 1.0
    refine: bool = True
    t_max_factor: float = 4.0
    pilot_t_max: float = 16.0
    max_pilot_doublings: int = 8
    threshold: float = 1e10
    lambda0_factor: float = 1.1

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        object.__setattr__(self, "eps_list", eps)
        if not eps or any(e <= 0.0 for e in eps):
            raise DomainError("amplitude ladder must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise DomainError("amplitude ladder must be strictly decreasing")
        if self.kind not in ("u", "ut"):
            raise DomainError("nonlinearity kind must be 'u' or 'ut'")
        # validates the power range for this kind as a side effect
        lifespan_law(self.params.n, self.p, self.kind, V_zero=(self.params.mu2 == 0.0))

    @property
    def law(self) -> LifespanLaw:
        return lifespan_law(self.params.n, self.p, self.kind,
                            V_zero=(self.params.mu2 == 0.0))


@dataclass
class SweepRecord:
    """One (epsilon -> lifespan) measurement with its certificates snapshot."""

    epsilon: float
    blew_up: bool
    censored: bool
    t_blow: float | None
    uncertainty: float | None
    ds: float
    dt: float
    t_max_used: float
    c3_sign: int | None
    cone_ok: bool
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "SweepRecord":
        return cls(**json.loads(line))

    @property
    def usable(self) -> bool:
        return (self.blew_up and not self.censored and self.cone_ok
                and self.t_blow is not None and self.t_blow > 0.0)


def _measure(config: SweepConfig, eps: float, t_max: float,
             c3_sign: int | None) -> SweepRecord:
    data = make_initial_data(eps, config.R, config.support)
    grid = make_grid(config.R, t_max, config.ds, config.cfl)
    runner = run_refined if config.refine else run
    try:
        res = runner(config.params, grid, data, config.kind, config.p,
                     threshold=config.threshold)
    except ConeViolationError as exc:
        return SweepRecord(epsilon=eps, blew_up=False, censored=True, t_blow=None,
                           uncertainty=None, ds=config.ds, dt=grid.dt,
                           t_max_used=t_max, c3_sign=c3_sign, cone_ok=False,
                           error=str(exc))
    return SweepRecord(epsilon=eps, blew_up=res.blew_up, censored=not res.blew_up,
                       t_blow=res.t_blow, uncertainty=res.t_blow_uncertainty,
                       ds=res.ds, dt=res.dt, t_max_used=t_max, c3_sign=c3_sign,
                       cone_ok=res.cone_ok)


def _pilot(config: SweepConfig, eps: float, c3_sign: int | None) -> SweepRecord:
    t_max = config.pilot_t_max
    rec = _measure(config, eps, t_max, c3_sign)
    for _ in range(config.max_pilot_doublings):
        if rec.blew_up or not rec.cone_ok:
            break
        t_max *= 2.0
        rec = _measure(config, eps, t_max, c3_sign)
    return rec


def _load_existing(path) -> dict:
    existing = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rec = SweepRecord.from_json(line)
                    existing[repr(rec.epsilon)] = rec
    except FileNotFoundError:
        pass
    return existing


def _append(path, rec: SweepRecord) -> None:
    if path is None:
        return
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(rec.to_json() + "\n")


def run_sweep(config: SweepConfig, out_path=None, jobs: int = 1) -> list:
    """Measure the lifespan for every amplitude in the ladder.

    The largest amplitude acts as a pilot: its horizon doubles until it
    blows up, and the measured lifespan calibrates the constant in the
    theoretical law.  Every later run gets t_max = t_max_factor * bound.
    Records persist incrementally to ``out_path`` (JSON lines) and existing
    entries are reused, so an interrupted sweep resumes.  For the
    derivative nonlinearity the positivity precondition on the initial
    functional is verified before anything runs.
    """
    law = config.law
    c3_sign = None
    if config.kind == "ut":
        lam0 = config.lambda0_factor * 4.0 / (config.params.M * config.p * (config.p - 1.0))
        unit = make_initial_data(1.0, config.R, config.support)
        c3 = initial_functionals(config.params, unit, lam0, config.p)["C3"].value
        c3_sign = 1 if c3 > 0.0 else (-1 if c3 < 0.0 else 0)
        if c3_sign <= 0:
            raise DomainError(f"positivity precondition fails: C3 = {c3:.6g} <= 0")

    existing = _load_existing(out_path) if out_path else {}
    records = {}

    eps0 = config.eps_list[0]
    rec0 = existing.get(repr(eps0))
    if rec0 is None:
        rec0 = _pilot(config, eps0, c3_sign)
        _append(out_path, rec0)
    records[repr(eps0)] = rec0
    if not rec0.usable:
        raise DomainError("pilot run did not blow up; raise pilot_t_max or the amplitude")
    C_cal = law.calibrate(eps0, rec0.t_blow)

    todo = []
    for eps in config.eps_list[1:]:
        key = repr(eps)
        if key in existing:
            records[key] = existing[key]
        else:
            t_max = config.t_max_factor * float(law.bound(eps, C_cal))
            if not math.isfinite(t_max):
                raise DomainError("calibrated horizon overflows; amplitude too small")
            todo.append((eps, max(t_max, config.pilot_t_max)))

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {pool.submit(_measure, config, eps, t_max, c3_sign): eps
                    for eps, t_max in todo}
            for fut in futs:
                rec = fut.result()
                _append(out_path, rec)
                records[repr(rec.epsilon)] = rec
    else:
        for eps, t_max in todo:
            rec = _measure(config, eps, t_max, c3_sign)
            _append(out_path, rec)
            records[repr(rec.epsilon)] = rec

    return [records[repr(eps)] for eps in config.eps_list]


def _r2(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    dof = max(x.size - 2, 1)
    sxx = float(np.sum((x - np.mean(x)) ** 2))
    stderr = math.sqrt(ss_res / dof / sxx) if sxx > 0.0 else math.inf
    return float(coef[0]), float(coef[1]), r2, stderr


@dataclass
class FitResult:
    law_kind: str
    exponent: float
    stderr: float
    intercept: float
    r2: float
    r2_alternatives: dict
    n_used: int
    span_decades: float
    theory_exponent: float | None = None
    consistent: bool | None = None
    metadata: dict = field(default_factory=dict)


def fit_lifespan(records, law_kind: str, *, theory: LifespanLaw | None = None,
                 slack: float = 0.15) -> FitResult:
    """Least-squares fit of the lifespan law in transformed coordinates.

    Polynomial laws regress log T on log(1/eps); exponential laws regress
    log log T.  Censored, cone-failed, and unusable records are excluded.
    Needs at least 4 usable records spanning at least 1.5 decades.  The
    consistency verdict (when a theoretical law of the same kind is given)
    is fitted exponent <= theoretical exponent + slack: the theorems are
    upper bounds, so a shallower measured slope is consistent.
    """
    if law_kind not in ("polynomial", "exponential"):
        raise DomainError("law kind must be 'polynomial' or 'exponential'")
    usable = [r for r in records if r.usable]
    if law_kind == "exponential":
        usable = [r for r in usable if r.t_blow > 1.0]
    if len(usable) < 4:
        raise InsufficientSpanError(f"need >= 4 usable records, have {len(usable)}")
    eps = np.array([r.epsilon for r in usable])
    T = np.array([r.t_blow for r in usable])
    span = float(np.log10(np.max(eps) / np.min(eps)))
    if span < 1.5 - 1e-9:
        raise InsufficientSpanError(f"amplitude span {span:.3g} decades < 1.5")
    x = np.log(1.0 / eps)
    y = np.log(T) if law_kind == "polynomial" else np.log(np.log(T))
    slope, intercept, r2, stderr = _r2(x, y)
    alternatives = {"polynomial": _r2(x, np.log(T))[2]}
    if np.all(T > 1.0):
        alternatives["exponential"] = _r2(x, np.log(np.log(T)))[2]
    theory_exp = theory.exponent if theory is not None else None
    consistent = None
    if theory is not None and theory.kind == law_kind:
        consistent = bool(slope <= theory.exponent + slack)
    return FitResult(law_kind=law_kind, exponent=slope, stderr=stderr,
                     intercept=intercept, r2=r2, r2_alternatives=alternatives,
                     n_used=len(usable), span_decades=span,
                     theory_exponent=theory_exp, consistent=consistent,
                     metadata={"slack": slack})


@dataclass
class Verdict:
    """Upper-bound consistency: every measured lifespan under the calibrated law."""

    passed: bool
    C_calibrated: float
    slack: float
    margins: list          # (epsilon, T / calibrated bound)
    offenders: list        # epsilons violating the slacked bound
    excluded: list         # epsilons excluded (censored / cone failure)
    law: LifespanLaw


def compare_theorem(records, n: int, p: float, kind: str, V_zero: bool = False,
                    *, slack: float = 0.2, law: LifespanLaw | None = None) -> Verdict:
    """PASS iff every usable T satisfies T - unc <= (1+slack) * C * law(eps).

    C is calibrated on the largest usable amplitude; comparisons run in log
    space so exponential laws cannot overflow.  A FAIL verdict is data, not
    an error.
    """
    if law is None:
        law = lifespan_law(n, p, kind, V_zero=V_zero)
    usable = sorted((r for r in records if r.usable), key=lambda r: -r.epsilon)
    excluded = [r.epsilon for r in records if not r.usable]
    if not usable:
        raise InsufficientSpanError("no usable records to compare")
    ref = usable[0]
    C = law.calibrate(ref.epsilon, ref.t_blow)
    margins = []
    offenders = []
    for rec in usable:
        log_bound = float(law.log_bound(rec.epsilon, C))
        t_eff = rec.t_blow - (rec.uncertainty or 0.0)
        log_margin = math.log(max(rec.t_blow, 1e-300)) - log_bound
        margins.append((rec.epsilon, math.exp(min(log_margin, 700.0))))
        if t_eff > 0.0 and math.log(t_eff) > math.log1p(slack) + log_bound + 1e-12:
            offenders.append(rec.epsilon)
    return Verdict(passed=not offenders, C_calibrated=C, slack=slack,
                   margins=margins, offenders=offenders, excluded=excluded, law=law)
