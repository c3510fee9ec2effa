"""Single command-line entry point with one subcommand per module.

Configuration comes from a plain-text file with ``[section]`` headers and
``key = value`` lines; command-line flags override file values, and the
``BHWAVE_OUTDIR`` environment variable overrides the output directory.
Machine-readable artifacts carry the fully resolved configuration as a
reproducibility header and print floats at 17 significant digits; human
summaries round to 6.

Exit codes: 0 success, 1 domain/validation error, 2 certificate failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import experiments, solver, testfuncs
from .errors import CertificateError, ConfigError, DomainError
from .geometry import GeometryParams, background_tables, lifespan_law
from .suite import run_certificate_suite

_SCHEMA = {
    "geometry": {"M": float, "n": int, "mu1": float, "beta": float,
                 "mu2": float, "gamma": float},
    "solver": {"p": float, "kind": str, "epsilon": float, "R": float,
               "ds": float, "cfl": float, "t_max": float, "threshold": float,
               "refine": bool, "support_lo": float, "support_hi": float},
    "sweep": {"eps_list": str, "t_max_factor": float, "pilot_t_max": float,
              "lambda0_factor": float},
    "output": {"dir": str},
}


@dataclass
class Config:
    """Resolved configuration shared by every subcommand."""

    geometry: GeometryParams = field(default_factory=GeometryParams)
    p: float = 2.0
    kind: str = "u"
    epsilon: float = 0.1
    R: float = 2.0
    support: tuple | None = None
    ds: float = 0.05
    cfl: float = 0.9
    t_max: float = 20.0
    threshold: float = 1e10
    refine: bool = False
    eps_list: tuple = ()
    t_max_factor: float = 4.0
    pilot_t_max: float = 16.0
    lambda0_factor: float = 1.1
    out_dir: str = "."

    def to_dict(self) -> dict:
        d = asdict(self)
        d["geometry"] = asdict(self.geometry)
        return d


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _read_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    values: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}] in {path}")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}] of {path}")
            typ = _SCHEMA[section][key]
            try:
                if typ is bool:
                    values[(section, key)] = _parse_bool(raw)
                else:
                    values[(section, key)] = typ(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
    return values


def _parse_eps_list(text: str) -> tuple:
    try:
        eps = tuple(float(tok) for tok in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad amplitude list: {text!r}") from exc
    return eps


def build_config(args: argparse.Namespace) -> Config:
    """File values, overridden by flags, validated against every module invariant."""
    vals = _read_config_file(args.config) if getattr(args, "config", None) else {}

    def pick(section, key, flag, default):
        v = getattr(args, flag, None)
        if v is not None:
            return v
        return vals.get((section, key), default)

    geometry = GeometryParams(
        M=pick("geometry", "M", "M", 1.0),
        n=int(pick("geometry", "n", "n", 3)),
        mu1=pick("geometry", "mu1", "mu1", 0.0),
        beta=pick("geometry", "beta", "beta", 2.0),
        mu2=pick("geometry", "mu2", "mu2", 0.0),
        gamma=pick("geometry", "gamma", "gamma", 2.5),
    )
    support = None
    lo = pick("solver", "support_lo", "support_lo", None)
    hi = pick("solver", "support_hi", "support_hi", None)
    if (lo is None) != (hi is None):
        raise ConfigError("support_lo and support_hi must be given together")
    if lo is not None:
        support = (lo, hi)
    eps_list = pick("sweep", "eps_list", "eps_list", "")
    if isinstance(eps_list, str):
        eps_list = _parse_eps_list(eps_list) if eps_list else ()
    out_dir = os.environ.get("BHWAVE_OUTDIR") or pick("output", "dir", "out_dir", ".")

    cfg = Config(
        geometry=geometry,
        p=pick("solver", "p", "p", 2.0),
        kind=pick("solver", "kind", "kind", "u"),
        epsilon=pick("solver", "epsilon", "epsilon", 0.1),
        R=pick("solver", "R", "R", 2.0),
        support=support,
        ds=pick("solver", "ds", "ds", 0.05),
        cfl=pick("solver", "cfl", "cfl", 0.9),
        t_max=pick("solver", "t_max", "t_max", 20.0),
        threshold=pick("solver", "threshold", "threshold", 1e10),
        refine=pick("solver", "refine", "refine", False),
        eps_list=eps_list,
        t_max_factor=pick("sweep", "t_max_factor", "t_max_factor", 4.0),
        pilot_t_max=pick("sweep", "pilot_t_max", "pilot_t_max", 16.0),
        lambda0_factor=pick("sweep", "lambda0_factor", "lambda0_factor", 1.1),
        out_dir=str(out_dir),
    )
    if cfg.kind not in ("u", "ut"):
        raise ConfigError("kind must be 'u' or 'ut'")
    if not (0.0 < cfg.cfl <= 1.0):
        raise ConfigError("cfl must lie in (0, 1]")
    # power admissibility for this kind and potential
    lifespan_law(cfg.geometry.n, cfg.p, cfg.kind, V_zero=(cfg.geometry.mu2 == 0.0))
    return cfg


def _header(cfg: Config) -> str:
    return "# config = " + json.dumps(cfg.to_dict(), sort_keys=True)


def _g17(x) -> str:
    return f"{x:.17g}"


def _out_path(cfg: Config, name: str, explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    path = Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path / name


def _cmd_geometry(args) -> int:
    cfg = build_config(args)
    s = np.linspace(args.s_lo, args.s_hi, args.num)
    tab = background_tables(cfg.geometry, s)
    lines = [_header(cfg), "r,s,F,Q,J,D,V"]
    for i in range(s.size):
        lines.append(",".join(_g17(tab[k][i]) for k in ("r", "s", "F", "Q", "J", "D", "V")))
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_testfn(args) -> int:
    cfg = build_config(args)
    if args.fn == "static":
        tf = testfuncs.solve_static_weight(cfg.geometry, r_max=args.r_max)
    else:
        tf = testfuncs.solve_exp_mode(cfg.geometry, args.lam, s_max=args.s_max,
                                      s_min=args.s_min)
        if args.fn == "radial":
            tf = testfuncs.radial_mode(cfg.geometry, args.lam, tf)
    lines = [_header(cfg), f"# kind = {tf.kind}, coord = {tf.coord}, normalized = {tf.log_scaled}",
             f"{tf.coord},value,dvalue"]
    for i in range(tf.grid.size):
        lines.append(",".join(_g17(v) for v in (tf.grid[i], tf.values[i], tf.dvalues[i])))
    report = {"config": cfg.to_dict(), "kind": tf.kind, "lam": tf.lam,
              "normalized": tf.log_scaled, "certificate": tf.certificate}
    if args.output:
        Path(str(args.output) + ".csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        Path(str(args.output) + ".json").write_text(json.dumps(report, indent=2, sort_keys=True),
                                                    encoding="utf-8")
    else:
        sys.stdout.write("\n".join(lines) + "\n")
        sys.stdout.write(json.dumps(report, sort_keys=True) + "\n")
    return 0


def _cmd_solve(args) -> int:
    cfg = build_config(args)
    grid = solver.make_grid(cfg.R, cfg.t_max, cfg.ds, cfg.cfl)
    data = solver.make_initial_data(cfg.epsilon, cfg.R, cfg.support)
    runner = solver.run_refined if cfg.refine else solver.run
    res = runner(cfg.geometry, grid, data, cfg.kind, cfg.p,
                 threshold=cfg.threshold, out_stride=args.out_stride)
    result = {
        "config": cfg.to_dict(),
        "blew_up": res.blew_up,
        "nan_triggered": res.nan_triggered,
        "t_blow": res.t_blow,
        "t_blow_uncertainty": res.t_blow_uncertainty,
        "t_end": res.t_end,
        "resolution": {"ds": res.ds, "dt": res.dt},
        "cone_ok": res.cone_ok,
    }
    json_path = _out_path(cfg, "solve_result.json", args.output)
    json_path.write_text(json.dumps(result, indent=2, sort_keys=True), encoding="utf-8")
    csv_lines = [_header(cfg), "t,max_amp,energy,support"]
    for i in range(res.times.size):
        csv_lines.append(",".join(_g17(v) for v in (res.times[i], res.max_amp[i],
                                                    res.energy[i], res.support[i])))
    json_path.with_suffix(".csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
    if res.blew_up:
        print(f"blow-up at T = {res.t_blow:.6g} (ds = {res.ds:.6g})")
    else:
        print(f"no blow-up up to t_max = {res.t_end:.6g}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = build_config(args)
    if not cfg.eps_list:
        raise ConfigError("sweep needs a nonempty eps_list")
    sweep_cfg = experiments.SweepConfig(
        params=cfg.geometry, p=cfg.p, kind=cfg.kind, eps_list=cfg.eps_list,
        R=cfg.R, support=cfg.support, ds=cfg.ds, cfl=cfg.cfl, refine=cfg.refine,
        t_max_factor=cfg.t_max_factor, pilot_t_max=cfg.pilot_t_max,
        threshold=cfg.threshold, lambda0_factor=cfg.lambda0_factor)
    records_path = _out_path(cfg, "records.jsonl", args.output)
    records = experiments.run_sweep(sweep_cfg, out_path=records_path, jobs=args.jobs)
    summary = [_header(cfg), "epsilon,T_blow,uncertainty,censored"]
    loglog = [_header(cfg)]
    for rec in records:
        summary.append(",".join([
            _g17(rec.epsilon),
            _g17(rec.t_blow) if rec.t_blow is not None else "nan",
            _g17(rec.uncertainty) if rec.uncertainty is not None else "nan",
            str(rec.censored).lower(),
        ]))
        if rec.usable:
            loglog.append(f"{_g17(np.log10(1.0 / rec.epsilon))} {_g17(np.log10(rec.t_blow))}")
    records_path.with_name("summary.csv").write_text("\n".join(summary) + "\n", encoding="utf-8")
    records_path.with_name("loglog.dat").write_text("\n".join(loglog) + "\n", encoding="utf-8")
    usable = sum(1 for r in records if r.usable)
    print(f"sweep complete: {usable}/{len(records)} usable records -> {records_path}")
    return 0


def _cmd_fit(args) -> int:
    cfg = build_config(args)
    records = []
    with open(args.records, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(experiments.SweepRecord.from_json(line))
    theory = lifespan_law(cfg.geometry.n, cfg.p, cfg.kind,
                          V_zero=(cfg.geometry.mu2 == 0.0))
    fit = experiments.fit_lifespan(records, args.law, theory=theory)
    verdict = experiments.compare_theorem(records, cfg.geometry.n, cfg.p, cfg.kind,
                                          V_zero=(cfg.geometry.mu2 == 0.0), law=theory)
    report = {
        "config": cfg.to_dict(),
        "fit": {k: v for k, v in fit.__dict__.items()},
        "verdict": {"passed": verdict.passed, "C_calibrated": verdict.C_calibrated,
                    "slack": verdict.slack, "offenders": verdict.offenders,
                    "excluded": verdict.excluded,
                    "margins": verdict.margins},
        "theory": {"kind": theory.kind, "exponent": theory.exponent},
    }
    out = _out_path(cfg, "fit.json", args.output)
    out.write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    print(f"fitted exponent {fit.exponent:.6g} +- {fit.stderr:.2g} "
          f"(theory {theory.exponent:.6g}, R^2 = {fit.r2:.6g}); "
          f"verdict: {'PASS' if verdict.passed else 'FAIL'}")
    return 0


def _cmd_verify(args) -> int:
    cfg = build_config(args)
    report = run_certificate_suite()
    report["config"] = cfg.to_dict()
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        print(text)
    if not report["all_passed"]:
        failed = [c["name"] for c in report["checks"] if not c["passed"]]
        print(f"certificate failures: {', '.join(failed)}", file=sys.stderr)
        return 2
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="plain-text config file ([section], key = value)")
    g = sub.add_argument_group("geometry")
    g.add_argument("--M", type=float)
    g.add_argument("--n", type=int)
    g.add_argument("--mu1", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--mu2", type=float)
    g.add_argument("--gamma", type=float)
    s = sub.add_argument_group("solver")
    s.add_argument("--p", type=float)
    s.add_argument("--kind", choices=("u", "ut"))
    s.add_argument("--epsilon", type=float)
    s.add_argument("--R", type=float)
    s.add_argument("--support-lo", dest="support_lo", type=float)
    s.add_argument("--support-hi", dest="support_hi", type=float)
    s.add_argument("--ds", type=float)
    s.add_argument("--cfl", type=float)
    s.add_argument("--t-max", dest="t_max", type=float)
    s.add_argument("--threshold", type=float)
    s.add_argument("--refine", dest="refine", action="store_const", const=True)
    w = sub.add_argument_group("sweep")
    w.add_argument("--eps-list", dest="eps_list", type=str)
    w.add_argument("--t-max-factor", dest="t_max_factor", type=float)
    w.add_argument("--pilot-t-max", dest="pilot_t_max", type=float)
    w.add_argument("--lambda0-factor", dest="lambda0_factor", type=float)
    sub.add_argument("--out-dir", dest="out_dir", type=str)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bhwave",
        description="Blow-up laboratory for damped semilinear waves outside a static black hole")
    subs = parser.add_subparsers(dest="command", required=True)

    p_geo = subs.add_parser("geometry", help="print background tables as CSV")
    p_geo.add_argument("--s-lo", type=float, default=-20.0)
    p_geo.add_argument("--s-hi", type=float, default=60.0)
    p_geo.add_argument("--num", type=int, default=81)
    p_geo.add_argument("-o", "--output")
    _add_common(p_geo)
    p_geo.set_defaults(func=_cmd_geometry)

    p_tf = subs.add_parser("testfn", help="build a test function table + certificate")
    p_tf.add_argument("--fn", choices=("static", "mode", "radial"), default="mode")
    p_tf.add_argument("--lam", type=float, default=1.0)
    p_tf.add_argument("--s-min", dest="s_min", type=float, default=-60.0)
    p_tf.add_argument("--s-max", dest="s_max", type=float, default=200.0)
    p_tf.add_argument("--r-max", dest="r_max", type=float, default=1e6)
    p_tf.add_argument("-o", "--output", help="prefix for .csv and .json outputs")
    _add_common(p_tf)
    p_tf.set_defaults(func=_cmd_testfn)

    p_solve = subs.add_parser("solve", help="evolve one configuration")
    p_solve.add_argument("--out-stride", dest="out_stride", type=int, default=None)
    p_solve.add_argument("-o", "--output", help="result JSON path (CSV lands beside it)")
    _add_common(p_solve)
    p_solve.set_defaults(func=_cmd_solve)

    p_sweep = subs.add_parser("sweep", help="run an amplitude ladder")
    p_sweep.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p_sweep.add_argument("-o", "--output", help="records JSONL path")
    _add_common(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_fit = subs.add_parser("fit", help="fit a lifespan law to sweep records")
    p_fit.add_argument("--records", required=True)
    p_fit.add_argument("--law", choices=("polynomial", "exponential"), default="polynomial")
    p_fit.add_argument("-o", "--output", help="fit report JSON path")
    _add_common(p_fit)
    p_fit.set_defaults(func=_cmd_fit)

    p_verify = subs.add_parser("verify", help="run the certificate suite")
    p_verify.add_argument("-o", "--output", help="report JSON path")
    _add_common(p_verify)
    p_verify.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage/help; keep 0 for --help, 1 for misuse
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except CertificateError as exc:
        print(f"certificate failure: {exc}", file=sys.stderr)
        return 2
    except (DomainError, ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
