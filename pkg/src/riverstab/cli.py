"""Command-line front end.

Every subcommand reads a scenario (``--scenario FILE`` or a built-in
``--regime`` name), lets individual parameters be overridden, writes its
results into ``--out DIR`` and prints a one-line summary.  Exit codes: 0 on
success, 1 on input or numerical errors, 2 when ``validate`` finds failures.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .discretization import GridError, assemble
from .dynamics import DynamicsError, integrate_single, invasion_test
from .eigensolver import EigenError, LambdaStarError, lambda_star, principal_eigen
from .profiles import ProfileError, check_hypotheses
from .scenario import CANONICAL, Scenario, ScenarioError, load_scenario
from .stability import Column, classify, critical_q, sweep_region
from .steady import SteadyError, find_qstar, solve_eta, solve_theta
from .thresholds import gamma_thresholds, gamma_regime, structural_roots

FORMATS = ("csv", "json")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def write_json(path: Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def write_rows(path: Path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating))
                                                    else str(v)) for v in row) + "\n")


# -- scenario plumbing -----------------------------------------------------------

OVERRIDES = ("b", "gamma", "mu", "nu", "q", "mu_min", "mu_max", "mu_count", "q_count", "grid_n")


def scenario_from_args(args) -> Scenario:
    if args.scenario and args.regime:
        raise UsageError("use either --scenario or --regime, not both")
    if args.scenario:
        sc = load_scenario(args.scenario)
    elif args.regime:
        if args.regime not in CANONICAL:
            raise UsageError(f"unknown regime {args.regime!r}; choose from {', '.join(CANONICAL)}")
        sc = CANONICAL[args.regime]
    else:
        raise UsageError("a scenario is required (--scenario FILE or --regime NAME)")
    kw = {k: getattr(args, k) for k in OVERRIDES if getattr(args, k, None) is not None}
    return sc.with_(**kw) if kw else sc


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(args, stem: str, meta: dict, header=None, rows=None) -> None:
    """Write ``stem.json`` (and ``stem.csv`` when csv rows are given)."""
    out = _out_dir(args)
    if out is None:
        return
    meta = {"schema": 1, **meta}
    if args.format == "csv" and header is not None:
        write_rows(out / f"{stem}.csv", header, rows)
    elif header is not None:
        meta["data"] = {"columns": list(header), "rows": [list(r) for r in rows]}
    write_json(out / f"{stem}.json", meta)


# -- subcommands -----------------------------------------------------------------

def cmd_eigen(args, sc: Scenario) -> int:
    d = args.d if args.d is not None else sc.mu
    h = args.h if args.h is not None else sc.r_spec
    from .profiles import profile_from_spec
    hp = profile_from_spec(h)
    pair = principal_eigen(assemble(d, sc.q, hp, sc.grid))
    _emit(args, "eigen", {"d": d, "q": sc.q, "h": h, "n": sc.grid_n, **pair.to_metadata()},
          ("x", "phi1"), zip(sc.grid.nodes, pair.phi1))
    print(f"sigma1 = {pair.sigma1!r}")
    return 0


def cmd_steady(args, sc: Scenario) -> int:
    st = solve_eta(sc.mu, sc.r, sc.K, sc.grid) if sc.q == 0 else \
        solve_theta(sc.mu, sc.q, sc.r, sc.K, sc.grid)
    _emit(args, "steady", st.to_metadata(), ("x", "value"), zip(sc.grid.nodes, st.field))
    print(f"steady state: mu = {sc.mu!r}, q = {sc.q!r}, max = {st.max!r}, integral = {st.integral()!r}")
    return 0


def cmd_qstar(args, sc: Scenario) -> int:
    mus = sc.mu_samples() if args.curve else np.array([sc.mu])
    res = [find_qstar(m, sc.r, sc.grid) for m in mus]
    _emit(args, "qstar", {"n": sc.grid_n, "points": [w.to_dict() for w in res]},
          ("mu", "qstar"), ((w.mu, w.qstar) for w in res))
    for w in res:
        print(f"q*({w.mu!r}) = {w.qstar!r}")
    return 0


def cmd_thresholds(args, sc: Scenario) -> int:
    th = gamma_thresholds(sc.b, sc.r, sc.K, sc.grid)
    roots = structural_roots(sc.b, sc.gamma, sc.r, sc.K, sc.grid, thresholds=th)
    hyp = check_hypotheses(sc.r, sc.K, sc.grid)
    meta = {"thresholds": th.to_dict(), "regime": gamma_regime(sc.gamma, th),
            "roots": roots.to_dict(), "hypotheses": hyp.to_dict(), "n": sc.grid_n}
    _emit(args, "thresholds", meta, ("mu", "eta_integral", "eta_max", "lambda_star"), roots.table)
    print("gamma1..4 = " + ", ".join(f"{g:.10g}" for g in th.values) + f"; regime {meta['regime']}")
    return 0


def cmd_lambda_star(args, sc: Scenario) -> int:
    eta = solve_eta(sc.mu, sc.r, sc.K, sc.grid)
    lam = lambda_star(sc.mu, sc.b, sc.gamma, eta)
    rows = [] if lam.psi is None else zip(sc.grid.nodes, lam.psi)
    _emit(args, "lambda_star", {"n": sc.grid_n, **lam.to_dict()}, ("x", "psi"), rows)
    print(f"lambda*({sc.mu!r}) = " + (repr(lam.value) if lam.defined else "not defined"))
    return 0


def cmd_classify(args, sc: Scenario) -> int:
    v = classify(sc.mu, sc.nu, sc.q, sc.b, sc.gamma, sc)
    meta = {"mu": sc.mu, "nu": sc.nu, "q": sc.q, "b": sc.b, "gamma": sc.gamma,
            "sigma": v.sigma, "verdict": v.verdict, "margin": v.margin}
    _emit(args, "classify", meta, ("mu", "nu", "q", "sigma", "verdict"),
          [(sc.mu, sc.nu, sc.q, v.sigma, v.verdict)])
    print(f"{v.verdict}: sigma = {v.sigma!r}")
    return 0


def cmd_critical_q(args, sc: Scenario) -> int:
    cq = critical_q(sc.mu, sc.nu, sc.b, sc.gamma, sc)
    _emit(args, "critical_q", {"b": sc.b, "gamma": sc.gamma, **cq.to_dict()})
    print("critical q = " + ("none" if cq.value is None else repr(cq.value)))
    return 0


def cmd_sweep(args, sc: Scenario) -> int:
    th_regime = args.tag or sc.name
    m = sweep_region(sc.mu_samples(), sc.q_count, sc.nu, sc.b, sc.gamma, sc, jobs=args.jobs)
    m.regime = th_regime
    out = _out_dir(args)
    if out is not None:
        if args.format == "csv":
            m.write_csv(out / "sweep.csv", layout=args.layout)
            m.write_json(out / "sweep.json")
        else:
            summary = m.summary()
            summary["cells"] = [{"mu": c.mu, "q": c.q.tolist(), "sigma": c.sigma.tolist(),
                                 "verdict": c.verdicts} for c in m.columns]
            write_json(out / "sweep.json", summary)
    unstable = sum(v == "Unstable" for c in m.columns for v in c.verdicts)
    total = sum(len(c.verdicts) for c in m.columns)
    print(f"sweep: {len(m.columns)} x {sc.q_count} cells, {unstable}/{total} unstable, "
          f"{len(m.errors())} errors")
    return 1 if m.errors() else 0


def cmd_simulate(args, sc: Scenario) -> int:
    out = _out_dir(args)
    if args.mode == "single":
        tr = integrate_single(sc.mu, sc.q, sc, args.u0, args.T, args.dt)
        extra = {"mode": "single", "mu": sc.mu, "q": sc.q}
        if out is not None:
            tr.write(out / "trajectory.csv", out / "trajectory.json", extra)
        print(f"simulate: t = {float(tr.times[-1])!r}, max u = {float(tr.final_u.max())!r}")
        return 0
    col = Column(sc.mu, sc)
    res = invasion_test(sc.mu, sc.nu, sc.q, sc.b, sc.gamma, sc, eps=args.eps,
                        **({} if args.dt is None else {"dt": args.dt}), column=col)
    if out is not None:
        res.trajectory.write(out / "trajectory.csv", out / "trajectory.json",
                             {"mode": "invasion", **res.to_dict()})
    print(f"invasion rate = {res.rate!r}, sigma1 = {res.sigma!r}")
    return 0


def cmd_validate(args, sc: Scenario | None) -> int:
    from .validation import run_all

    only = [int(k) for k in args.only.split(",")] if args.only else None
    results = run_all(quick=args.quick, only=only)
    for c in results:
        print(c.line())
    out = _out_dir(args)
    if out is not None:
        write_json(out / "validate.json", {"schema": 1, "quick": args.quick,
                                            "criteria": [c.to_dict() for c in results]})
    failed = [c.number for c in results if not c.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 2 if failed else 0


# -- parser ------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    if scenario:
        p.add_argument("--scenario", help="scenario file (INI)")
        p.add_argument("--regime", help="built-in scenario: " + ", ".join(CANONICAL))
        for name in ("b", "gamma", "mu", "nu", "q", "mu-min", "mu-max"):
            p.add_argument(f"--{name}", type=float, dest=name.replace("-", "_"))
        p.add_argument("--mu-count", type=int)
        p.add_argument("--q-count", type=int)
    p.add_argument("--grid-n", type=int, help="number of cells (default from scenario, 256)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="parallel workers for sweeps")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="riverstab", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    specs = {
        "eigen": "principal eigenpair of d u'' - q u' + h u (d defaults to mu, h to r)",
        "steady": "prey steady state eta (q = 0) or theta(mu, q)",
        "qstar": "washout advection q*(mu)",
        "thresholds": "mortality thresholds, regime and structural roots",
        "lambda-star": "indefinite-weight eigenvalue lambda*(mu)",
        "classify": "stability verdict for (theta, 0)",
        "critical-q": "transition advection in (0, q*)",
        "sweep": "stability map over a (mu, q) rectangle",
        "simulate": "time integration (single species or predator invasion)",
        "validate": "run the acceptance suite",
    }
    ps = {}
    for name, help_ in specs.items():
        ps[name] = sub.add_parser(name, help=help_)
        _common(ps[name], scenario=name != "validate")
    ps["eigen"].add_argument("--d", type=float, help="diffusion rate")
    ps["eigen"].add_argument("--h", help="potential expression or CSV file")
    ps["qstar"].add_argument("--curve", action="store_true", help="sample the scenario mu range")
    ps["sweep"].add_argument("--layout", choices=("long", "gnuplot"), default="long",
                             help="gnuplot inserts a blank line between mu columns")
    ps["sweep"].add_argument("--tag", help="regime label recorded in the summary")
    ps["simulate"].add_argument("--mode", choices=("single", "invasion"), default="single")
    ps["simulate"].add_argument("--T", type=float, default=200.0, help="final time (single mode)")
    ps["simulate"].add_argument("--dt", type=float, help="time step")
    ps["simulate"].add_argument("--u0", type=float, default=0.5, help="constant initial prey")
    ps["simulate"].add_argument("--eps", type=float, default=1e-6, help="initial predator level")
    ps["validate"].add_argument("--quick", action="store_true", help="use 128-cell grids")
    ps["validate"].add_argument("--only", help="comma-separated criterion numbers")
    return parser


COMMANDS = {
    "eigen": cmd_eigen, "steady": cmd_steady, "qstar": cmd_qstar, "thresholds": cmd_thresholds,
    "lambda-star": cmd_lambda_star, "classify": cmd_classify, "critical-q": cmd_critical_q,
    "sweep": cmd_sweep, "simulate": cmd_simulate, "validate": cmd_validate,
}

ERRORS = {
    ScenarioError: "scenario", ProfileError: "profiles", GridError: "discretization",
    EigenError: "eigensolver", LambdaStarError: "eigensolver", SteadyError: "steady",
    DynamicsError: "dynamics", ValueError: "input", OSError: "io",
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "validate":
            return cmd_validate(args, None)
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        sc = scenario_from_args(args)
        return COMMANDS[args.command](args, sc)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except tuple(ERRORS) as exc:
        module = next(v for k, v in ERRORS.items() if isinstance(exc, k))
        print(f"error ({module}): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
