"""Command-line entry point: ``lagsync <subcommand> [options]``.

Exit codes: 0 success, 1 validation failure or bad usage, 2 divergence,
3 a bound was violated (settling bound exceeded, positive domination slack,
uncertified gains or a plant bound that the grid falsifies).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .agents import certify_bounds, tight_bounds
from .config import emit_config, parse_config
from .controller import RobustConfig, build_ledger, check_finite_gains, ledger_for, sample_domination_slack
from .errors import (
    AssumptionViolated, Divergence, GainConditionViolated, LagsyncError, NonFiniteState,
    UncertifiedGains, ValidationError,
)
from .network import laplacian_bundle
from .numerics import OddRational
from .observer import observer_constants
from .simulation import gnuplot_script, monte_carlo, simulate, trajectory_csv

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_BOUND = 0, 1, 2, 3

log = logging.getLogger("lagsync")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _scale(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo:hi") from None
    if not 0 < lo <= hi:
        raise argparse.ArgumentTypeError("need 0 < lo <= hi")
    return lo, hi


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, OddRational):
        return str(obj)
    return obj


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


class _Output:
    """Writes only inside ``--out``; without it, nothing touches the disk."""

    def __init__(self, out):
        self.dir = Path(out) if out else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        if self.dir is not None:
            (self.dir / name).write_text(text, encoding="utf-8", newline="")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lagsync", description="Fixed-time synchronization of networked two-link arms.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    def common(sp, modes=True):
        sp.add_argument("--scenario", default="paper_example",
                        help="scenario TOML file or bundled name (default: paper_example)")
        sp.add_argument("--out", help="output directory (nothing is written without it)")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        if modes:
            sp.add_argument("--mode", choices=("fixed", "finite"),
                            help="finite sets c3 = gamma2 = k2 = 0")
            sp.add_argument("--allow-uncertified", action="store_true",
                            help="simulate gains that fail the gain inequalities")
            sp.add_argument("--h", type=float, help="integrator step in seconds")
            sp.add_argument("--horizon", type=float, help="horizon in seconds")

    sp = sub.add_parser("simulate", help="closed-loop run with CSV, JSON and gnuplot output")
    common(sp)
    sp.add_argument("--csv-every", type=int, default=100, help="sample every N steps (default 100)")

    sp = sub.add_parser("montecarlo", help="settling statistics over random initial errors")
    common(sp)
    sp.add_argument("--runs", type=int, default=20)
    sp.add_argument("--scale", type=_scale, default=(1e-2, 1e2), help="lo:hi (default 0.01:100)")
    sp.add_argument("--closed-loop", action="store_true",
                    help="integrate the arms too (the observer alone is the default)")

    sp = sub.add_parser("certify-gains", help="gain ledger and slack of every gain inequality")
    common(sp, modes=False)
    sp.add_argument("--mode", choices=("fixed", "finite"))
    for k in ("gamma1", "gamma2", "k1", "k2"):
        sp.add_argument(f"--{k}", type=float)
    sp.add_argument("--alpha")
    sp.add_argument("--beta")
    sp.add_argument("--build", action="store_true", help="construct gains from the lower bounds")
    sp.add_argument("--margin", type=float, default=0.05)

    sp = sub.add_parser("observer-bound", help="observer constants and settling bound")
    common(sp, modes=False)
    sp.add_argument("--mode", choices=("fixed", "finite"))

    sp = sub.add_parser("certify-bounds", help="grid check of the plant bounds and domination slack")
    common(sp, modes=False)
    sp.add_argument("--grid", type=int, default=361, help="q samples per axis (default 361)")
    sp.add_argument("--v-max", type=float, default=10.0, help="velocity ball radius")
    sp.add_argument("--draws", type=int, default=10_000, help="domination-slack draws (0 to skip)")
    sp.add_argument("--margin", type=float, default=0.01, help="margin for the suggested bounds")
    return p


def _load(args):
    s = parse_config(args.scenario)
    if args.seed is not None:
        s = s.replace(seed=args.seed)
    if getattr(args, "mode", None) == "finite":
        s = s.finite_variant()
    if getattr(args, "h", None) is not None:
        s = s.replace(step=args.h)
    if getattr(args, "horizon", None) is not None:
        s = s.replace(horizon=args.horizon)
    if getattr(args, "allow_uncertified", False):
        s = s.replace(controller=dataclasses.replace(s.controller, allow_uncertified=True))
    return s


def cmd_simulate(args, out: _Output) -> int:
    s = _load(args)
    if args.csv_every < 1:
        raise ValidationError("must be >= 1", key="--csv-every")
    traj, rep = simulate(s, record_every=args.csv_every)
    report = rep.as_dict()
    report["scenario"] = str(args.scenario)
    report["step"] = s.step
    report["horizon"] = s.horizon
    report["tolerance"] = s.tolerance
    report["tracking_settled"] = all(t is not None for t in rep.t_trk)
    out.write("trajectory.csv", trajectory_csv(traj))
    out.write("report.json", _dump(report))
    out.write("plot.gp", gnuplot_script("trajectory.csv", rep, s.N, s.horizon))
    out.write("scenario.toml", emit_config(s))
    sys.stdout.write(_dump(report))
    return EXIT_OK if rep.bound_respected else EXIT_BOUND


def cmd_montecarlo(args, out: _Output) -> int:
    s = _load(args)
    agg = monte_carlo(s, args.runs, args.scale, observer_only=not args.closed_loop, seed=args.seed)
    out.write("montecarlo.json", _dump(agg))
    sys.stdout.write(_dump(agg))
    return EXIT_OK if agg["violations"] == 0 else EXIT_BOUND


def cmd_certify_gains(args, out: _Output) -> int:
    s = _load(args)
    c = s.controller
    alpha = OddRational.parse(args.alpha) if args.alpha else c.alpha
    beta = OddRational.parse(args.beta) if args.beta else c.beta
    finite = (args.mode or c.mode) == "finite"
    if args.build:
        led = build_ledger(alpha, beta, args.margin)
    else:
        vals = {k: getattr(args, k) if getattr(args, k) is not None else getattr(c, k)
                for k in ("gamma1", "gamma2", "k1", "k2")}
        if finite:
            vals["gamma2"] = vals["k2"] = 0.0
        led = ledger_for(alpha, beta, **vals)
    doc = {"mode": "finite" if finite else "fixed", "ledger": led.as_dict()}
    certified = led.certified
    if finite:
        fin = check_finite_gains(alpha, led.gamma1, led.k1)
        doc["finite"] = fin
        certified = fin["certified"]
    doc["certified"] = certified
    out.write("gains.json", _dump(doc))
    sys.stdout.write(_dump(doc))
    return EXIT_OK if certified else EXIT_BOUND


def cmd_observer_bound(args, out: _Output) -> int:
    s = _load(args)
    bundle = laplacian_bundle(s.graph, s.D_diag)
    consts = observer_constants(s.observer, bundle.D, s.leader.S, s.leader.n, s.N)
    doc = dataclasses.asdict(consts)
    if consts.finite_time:
        from .simulation import ClosedLoop
        doc["T1_bar"] = ClosedLoop(s, observer_only=True).settling_bound(s.initial_state())
    doc["D_diag"] = np.diag(bundle.D).tolist()
    doc["D_min_eig"] = bundle.min_eig
    doc["D_ok"] = bundle.D_ok
    doc["D_source"] = bundle.D_source
    out.write("observer_bound.json", _dump(doc))
    sys.stdout.write(_dump(doc))
    return EXIT_OK


def cmd_certify_bounds(args, out: _Output) -> int:
    s = _load(args)
    if args.grid < 3:
        raise ValidationError("must be >= 3", key="--grid")
    b = s.bounds.as_dict()
    gravity = s.agents[0].gravity
    cert = certify_bounds(s.theta_ranges, b, n_q=args.grid, v_max=args.v_max, gravity=gravity,
                          raise_on_violation=False)
    doc = {
        "bounds": b,
        "passed": cert.passed,
        "samples_checked": cert.samples_checked,
        "max_violation": cert.max_violation,
        "witness": cert.witness,
        "details": cert.details,
        "suggested_bounds": tight_bounds(s.theta_ranges, args.margin, n_q=args.grid, gravity=gravity),
    }
    ok = cert.passed
    if args.draws > 0:
        rc = RobustConfig.from_bounds(b, s.controller.kappa)
        dom = sample_domination_slack(s.theta_ranges, rc, args.draws, seed=s.seed, v_max=args.v_max,
                                      alpha=s.controller.alpha, gravity=gravity)
        dom.pop("slacks")
        doc["domination"] = dom
        ok = ok and dom["max_slack"] <= 1e-9
    out.write("bounds.json", _dump(doc))
    sys.stdout.write(_dump(doc))
    return EXIT_OK if ok else EXIT_BOUND


COMMANDS = {
    "simulate": cmd_simulate,
    "montecarlo": cmd_montecarlo,
    "certify-gains": cmd_certify_gains,
    "observer-bound": cmd_observer_bound,
    "certify-bounds": cmd_certify_bounds,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    try:
        out = _Output(args.out)
        return COMMANDS[args.command](args, out)
    except (Divergence, NonFiniteState) as exc:
        print(f"lagsync: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValidationError, GainConditionViolated, UncertifiedGains, AssumptionViolated) as exc:
        print(f"lagsync: invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except LagsyncError as exc:
        print(f"lagsync: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"lagsync: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
