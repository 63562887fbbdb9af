"""Command-line entry point (console script ``bergmanlab``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from bergmanlab.errors import BergmanLabError, ValidationError
from bergmanlab.geometry import PoleSet, ProjectivePoint, make_grid

log = logging.getLogger("bergmanlab")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _parse_pole(text: str):
    """``re,im:tau`` or ``inf:tau``."""
    point, sep, tau = text.rpartition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"pole must look like 're,im:tau' or 'inf:tau', got {text!r}")
    try:
        return ProjectivePoint.parse(point), float(tau)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _parse_grid(text: str):
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 128x256, got {text!r}") from None


def _scenario(args):
    from bergmanlab.experiments import Scenario
    from bergmanlab.sections import WeightSpec

    if args.config:
        sc = Scenario.load(args.config)
    else:
        sc = Scenario("cli", args.k if args.k is not None else 1)
    changes = {}
    if args.k is not None:
        changes["k"] = args.k
    if args.pole:
        changes["poles"] = PoleSet(tuple(args.pole))
    if args.weight:
        params = json.loads(args.weight_params) if args.weight_params else {}
        changes["weight"] = WeightSpec.preset(args.weight, **params)
    if getattr(args, "p", None):
        changes["p_list"] = list(args.p)
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.grid is not None:
        changes["grid" if args.command in ("bergman", "rate", "report") else "envelope_grid"] = list(args.grid)
    if getattr(args, "samples", None):
        changes["n_samples"] = args.samples
    return sc.replace(**changes) if changes else sc


def _out_path(args, default_name: str) -> Path | None:
    if not args.out:
        return None
    out = Path(args.out)
    if out.exists() and not args.force and (out.is_file() or any(out.iterdir())):
        raise ValidationError(f"{out} exists; pass --force to overwrite")
    return out


def _write(args, name, text):
    out = _out_path(args, name)
    if out is None:
        sys.stdout.write(text)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    print(f"wrote {out}")


# ---------------------------------------------------------------- subcommands


def cmd_dim(args):
    from bergmanlab.sections import dimension

    sc = _scenario(args)
    for p in sc.sorted_p:
        th = sc.poles.thresholds(p)
        print(f"p={p} dim={dimension(sc.k, p, sc.poles)} thresholds={th}")


def cmd_big(args):
    from bergmanlab.experiments import run_bigness_study

    sc = _scenario(args)
    table = run_bigness_study(sc.k, sc.poles, sc.sorted_p)
    verdict = "big" if table.big else "not big"
    print(f"k={sc.k} sum_tau={sc.poles.tau_sum!r}: {verdict} (criterion: sum of tau < k)")
    _write(args, "bigness.csv", table.to_csv())


def cmd_bergman(args):
    from bergmanlab.sections import bergman_field, build_orthonormal_basis

    sc = _scenario(args)
    sc.require_big()
    p = sc.sorted_p[-1]
    space = build_orthonormal_basis(sc.k, p, sc.poles, sc.weight, grid=make_grid(*sc.grid) if sc.grid else None)
    field = bergman_field(space)
    print(f"p={p} dim={space.dim} trace={field.trace()!r} grid={space.grid.grid_id} passes={space.passes}")
    out = _out_path(args, "")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"onb_p{p}.txt").write_text(space.export_text())
        field.P.save(out / f"bergman_p{p}.txt")
        field.phi_p.save(out / f"phi_p{p}.txt")
        print(f"wrote {out}")


def cmd_envelope(args):
    from bergmanlab.envelopes import EnvelopeProblem, equilibrium_current, solve_envelope

    sc = _scenario(args)
    sc.require_big()
    grid = make_grid(*sc.envelope_grid)
    res = solve_envelope(EnvelopeProblem.build(sc.k, sc.poles, sc.weight, grid), tol=sc.tolerances["envelope"], method=args.method)
    summary = res.summary()
    summary["free_boundary"] = equilibrium_current(res).free_boundary
    print(json.dumps(summary, indent=2, sort_keys=True))
    out = _out_path(args, "")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        res.export(out / "envelope")
        print(f"wrote {out}")


def cmd_rate(args):
    from bergmanlab.experiments import run_rate_study

    sc = _scenario(args)
    table = run_rate_study(sc)
    print(f"mode={table.mode} passed={table.passed()}")
    _write(args, "rate.csv", table.to_csv())


def cmd_zeros(args):
    from bergmanlab.sections import build_orthonormal_basis
    from bergmanlab.zeros import sample_section, zero_divisor

    sc = _scenario(args)
    sc.require_big()
    p = sc.sorted_p[-1]
    space = build_orthonormal_basis(sc.k, p, sc.poles, sc.weight)
    div = zero_divisor(sample_section(space, sc.seed), tol=sc.tolerances["roots"])
    print(f"p={p} seed={sc.seed} total={div.total} at_infinity={div.infinity_multiplicity}", file=sys.stderr)
    _write(args, "divisor.txt", div.to_text())


def cmd_speed(args):
    from bergmanlab.experiments import run_speed_study

    sc = _scenario(args)
    rep = run_speed_study(sc, fit_p=args.fit_p)
    print(
        f"c_hat={rep.c_hat!r} median_D={rep.median_D()} exceedance={rep.exceedance()} "
        f"median_nonincreasing={rep.median_nonincreasing()} failures={len(rep.failures)}",
        file=sys.stderr,
    )
    _write(args, "speed.csv", rep.to_csv())


def cmd_report(args):
    from bergmanlab.experiments import (
        _spaces,
        emit_report,
        equilibrium_data,
        run_bigness_study,
        run_bound_diagnostics,
        run_rate_study,
        run_speed_study,
    )

    sc = _scenario(args)
    if not args.out:
        raise ValidationError("report needs --out DIR")
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ValidationError(f"{out} is not empty; pass --force to overwrite")
    bigness = run_bigness_study(sc.k, sc.poles, sc.sorted_p)
    sc.require_big()
    eq = equilibrium_data(sc)
    spaces = _spaces(sc, sc.section_grid(), None)
    rate = run_rate_study(sc, spaces=spaces, eq=eq)
    bounds = run_bound_diagnostics(sc, spaces=spaces, eq=eq)
    speed = run_speed_study(sc, eq=eq) if not args.skip_speed else None
    written = emit_report(out, sc, rate=rate, bigness=bigness, bounds=bounds, speed=speed, eq=eq, force=args.force)
    for path in written:
        print(f"wrote {path}")


COMMANDS = {
    "dim": (cmd_dim, "dimension of the constrained section spaces"),
    "big": (cmd_big, "bigness predicate and dim/p table"),
    "bergman": (cmd_bergman, "orthonormal basis and partial Bergman kernel at the largest p"),
    "envelope": (cmd_envelope, "solve for the equilibrium envelope"),
    "rate": (cmd_rate, "L1 convergence study of phi_p towards phi_eq"),
    "zeros": (cmd_zeros, "zero divisor of one random section"),
    "speed": (cmd_speed, "Monte Carlo speed-of-convergence experiment"),
    "report": (cmd_report, "run all studies and write a report directory"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bergmanlab", description="Partial Bergman kernels and equilibrium envelopes on CP^1.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (fn, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", help="scenario file (JSON)")
        sp.add_argument("--k", type=int)
        sp.add_argument("--pole", action="append", type=_parse_pole, metavar="RE,IM:TAU", help="repeatable; 'inf:TAU' for infinity")
        sp.add_argument("--weight", help="weight preset name")
        sp.add_argument("--weight-params", help="JSON object of preset parameters")
        sp.add_argument("-p", "--p", type=int, action="append", help="tensor power; repeatable")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--grid", type=_parse_grid, metavar="NRxNA")
        sp.add_argument("--out")
        sp.add_argument("--force", action="store_true", help="overwrite existing output")
        if name in ("speed", "report"):
            sp.add_argument("--samples", type=int)
        if name == "speed":
            sp.add_argument("--fit-p", type=int)
        if name == "report":
            sp.add_argument("--skip-speed", action="store_true")
        if name == "envelope":
            sp.add_argument("--method", choices=("pdas", "psor"), default="pdas")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except BergmanLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, FileNotFoundError, FileExistsError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
