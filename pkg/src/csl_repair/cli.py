"""Command-line front-end: ``csl-repair {check,repair,sweep,partition,simulate}``.

Exit codes: 0 success, 1 requirement violated (``check``), 2 usage, input or
parse error, 3 repair failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import DEFAULT_DELTA
from .csl import CslError, UnknownAtomWarning, check, format_requirement, parse, prop_mask
from .oracle import SimConfig, simulate_until
from .repair import (BsmConfig, RepairError, RepairStatus, SWEEP_SCOPE, classify, repair,
                     sweep)
from .smc import (Factors, ModelFormatError, StateClass, apply_factors, build_reduced, read_model,
                  validate, write_model)

EXIT_OK, EXIT_VIOLATED, EXIT_ERROR, EXIT_FAILED = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("model", type=Path, help="explicit-state model file")
    p.add_argument("formula", nargs="?", help='requirement, e.g. \'P<=0.2 [ "up" U<=5 "repair" ]\'')
    p.add_argument("--formula-file", type=Path, help="read the requirement from a one-line file")
    p.add_argument("--trunc-error", type=float, default=DEFAULT_DELTA,
                   help="Poisson truncation error for uniformisation (default %(default)g)")
    p.add_argument("--strict-atoms", action="store_true",
                   help="treat unknown atomic propositions as an error")
    p.add_argument("--merge-duplicates", action="store_true",
                   help="sum rates of repeated (src, dst) lines instead of rejecting them")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csl-repair", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="model-check the requirement in every state")
    _add_common(p)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("repair", help="synthesize rate-reduction factors")
    _add_common(p)
    p.add_argument("--epsilon", type=float, default=1e-4, help="search precision (default %(default)g)")
    p.add_argument("--output", type=Path, help="also write the report to this file")
    p.add_argument("--emit-model", type=Path, help="write the repaired model here")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("sweep", help="probabilities over a grid of one factor, as CSV")
    _add_common(p)
    p.add_argument("--factor", choices=sorted(SWEEP_SCOPE), required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--grid", help="uniform grid START:STOP:STEPS inside (0,1]")
    g.add_argument("--values", help="comma separated factor values inside (0,1]")
    p.add_argument("--fixed", default="", help="values of the other factors, e.g. i=0.089,k=1")
    p.add_argument("--csv", type=Path, help="output file (default: stdout)")

    p = sub.add_parser("partition", help="list the class of every state")
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo estimate for one start state")
    _add_common(p)
    p.add_argument("--state", type=int, required=True)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--untimed", action="store_true", help="ignore the time bound")
    return parser


def _load(args):
    if (args.formula is None) == (args.formula_file is None):
        raise UsageError("give the formula either as an argument or with --formula-file")
    text = args.formula
    if args.formula_file is not None:
        lines = [ln for ln in args.formula_file.read_text(encoding="utf-8").splitlines() if ln.strip()]
        if len(lines) != 1:
            raise UsageError(f"{args.formula_file}: expected exactly one formula line")
        text = lines[0]
    smc = read_model(args.model, merge_duplicates=args.merge_duplicates)
    report = validate(smc)
    if not report.ok:
        raise UsageError("invalid model: " + "; ".join(report.errors))
    return smc, parse(text)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def cmd_check(args, out) -> int:
    smc, req = _load(args)
    res = check(smc, req, args.trunc_error, strict=args.strict_atoms)
    part = classify(smc, req, args.strict_atoms).partition
    if args.json:
        json.dump({
            "formula": format_requirement(req),
            "all_satisfied": res.all_sat,
            "states": [{"state": s, "class": str(part.class_of[s]), "probability": float(res.prob[s]),
                        "satisfied": bool(res.sat[s])} for s in range(len(res))],
        }, out, indent=2)
        out.write("\n")
    else:
        out.write(f"formula: {format_requirement(req)}\n")
        out.write(f"{'state':>6}  {'class':<12} {'probability':>14}  result\n")
        for s in range(len(res)):
            verdict = "sat" if res.sat[s] else "VIOLATED"
            out.write(f"{s:>6}  {str(part.class_of[s]):<12} {_fmt(res.prob[s]):>14}  {verdict}\n")
        n_bad = int((~res.sat).sum())
        out.write("all states satisfy the requirement\n" if n_bad == 0
                  else f"{n_bad} of {len(res)} states violate the requirement\n")
    return EXIT_OK if res.all_sat else EXIT_VIOLATED


def _render_repair(outcome, req) -> str:
    buf = io.StringIO()
    w = buf.write
    w(f"formula: {format_requirement(req)}\n")
    w(f"status: {outcome.status}\n")
    if outcome.message and outcome.message != outcome.status.value:
        w(f"{outcome.message}\n")
    f = outcome.factors
    w(f"factors: i={_fmt(f.i)} j={_fmt(f.j)} k={_fmt(f.k)}\n")
    for name, edges in (("T_i", outcome.t_i), ("T_j", outcome.t_j), ("T_k", outcome.t_k)):
        listed = " ".join(f"{s}->{d}" for s, d in sorted(edges))
        w(f"|{name}| = {len(edges)}" + (f": {listed}" if listed else "") + "\n")
    if outcome.iterations:
        w("passes: " + ", ".join(f"{k}={v}" for k, v in outcome.iterations.items()) + "\n")
    if outcome.limit:
        w("smallest factor tried still leaves: "
          + ", ".join(f"state {s} at {_fmt(p)}" for s, p in sorted(outcome.limit.items())) + "\n")
    w(f"{'state':>6}  {'class':<12} {'before':>14} {'after':>14}\n")
    for s in range(len(outcome.before)):
        mark = "*" if s in outcome.scope else " "
        w(f"{s:>6}{mark} {str(outcome.partition.class_of[s]):<12} "
          f"{_fmt(outcome.before[s]):>14} {_fmt(outcome.after[s]):>14}\n")
    w("(* = state the algorithm acts on)\n")
    return buf.getvalue()


def cmd_repair(args, out) -> int:
    smc, req = _load(args)
    try:
        cfg = BsmConfig(epsilon=args.epsilon)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    outcome = repair(smc, req, cfg, delta=args.trunc_error, strict=args.strict_atoms)
    text = (json.dumps(outcome.to_dict(), indent=2) + "\n") if args.json else _render_repair(outcome, req)
    out.write(text)
    if args.output is not None:
        args.output.write_text(text, encoding="utf-8")
    if args.emit_model is not None:
        part = outcome.partition
        write_model(apply_factors(build_reduced(smc, part), outcome.factors), args.emit_model)
    return EXIT_FAILED if outcome.status is RepairStatus.FAILED else EXIT_OK


def _parse_grid(args) -> list[float]:
    try:
        if args.grid is not None:
            start, stop, steps = args.grid.split(":")
            steps = int(steps)
            if steps < 2:
                raise UsageError("--grid needs at least 2 steps")
            grid = np.linspace(float(start), float(stop), steps).tolist()
        else:
            grid = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError("malformed grid specification") from None
    if not grid or any(not 0.0 < x <= 1.0 for x in grid):
        raise UsageError("all grid points must lie in (0, 1]")
    return grid


def _parse_fixed(text: str) -> Factors:
    values = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        name, sep, val = item.partition("=")
        if not sep or name.strip() not in ("i", "j", "k"):
            raise UsageError(f"bad --fixed entry {item!r}")
        try:
            values[name.strip()] = float(val)
        except ValueError:
            raise UsageError(f"bad --fixed entry {item!r}") from None
    try:
        return Factors(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_sweep(args, out) -> int:
    smc, req = _load(args)
    grid = _parse_grid(args)
    fixed = _parse_fixed(args.fixed)
    rows = sweep(smc, req, args.factor, grid, fixed, args.trunc_error, args.strict_atoms)
    target = open(args.csv, "w", newline="", encoding="utf-8") if args.csv else out
    try:
        writer = csv.writer(target, lineterminator="\n")
        writer.writerow(["factor", "state", "probability"])
        for x, s, p in rows:
            writer.writerow([_fmt(x), s, _fmt(p)])
    finally:
        if args.csv:
            target.close()
    return EXIT_OK


def cmd_partition(args, out) -> int:
    smc, req = _load(args)
    part = classify(smc, req, args.strict_atoms).partition
    out.write(f"{'state':>6}  class\n")
    for s, c in enumerate(part.class_of):
        out.write(f"{s:>6}  {c}\n")
    counts = part.counts()
    for c in StateClass:
        members = sorted(part.states(c))
        shown = " ".join(map(str, members)) if members else "(empty)"
        out.write(f"{c.value:<12} {counts[c]:>4}  {shown}\n")
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    smc, req = _load(args)
    phi = prop_mask(smc, req.phi, args.strict_atoms)
    psi = prop_mask(smc, req.psi, args.strict_atoms)
    try:
        cfg = SimConfig(num_paths=args.paths, seed=args.seed)
        res = simulate_until(smc, args.state, phi, psi, None if args.untimed else req.time_bound, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out.write(f"estimate {_fmt(res.estimate)} std_error {_fmt(res.std_error)} "
              f"paths {res.num_paths} capped {res.capped}\n")
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "repair": cmd_repair,
    "sweep": cmd_sweep,
    "partition": cmd_partition,
    "simulate": cmd_simulate,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", UnknownAtomWarning)
        try:
            code = COMMANDS[args.command](args, out)
        except ModelFormatError as exc:
            print(f"error: {args.model}: {exc}", file=sys.stderr)
            return EXIT_ERROR
        except (UsageError, CslError, OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
        except RepairError as exc:
            print(f"error: repair aborted: {exc}", file=sys.stderr)
            return EXIT_ERROR
        finally:
            for msg in dict.fromkeys(str(w.message) for w in caught
                                     if issubclass(w.category, UnknownAtomWarning)):
                print(f"warning: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
