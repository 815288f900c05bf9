"""Command-line entry point: ``hamreeb <command> [options]``.

Every command prints (or writes under ``--out``) a JSON report of the form
``{command, inputs, checks: [{name, residual, tolerance, passed}], passed}``
and exits 0 when all checks pass, 1 when one fails and 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import (DEFAULT_FIELD, FIELDS, SURFACES, canonical_surface_name, named_field,
                      named_form, named_surface)
from .dynamics import FlowIntegrator, hamiltonian_field, trajectory
from .fields import (MAX, MIN, SADDLE, DeclaredModel, check_axioms, find_critical_points,
                     homotopy_case)
from .reeb import (NODE_MAX, NODE_MIN, NODE_SADDLE, GraphFunction, ReebError, build_reeb_graph,
                   mesh_for_field, pl_critical_vertices)
from .report import Check, command_report, dumps, trajectory_csv

EXIT_OK, EXIT_FAILED, EXIT_BAD_INPUT = 0, 1, 2

_PL_KIND = {MIN: NODE_MIN, MAX: NODE_MAX, SADDLE: NODE_SADDLE}


class BadInput(ValueError):
    pass


def _point(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from None
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}")
    return np.array(vals)


def _declaration(text: str) -> DeclaredModel:
    parts = text.split(",")
    if len(parts) not in (3, 4):
        raise argparse.ArgumentTypeError("expected 'x,y,degree[,square-free]'")
    try:
        x, y, deg = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad declaration {text!r}") from None
    sq = parts[3].strip().lower() in ("1", "yes", "true", "square-free") if len(parts) == 4 else True
    return DeclaredModel((x, y), deg, sq)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--surface", default="disk", help=f"one of {', '.join(SURFACES)}")
    common.add_argument("--field", default=None,
                        help=f"one of {', '.join(sorted(FIELDS))} (default depends on the surface)")
    common.add_argument("--form", default="standard",
                        help="standard, tilted, quadratic, radial-bump or const:<value>")
    common.add_argument("--resolution", type=float, default=None, help="mesh spacing")
    common.add_argument("--step", type=float, default=1e-3, help="RK4 step")
    common.add_argument("--tol", type=float, default=None, help="check tolerance")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output directory (HAMREEB_OUT overrides)")
    common.add_argument("--format", choices=("json", "csv", "dot"), default="json")

    p = argparse.ArgumentParser(prog="hamreeb", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="axioms, critical points, homotopy case")
    a.add_argument("--declare", type=_declaration, action="append", default=[],
                   help="declared degenerate point 'x,y,degree[,square-free]'")
    sub.add_parser("reeb", parents=[common], help="Reeb graph as JSON or DOT")
    fl = sub.add_parser("flow", parents=[common], help="trajectory of the Hamiltonian flow")
    fl.add_argument("--point", type=_point, default=np.array([0.5, 0.0]))
    fl.add_argument("--chart", type=int, default=0)
    fl.add_argument("--time", type=float, default=1.0)
    fl.add_argument("--every", type=int, default=10, help="keep every n-th step")
    sh = sub.add_parser("shift", parents=[common], help="verify the shift map of a graph function")
    sh.add_argument("--graph-function", default=None,
                    help="JSON file with node_values and edge_profiles (default: random)")
    sh.add_argument("--samples", type=int, default=200)
    sub.add_parser("theta", parents=[common], help="orbit-period function and its identities")
    v = sub.add_parser("volumes", parents=[common], help="sublevel components and the obstruction")
    v.add_argument("--level", type=float, required=True)
    v.add_argument("--involution", default="negate", choices=("negate", "identity"))
    sub.add_parser("counterexample", parents=[common], help="the flat-disk non-surjectivity scenario")
    va = sub.add_parser("verify-all", parents=[common], help="full invariant suite")
    va.add_argument("--only", action="append", choices=("surface", "fields", "dynamics", "reeb"),
                    help="restrict to one module (repeatable)")
    return p


def _setup(args):
    surface = named_surface(args.surface)
    fname = args.field or DEFAULT_FIELD.get(canonical_surface_name(args.surface), "r2")
    f = named_field(fname)
    form = named_form(surface, args.form)
    return surface, f, form


def _inputs(args) -> dict:
    skip = {"out", "format", "command"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, list):
            v = [getattr(x, "__dict__", x) for x in v]
        out[k] = v
    return out


def cmd_analyze(args):
    surface, f, _ = _setup(args)
    if args.declare:
        f = f.with_declared(*args.declare)
    crit = find_critical_points(f, surface)
    rep = check_axioms(f, surface, crit)
    case = str(homotopy_case(f, surface, rep, crit)) if rep.in_class_F else None
    checks = [Check.flag("axiom_boundary", rep.axiom_b_ok, len(rep.boundary_residuals)),
              Check.flag("axiom_critical_points", rep.axiom_l_ok, len(crit))]
    extra = {"axioms": rep.to_dict(), "in_class_F": rep.in_class_F,
             "in_class_Morse": rep.in_class_Morse, "homotopy_case": case,
             "critical_points": [{"position": list(c.position), "chart": c.chart, "value": c.value,
                                  "kind": c.kind} for c in crit]}
    return checks, extra, None


def _reeb(args, surface, f, default_res):
    crit = find_critical_points(f, surface)
    mesh = mesh_for_field(surface, f, crit, args.resolution or default_res, args.seed)
    return crit, build_reeb_graph(mesh, crit, f)


def cmd_reeb(args):
    surface, f, _ = _setup(args)
    crit, g = _reeb(args, surface, f, 0.02)
    checks = [Check.flag("connected", g.is_connected(), g.n_nodes)]
    pl = sorted(pl_critical_vertices(g.mesh).values())
    smooth = sorted(_PL_KIND.get(c.kind, c.kind) for c in crit)
    checks.append(Check.flag("pl_critical_vertices_match", pl == smooth, len(pl),
                             mesh=pl, smooth=smooth))
    extra = {"graph": g.to_dict(), "betti1": g.betti1()}
    text = g.to_dot() if args.format == "dot" else None
    return checks, extra, text


def cmd_flow(args):
    surface, f, form = _setup(args)
    H = hamiltonian_field(f, form, surface)
    integ = FlowIntegrator(step=args.step)
    rows = trajectory(H, args.point, args.time, integ, args.chart, max(1, args.every))
    fv = np.array([r[4] for r in rows])
    drift = float(np.max(np.abs(f.wrap_delta(fv - fv[0]))))
    tol = args.tol if args.tol is not None else integ.reprojection_tolerance
    checks = [Check.below("preserves_f", drift, tol, len(rows))]
    text = trajectory_csv(rows) if args.format == "csv" else None
    extra = {"end": {"chart": rows[-1][1], "x": rows[-1][2], "y": rows[-1][3]}, "rows": len(rows)}
    return checks, extra, text


def cmd_shift(args):
    from .centralizer import symplectomorphism_from_graph_function

    surface, f, form = _setup(args)
    _, g = _reeb(args, surface, f, 0.04)
    if args.graph_function:
        try:
            data = json.loads(Path(args.graph_function).read_text())
            gf = GraphFunction.from_dict(data).validate(g)
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise BadInput(f"cannot read graph function: {exc}") from None
    else:
        rng = np.random.default_rng(args.seed)
        gf = GraphFunction.from_node_values(g, {n.id: float(rng.uniform(-1, 1)) for n in g.nodes})
    integ = FlowIntegrator(step=args.step)
    _, checks = symplectomorphism_from_graph_function(gf, g, f, form, integ, n=args.samples,
                                                      seed=args.seed)
    return checks, {"graph_function": gf.to_dict(), "graph": g.to_dict()}, None


def cmd_theta(args):
    from .theta import ThetaNotFound, theta_constant, theta_function

    surface, f, form = _setup(args)
    _, g = _reeb(args, surface, f, 0.05)
    H = hamiltonian_field(f, form, surface)
    try:
        res = theta_function(f, H, g, FlowIntegrator(step=args.step), seed=args.seed)
    except ThetaNotFound as exc:
        return [Check("theta_exists", float("nan"), 0.0, False, 0, {"reason": str(exc)})], {}, None
    return list(res.checks), {"theta": res.to_dict(), "theta_constant": theta_constant(res)}, None


def cmd_volumes(args):
    from .obstruction import j0_obstruction, sublevel_components

    surface, f, form = _setup(args)
    crit = find_critical_points(f, surface)
    mesh = mesh_for_field(surface, f, crit, args.resolution or 0.02, args.seed)
    comps = sublevel_components(f, mesh, form, args.level, crit)
    rep = j0_obstruction(f, mesh, form, args.level, args.involution,
                         tol=args.tol if args.tol is not None else 1e-3, seed=args.seed,
                         crit_list=crit)
    consistent = rep.obstructed == (rep.volume_mismatch > rep.tolerance)
    checks = [Check.flag("components_found", len(comps.components) > 0, len(comps.components)),
              Check.flag("volumes_positive", all(v > 0 for v in comps.volumes),
                         len(comps.components)),
              Check.flag("report_consistent", consistent)]
    extra = {"components": comps.to_dict(), "obstruction": rep.to_dict(),
             "obstructed": rep.obstructed}
    return checks, extra, None


def cmd_counterexample(args):
    from .obstruction import run_counterexample_disk

    res = run_counterexample_disk(resolution=args.resolution or 0.05, step=args.step,
                                  seed=args.seed)
    checks = [Check(c.description, c.value, c.tolerance, c.passed, 1,
                    {"expected": c.expected}) for c in res.checks]
    return checks, {"scenario": res.to_dict(), "conclusion": res.conclusion}, None


def cmd_verify_all(args):
    from .verification import run_suite

    checks = run_suite(args.seed, only=args.only)
    return checks, {"verification": [c.to_verification_dict() for c in checks]}, None


COMMANDS = {
    "analyze": cmd_analyze, "reeb": cmd_reeb, "flow": cmd_flow, "shift": cmd_shift,
    "theta": cmd_theta, "volumes": cmd_volumes, "counterexample": cmd_counterexample,
    "verify-all": cmd_verify_all,
}


def _emit(args, body: str, suffix: str):
    out_dir = os.environ.get("HAMREEB_OUT") or args.out
    if not out_dir:
        sys.stdout.write(body)
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / f"{args.command}.{suffix}").write_text(body)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_BAD_INPUT
    try:
        checks, extra, text = COMMANDS[args.command](args)
    except (BadInput, ReebError, ValueError) as exc:
        print(f"hamreeb {args.command}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    report = command_report(args.command, _inputs(args), checks, extra)
    if text is not None:
        _emit(args, text, args.format)
        if args.out or os.environ.get("HAMREEB_OUT"):
            _emit(args, dumps(report), "json")
    else:
        _emit(args, dumps(report), "json")
    return EXIT_OK if report["passed"] else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
