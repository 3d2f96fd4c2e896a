"""Command-line entry point: ``pmequiv {solve,verify,convergence,audit}``.

Exit codes: 0 pass, 1 residual failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .equivalence import audit_solution_files, load_norm
from .errors import PmequivError
from .harness import (
    SCHEMES,
    TOLERANCES,
    manufactured_case,
    run_convergence,
    run_scheme,
    verify,
)
from .local_spaces import Mobility, load_mobility, rotated_anisotropic
from .mesh import load_mesh, structured_triangulation
from .schemes import LoadField, SchemeConfig, solution_dump

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def dumps(obj, indent: int = 0) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj) + 0.0  # drop negative zero
        if not math.isfinite(x):
            return "null"
        text = format(x, ".17g")
        if "e" not in text and "." not in text and "n" not in text:
            text += ".0"
        return text
    return json.dumps(str(obj))


def _emit(payload, out):
    text = dumps(payload) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _mesh(args):
    if getattr(args, "mesh", None):
        return load_mesh(args.mesh)
    return structured_triangulation(args.structured)


def _mobility(choice: str, mesh) -> Mobility:
    if choice == "identity":
        return Mobility.identity(mesh)
    if choice == "aniso":
        if mesh.dim != 2:
            raise ValueError("'aniso' mobility is 2D only")
        return Mobility.uniform(mesh, rotated_anisotropic())
    if choice.startswith("random:"):
        return Mobility.random(mesh, np.random.default_rng(int(choice.split(":", 1)[1])))
    return load_mobility(choice, mesh)


def _add_mesh_args(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--mesh", help="mesh JSON file")
    g.add_argument("--structured", type=int, help="n for the n x n split unit square")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmequiv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve with one scheme and dump the solution")
    p.add_argument("--scheme", required=True, choices=SCHEMES)
    _add_mesh_args(p)
    p.add_argument("--mobility", default="identity", help="identity | aniso | random:SEED | FILE")
    p.add_argument("--load", default="constant:1")
    p.add_argument("--solver", default="direct", choices=("direct", "cg"))
    p.add_argument("--out")

    p = sub.add_parser("verify", help="run the full equivalence matrix on one case")
    _add_mesh_args(p)
    p.add_argument("--mobility", default="identity")
    p.add_argument("--load", default="constant:1")
    p.add_argument("--corrupt", type=float, default=0.0, help="perturb one primal face DoF")
    p.add_argument("--out")

    p = sub.add_parser("convergence", help="manufactured-solution convergence study")
    p.add_argument("--scheme", required=True, choices=SCHEMES)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--n0", type=int, default=4)
    p.add_argument("--case", default="sinsin", choices=("sinsin", "quadratic", "zero"))
    p.add_argument("--out")

    p = sub.add_parser("audit", help="recompute residuals of a solution dump")
    p.add_argument("--mesh", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--mobility", default="identity")
    p.add_argument("--load", default="constant:1")
    p.add_argument("--out")
    return parser


def _cmd_solve(args) -> int:
    mesh = _mesh(args)
    mob = _mobility(args.mobility, mesh)
    config = SchemeConfig(LoadField.parse(args.load), args.solver)
    mixed, coeffs, companion = run_scheme(args.scheme, mesh, mob, config)
    _emit(solution_dump(args.scheme, mesh, mixed, coeffs, companion=companion), args.out)
    return EXIT_OK


def _cmd_verify(args) -> int:
    mesh = _mesh(args)
    mob = _mobility(args.mobility, mesh)
    result = verify(mesh, mob, LoadField.parse(args.load), corrupt=args.corrupt)
    _emit(result, args.out)
    return EXIT_OK if result["passed"] else EXIT_FAIL


def _cmd_convergence(args) -> int:
    table = run_convergence(manufactured_case(args.case), args.scheme, args.levels, args.n0)
    _emit(table.to_dict(), args.out)
    return EXIT_OK


def _cmd_audit(args) -> int:
    load = LoadField.parse(args.load)
    mesh = load_mesh(args.mesh)
    mobility = args.mobility if args.mobility != "identity" else None
    report = audit_solution_files(args.mesh, args.solution, mobility, load)
    fnorm = load_norm(mesh, load)
    checks = {
        "hdiv_jump": report.hdiv_jump_max <= TOLERANCES["hdiv_jump"] * report.flux_norm,
        "divergence": report.divergence_residual_max <= TOLERANCES["divergence"] * fnorm,
        "potential_jump": report.potential_jump_max
        <= TOLERANCES["potential_jump"] * report.potential_norm,
    }
    passed = all(checks.values())
    _emit({"passed": passed, "checks": checks, "report": report.to_dict(), "tolerances": dict(TOLERANCES)}, args.out)
    return EXIT_OK if passed else EXIT_FAIL


COMMANDS = {
    "solve": _cmd_solve,
    "verify": _cmd_verify,
    "convergence": _cmd_convergence,
    "audit": _cmd_audit,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (PmequivError, ValueError, OSError) as exc:
        print(f"pmequiv: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
