"""Command-line entry point.

``vemsad converge`` runs the manufactured-solution refinement study;
``vemsad run`` solves a material-law demo on a mesh from file.  Exit codes:
0 success, 2 fixed-point non-convergence, 3 input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import NonConvergenceError, VemsadError
from .solver import FixedPointConfig


def _fp_config(args) -> FixedPointConfig:
    cfg = FixedPointConfig(tol=args.fp_tol, max_iter=args.fp_max_iter,
                           norm=args.fp_norm, damping=args.fp_damping)
    if args.abs_tol:
        cfg.abs_floor = float("inf")   # pure absolute stopping
    return cfg


def _add_fp_args(p):
    p.add_argument("--fp-tol", type=float, default=1e-5)
    p.add_argument("--fp-max-iter", type=int, default=50)
    p.add_argument("--fp-norm", choices=["phi", "combined"], default="phi")
    p.add_argument("--fp-damping", type=float, default=1.0)
    p.add_argument("--abs-tol", action="store_true",
                   help="interpret --fp-tol as an absolute increment bound")
    p.add_argument("--stab-scale", type=float, default=1.0)
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file whose keys mirror the flags")


def _apply_config_file(args):
    if args.config is None:
        return
    try:
        data = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(f"error: cannot read config {args.config}: {exc}")
    for key, val in data.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise SystemExit(f"error: unknown config key {key!r}")
        setattr(args, attr, val)


def cmd_converge(args) -> int:
    from .harness import example1_case, run_convergence
    if args.case != "example1":
        print(f"error: unknown case {args.case!r}", file=sys.stderr)
        return 3
    case = example1_case(trace_convention=args.trace_convention)
    try:
        report = run_convergence(
            case, mesh_family=args.mesh_family, levels=args.levels,
            config=_fp_config(args), out_dir=args.out,
            stab_scale=args.stab_scale, verbose=True)
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(report.table())
    return 0


def cmd_run(args) -> int:
    from .harness import run_lithiation
    from .meshfile import load_mesh
    if args.law != "example2":
        print(f"error: unknown law {args.law!r}", file=sys.stderr)
        return 3
    try:
        mesh = load_mesh(args.mesh)
    except VemsadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    try:
        state, trace, _ = run_lithiation(
            mesh, clamped=args.clamped, config=_fp_config(args),
            out_dir=args.out, stab_scale=args.stab_scale)
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"converged in {trace.iterations} iterations "
          f"(wall {trace.wall_time:.1f}s); fields in {args.out}")
    return 0


def _str2bool(s):
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {s!r}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="vemsad")
    sub = ap.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("converge", help="manufactured-solution rate study")
    pc.add_argument("--case", default="example1")
    pc.add_argument("--mesh-family", choices=["hex", "prism"], default="hex")
    pc.add_argument("--levels", type=int, default=4)
    pc.add_argument("--out", type=Path, default=Path("report"))
    pc.add_argument("--trace-convention", choices=["matrix", "scalar"],
                    default="matrix")
    _add_fp_args(pc)
    pc.set_defaults(func=cmd_converge)

    pr = sub.add_parser("run", help="solve a material-law demo on a mesh file")
    pr.add_argument("--mesh", type=Path, required=True)
    pr.add_argument("--law", default="example2")
    pr.add_argument("--clamped", type=_str2bool, default=True)
    pr.add_argument("--out", type=Path, default=Path("fields"))
    _add_fp_args(pr)
    pr.set_defaults(func=cmd_run)

    args = ap.parse_args(argv)
    _apply_config_file(args)
    try:
        return args.func(args)
    except VemsadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
