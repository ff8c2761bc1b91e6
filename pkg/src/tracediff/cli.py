"""Command line: demos, gradient checks, IR dumps and benchmarks.

Output is one ``key = value`` line per field; ``--structured`` prints the
same fields as one JSON object.  Exit codes: 0 success, 1 bad input (or a
failed check), 2 no convergence.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
import time
from pathlib import Path

from . import demos
from . import gradcheck as gc
from .autodiff import lift_jvp, transpose_names, vjp_pair
from .builder import handle_for
from .errors import IRError, NonConvergence
from .exec import compile, op_count
from .ir import ensure_valid, parse_ir, print_def, print_ir
from .ir.syntax import FuncDef, block_size
from .opt import optimize_def
from .opt.inline import inline_all

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGENCE = 0, 1, 2


class CliError(Exception):
    pass


def _value(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v)
    return str(v)


def emit(fields, structured=False, out=None):
    out = out or sys.stdout
    if structured:
        print(json.dumps(fields), file=out)
    else:
        for k, v in fields.items():
            print(f"{k} = {_value(v)}", file=out)


def load(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}") from None
    reg = parse_ir(text)
    ensure_valid(reg)
    return reg


# commands


def cmd_check(args):
    reg = load(args.file)
    n = sum(1 for item in reg if isinstance(item, FuncDef))
    emit({"file": args.file, "status": "ok", "functions": n}, args.structured)
    return EXIT_OK


def _new_defs(reg, before, kinds=None):
    out = []
    for item in reg:
        if item.name in before or not isinstance(item, FuncDef):
            continue
        if kinds is None or (item.origin and item.origin[0] in kinds):
            out.append(item.name)
    return out


def cmd_dump(args):
    reg = load(args.file)
    before = set(reg.names())
    for name in (args.dump_jvp, args.dump_vjp):
        if name is not None and name not in before:
            raise CliError(f"no function named {name}")
    if args.dump_jvp:
        lift_jvp(args.dump_jvp, reg)
        names = _new_defs(reg, before)
    elif args.dump_vjp:
        if args.opt:
            vjp_pair(args.dump_vjp, reg)
        else:
            transpose_names(lift_jvp(args.dump_vjp, reg), reg, erase=False)
        names = _new_defs(reg, before, ("fwd", "bwd"))
    else:
        names = None
    if names is None:
        if args.opt:
            for item in list(reg):
                if isinstance(item, FuncDef):
                    optimize_def(item.name, reg)
        sys.stdout.write(print_ir(reg))
        return EXIT_OK
    for name in names:
        if args.opt and args.dump_jvp:
            optimize_def(name, reg)
        print(print_def(reg[name]))
    return EXIT_OK


def cmd_gradcheck(args):
    reg = load(args.file)
    if args.fn not in reg.names():
        raise CliError(f"no function named {args.fn}")
    f = handle_for(reg, args.fn)
    try:
        sampler = gc.uniform_sampler(f.params[0], args.center - args.spread, args.center + args.spread)
        rep = gc.check(f, sampler, samples=args.samples, seed=args.seed, tol=args.tol)
    except gc.NotDifferentiable as e:
        raise CliError(str(e)) from None
    if rep.passed:
        status = "pass"
    elif rep.documented_mismatch and args.allow_custom:
        status = "documented-mismatch"
    else:
        status = "fail"
    emit({"function": rep.function, "status": status, "max_rel_error": rep.max_rel_error,
          "coordinate": rep.coordinate, "point": rep.point, "step": rep.step,
          "gradient": rep.gradient, "finite_difference": rep.finite_difference,
          "samples": rep.samples, "seed": rep.seed, "tol": rep.tol, "custom_jvp": rep.custom_jvp},
         args.structured)
    return EXIT_OK if status != "fail" else EXIT_INPUT


def bench_scaling(lets=100, calls=50):
    t = time.perf_counter()
    prog = demos.chain_program(lets, calls)
    build = time.perf_counter() - t
    primal = compile(prog["chain"])
    grad = compile(prog["dchain"])
    return {
        "body_lets": block_size(prog.reg["body"].body),
        "call_sites": calls,
        "primal_static_lets": op_count(primal).total_static,
        "gradient_static_lets": op_count(grad).total_static,
        "gradient_instances": len(grad.instances),
        "inlined_primal_lets": block_size(inline_all("chain", prog.reg).body),
        "inlined_gradient_lets": block_size(inline_all("dchain", prog.reg).body),
        "build_seconds": round(build, 4),
    }


def least_squares_data(n, seed=0):
    rng = random.Random(seed)
    x = [[rng.uniform(0.0, 10.0)] for _ in range(n)]
    y = [0.5 * xi[0] + 3.0 + rng.gauss(0.0, 1.0) for xi in x]
    return x, y


def opcount(n, seed=0):
    """Dynamic primitive counts of the least-squares loss and its gradient."""
    x, y = least_squares_data(n, seed)
    prog = demos.linreg_program(x, y)
    f = compile(prog["g"], count=True)
    g = compile(prog["h"], count=True)
    beta = {"b0": 0.5, "b": [0.25]}
    f(beta)
    g(beta)
    return op_count(f).total_dynamic, op_count(g).total_dynamic


def bench_opcount(sizes=(50, 200), seed=0):
    out = {}
    ratios = []
    for n in sizes:
        p, g = opcount(n, seed)
        out[f"primal_ops_n{n}"] = p
        out[f"gradient_ops_n{n}"] = g
        out[f"ratio_n{n}"] = g / p
        ratios.append(g / p)
    out["ratio_drift"] = abs(ratios[-1] / ratios[0] - 1.0)
    return out


def cmd_bench(args):
    fields = bench_scaling() if args.suite == "scaling" else bench_opcount(seed=args.seed)
    emit({"suite": args.suite, **fields}, args.structured)
    return EXIT_OK


def cmd_run(args):
    try:
        config = demos.DemoConfig.defaults(args.demo, eta=args.eta, max_iters=args.max_iters,
                                           tol=args.tol, seed=args.seed)
    except ValueError as e:
        raise CliError(str(e)) from None
    match args.demo:
        case "linreg":
            report = demos.run_linreg(config)
        case "spring":
            report = demos.run_spring(config)
        case _:
            report = demos.run_quadratic()
    emit({"demo": args.demo, **report.fields, "converged": report.converged}, args.structured)
    try:
        demos.check_converged(report)
    except NonConvergence as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


# parser


def build_parser():
    p = argparse.ArgumentParser(prog="tracediff", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--structured", action="store_true", help="print one JSON object")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", parents=[common], help="parse and typecheck an IR file")
    c.add_argument("file")
    c.set_defaults(run=cmd_check)

    d = sub.add_parser("dump", parents=[common], help="print an IR file or a derivative of one")
    d.add_argument("file")
    which = d.add_mutually_exclusive_group()
    which.add_argument("--dump-jvp", metavar="FN", help="print the forward-mode derivative of FN")
    which.add_argument("--dump-vjp", metavar="FN", help="print the forward/backward pair of FN")
    d.add_argument("--opt", action="store_true", help="simplify before printing")
    d.set_defaults(run=cmd_dump)

    g = sub.add_parser("gradcheck", parents=[common],
                       help="compare reverse-mode gradients with central differences")
    g.add_argument("file")
    g.add_argument("--fn", required=True)
    g.add_argument("--samples", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tol", type=float, default=1e-5)
    g.add_argument("--center", type=float, default=1.0, help="center of the sampling box")
    g.add_argument("--spread", type=float, default=0.5, help="half-width of the sampling box")
    g.add_argument("--allow-custom", action="store_true",
                   help="report misses of hand-written derivatives as documented mismatches")
    g.set_defaults(run=cmd_gradcheck)

    b = sub.add_parser("bench", parents=[common], help="static scaling or dynamic op counts")
    b.add_argument("--suite", choices=("scaling", "opcount"), required=True)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(run=cmd_bench)

    r = sub.add_parser("run", parents=[common], help="run a demo program")
    r.add_argument("demo", choices=("linreg", "quadratic", "spring"))
    r.add_argument("--eta", type=float)
    r.add_argument("--max-iters", type=int)
    r.add_argument("--tol", type=float)
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(run=cmd_run)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (CliError, IRError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
