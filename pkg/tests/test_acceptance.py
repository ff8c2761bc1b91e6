"""The ten acceptance criteria, each at its stated tolerance and time budget.

Every test prints one PASS/FAIL line as it finishes; the same lines are
repeated in a block at the end of the pytest run.
"""

import math
import random
import time

from conftest import ACCEPTANCE
from negatives import NEGATIVES
from progs import generate, transpose_gap
from test_demos import normal_equations
from test_exec import reachable_pairs
from test_ir import SUM_TEXT
from test_opt import OPTIMIZED_F
from tracediff import demos, gradcheck
from tracediff.autodiff import vjp_pair
from tracediff.cli import bench_opcount, bench_scaling
from tracediff.exec import compile
from tracediff.ir import parse_ir, print_ir, validate_registry
from tracediff.ir.syntax import Accumulate, Binary
from tracediff.ir.text import alpha_equal


def verdict(capsys, n, title, ok, detail):
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE.append(line)
    with capsys.disabled():
        print(f"\n{line}")
    assert ok, line


def test_c01_transpose_identity(capsys):
    t = time.perf_counter()
    worst, kinds = 0.0, set()
    for seed in range(20):
        g = generate(seed, 14)
        kinds.update(g.ops)
        rng = random.Random(1000 + seed)
        for _ in range(50):
            gap, scale = transpose_gap(g, rng)
            worst = max(worst, gap / scale)
    secs = time.perf_counter() - t
    ok = worst <= 1e-9 and secs < 10 and kinds == set(range(11))
    verdict(capsys, 1, "transpose identity", ok,
            f"20 programs x 50 probes, worst gap/scale {worst:.2e}, {len(kinds)}/11 op kinds, {secs:.1f}s")


def _box(spec, lo, hi):
    return gradcheck.uniform_sampler(spec, lo, hi)


def test_c02_gradient_checks(capsys):
    t = time.perf_counter()
    lin, quad, trig = demos.linreg_program(), demos.quadratic_program(), demos.trig_program()
    spring = demos.spring_program()
    cases = [
        (lin["g"], _box(lin["g"].params[0], [2.0, 0.0], [4.0, 1.0])),
        (quad["f"], _box(quad["f"].params[0], [0.5, 0.5], [2.5, 3.0])),
        (trig["f"], _box(trig["f"].params[0], -3.0, 3.0)),
        (trig["mix"], _box(trig["mix"].params[0], -2.0, 2.0)),
        (quad["logpow"], _box(quad["logpow"].params[0], [0.5, 0.5], [2.5, 3.0])),
        (spring["loss"], _box(spring["loss"].params[0], -2.0, 2.0)),
    ]
    reports = [gradcheck.check(f, s, samples=100, seed=11, tol=1e-5) for f, s in cases]
    secs = time.perf_counter() - t
    ok = all(r.passed for r in reports) and secs < 30
    detail = ", ".join(f"{r.function} {r.max_rel_error:.1e}" for r in reports)
    verdict(capsys, 2, "gradient checks", ok, f"{detail}, {secs:.1f}s")


def test_c03_listing_reproduction(capsys):
    reg = parse_ir(print_ir(demos.trig_program().reg))
    fw, bw = vjp_pair("f", reg)
    sfw, sbw = vjp_pair("sin", reg)
    want = parse_ir(OPTIMIZED_F)
    same = (alpha_equal(reg[fw], want["fwd_f"]) and alpha_equal(reg[bw], want["bwd_f"])
            and alpha_equal(reg[sfw], want["fwd_sin"]))
    lets = reg[sbw].body.lets
    single = (len(lets) == 2 and isinstance(lets[0].expr, Binary) and lets[0].expr.op == "mul"
              and isinstance(lets[1].expr, Accumulate))
    verdict(capsys, 3, "listing reproduction", same and single,
            f"fwd_f/bwd_f alpha-equal {same}, bwd_sin one multiply-accumulate {single}")


def test_c04_linear_regression(capsys):
    t = time.perf_counter()
    rep = demos.run_linreg()
    secs = time.perf_counter() - t
    o0, o1 = normal_equations(demos.ANSCOMBE_X, demos.ANSCOMBE_Y)
    b0, b = rep["b0"], rep["b"][0]
    ok = (rep.converged and abs(b0 - 3.0) <= 0.01 and abs(b - 0.5) <= 0.005
          and abs(b0 - o0) <= 0.01 and abs(b - o1) <= 0.005 and secs < 60)
    verdict(capsys, 4, "linear regression", ok,
            f"b0 {b0:.5f} b {b:.5f} (oracle {o0:.5f}, {o1:.5f}), {rep['iterations']} iterations, "
            f"{secs:.1f}s")


def test_c05_quadratic(capsys):
    rep = demos.run_quadratic()
    ln2 = math.log(2)
    want_h = [[12, 4 + 12 * ln2], [4 + 12 * ln2, 8 * ln2 ** 2]]
    h = rep["hessian"]
    herr = max(abs(h[i][j] - want_h[i][j]) for i in range(2) for j in range(2))
    gerr = max(abs(rep["gradient"][0] - 12), abs(rep["gradient"][1] - 8 * ln2))
    ok = abs(rep["z"] - 8) <= 1e-9 and gerr <= 1e-9 and herr <= 1e-9 and rep["asymmetry"] <= 1e-9
    verdict(capsys, 5, "quadratic", ok,
            f"value {rep['z']}, gradient err {gerr:.1e}, Hessian err {herr:.1e}, "
            f"asymmetry {rep['asymmetry']:.1e}")


def test_c06_cheap_gradient(capsys):
    r = bench_opcount((50, 200))
    ok = r["ratio_n50"] <= 8 and r["ratio_n200"] <= 8 and r["ratio_drift"] <= 0.2
    verdict(capsys, 6, "cheap gradient", ok,
            f"ratio {r['ratio_n50']:.3f} at n=50, {r['ratio_n200']:.3f} at n=200, "
            f"drift {r['ratio_drift']:.2%}")


def test_c07_no_inline_scaling(capsys):
    r = bench_scaling(100, 50)
    prog = demos.chain_program(100, 50)
    inst = compile(prog["dchain"]).instances
    exact = set(inst) == reachable_pairs(prog.reg, "dchain")
    ok = (r["gradient_static_lets"] <= 400 and r["inlined_primal_lets"] >= 5000 and exact)
    verdict(capsys, 7, "no-inline scaling", ok,
            f"static {r['gradient_static_lets']} vs inlined {r['inlined_primal_lets']}, "
            f"{len(inst)} instances match reachable pairs {exact}")


def test_c08_robustness(capsys):
    d0 = compile(demos.sqrt_program()["dsqrt"])(0.0)
    values = []
    q = demos.run_quadratic()
    values += [*q["gradient"], *q["hessian"][0], *q["hessian"][1]]
    lin = compile(demos.linreg_program()["h"])({"b0": 0.0, "b": [0.0]})
    values += [lin["b0"], *lin["b"]]
    values.append(compile(demos.spring_program()["dloss"])(0.0))
    trig = demos.trig_program()
    with_grad = [gradcheck.gradient_fn(trig["f"]), gradcheck.gradient_fn(trig["mix"])]
    values.append(compile(with_grad[0])(0.0))
    values += compile(with_grad[1])([0.0, 0.0])
    ok = math.isfinite(d0) and all(math.isfinite(v) for v in values)
    verdict(capsys, 8, "robustness", ok,
            f"clamped sqrt gradient at 0 is {d0:g}, {len(values)} demo gradient entries finite")


DEMOS = {
    "linreg": lambda: demos.linreg_program().reg,
    "quadratic": lambda: demos.quadratic_program().reg,
    "trig": lambda: demos.trig_program().reg,
    "sqrt": lambda: demos.sqrt_program().reg,
    "spring": lambda: demos.spring_program().reg,
    "chain": lambda: demos.chain_program().reg,
}



def test_c09_typechecker_suite(capsys):
    hits = []
    for label, text, cls, rule in NEGATIVES:
        errs = validate_registry(parse_ir(text))
        hits.append(bool(errs) and type(errs[0]).__name__ == cls
                    and (rule is None or errs[0].rule == rule))
    accepted = validate_registry(parse_ir(SUM_TEXT)) == []
    demo_ok = all(validate_registry(make()) == [] for make in DEMOS.values())
    ok = len(NEGATIVES) >= 12 and all(hits) and accepted and demo_ok
    verdict(capsys, 9, "typechecker suite", ok,
            f"{sum(hits)}/{len(NEGATIVES)} negatives rejected as expected, generic sum {accepted}, "
            f"demo defs {demo_ok}")


def test_c10_round_trip(capsys):
    bad = []
    for name, make in DEMOS.items():
        reg = make()
        if parse_ir(print_ir(reg)) != reg:
            bad.append(name)
    verdict(capsys, 10, "round trip", not bad,
            f"{len(DEMOS) - len(bad)}/{len(DEMOS)} demo registries identical after print and parse")
