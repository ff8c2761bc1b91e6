import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracediff import builder as b
from tracediff import demos
from tracediff.autodiff import lift_jvp, transpose_names, vjp_pair
from tracediff.builder import Real, handle_for
from tracediff.exec import compile
from tracediff.ir import parse_ir, typecheck_function
from tracediff.ir.syntax import Call, For, block_size, iter_lets
from tracediff.ir.text import alpha_equal
from tracediff.opt import PassConfig, simplify

# hand-optimized reference pair for f(u) = -sin(u), spelled in ANF
OPTIMIZED_F = """\
opaque sin(Real): Real = "math.sin"
opaque cos(Real): Real = "math.cos"
def fwd_sin(x: Real): (Real, Real) =
  let s: Real = sin(x) in
  let c: Real = cos(x) in
  (s, c)
def bwd_sin(ddx: &Real, dy: Real, z: Real): () =
  let p: Real = (dy * z) in
  ddx += p
def fwd_f(u: Real): (Real, Real) =
  let r: (Real, Real) = fwd_sin(u) in
  let v: Real = fst r in
  let t: Real = snd r in
  let w: Real = -v in
  (w, t)
def bwd_f(ddu: &Real, dw: Real, t: Real): () =
  let dv: Real = -dw in
  bwd_sin(ddu, dv, t)
"""


def strict_grad(reg, name, n=None):
    """Gradient of ``name`` wired through the unsimplified transposition."""
    fw, bw = transpose_names(lift_jvp(name, reg), reg, erase=False)
    fh, bh = handle_for(reg, fw), handle_for(reg, bw)
    spec = Real if n is None else b.Vec(n, Real)

    def body(x):
        dual = b.pair(x, 0.0) if n is None else b.array(n, lambda i: b.pair(x[i], 0.0))
        t = b.snd(b.call(fh, dual))
        d = b.fst(b.accum(dual, lambda a: b.call(bh, a, b.pair(0.0, 1.0), t)))
        return b.snd(d) if n is None else b.array(n, lambda i: b.snd(d[i]))

    with b.use_registry(reg):
        return b.fn([spec], spec, body, name=f"sgrad_{name}")


def simplified_copy(reg, config=None):
    out = reg.copy()
    for d in list(out.defs()):
        out.replace(simplify(d, out, config) if config else simplify(d, out))
    return out


def test_reproduces_hand_optimized_pair():
    prog = demos.trig_program()
    fw, bw = vjp_pair("f", prog.reg)
    want = parse_ir(OPTIMIZED_F)
    assert alpha_equal(prog.reg[fw], want["fwd_f"])
    assert alpha_equal(prog.reg[bw], want["bwd_f"])
    sfw, sbw = vjp_pair("sin", prog.reg)
    assert alpha_equal(prog.reg[sfw], want["fwd_sin"])
    assert alpha_equal(prog.reg[sbw], want["bwd_sin"])


def test_strict_pair_shrinks():
    prog = demos.trig_program()
    fw, bw = transpose_names(lift_jvp("f", prog.reg), prog.reg, erase=False)
    before = block_size(prog.reg[bw].body)
    after = block_size(simplify(prog.reg[bw], prog.reg).body)
    assert after < before // 3


def test_dead_loop_with_accumulate_is_kept():
    text = """\
def f(x: [3]Real): Real =
  let z: Real = 0.0 in
  let p: (Real, ()) = accum a from z in (
    let dead: [3]Real = [for i: 3, let y: Real = x[i] in let u: () = a += y in y] in
    ()) in
  fst p
"""
    reg = parse_ir(text)
    out = simplify(reg["f"], reg)
    assert any(isinstance(let.expr, For) for let in iter_lets(out.body))
    reg2 = reg.copy()
    reg2.replace(out)
    x = [1.0, 2.0, 4.5]
    assert compile("f", reg)(x) == compile("f", reg2)(x) == 7.5


def test_dead_pure_lets_removed():
    reg = parse_ir("def f(x: Real): Real =\n  let y: Real = (x * x) in\n"
                   "  let z: Real = 0.0 in\n  let w: Real = (x + z) in\n  w")
    out = simplify(reg["f"], reg)
    assert block_size(out.body) == 0


def test_zero_folding():
    reg = parse_ir("def f(x: Real): Real =\n  let z: Real = 0.0 in\n  let a: Real = (z - x) in\n"
                   "  let c: Real = -a in\n  let d: Real = (z * c) in\n  let e: Real = (c + d) in\n  e")
    out = simplify(reg["f"], reg)
    assert block_size(out.body) == 0 and out.body.result == out.params[0][0]
    keep = simplify(reg["f"], reg, PassConfig(zeros=False))
    assert block_size(keep.body) > 0


def test_opaque_calls_are_kept():
    reg = parse_ir('opaque sin(Real): Real = "math.sin"\n'
                   "def f(x: Real): Real =\n  let y: Real = sin(x) in\n  x")
    out = simplify(reg["f"], reg)
    assert any(isinstance(let.expr, Call) for let in out.body.lets)


STRICT = [
    ("trig", demos.trig_program, "f", None),
    ("trig", demos.trig_program, "mix", 2),
    ("quadratic", demos.quadratic_program, "f", 2),
    ("quadratic", demos.quadratic_program, "logpow", 2),
    ("sqrt", demos.sqrt_program, "sqrt", None),
    ("spring", lambda: demos.spring_program(demos.SpringConfig(steps=6)), "loss", None),
    ("chain", lambda: demos.chain_program(10, 3), "chain", None),
]


@pytest.mark.parametrize("label,make,name,n", STRICT, ids=[f"{s[0]}-{s[2]}" for s in STRICT])
def test_semantic_preservation(label, make, name, n):
    prog = make()
    fname = prog[name].name
    g = strict_grad(prog.reg, fname, n)
    opt = simplified_copy(prog.reg)
    before, after = compile(g), compile(handle_for(opt, g.name), opt)
    rng = random.Random(7)
    for _ in range(100):
        x = rng.uniform(0.3, 2.0) if n is None else [rng.uniform(0.3, 2.0) for _ in range(n)]
        p, q = before(x), after(x)
        p, q = ([p], [q]) if n is None else (p, q)
        for u, v in zip(p, q):
            assert math.isfinite(u)
            assert v == pytest.approx(u, rel=1e-12, abs=1e-300)


def _all_defs():
    regs = []
    for make in (demos.trig_program, demos.quadratic_program, demos.linreg_program,
                 lambda: demos.spring_program(demos.SpringConfig(steps=4))):
        prog = make()
        for h in list(prog.fns.values()):
            if not prog.reg.is_opaque(h.name) and h.name not in prog.reg.custom_jvp:
                transpose_names(lift_jvp(h.name, prog.reg), prog.reg, erase=False)
        regs.append(prog.reg)
    return [(reg, d) for reg in regs for d in reg.defs()]


ALL_DEFS = _all_defs()


def test_monotone_size_and_types():
    for reg, d in ALL_DEFS:
        out = simplify(d, reg)
        assert block_size(out.body) <= block_size(d.body), d.name
        assert (out.params, out.ret) == (d.params, d.ret)
        typecheck_function(out, reg)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, len(ALL_DEFS) - 1))
def test_idempotent(k):
    reg, d = ALL_DEFS[k]
    once = simplify(d, reg)
    assert simplify(once, reg) == once


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_generated_programs_survive_simplify(seed):
    from progs import generate

    g = generate(seed, 8)
    opt = simplified_copy(g.reg)
    f2 = compile("vf", opt)
    rng = random.Random(seed)
    for _ in range(5):
        x = [rng.uniform(-1, 1) for _ in range(g.k)]
        dy = [rng.uniform(-1, 1) for _ in range(g.m)]
        for u, v in zip(g.vjp({"x": x, "dy": dy}), f2([x, dy])):
            assert v == pytest.approx(u, rel=1e-12, abs=1e-12)
    for d in opt.defs():
        typecheck_function(d, opt)
