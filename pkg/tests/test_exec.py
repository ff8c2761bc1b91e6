import math
import threading

import pytest

from tracediff import builder as b
from tracediff import demos
from tracediff import errors as E
from tracediff.autodiff import vjp
from tracediff.builder import Real, Vec
from tracediff.exec import compile, op_count
from tracediff.ir import Registry, parse_ir
from tracediff.ir.syntax import Call, FuncDef, iter_lets
from tracediff.ir.types import substitute


def reachable_pairs(reg, entry):
    """(def, type arguments) pairs reachable from ``entry``, found by a plain walk."""
    seen = set()
    todo = [(entry, ())]
    while todo:
        name, targs = todo.pop()
        if (name, targs) in seen:
            continue
        seen.add((name, targs))
        d = reg[name]
        mapping = {g: t for (g, _), t in zip(d.generics, targs)}
        for let in iter_lets(d.body):
            if isinstance(let.expr, Call) and isinstance(reg[let.expr.func], FuncDef):
                todo.append((let.expr.func, tuple(substitute(t, mapping) for t in let.expr.type_args)))
    return seen


def test_linreg_gradient_is_a_record():
    g = compile(demos.linreg_program()["h"])({"b0": 1.0, "b": [0.5]})
    assert set(g) == {"b0", "b"} and len(g["b"]) == 1


def test_quadratic_all():
    out = compile(demos.quadratic_program()["all"])(2, 3)
    assert set(out) == {"z", "g", "h"}
    assert out["z"] == 8.0
    assert out["g"][0] == pytest.approx(12.0, abs=1e-12)
    assert out["g"][1] == pytest.approx(8 * math.log(2), abs=1e-12)


def test_missing_host_routine():
    reg = parse_ir('opaque zz(Real): Real = "nowhere.zz"\n'
                   "def f(x: Real): Real =\n  let y: Real = zz(x) in y")
    with pytest.raises(E.MissingHostRoutine):
        compile("f", reg)


def test_host_fault_passes_through():
    reg = Registry()
    with b.use_registry(reg):
        log = b.opaque([Real], Real, math.log, name="log")
        f = b.fn([Real], Real, lambda x: log(x), name="f")
    with pytest.raises(E.HostRoutineFault):
        compile(f)(-1.0)


def test_sum_and_marshalling():
    reg = Registry()
    with b.use_registry(reg):
        s = b.fn([Vec(2, Real)], Real, lambda v: b.sum(2, lambda i: v[i]), name="s")
    c = compile(s)
    assert c([1.5, 2.5]) == 4.0
    with pytest.raises(E.MarshalError):
        c([1.0, 2.0, 3.0])
    with pytest.raises(TypeError):
        c([1.0, 2.0], [3.0])


def test_fin_marshalling_rejects_out_of_range():
    c = compile("f", parse_ir("def f(i: 3): 3 = i"))
    assert c(2) == 2
    for bad in (3, -1):
        with pytest.raises(E.MarshalError):
            c(bad)


def test_ieee_division():
    reg = parse_ir("def f(x: Real, y: Real): Real = (x / y)")
    c = compile("f", reg)
    assert c(1.0, 0.0) == math.inf and c(-1.0, 0.0) == -math.inf
    assert math.isnan(c(0.0, 0.0))


def test_select_between_accumulators():
    reg = parse_ir("""\
def f(p: Bool, x: Real): (Real, Real) =
  let z: Real = 0.0 in
  let o: (Real, Real) = accum a from z in (
    let q: (Real, ()) = accum c from z in (
      let s: &Real = select(p, a, c) in
      s += x) in
    fst q) in
  o
""")
    c = compile("f", reg)
    assert c(True, 2.0) == (2.0, 0.0)
    assert c(False, 2.0) == (0.0, 2.0)


def test_accumulator_starts_at_zero_and_skips_discrete_leaves():
    reg = parse_ir("""\
def f(x: Real, p: Bool): (Real, Bool) =
  let i: (Real, Bool) = (x, p) in
  let o: ((Real, Bool), ()) = accum a from i in (
    let u: () = a += i in
    a += i) in
  fst o
""")
    assert compile("f", reg)(2.0, True) == (4.0, True)


def test_loops_accumulate_in_index_order():
    reg = parse_ir("""\
def f(v: [4]Real): Real =
  fst (accum a from 0.0 in [for i: 4, a += v[i]])
""")
    v = [1e16, 1.0, -1e16, 1.0]
    # left to right: ((1e16 + 1) - 1e16) + 1 == 1.0 in binary64
    assert compile("f", reg)(v) == 1.0


def test_constant_function_count():
    reg = Registry()
    with b.use_registry(reg):
        k = b.fn([Real], Real, lambda x: b.add(2.0, 3.0), name="k")
    c = compile(k, count=True)
    c(1.0)
    first = op_count(c).total_dynamic
    c(-7.5)
    assert op_count(c).total_dynamic == first


def test_instance_count_matches_reachable_pairs():
    reg = Registry()
    with b.use_registry(reg):
        total = b.fn([Vec("n", Real)], Real, lambda v: b.sum("n", lambda i: v[i]), name="total",
                     generics={"n": b.Index})
        sq = b.fn([Real], Real, lambda x: b.mul(x, x), name="sq")

        def body(p):
            a = total(p["u"])
            c = total(p["w"])
            d = total(p["u"])
            return sq(b.add(b.add(a, c), d))

        f = b.fn([b.struct(u=Vec(3, Real), w=Vec(5, Real))], Real, body, name="f")
        g = b.fn([b.struct(u=Vec(3, Real), w=Vec(5, Real))], b.struct(u=Vec(3, Real), w=Vec(5, Real)),
                 lambda p: vjp(f)(p).grad(1.0), name="g")
    for h in (f, g):
        c = compile(h)
        assert set(c.instances) == reachable_pairs(reg, h.name)
    out = compile(g)({"u": [1.0, 2.0, 3.0], "w": [0.0] * 5})
    assert out["u"] == [2 * 12.0 * 2] * 3 and out["w"] == [2 * 12.0] * 5


def test_chain_static_counts():
    prog = demos.chain_program()
    c = compile(prog["chain"])
    assert op_count(c).total_static <= 100 + 50 * 4
    assert set(c.instances) == reachable_pairs(prog.reg, "chain")


def test_bitwise_determinism_and_reentrancy():
    c = compile(demos.linreg_program()["h"], count=True)
    beta = {"b0": 0.3, "b": [0.7]}
    first = c(beta)
    counts = op_count(c).dynamic
    results = []

    def run():
        results.append(c(beta))

    threads = [threading.Thread(target=run) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == first for r in results)
    assert c(beta) == first and op_count(c).dynamic == counts


def test_unbound_generic_entry():
    reg = parse_ir("def f<n: Index>(x: Real): [n]Real = [for i: n, x]")
    with pytest.raises(E.UnboundIndexGeneric):
        compile("f", reg)
