import math
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracediff import builder as b
from tracediff import errors as E
from tracediff.builder import Dual, Real, Vec, struct
from tracediff.exec import compile
from tracediff.ir import Arr, Fin, Pair, Registry, print_ir
from tracediff.ir.text import alpha_equal
from tracediff.ir.syntax import AccumBlock, Binary, Call, Const, For, operands


def traced(reg, *args, **kw):
    with b.use_registry(reg):
        return b.fn(*args, **kw)


def scoped(d):
    """Independent scoping check: operands bound before use, accumulators kept local."""
    def walk(block, scope):
        scope = set(scope)
        for let in block.lets:
            for v in operands(let.expr):
                if v not in scope:
                    return False
            match let.expr:
                case For(i, _, body):
                    if not walk(body, scope | {i}):
                        return False
                case AccumBlock(a, _, body):
                    if not walk(body, scope | {a}):
                        return False
            if let.var in scope:
                return False
            scope.add(let.var)
        return block.result in scope

    return walk(d.body, {v for v, _ in d.params})


def test_sqr_is_one_let():
    reg = Registry()
    sqr = traced(reg, [Real], Real, lambda x: b.mul(x, x), name="sqr")
    body = reg[sqr.name].body
    assert len(body.lets) == 1 and isinstance(body.lets[0].expr, Binary)


def test_host_number_lifts_to_const():
    reg = Registry()
    f = traced(reg, [Real], Real, lambda x: b.mul(x, 3.0), name="triple")
    lets = reg[f.name].body.lets
    assert isinstance(lets[0].expr, Const) and lets[0].expr.value == 3.0
    assert lets[1].expr.op == "mul"
    assert compile(f)(2.0) == 6.0


def test_repeated_constants_are_shared():
    reg = Registry()
    f = traced(reg, [Real], Real, lambda x: b.add(b.mul(x, 3.0), 3.0), name="g")
    consts = [let for let in reg[f.name].body.lets if isinstance(let.expr, Const)]
    assert len(consts) == 1


def test_host_maker_makes_distinct_defs():
    reg = Registry()
    with b.use_registry(reg):
        def make(k):
            return b.fn([Real], Real, lambda x: b.div(float(k), x), name="f")

        def never(k):
            return b.fn([Real], Real, lambda x: b.mul(float(k), x), name="g")

        f0, f1, f2 = make(5), make(7), make(5)
    assert [f0.name, f1.name, f2.name] == ["f", "f_1", "f_2"]
    assert "g" not in reg
    assert alpha_equal(reg[f0.name], reg[f2.name])
    assert not alpha_equal(reg[f0.name], reg[f1.name])


def test_calls_are_not_inlined():
    reg = Registry()
    big = traced(reg, [Real], Real, lambda x: b.mul(b.add(b.mul(x, x), x), b.sub(x, 1.0)), name="big")
    top = traced(reg, [Real], Real, lambda z: b.add(big(z), big(z)), name="top")
    lets = reg[top.name].body.lets
    calls = [let for let in lets if isinstance(let.expr, Call)]
    assert len(lets) == 3 and len(calls) == 2
    assert {c.expr.func for c in calls} == {big.name}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 12), st.integers(1, 30))
def test_k_calls_cost_k_lets(k, body_size):
    reg = Registry()

    def body(x):
        for _ in range(body_size):
            x = b.neg(x)
        return x

    h = traced(reg, [Real], Real, body, name="h")

    def caller(x):
        for _ in range(k):
            x = h(x)
        return x

    top = traced(reg, [Real], Real, caller, name="top")
    assert len(reg[top.name].body.lets) == k


def test_record_lowering_and_dual():
    assert b.to_ty(Dual) == Pair(Real, Real)
    rec = struct(a=Real, c=Vec(2, Real), d=Real)
    assert b.to_ty(rec) == Pair(Real, Pair(Arr(Fin(2), Real), Real))
    reg = Registry()
    f = traced(reg, [rec], Real, lambda p: b.add(p["a"], b.mul(p["c"][1], p["d"])), name="f")
    assert compile(f)({"a": 1.0, "c": [0.0, 2.0], "d": 4.0}) == 9.0


def test_opaque_declarations():
    reg = Registry()
    with b.use_registry(reg):
        log = b.opaque([Real], Real, math.log)
        pw = b.opaque([Real, Real], Real, math.pow, name="pow")
        with pytest.raises(E.NonScalarOpaque):
            b.opaque([Vec(2, Real)], Real, sum)
        f = b.fn([Real], Real, lambda x: pw(x, log(x)), name="f")
    x = 3.0
    assert compile(f)(x) == math.pow(x, math.log(x))


def test_set_jvp_signatures():
    reg = Registry()
    with b.use_registry(reg):
        pw = b.opaque([Real, Real], Real, math.pow, name="pow")
        one = b.fn([Dual], Dual, lambda d: d, name="bad")
        with pytest.raises(E.BadCustomJvpSignature):
            b.set_jvp(pw, one)
        sqrt = b.fn([Real], Real, lambda x: b.sqrt(x), name="sqrt")
        sqrt.jvp = b.fn([Dual], Dual, lambda d: {"re": sqrt(d["re"]), "du": d["du"]}, name="jsqrt")
    assert reg.custom_jvp == {sqrt.name: "jsqrt"}


def test_prim_errors():
    reg = Registry()
    with pytest.raises(E.IRTypeError) as ei:
        traced(reg, [b.Bool, Real], Real, lambda p, x: b.select(p, Real, x, p))
    assert ei.value.rule in ("SelectBranches", "ArgType", "LetType")
    with pytest.raises(E.IRTypeError):
        traced(reg, [Real], Real, lambda x: b.add(x, b.gt(x, x)))


def test_accumulate_is_unit():
    reg = Registry()

    def body(x):
        t = b.accum(0.0, lambda a: b.accumulate(a, x), spec=Real)
        return b.fst(t)

    f = traced(reg, [Real], Real, body, name="f")
    d = reg[f.name]
    inner = [let for let in d.body.lets if isinstance(let.expr, AccumBlock)][0].expr.body
    assert print_ir(reg).count("+=") == 1
    assert inner.lets[-1].ty == b.to_ty(b.Unit)
    assert compile(f)(2.5) == 2.5


def test_array_and_sum():
    reg = Registry()
    idx = traced(reg, [Real], Vec(3, Fin(3)), lambda x: b.array(3, lambda i: i), name="idx")
    assert reg[idx.name].ret == Arr(Fin(3), Fin(3))
    s = traced(reg, [Vec(2, Real)], Real, lambda v: b.sum(2, lambda i: v[i]), name="s")
    assert compile(s)([1.5, 2.5]) == 4.0


def test_generic_inference():
    reg = Registry()
    with b.use_registry(reg):
        total = b.fn([Vec("n", Real)], Real, lambda v: b.sum("n", lambda i: v[i]), name="total",
                     generics={"n": b.Index})

        def caller(v):
            return total(v)

        f = b.fn([Vec(5, Real)], Real, caller, name="f")
        call = reg[f.name].body.lets[0].expr
        assert call.type_args == (Fin(5),)
        with pytest.raises(E.ArityMismatch):
            b.fn([Real], Real, lambda x: total(x, x))
        with pytest.raises(E.InferenceFailure):
            b.fn([Real], Real, lambda x: b.call(
                b.fn([], Vec("m", Real), lambda: b.array("m", lambda i: 0.0), generics={"m": b.Index})))
    assert compile(f)([1, 2, 3, 4, 5]) == 15.0


def test_escape_errors():
    reg = Registry()
    keep = {}

    def outer(x):
        keep["h"] = x
        return x

    traced(reg, [Real], Real, outer)
    with pytest.raises(E.IRError):
        traced(reg, [Real], Real, lambda y: b.add(y, keep["h"]))
    with pytest.raises(E.AccumulatorEscape):
        traced(reg, [Real], Real, lambda x: b.fst(b.accum(x, lambda a: a)))


def test_nested_definition_suspends_outer():
    reg = Registry()
    with b.use_registry(reg):
        def outer(x):
            inner = b.fn([Real], Real, lambda y: b.mul(y, 2.0), name="inner")
            return inner(x)

        f = b.fn([Real], Real, outer, name="outer")
    assert reg.names() == ["inner", "outer"]
    assert compile(f)(4.0) == 8.0


def _program(reg):
    with b.use_registry(reg):
        h = b.fn([Real], Real, lambda x: b.sqrt(b.add(b.mul(x, x), 1.0)), name="h")
        return b.fn([Vec(3, Real)], Real,
                    lambda v: b.sum(3, lambda i: b.select(b.gt(v[i], 0.0), Real, h(v[i]), v[i])),
                    name="f")


def test_deterministic_tracing():
    r1, r2 = Registry(), Registry()
    _program(r1)
    _program(r2)
    assert r1 == r2 and print_ir(r1) == print_ir(r2)


def test_concurrent_traces_share_a_registry():
    reg = Registry()
    errors = []

    def work(k):
        try:
            with b.use_registry(reg):
                for _ in range(20):
                    b.fn([Real], Real, lambda x: b.add(x, float(k)), name=f"w{k}")
        except Exception as e:  # pragma: no cover - surfaced below
            errors.append(e)

    threads = [threading.Thread(target=work, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(reg) == 80


def test_emitted_defs_are_scoped():
    from progs import generate

    for seed in range(10):
        reg = generate(seed).reg
        for d in reg.defs():
            assert scoped(d), d.name
