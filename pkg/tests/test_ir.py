import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from negatives import NEGATIVES
from tracediff import demos
from tracediff import errors as E
from tracediff.ir import (
    Acc,
    Arr,
    Bool,
    Fin,
    Kind,
    Pair,
    Real,
    Registry,
    TypeVar,
    Unit,
    ensure_valid,
    kind_of,
    parse_ir,
    print_ir,
    typecheck_function,
    validate_registry,
)
from tracediff.ir.syntax import AccumBlock, For, iter_lets
from tracediff.ir.types import contains_acc

SUM_TEXT = """\
def sum<n: Index>(v: [n]Real): Real =
  let z: Real = 0.0 in
  let t: (Real, [n]()) =
    accum a from z in
      [for i: n,
        let x: Real = v[i] in
        let u: () = a += x in
        u
      ]
    in
  let y: Real = fst t in
  y
"""

SUGARED_SUM = "def sum<n: Index>(v: [n]Real): Real =\n  fst (accum a from 0.0 in [for i: n, a += v[i]])\n"


# kinds


def test_kind_examples():
    assert kind_of(Real) == Kind.VALUE
    assert kind_of(Acc(Real)) == Kind.TYPE
    assert kind_of(Fin(3)) == Kind.INDEX
    with pytest.raises(E.KindError) as ei:
        kind_of(Arr(Fin(3), Acc(Real)))
    assert ei.value.reason == "NonValueComponent"


def test_unbound_type_var():
    with pytest.raises(E.KindError) as ei:
        kind_of(Arr(TypeVar("n"), Real))
    assert ei.value.reason == "UnboundTypeVar"
    assert kind_of(Arr(TypeVar("n"), Real), {"n": Kind.INDEX}) == Kind.VALUE


def test_kind_order():
    ks = list(Kind)
    for a in ks:
        assert a <= a
        for c in ks:
            for d in ks:
                if a <= c and c <= d:
                    assert a <= d
    assert Kind.INDEX < Kind.VALUE < Kind.TYPE


def _types():
    leaves = st.sampled_from([Unit, Bool, Real, Fin(0), Fin(2), Fin(5), TypeVar("n")])

    def grow(inner):
        return st.one_of(
            st.builds(Acc, inner),
            st.builds(Arr, st.one_of(inner, st.sampled_from([Fin(3), TypeVar("n")])), inner),
            st.builds(Pair, inner, inner),
        )

    return st.recursive(leaves, grow, max_leaves=6)


def _has_acc_component(ty):
    match ty:
        case Arr(i, e):
            return contains_acc(e) or contains_acc(i) or _has_acc_component(e)
        case Pair(a, c):
            return contains_acc(a) or contains_acc(c)
        case Acc(inner):
            return contains_acc(inner)
    return False


@settings(max_examples=300, deadline=None)
@given(_types())
def test_kind_soundness(ty):
    env = {"n": Kind.INDEX}
    try:
        k = kind_of(ty, env)
    except E.KindError:
        assert _has_acc_component(ty) or _bad_index(ty)
        return
    assert not _has_acc_component(ty)
    assert k == (Kind.TYPE if isinstance(ty, Acc) else Kind.INDEX if isinstance(ty, (Fin, TypeVar))
                 else Kind.VALUE)


def _bad_index(ty):
    match ty:
        case Arr(i, e):
            return not isinstance(i, (Fin, TypeVar)) or _bad_index(e)
        case Pair(a, c):
            return _bad_index(a) or _bad_index(c)
        case Acc(inner):
            return _bad_index(inner)
    return False


# checking


def test_generic_sum_typechecks():
    reg = parse_ir(SUM_TEXT)
    ensure_valid(reg)
    d = reg["sum"]
    assert [type(let.expr).__name__ for let in d.body.lets] == ["Const", "AccumBlock", "Fst"]
    acc = d.body.lets[1].expr
    assert isinstance(acc, AccumBlock)
    assert isinstance(acc.body.lets[0].expr, For)
    assert len(list(iter_lets(d.body))) == 6


def test_trig_registry_validates():
    assert validate_registry(demos.trig_program().reg) == []


def test_unbound_var_parses_then_fails():
    reg = parse_ir("def f(x: Real): Real = y")
    with pytest.raises(E.IRTypeError) as ei:
        typecheck_function(reg["f"], reg)
    assert ei.value.rule == "UnboundVar"


@pytest.mark.parametrize("label,text,cls,rule", NEGATIVES, ids=[n[0] for n in NEGATIVES])
def test_negative_programs(label, text, cls, rule):
    errs = validate_registry(parse_ir(text))
    assert errs, label
    assert type(errs[0]).__name__ == cls
    if rule is not None:
        assert errs[0].rule == rule


def test_recursion_cycle_names():
    errs = validate_registry(parse_ir(NEGATIVES[8][1]))
    assert isinstance(errs[0], E.RecursionCycle)
    assert sorted(errs[0].names) == ["f", "g"]


def test_bad_custom_jvp_signature():
    text = ('opaque root(Real): Real = "math.sqrt"\n'
            'def jvp_root(x: Real): Real = x\n'
            'jvp root = jvp_root\n')
    errs = validate_registry(parse_ir(text))
    assert [type(e) for e in errs] == [E.BadCustomJvpSignature]
    assert "(Real, Real)" in str(errs[0])


def test_neq_is_a_comparison():
    reg = parse_ir("def f(x: Real, y: Real): Bool = (x != y)")
    ensure_valid(reg)
    assert reg["f"].body.lets[0].ty == Bool


def test_empty_array():
    reg = parse_ir("def f(x: Real): [0]Real = [for i: 0, x]")
    ensure_valid(reg)


# text


def test_print_sum_is_sugared_listing():
    assert print_ir(parse_ir(SUM_TEXT)) == SUGARED_SUM


def test_print_empty_registry():
    assert print_ir(Registry()) == ""


def test_nullary_def():
    reg = parse_ir("def f(): Real = 1.0")
    assert reg.names() == ["f"] and reg["f"].params == ()
    ensure_valid(reg)


def test_comments_and_parse_error_position():
    reg = parse_ir("# a comment\ndef f(x: Real): Real = x  # trailing\n")
    assert reg.names() == ["f"]
    with pytest.raises(E.ParseError) as ei:
        parse_ir("def f(x: Real): Real =\n  let y: Fin(3) = 3 in x")
    assert (ei.value.line, ei.value.col) == (2, 13)


DEMO_REGISTRIES = {
    "linreg": lambda: demos.linreg_program().reg,
    "quadratic": lambda: demos.quadratic_program().reg,
    "trig": lambda: demos.trig_program().reg,
    "sqrt": lambda: demos.sqrt_program().reg,
    "spring": lambda: demos.spring_program(demos.SpringConfig(steps=8)).reg,
    "chain": lambda: demos.chain_program(12, 4).reg,
}


@pytest.mark.parametrize("name", DEMO_REGISTRIES)
def test_round_trip_on_demos(name):
    reg = DEMO_REGISTRIES[name]()
    text = print_ir(reg)
    back = parse_ir(text)
    assert back == reg
    assert print_ir(back) == text
    assert validate_registry(back) == []


def test_round_trip_generated():
    from progs import generate

    for seed in range(5):
        reg = generate(seed).reg
        assert parse_ir(print_ir(reg)) == reg
