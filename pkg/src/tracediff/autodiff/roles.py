"""Role analysis of dual-JVP bodies.

Every Real leaf of every variable gets one of

* ``B``: known to be zero (a literal 0.0, or arithmetic that keeps it zero),
* ``P``: primal data,
* ``T``: tangent data, only ever used linearly.

Discrete leaves (Bool, Fin, index variables) are ``D`` and units are ``U``.
A mask mirrors the variable's type: ``("pair", a, b)``, ``("arr", e)`` and
``("acc", inner)`` for the composite forms, a letter for leaves.

Accumulators are resolved through alias paths so that ``&fst a += x`` updates
the role of ``a`` itself; the analysis iterates until accumulator roles stop
changing.
"""

from __future__ import annotations

from .._deep import deep
from ..errors import NonlinearTangentUse
from ..ir.check import let_types
from ..ir.syntax import (
    Accumulate,
    AccumBlock,
    ArrayLit,
    Binary,
    Call,
    Const,
    FalseLit,
    FinLit,
    For,
    Fst,
    Index,
    PairLit,
    RefFst,
    RefIndex,
    RefSnd,
    Select,
    Snd,
    TrueLit,
    Unary,
    UnitLit,
    COMPARE_OPS,
    LOGIC_OPS,
)
from ..ir.types import Acc, Arr, Pair, RealTy, UnitTy, substitute

B, P, T, D, U = "B", "P", "T", "D", "U"


def leaf_mask(ty, real):
    """Mask of ``ty`` with every Real leaf set to ``real``."""
    match ty:
        case RealTy():
            return real
        case UnitTy():
            return U
        case Pair(a, b):
            return ("pair", leaf_mask(a, real), leaf_mask(b, real))
        case Arr(_, e):
            return ("arr", leaf_mask(e, real))
        case Acc(inner):
            return ("acc", leaf_mask(inner, real))
    return D


def primal_mask(ty):
    return leaf_mask(ty, P)


def canonical(ty):
    """Mask of a lifted type as produced by forward mode: (primal, tangent) pairs."""
    match ty:
        case Pair(RealTy(), RealTy()):
            return ("pair", P, T)
        case Pair(a, b):
            return ("pair", canonical(a), canonical(b))
        case Arr(_, e):
            return ("arr", canonical(e))
        case Acc(inner):
            return ("acc", canonical(inner))
    return leaf_mask(ty, P)


def join(a, b):
    if a == b:
        return a
    if isinstance(a, str) or isinstance(b, str):
        if a == B and b in (P, T):
            return b
        if b == B and a in (P, T):
            return a
        raise NonlinearTangentUse("a primal value and a tangent value meet in one place")
    return (a[0],) + tuple(join(x, y) for x, y in zip(a[1:], b[1:]))


def has_tangent(m):
    if isinstance(m, str):
        return m == T
    return any(has_tangent(x) for x in m[1:])


def sub_mask(m, path):
    for step in path:
        m = m[1] if step in ("fst", "idx") else m[2]
    return m


def update_mask(m, path, new):
    if not path:
        return new
    step, rest = path[0], path[1:]
    if step == "idx":
        return ("arr", update_mask(m[1], rest, new))
    if step == "fst":
        return ("pair", update_mask(m[1], rest, new), m[2])
    return ("pair", m[1], update_mask(m[2], rest, new))


def is_jvp_call(reg, name):
    return name in reg.jvp_base


def callee_types(reg, call):
    """Parameter and result types of a call after type-argument substitution."""
    callee = reg[call.func]
    mapping = {n: t for (n, _), t in zip(callee.generics, call.type_args)}
    return (
        [substitute(t, mapping) for t in callee.param_types],
        substitute(callee.ret, mapping),
    )


@deep
def analyze(d, reg):
    """Masks for every variable of the dual-JVP definition ``d``."""
    return _Roles(d, reg).run()


class _Roles:
    def __init__(self, d, reg):
        self.d = d
        self.reg = reg
        self.types = let_types(d)
        self.masks = {}
        self.alias = {}
        self.roots = {}

    def fail(self, what):
        raise NonlinearTangentUse(f"{self.d.name}: {what}")

    def run(self):
        for v, ty in self.d.params:
            m = canonical(ty)
            self.masks[v] = m
            if isinstance(ty, Acc):
                self.roots[v] = m[1]
                self.alias[v] = [(v, ())]
        while True:
            before = dict(self.roots)
            self.block(self.d.body)
            if self.roots == before:
                break
        for v in self.alias:
            self.masks[v] = ("acc", self.acc_inner(v))
        want = canonical(self.d.ret)
        if self.join_checked(self.masks[self.d.body.result], want) != want:
            self.fail("result carries tangent data where a primal is expected")
        return self.masks

    def join_checked(self, a, b):
        try:
            return join(a, b)
        except NonlinearTangentUse:
            self.fail("a primal value and a tangent value meet in one place")

    def acc_inner(self, v):
        out = None
        for root, path in self.alias[v]:
            m = sub_mask(self.roots[root], path)
            out = m if out is None else self.join_checked(out, m)
        return out

    def accumulate(self, target, m):
        for root, path in self.alias[target]:
            cur = self.roots[root]
            new = self.join_checked(sub_mask(cur, path), m)
            self.roots[root] = update_mask(cur, path, new)

    def block(self, block):
        for let in block.lets:
            self.masks[let.var] = self.expr(let)

    def expr(self, let):
        m = self.masks
        match let.expr:
            case Const(c):
                return B if c == 0.0 else P
            case UnitLit():
                return U
            case TrueLit() | FalseLit() | FinLit():
                return D
            case ArrayLit(elems):
                if not elems:
                    return leaf_mask(let.ty, B)
                out = m[elems[0]]
                for e in elems[1:]:
                    out = self.join_checked(out, m[e])
                return ("arr", out)
            case PairLit(a, b):
                return ("pair", m[a], m[b])
            case Unary("not", _):
                return D
            case Unary(op, a):
                if m[a] == T and op != "neg":
                    self.fail(f"{op} applied to a tangent")
                return m[a]
            case Binary(op, a, b) if op in LOGIC_OPS:
                return D
            case Binary(op, a, b) if op in COMPARE_OPS:
                if T in (m[a], m[b]):
                    self.fail("comparison reads a tangent")
                return D
            case Binary(op, a, b):
                return self.arith(op, m[a], m[b])
            case Select(_, a, b) if isinstance(let.ty, Acc):
                self.alias[let.var] = self.alias[a] + self.alias[b]
                both = self.join_checked(self.acc_inner(a), self.acc_inner(b))
                self.accumulate(let.var, both)
                return ("acc", both)
            case Select(_, a, b):
                return self.join_checked(m[a], m[b])
            case Accumulate(t, v):
                self.accumulate(t, m[v])
                return U
            case Index(a, _):
                return m[a][1]
            case Fst(a):
                return m[a][1]
            case Snd(a):
                return m[a][2]
            case RefIndex(a, _) | RefFst(a) | RefSnd(a):
                step = {RefIndex: "idx", RefFst: "fst", RefSnd: "snd"}[type(let.expr)]
                self.alias[let.var] = [(r, p + (step,)) for r, p in self.alias[a]]
                return ("acc", self.acc_inner(let.var))
            case Call(_, _, args):
                return self.call(let.expr, args)
            case For(var, _, body):
                m[var] = D
                self.block(body)
                return ("arr", m[body.result])
            case AccumBlock(acc, _, body):
                if acc not in self.roots:
                    self.roots[acc] = leaf_mask(self.types[acc].inner, B)
                    self.alias[acc] = [(acc, ())]
                m[acc] = ("acc", self.roots[acc])
                self.block(body)
                return ("pair", self.roots[acc], m[body.result])
        raise TypeError(f"unexpected expression {let.expr!r}")

    def arith(self, op, a, b):
        if op in ("add", "sub"):
            if {a, b} == {P, T}:
                self.fail(f"{op} mixes a primal and a tangent")
            return self.join_checked(a, b)
        if op == "mul":
            if a == T and b == T:
                self.fail("product of two tangents")
            if B in (a, b):
                return B
            return T if T in (a, b) else P
        # div
        if b == T:
            self.fail("division by a tangent")
        if a == B:
            return B
        return a

    def call(self, call, args):
        ptypes, ret = callee_types(self.reg, call)
        jvp = is_jvp_call(self.reg, call.func)
        want_of = canonical if jvp else primal_mask
        for a, pty in zip(args, ptypes):
            want = want_of(pty)
            if isinstance(pty, Acc):
                self.accumulate(a, want[1])
            elif self.join_checked(self.masks[a], want) != want:
                self.fail(f"argument of {call.func} has the wrong role")
        return want_of(ret)
