"""Forward mode: lift a definition to a dual JVP over (primal, tangent) pairs."""

from __future__ import annotations

from .._deep import deep
from ..errors import MissingDerivative
from ..ir.check import let_types
from ..ir.emit import Emitter
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
    FuncDef,
    Fst,
    Index,
    OpaqueDef,
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
from ..ir.types import Bool, Kind, Pair, Real, dual_type

DUAL = Pair(Real, Real)


@deep
def lift_jvp(f, reg):
    """Name of the dual JVP of ``f``, building and registering it on first use."""
    if f in reg.custom_jvp:
        return reg.custom_jvp[f]
    key = ("jvp", f)
    if key in reg.memo:
        return reg.memo[key]
    item = reg[f]
    if isinstance(item, OpaqueDef):
        raise MissingDerivative(f"opaque function {f} has no custom derivative")
    for g in _direct_callees(item.body):
        lift_jvp(g, reg)
    name = reg.fresh_name("jvp_" + f)
    reg.add(_Lifter(item, reg).run(name))
    reg.memo[key] = name
    reg.jvp_base[name] = f
    return name


def _direct_callees(block):
    seen = []
    for let in block.lets:
        match let.expr:
            case Call(g, _, _):
                if g not in seen:
                    seen.append(g)
            case For(_, _, body) | AccumBlock(_, _, body):
                for g in _direct_callees(body):
                    if g not in seen:
                        seen.append(g)
    return seen


def lift_type_arg(ty, kind):
    return ty if kind == Kind.INDEX else dual_type(ty)


class _Lifter:
    def __init__(self, d, reg):
        self.d = d
        self.reg = reg
        self.old = let_types(d)
        top = max(self.old, default=-1) + 1
        self.em = Emitter(top)
        self.names = dict(d.names)

    def run(self, name):
        d = self.d
        for v, ty in self.old.items():
            self.em.types[v] = dual_type(ty)
        body = self.block(d.body)
        self.names.update(self.em.names)
        return FuncDef(
            name,
            d.generics,
            tuple((v, dual_type(t)) for v, t in d.params),
            dual_type(d.ret),
            body,
            names=self.names,
            origin=("jvp", d.name),
        )

    def block(self, block):
        self.em.push()
        for let in block.lets:
            self.let(let)
        return self.em.pop(block.result)

    def part(self, v, which):
        base = self.names.get(v)
        name = f"{base}_{which}" if base else None
        return self.em.let(Real, Fst(v) if which == "re" else Snd(v), name)

    def let(self, let):
        em, x, ty = self.em, let.var, dual_type(let.ty)
        match let.expr:
            case Const(c):
                re = em.const(c)
                du = em.const(0.0)
                em.bind(x, ty, PairLit(re, du))
            case UnitLit() | TrueLit() | FalseLit() | FinLit() | ArrayLit() | PairLit():
                em.bind(x, ty, let.expr)
            case Unary("not", _):
                em.bind(x, ty, let.expr)
            case Unary(op, a):
                xr, xd = self.part(a, "re"), self.part(a, "du")
                y = em.let(Real, Unary(op, xr))
                match op:
                    case "neg":
                        yd = em.let(Real, Unary("neg", xd))
                    case "abs":
                        s = em.let(Real, Unary("sgn", xr))
                        yd = em.let(Real, Binary("mul", xd, s))
                    case "sqrt":
                        # d sqrt(x) = dx / (2 sqrt x), reusing the primal result
                        twice = em.let(Real, Binary("add", y, y))
                        yd = em.let(Real, Binary("div", xd, twice))
                    case _:
                        yd = em.const(0.0)
                em.bind(x, ty, PairLit(y, yd))
            case Binary(op, a, b) if op in LOGIC_OPS:
                em.bind(x, ty, let.expr)
            case Binary(op, a, b) if op in COMPARE_OPS:
                ar, br = self.part(a, "re"), self.part(b, "re")
                em.bind(x, Bool, Binary(op, ar, br))
            case Binary(op, a, b):
                ar, ad = self.part(a, "re"), self.part(a, "du")
                br, bd = self.part(b, "re"), self.part(b, "du")
                y = em.let(Real, Binary(op, ar, br))
                match op:
                    case "add" | "sub":
                        yd = em.let(Real, Binary(op, ad, bd))
                    case "mul":
                        l = em.let(Real, Binary("mul", ad, br))
                        r = em.let(Real, Binary("mul", bd, ar))
                        yd = em.let(Real, Binary("add", l, r))
                    case "div":
                        l = em.let(Real, Binary("mul", ad, br))
                        r = em.let(Real, Binary("mul", bd, ar))
                        num = em.let(Real, Binary("sub", l, r))
                        den = em.let(Real, Binary("mul", br, br))
                        yd = em.let(Real, Binary("div", num, den))
                em.bind(x, ty, PairLit(y, yd))
            case Select() | Accumulate() | Index() | Fst() | Snd() | RefIndex() | RefFst() | RefSnd():
                em.bind(x, ty, let.expr)
            case Call(g, targs, args):
                callee = self.reg[g]
                kinds = [k for _, k in callee.generics]
                targs = tuple(lift_type_arg(t, k) for t, k in zip(targs, kinds))
                em.bind(x, ty, Call(lift_jvp(g, self.reg), targs, args))
            case For(var, ity, body):
                em.bind(x, ty, For(var, ity, self.block(body)))
            case AccumBlock(acc, init, body):
                em.bind(x, ty, AccumBlock(acc, init, self.block(body)))
            case _:
                raise TypeError(f"cannot lift {let.expr!r}")


def dual_of(reg, f):
    """Lifted definition object for ``f`` (custom or generated)."""
    return reg[lift_jvp(f, reg)]

